#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <absl/container/flat_hash_map.h>
#include <absl/container/flat_hash_set.h>

#include "tightham/exposure.hpp"
#include "tightham/hypergraph.hpp"

namespace tightham {

enum class ConnectorMode { kStrict, kPractical };

/// Thresholds of the fan/bridge connector, resolved for a concrete n.
struct ConnectorConfig {
  int r = 3;
  double eps = 0.2;
  double delta = 0.5;
  double xi = 0;
  double xi_prime = 0;
  double eta = 0;
  double width_target = 1;
  double c_min = 1;
  double c_max = 8;
  std::vector<double> mult_cap;   // index j = set size, 1..r-1 (index 0 unused)
  int max_fan_levels = 0;
  ConnectorMode mode = ConnectorMode::kPractical;
  bool early_exit_bridge = false;
  bool direct_bridge = true;      // try the pair (u, v) itself before growing fans

  static ConnectorConfig strict(std::size_t n, int r, double eps, double delta);
  static ConnectorConfig practical(std::size_t n, int r, double eps, double delta);

  /// Upper bound on the vertex count of any produced path.
  std::size_t length_cap() const;
  void validate() const;
};

struct Fan {
  Tuple root;
  std::vector<Tuple> paths;       // every path starts with root, ascending order
  int length = 0;                 // levels added to the root

  std::vector<Tuple> leaves() const;
  std::size_t width() const { return paths.size(); }
};

/// Multiplicities of consecutively used j-sets (1 <= j <= r-1) inside one fan.
class UsedMultiset {
 public:
  explicit UsedMultiset(const SetPacker& packer) : packer_(&packer) {}
  void add(std::span<const VertexId> s);
  std::uint32_t count(std::span<const VertexId> s) const;
  std::uint32_t max_count(std::size_t size) const;
  void clear() {
    counts_.clear();
    max_.clear();
  }

 private:
  const SetPacker* packer_;
  absl::flat_hash_map<std::uint64_t, std::uint32_t> counts_;
  std::vector<std::uint32_t> max_;
};

/// Dangerous and temporarily dangerous j-sets, index j = set size.
struct DangerRegistry {
  std::vector<absl::flat_hash_set<std::uint64_t>> d;
  std::vector<absl::flat_hash_set<std::uint64_t>> d_tilde;

  explicit DangerRegistry(int r = 3) : d(r), d_tilde(r) {}
  bool dangerous(const SetPacker& packer, std::span<const VertexId> s) const;
};

struct Parts {
  std::vector<std::vector<VertexId>> y;        // Y_1..Y_2r, each ascending
  std::vector<std::vector<VertexId>> y_prime;  // Y'_1..Y'_2r
};

Parts partition_X(std::span<const VertexId> x, int r, std::uint64_t seed);

/// D(r-1) from snapshot degrees inside X, then the cascade with threshold xi*n.
DangerRegistry compute_danger_sets(const ExposureLedger& ledger, std::span<const VertexId> x,
                                   double xi, std::size_t n);

/// Fills d_tilde: (r-1)-sets of Y' sharing an r-set of H_i with at least
/// xi'|L| leaves, then the cascade with threshold xi'*n.
void compute_temp_danger(DangerRegistry& reg, const std::vector<Tuple>& leaves_u,
                         const ExposureLedger& ledger, double xi_prime,
                         std::span<const VertexId> y_prime, std::size_t n);

/// Some r consecutive vertices of the concatenation (x, y) form an r-set of H.
bool is_blocked(std::span<const VertexId> x, std::span<const VertexId> y,
                const ExposureLedger& ledger);

/// State shared by the fans of one phase.
struct PhaseState {
  const ExposureLedger* ledger = nullptr;
  const DangerRegistry* danger = nullptr;
  const UsedMultiset* used_sets = nullptr;
  const std::vector<char>* used = nullptr;     // U, indexed by vertex
  std::vector<char> in_x;                      // X membership, indexed by vertex
};

/// Vertices c of X \ U that must not be appended to the end tuple `a`.
std::vector<VertexId> bad_vertices(std::span<const VertexId> a, const PhaseState& st,
                                   const ConnectorConfig& cfg);

struct FanStats {
  int levels = 0;
  std::size_t width = 0;
  std::uint64_t exposed = 0;
  std::uint64_t dropped_paths = 0;
  std::uint64_t truncated_paths = 0;
  std::vector<std::uint32_t> max_multiplicity;  // by set size
};

/// Grows a fan level by level in parts[t] (t cycling through all parts).
/// `exact_levels` >= 0 grows exactly that many levels and ignores the width target.
Fan grow_fan(const Tuple& root, const std::vector<std::vector<VertexId>>& parts,
             const CoinOracle& coins, int round, ExposureLedger& ledger,
             const DangerRegistry& danger, std::vector<char>& used,
             const ConnectorConfig& cfg, FanStats* stats = nullptr, int exact_levels = -1);

struct BridgeStats {
  std::uint64_t candidates = 0;   // unblocked leaf pairs
  std::uint64_t exposed = 0;      // distinct windows flipped
  bool direct = false;
};

/// Joins a u-fan and a v-fan (grown from the reversed v tuple) by a bridge of
/// r-1 fresh windows; returns the u..v path.
Tuple connect_pair(const Fan& fan_u, const Fan& fan_v, const CoinOracle& coins, int round,
                   ExposureLedger& ledger, const ConnectorConfig& cfg,
                   BridgeStats* stats = nullptr);

struct ConnectionRequest {
  std::vector<std::pair<Tuple, Tuple>> pairs;
  std::vector<VertexId> x;
  int round = 1;
  std::uint64_t seed = 0;
  std::vector<std::size_t> target_lengths;   // per pair vertex count, 0 = free
};

struct PhaseStats {
  FanStats fan_u;
  FanStats fan_v;
  BridgeStats bridge;
  std::uint64_t exposed = 0;
  std::uint64_t ledger_size = 0;
  bool ledger_bound_ok = true;
};

struct ConnectionFailure {
  std::string code;
  std::size_t phase = 0;
  std::string detail;
};

struct ConnectionResult {
  std::vector<Tuple> paths;
  std::vector<PhaseStats> phases;
  std::optional<ConnectionFailure> failure;

  bool ok() const { return !failure.has_value(); }
  void throw_if_failed() const;
};

ConnectionResult connect_all(const ConnectionRequest& request, const CoinOracle& coins,
                             ExposureLedger& ledger, const ConnectorConfig& cfg);

}  // namespace tightham
