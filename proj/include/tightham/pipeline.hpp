#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <absl/container/flat_hash_set.h>

#include "tightham/connector.hpp"
#include "tightham/exposure.hpp"
#include "tightham/hypergraph.hpp"
#include "tightham/keys.hpp"
#include "tightham/oracle.hpp"
#include "tightham/reservoir.hpp"

namespace tightham {

enum class PipelineMode { kStrict, kPractical };

std::string to_string(PipelineMode mode);
PipelineMode parse_pipeline_mode(const std::string& s);

struct PipelineConfig {
  std::size_t n = 0;
  int r = 3;
  double eps = 0.5;                   // p = n^{-1+eps} unless `p` is given
  std::optional<double> p;
  PipelineMode mode = PipelineMode::kPractical;
  std::optional<std::size_t> reservoir_count;
  int gadget_ell = 0;                 // 0 = mode default
  double nu = 0.5;                    // strict mode: c = min(1/(2n*), nu/n*, eta1)
  double eta1 = 1.0;
  double absorb_safety = 4.0;
  std::optional<double> greedy_stop;  // leftover size at which Step 3 halts
  std::uint64_t seed = 0;
  std::size_t step1_retry_budget = 0; // coin probes per copy, 0 = 2000 * v(H*)
  bool early_exit_bridge = false;
  double factor_delta = 0.5;          // long cycle must have >= factor_delta * n vertices
  int factor_gap = 2;                 // interior vertices of each short-cycle closing path

  void validate() const;
  double input_probability() const;
};

/// Parameters derived from a PipelineConfig for one run.
struct ResolvedPlan {
  double q = 0;
  std::vector<double> rounds;         // round 1 first
  double eps_connect = 0;             // exponent handed to the connector
  int gadget_ell = 3;
  std::size_t gadget_vertices = 0;
  std::size_t reservoir_count = 0;
  double greedy_stop = 0;
  std::size_t step1_budget = 0;
};

ResolvedPlan resolve_plan(const PipelineConfig& cfg, std::size_t round_count = 5);

struct StageOutcome {
  std::string name;
  bool ok = false;
  std::string code;                   // empty on success
  std::string detail;
  double seconds = 0;
};

struct RunReport {
  std::uint64_t seed = 0;
  std::size_t n = 0;
  int r = 3;
  double eps = 0;
  double p = 0;
  PipelineMode mode = PipelineMode::kPractical;
  bool explicit_graph = false;
  ResolvedPlan plan;
  std::vector<StageOutcome> stages;

  std::size_t gadgets_embedded = 0;
  std::size_t step1_probes = 0;
  std::size_t path_after_step2 = 0;
  std::size_t path_after_step3 = 0;
  std::size_t leftover = 0;           // |L'|
  std::size_t l_size = 0;             // |L| after padding
  std::size_t w_star = 0;
  std::size_t w_star_star = 0;
  std::size_t w_used = 0;
  std::vector<RoundStats> exposures;  // index = round - 1
  std::uint64_t already_exposed_events = 0;

  std::optional<Tuple> cycle;         // Hamilton cycle (or the long cycle of the factor run)
  std::vector<Tuple> cycles;          // factor run: every cycle, requested order
  std::vector<std::size_t> lengths;   // factor run: requested lengths

  bool success() const;
  const StageOutcome* failed_stage() const;
};

struct GadgetCopy {
  std::vector<VertexId> map;          // gadget vertex -> host vertex
  VertexId w_star = 0;
  Tuple path_with;
  Tuple path_without;
  std::size_t offset = 0;             // start of path_with inside the linked path
};

class ReservoirState {
 public:
  ReservoirState() = default;
  ReservoirState(std::size_t n, int r);

  void add_copy(const ReservoirGraph& gadget, GadgetCopy copy);

  std::size_t vertex_count() const { return n_; }
  int uniformity() const { return r_; }

  const std::vector<GadgetCopy>& copies() const { return copies_; }
  std::vector<GadgetCopy>& copies() { return copies_; }
  /// Reservoir vertex images, ascending.
  std::vector<VertexId> w_star() const;
  std::vector<VertexId> gadget_vertices() const;
  /// Index of the copy whose image contains v.
  std::optional<std::size_t> owner(VertexId v) const;
  bool is_gadget_edge(std::span<const VertexId> e) const;

 private:
  std::size_t n_ = 0;
  int r_ = 3;
  SetPacker packer_;
  std::vector<GadgetCopy> copies_;
  std::vector<std::int32_t> owner_;
  absl::flat_hash_set<std::uint64_t> edge_keys_;
};

/// Membership in the round-`round` graph, reusing an earlier exposure when present.
bool probe_edge(const CoinOracle& coins, int round, ExposureLedger& ledger,
                std::span<const VertexId> e);

/// Depth-first embedding of `count` disjoint copies along the path_with order,
/// placing host vertices from `available` (ascending) with bounded backtracking.
ReservoirState step1_find_reservoir_copies(const ReservoirGraph& gadget, std::size_t count,
                                           const CoinOracle& coins, int round,
                                           ExposureLedger& ledger,
                                           std::span<const VertexId> available,
                                           std::size_t budget, std::size_t* probes = nullptr);

struct LinkResult {
  Tuple path;
  ConnectionResult connection;
};

/// Joins the copies in order through X; with no copy the path is the lowest r-1
/// vertices of X. Records each copy's offset in the path.
LinkResult step2_link_reservoirs(const CoinOracle& coins, int round, ExposureLedger& ledger,
                                 ReservoirState& state, std::span<const VertexId> x,
                                 const ConnectorConfig& cfg, std::uint64_t seed);

struct ExtendResult {
  Tuple path;
  std::vector<VertexId> leftover;     // ascending
  std::uint64_t exposed = 0;
  std::uint64_t steps = 0;
};

ExtendResult step3_greedy_extend(const CoinOracle& coins, int round, ExposureLedger& ledger,
                                 Tuple path, std::span<const VertexId> pool, double greedy_stop);

struct AbsorbResult {
  std::vector<Tuple> chain;           // Y_0 .. Y_{t+1}
  std::vector<Tuple> even_paths;      // round-4 paths Y_{2i} -> Y_{2i+1}
  std::vector<Tuple> odd_paths;       // round-5 paths Y_{2i+1} -> Y_{2i+2}
  Tuple closing;                      // Y_0 ... Y_{t+1} as one path
  std::vector<VertexId> l;            // L, ascending
  std::vector<VertexId> w_used;       // W, ascending
  std::size_t w_star_star = 0;
};

std::size_t absorbable_bound(std::size_t w_star_count, int r, double safety);

AbsorbResult step45_absorb(const CoinOracle& coins, ExposureLedger& ledger, const Tuple& path,
                           std::span<const VertexId> leftover, const ReservoirState& state,
                           const ConnectorConfig& cfg4, const ConnectorConfig& cfg5,
                           std::uint64_t seed, double safety);

/// Splices path_without for every copy owning a vertex of W and verifies the result.
Tuple remove_reservoir_subset(const Tuple& path, std::span<const VertexId> w,
                              const ReservoirState& state, const EdgeTest& is_edge);

/// Concatenates P'(W) with the reversed closing path.
Tuple assemble_cycle(const Tuple& spliced, const Tuple& closing, int r);

/// Appeared edges of the ledger plus gadget edges.
EdgeTest run_edge_test(const ExposureLedger& ledger, const ReservoirState& state);

/// `graph` switches to explicit-graph mode: it is split into five rounds.
RunReport find_tight_hamilton_cycle(const PipelineConfig& cfg,
                                    const Hypergraph* graph = nullptr);

/// Lazy-coin only. lengths[0] is the long cycle.
RunReport find_disjoint_tight_cycles(const PipelineConfig& cfg,
                                     const std::vector<std::size_t>& lengths);

void check_factor_lengths(const PipelineConfig& cfg, const std::vector<std::size_t>& lengths);

}  // namespace tightham
