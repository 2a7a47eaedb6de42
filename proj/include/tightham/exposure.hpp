#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <absl/container/flat_hash_map.h>
#include <absl/container/flat_hash_set.h>

#include "tightham/hypergraph.hpp"
#include "tightham/keys.hpp"

namespace tightham {

enum class ExposureMode { kLazyCoin, kExplicitGraph };

/// Per-run randomness source: one inclusion probability per round, or one
/// concrete edge set per round in explicit-graph mode. Rounds are 1-based.
struct ExposureConfig {
  std::size_t n = 0;
  int r = 3;
  std::uint64_t master_seed = 0;
  std::vector<double> rounds;
  ExposureMode mode = ExposureMode::kLazyCoin;
  std::vector<Hypergraph> round_graphs;  // explicit-graph mode only

  void validate() const;
};

/// Pure coin function: deterministic in (master seed, round, canonical r-set).
class CoinOracle {
 public:
  explicit CoinOracle(ExposureConfig cfg);

  bool coin(int round, std::span<const VertexId> e) const;
  double probability(int round) const;
  int round_count() const { return static_cast<int>(cfg_.rounds.size()); }
  const ExposureConfig& config() const { return cfg_; }

 private:
  ExposureConfig cfg_;
  SetPacker packer_;
  std::vector<absl::flat_hash_set<std::uint64_t>> explicit_keys_;
};

/// Round probabilities for the five-round split of an input probability q.
struct RoundPlan {
  double q = 0;
  double q_prime = 0;    // rounds 2..5
  double q_dprime = 0;   // round 1
  std::vector<double> as_rounds(int count = 5) const;
};

/// Paper constants: q' = n^{-1+eps/2}, q'' solved from 1-q = (1-q'')(1-q')^4.
RoundPlan plan_rounds_strict(std::size_t n, double q, double eps);
/// Equal split: q' = q'' = 1 - (1-q)^{1/5}.
RoundPlan plan_rounds_even(double q);
double solve_q_dprime(double q, double q_prime);

/// Probability of each colour (bitmask over rounds 1..5, bit 0 = round 1).
std::array<double, 32> colour_distribution(double q, double q_prime, double q_dprime);

struct ExplicitSplit {
  std::vector<Edge> edges;                        // edges of G in canonical order
  std::vector<std::uint8_t> colour;               // non-empty 5-bit mask per edge
  std::array<std::vector<std::uint32_t>, 5> members;  // indices into `edges`, per round

  Hypergraph part(int round, std::size_t n, int r) const;
};

/// Colours every edge of `g` with a non-empty subset of the five rounds.
ExplicitSplit split_explicit(const Hypergraph& g, double q, double q_prime, double q_dprime,
                             std::uint64_t seed);

/// Number of r-subsets of [0, n), or nullopt when it exceeds 2^62.
std::optional<std::uint64_t> binomial_count(std::size_t n, int r);

/// Seeded sample of G^(r)(n, p) by geometric skipping over colex ranks.
/// Throws TooLarge when C(n, r) p exceeds `max_expected` edges.
Hypergraph sample_gnp(std::size_t n, int r, double p, std::uint64_t seed,
                      double max_expected = 1e8);

enum class ExposurePolicy {
  kStrict,  // re-exposure throws AlreadyExposed
  kSkip,    // re-exposure is counted and ignored
};

struct RoundStats {
  std::uint64_t exposed = 0;
  std::uint64_t appeared = 0;
};

/// The exposé hypergraph H. Explicitly exposed r-sets are stored individually;
/// the all-r-subsets-of-leaf-pair-unions bookkeeping of the bridge step is kept
/// as per-phase leaf records and tested lazily.
class ExposureLedger {
 public:
  ExposureLedger(std::size_t n, int r, ExposurePolicy policy = ExposurePolicy::kStrict);

  std::size_t vertex_count() const { return n_; }
  int uniformity() const { return r_; }
  const SetPacker& packer() const { return packer_; }

  bool in_h(std::span<const VertexId> e) const;
  /// Membership in H_i, the state before snapshot epoch `epoch` began.
  bool in_h_before(std::span<const VertexId> e, std::uint32_t epoch) const;
  /// Membership through leaf-pair records alone.
  bool in_records(std::span<const VertexId> e) const;
  bool exposed(std::span<const VertexId> e) const;
  bool appeared(std::span<const VertexId> e) const;
  std::optional<int> round_of(std::span<const VertexId> e) const;

  /// Flips the coin of `e` in `round`. Returns nullopt only under kSkip when
  /// `e` was already in H.
  std::optional<bool> expose(const CoinOracle& coins, int round, std::span<const VertexId> e);

  /// Exposes {a, c} for every c in `candidates`; returns the c whose set appeared.
  std::vector<VertexId> expose_at(const CoinOracle& coins, int round, std::span<const VertexId> a,
                                  std::span<const VertexId> candidates);

  /// Counts bridge-window coin flips that are covered by a leaf-pair record.
  void note_bridge_exposures(int round, std::uint64_t exposed, std::uint64_t appeared);

  /// H := H ∪ (all r-subsets of x ∪ y) for every x in `left`, y in `right`.
  void record_leaf_pairs(const std::vector<Tuple>& left, const std::vector<Tuple>& right);

  /// Number of explicitly exposed r-sets containing the (r-1)-set `s`.
  std::uint32_t degree(std::span<const VertexId> s) const;
  std::uint32_t degree_at_snapshot(std::span<const VertexId> s) const;

  /// Starts a new phase; later queries of H_i see only what was exposed before.
  std::uint32_t snapshot_phase();
  std::uint32_t snapshot_epoch() const { return snapshot_epoch_; }

  /// Visits (packed (r-1)-set, degree) for every (r-1)-set of positive degree.
  template <typename F>
  void for_each_degree(F&& f) const {
    for (const auto& [key, d] : degree_) f(key, d);
  }

  /// Packed keys of explicitly exposed r-sets containing v, in exposure order.
  const std::vector<std::uint64_t>& incident(VertexId v) const { return incidence_[v]; }
  /// The prefix of incident(v) exposed before `epoch`.
  std::span<const std::uint64_t> incident_before(VertexId v, std::uint32_t epoch) const;
  /// Epoch stamp of an explicitly exposed key.
  std::optional<std::uint32_t> epoch_of_key(std::uint64_t key) const;

  /// Leaf-pair record queries used by the temporary-danger computation.
  struct LeafRecord {
    std::uint32_t epoch;
    std::vector<Tuple> left;
    std::vector<Tuple> right;
  };
  const std::vector<LeafRecord>& leaf_records() const { return records_; }
  /// Ids of records with a left leaf containing the packed set, ascending.
  std::span<const std::uint32_t> records_with_left(std::uint64_t packed_subset) const;

  /// Marks a bridge window whose coin came up, so appeared() reports it.
  void note_bridge_window(std::span<const VertexId> e, int round);

  std::uint64_t explicit_count() const { return entries_.size(); }
  std::uint64_t already_exposed_events() const { return already_exposed_events_; }
  const std::vector<RoundStats>& round_stats() const { return stats_; }

  /// Visits every appeared r-set as (sorted vertices, round).
  template <typename F>
  void for_each_appeared(F&& f) const {
    for (const auto& [key, entry] : entries_) {
      if (entry.appeared) f(packer_.unpack(key), static_cast<int>(entry.round));
    }
    for (const auto& [key, round] : bridge_windows_) f(packer_.unpack(key), static_cast<int>(round));
  }

 private:
  struct Entry {
    std::uint32_t epoch;
    std::uint8_t round;
    bool appeared;
  };

  bool records_contain(std::span<const VertexId> sorted_e, std::uint32_t epoch_limit) const;
  void check_set(std::span<const VertexId> e, int size) const;
  RoundStats& stats_for(int round);

  std::size_t n_;
  int r_;
  ExposurePolicy policy_;
  SetPacker packer_;
  std::uint32_t epoch_ = 0;
  std::uint32_t snapshot_epoch_ = 0;
  absl::flat_hash_map<std::uint64_t, Entry> entries_;
  absl::flat_hash_map<std::uint64_t, std::uint32_t> degree_;
  std::vector<std::vector<std::uint64_t>> incidence_;
  std::vector<std::vector<std::uint32_t>> incidence_epoch_;
  std::vector<LeafRecord> records_;
  absl::flat_hash_map<std::uint64_t, std::vector<std::uint32_t>> left_index_;
  absl::flat_hash_map<std::uint64_t, std::vector<std::uint32_t>> right_index_;
  std::vector<char> in_left_record_;
  std::vector<char> in_right_record_;
  absl::flat_hash_map<std::uint64_t, std::uint8_t> bridge_windows_;
  std::vector<RoundStats> stats_;
  std::uint64_t already_exposed_events_ = 0;
};

}  // namespace tightham
