#include "tightham/exposure.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <string>

#include <sodium.h>

#include "tightham/errors.hpp"
#include "tightham/rng.hpp"

namespace tightham {

namespace {

constexpr double kIdentityTolerance = 1e-12;

void ensure_sodium() {
  static const bool ok = sodium_init() >= 0;
  if (!ok) throw internal_error("SodiumInit", "libsodium failed to initialise");
}

void require_probability(double p, const char* name) {
  if (!(p >= 0.0 && p <= 1.0)) {
    throw invalid_input("InfeasibleProbabilities", std::string(name) + " must lie in [0,1]");
  }
}

}  // namespace

void ExposureConfig::validate() const {
  if (r < 3) throw invalid_input("UnsupportedUniformity", "r must be >= 3");
  if (rounds.empty()) throw invalid_input("BadExposureConfig", "at least one round is required");
  for (double p : rounds) require_probability(p, "round probability");
  if (mode == ExposureMode::kExplicitGraph && round_graphs.size() != rounds.size()) {
    throw invalid_input("BadExposureConfig", "explicit-graph mode needs one edge set per round");
  }
}

CoinOracle::CoinOracle(ExposureConfig cfg) : cfg_(std::move(cfg)), packer_(cfg_.n, cfg_.r) {
  cfg_.validate();
  ensure_sodium();
  if (cfg_.mode == ExposureMode::kExplicitGraph) {
    for (const Hypergraph& g : cfg_.round_graphs) {
      auto& keys = explicit_keys_.emplace_back();
      keys.reserve(g.edge_count());
      for (const Edge& e : g.edges()) keys.insert(packer_.pack_sorted(e));
    }
  }
}

double CoinOracle::probability(int round) const {
  if (round < 1 || round > round_count()) {
    throw invalid_input("BadRound", "round " + std::to_string(round) + " out of range");
  }
  return cfg_.rounds[round - 1];
}

bool CoinOracle::coin(int round, std::span<const VertexId> e) const {
  const double p = probability(round);
  if (cfg_.mode == ExposureMode::kExplicitGraph) {
    return explicit_keys_[round - 1].contains(packer_.pack(e));
  }
  if (p >= 1.0) return true;
  if (p <= 0.0) return false;

  VertexId sorted[16];
  std::copy(e.begin(), e.end(), sorted);
  std::sort(sorted, sorted + e.size());
  unsigned char msg[16 * 4];
  for (std::size_t i = 0; i < e.size(); ++i) {
    const VertexId v = sorted[i];
    msg[4 * i + 0] = static_cast<unsigned char>(v);
    msg[4 * i + 1] = static_cast<unsigned char>(v >> 8);
    msg[4 * i + 2] = static_cast<unsigned char>(v >> 16);
    msg[4 * i + 3] = static_cast<unsigned char>(v >> 24);
  }
  unsigned char key[crypto_shorthash_KEYBYTES];
  const std::uint64_t words[2] = {cfg_.master_seed, derive_seed(0x726f756e64ULL, round)};
  for (int w = 0; w < 2; ++w) {
    for (int b = 0; b < 8; ++b) key[8 * w + b] = static_cast<unsigned char>(words[w] >> (8 * b));
  }
  unsigned char out[crypto_shorthash_BYTES];
  crypto_shorthash(out, msg, 4 * e.size(), key);
  std::uint64_t h = 0;
  for (int b = 7; b >= 0; --b) h = (h << 8) | out[b];
  const double u = static_cast<double>(h >> 11) * 0x1.0p-53;
  return u < p;
}

std::vector<double> RoundPlan::as_rounds(int count) const {
  std::vector<double> out(static_cast<std::size_t>(count), q_prime);
  if (count > 0) out[0] = q_dprime;
  return out;
}

double solve_q_dprime(double q, double q_prime) {
  return 1.0 - (1.0 - q) / std::pow(1.0 - q_prime, 4);
}

RoundPlan plan_rounds_strict(std::size_t n, double q, double eps) {
  require_probability(q, "q");
  RoundPlan plan;
  plan.q = q;
  plan.q_prime = std::pow(static_cast<double>(n), -1.0 + eps / 2.0);
  plan.q_dprime = solve_q_dprime(q, plan.q_prime);
  if (!(plan.q_dprime >= plan.q_prime) || plan.q_dprime > 1.0) {
    throw invalid_input("InfeasibleProbabilities",
                        "q is below 1-(1-q')^5 for q' = n^{-1+eps/2}; no valid five-round split");
  }
  return plan;
}

RoundPlan plan_rounds_even(double q) {
  require_probability(q, "q");
  RoundPlan plan;
  plan.q = q;
  plan.q_prime = 1.0 - std::pow(1.0 - q, 0.2);
  plan.q_dprime = plan.q_prime;
  return plan;
}

std::array<double, 32> colour_distribution(double q, double q_prime, double q_dprime) {
  require_probability(q, "q");
  require_probability(q_prime, "q'");
  require_probability(q_dprime, "q''");
  const double lhs = 1.0 - q;
  const double rhs = (1.0 - q_dprime) * std::pow(1.0 - q_prime, 4);
  if (std::abs(lhs - rhs) > kIdentityTolerance * std::max(std::abs(lhs), 1e-300) &&
      std::abs(lhs - rhs) > kIdentityTolerance) {
    throw invalid_input("InfeasibleProbabilities", "1-q != (1-q'')(1-q')^4");
  }
  if (q_dprime < q_prime) throw invalid_input("InfeasibleProbabilities", "need q'' >= q'");
  if (q <= 0.0) throw invalid_input("InfeasibleProbabilities", "q must be positive to colour edges");
  std::array<double, 32> dist{};
  for (unsigned c = 1; c < 32; ++c) {
    const int size = std::popcount(c);
    if ((c & 1u) == 0) {
      dist[c] = std::pow(q_prime, size) * std::pow(1.0 - q_prime, 4 - size) * (1.0 - q_dprime) / q;
    } else {
      dist[c] = std::pow(q_prime, size - 1) * std::pow(1.0 - q_prime, 5 - size) * q_dprime / q;
    }
  }
  return dist;
}

Hypergraph ExplicitSplit::part(int round, std::size_t n, int r) const {
  if (round < 1 || round > 5) throw invalid_input("BadRound", "split rounds are 1..5");
  Hypergraph g(n, r);
  for (std::uint32_t idx : members[round - 1]) g.add_edge(edges[idx]);
  return g;
}

std::optional<std::uint64_t> binomial_count(std::size_t n, int r) {
  if (r < 0 || static_cast<std::size_t>(r) > n) return 0;
  unsigned __int128 c = 1;
  for (int i = 1; i <= r; ++i) {
    c = c * (n - static_cast<std::size_t>(r) + static_cast<std::size_t>(i)) / static_cast<unsigned>(i);
    if (c > (static_cast<unsigned __int128>(1) << 62)) return std::nullopt;
  }
  return static_cast<std::uint64_t>(c);
}

Hypergraph sample_gnp(std::size_t n, int r, double p, std::uint64_t seed, double max_expected) {
  if (r < 3) throw invalid_input("UnsupportedUniformity", "r must be >= 3, got " + std::to_string(r));
  if (!(p >= 0 && p <= 1)) throw invalid_input("BadConfig", "p must lie in [0,1]");
  Hypergraph g(n, r);
  const auto total = binomial_count(n, r);
  if (!total || static_cast<double>(*total) * p > max_expected) {
    throw invalid_input("TooLarge", "expected edge count exceeds " + std::to_string(max_expected) +
                                        "; use lazy mode instead");
  }
  if (p == 0 || *total == 0) return g;

  // binom[i][c] = C(c, i) for the colex unranking below.
  std::vector<std::vector<std::uint64_t>> binom(static_cast<std::size_t>(r) + 1,
                                                std::vector<std::uint64_t>(n + 1, 0));
  for (std::size_t c = 0; c <= n; ++c) {
    binom[0][c] = 1;
    for (int i = 1; i <= r && static_cast<std::size_t>(i) <= c; ++i) {
      binom[i][c] = binom[i][c - 1] + binom[i - 1][c - 1];
    }
  }

  Rng rng(derive_seed(seed, 0x676e70ULL));
  const double log_miss = p < 1 ? std::log1p(-p) : 0.0;
  std::vector<VertexId> e(static_cast<std::size_t>(r));
  std::uint64_t rank = 0;
  while (true) {
    if (p < 1) {
      const double u = 1.0 - rng.uniform();
      const double skip = std::floor(std::log(u) / log_miss);
      if (skip >= static_cast<double>(*total - rank)) break;
      rank += static_cast<std::uint64_t>(skip);
    }
    if (rank >= *total) break;
    std::uint64_t rest = rank;
    std::size_t hi = n;
    for (int i = r; i >= 1; --i) {
      // Largest c < hi with C(c, i) <= rest.
      std::size_t lo = static_cast<std::size_t>(i - 1);
      std::size_t top = hi - 1;
      while (lo < top) {
        const std::size_t mid = (lo + top + 1) / 2;
        if (binom[i][mid] <= rest) lo = mid; else top = mid - 1;
      }
      e[static_cast<std::size_t>(i - 1)] = static_cast<VertexId>(lo);
      rest -= binom[i][lo];
      hi = lo;
    }
    g.add_edge(e);
    ++rank;
  }
  return g;
}

ExplicitSplit split_explicit(const Hypergraph& g, double q, double q_prime, double q_dprime,
                             std::uint64_t seed) {
  ExplicitSplit out;
  out.edges.assign(g.edges().begin(), g.edges().end());
  if (out.edges.empty()) return out;
  const auto dist = colour_distribution(q, q_prime, q_dprime);
  std::array<double, 32> cumulative{};
  double acc = 0.0;
  for (unsigned c = 1; c < 32; ++c) {
    acc += dist[c];
    cumulative[c] = acc;
  }
  Rng rng(derive_seed(seed, 0x73706c6974ULL));
  out.colour.resize(out.edges.size());
  for (std::size_t i = 0; i < out.edges.size(); ++i) {
    const double u = rng.uniform() * acc;
    unsigned c = 1;
    while (c < 31 && cumulative[c] <= u) ++c;
    while (dist[c] == 0.0 && c > 1) --c;
    out.colour[i] = static_cast<std::uint8_t>(c);
    for (int round = 0; round < 5; ++round) {
      if (c & (1u << round)) out.members[round].push_back(static_cast<std::uint32_t>(i));
    }
  }
  return out;
}

ExposureLedger::ExposureLedger(std::size_t n, int r, ExposurePolicy policy)
    : n_(n), r_(r), policy_(policy), packer_(n, r), incidence_(n), incidence_epoch_(n), in_left_record_(n, 0),
      in_right_record_(n, 0) {
  if (r < 3) throw invalid_input("UnsupportedUniformity", "r must be >= 3");
}

void ExposureLedger::check_set(std::span<const VertexId> e, int size) const {
  if (static_cast<int>(e.size()) != size) {
    throw invalid_input("WrongArity", "expected a " + std::to_string(size) + "-set");
  }
  for (VertexId v : e) {
    if (v >= n_) throw invalid_input("VertexOutOfRange", "vertex outside [0,n)");
  }
}

RoundStats& ExposureLedger::stats_for(int round) {
  if (round < 1) throw invalid_input("BadRound", "rounds are 1-based");
  if (stats_.size() < static_cast<std::size_t>(round)) stats_.resize(round);
  return stats_[round - 1];
}

bool ExposureLedger::records_contain(std::span<const VertexId> sorted_e,
                                     std::uint32_t epoch_limit) const {
  if (records_.empty()) return false;
  bool any_left = false, any_right = false;
  for (VertexId v : sorted_e) {
    any_left = any_left || in_left_record_[v];
    any_right = any_right || in_right_record_[v];
  }
  if (!any_left || !any_right) return false;
  const unsigned full = (1u << r_) - 1;
  VertexId a[16], b[16];
  for (unsigned mask = 1; mask < full; ++mask) {
    std::size_t na = 0, nb = 0;
    for (int i = 0; i < r_; ++i) {
      if (mask & (1u << i)) a[na++] = sorted_e[i];
      else b[nb++] = sorted_e[i];
    }
    auto lit = left_index_.find(packer_.pack_sorted({a, na}));
    if (lit == left_index_.end()) continue;
    auto rit = right_index_.find(packer_.pack_sorted({b, nb}));
    if (rit == right_index_.end()) continue;
    // Both id lists are ascending; look for a shared record older than the limit.
    const auto& l = lit->second;
    const auto& rr = rit->second;
    std::size_t i = 0, j = 0;
    while (i < l.size() && j < rr.size()) {
      if (l[i] == rr[j]) {
        if (records_[l[i]].epoch < epoch_limit) return true;
        ++i;
        ++j;
      } else if (l[i] < rr[j]) {
        ++i;
      } else {
        ++j;
      }
    }
  }
  return false;
}

bool ExposureLedger::in_h(std::span<const VertexId> e) const {
  return in_h_before(e, UINT32_MAX);
}

bool ExposureLedger::in_h_before(std::span<const VertexId> e, std::uint32_t epoch) const {
  check_set(e, r_);
  VertexId sorted[16];
  std::copy(e.begin(), e.end(), sorted);
  std::sort(sorted, sorted + r_);
  std::span<const VertexId> s(sorted, static_cast<std::size_t>(r_));
  if (auto it = entries_.find(packer_.pack_sorted(s)); it != entries_.end()) {
    if (it->second.epoch < epoch) return true;
  }
  return records_contain(s, epoch);
}

bool ExposureLedger::in_records(std::span<const VertexId> e) const {
  check_set(e, r_);
  if (records_.empty()) return false;
  VertexId sorted[16];
  std::copy(e.begin(), e.end(), sorted);
  std::sort(sorted, sorted + r_);
  return records_contain({sorted, static_cast<std::size_t>(r_)}, UINT32_MAX);
}

bool ExposureLedger::exposed(std::span<const VertexId> e) const {
  check_set(e, r_);
  return entries_.contains(packer_.pack(e));
}

bool ExposureLedger::appeared(std::span<const VertexId> e) const {
  if (static_cast<int>(e.size()) != r_) return false;
  const std::uint64_t key = packer_.pack(e);
  auto it = entries_.find(key);
  if (it != entries_.end()) return it->second.appeared;
  return bridge_windows_.contains(key);
}

void ExposureLedger::note_bridge_window(std::span<const VertexId> e, int round) {
  check_set(e, r_);
  bridge_windows_.emplace(packer_.pack(e), static_cast<std::uint8_t>(round));
}

std::span<const std::uint32_t> ExposureLedger::records_with_left(std::uint64_t packed_subset) const {
  auto it = left_index_.find(packed_subset);
  if (it == left_index_.end()) return {};
  return it->second;
}

std::optional<int> ExposureLedger::round_of(std::span<const VertexId> e) const {
  check_set(e, r_);
  auto it = entries_.find(packer_.pack(e));
  if (it == entries_.end()) return std::nullopt;
  return it->second.round;
}

std::span<const std::uint64_t> ExposureLedger::incident_before(VertexId v,
                                                              std::uint32_t epoch) const {
  const auto& ep = incidence_epoch_[v];
  const auto cut = std::lower_bound(ep.begin(), ep.end(), epoch) - ep.begin();
  return {incidence_[v].data(), static_cast<std::size_t>(cut)};
}

std::optional<std::uint32_t> ExposureLedger::epoch_of_key(std::uint64_t key) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return it->second.epoch;
}

std::optional<bool> ExposureLedger::expose(const CoinOracle& coins, int round,
                                           std::span<const VertexId> e) {
  check_set(e, r_);
  VertexId sorted[16];
  std::copy(e.begin(), e.end(), sorted);
  std::sort(sorted, sorted + r_);
  const std::span<const VertexId> s(sorted, static_cast<std::size_t>(r_));
  if (std::adjacent_find(s.begin(), s.end()) != s.end()) {
    throw invalid_input("RepeatedVertex", "r-set vertices must be distinct");
  }
  const std::uint64_t key = packer_.pack_sorted(s);
  bool fresh = !records_contain(s, UINT32_MAX);
  if (fresh) fresh = entries_.try_emplace(key, Entry{epoch_, static_cast<std::uint8_t>(round), false}).second;
  if (!fresh) {
    ++already_exposed_events_;
    if (policy_ == ExposurePolicy::kStrict) {
      throw internal_error("AlreadyExposed", "attempted to expose an r-set twice");
    }
    return std::nullopt;
  }
  const bool appears = coins.coin(round, e);
  entries_.find(key)->second.appeared = appears;
  VertexId sub[16];
  for (int skip = 0; skip < r_; ++skip) {
    std::size_t k = 0;
    for (int i = 0; i < r_; ++i) {
      if (i != skip) sub[k++] = sorted[i];
    }
    ++degree_[packer_.pack_sorted({sub, k})];
    incidence_[sorted[skip]].push_back(key);
    incidence_epoch_[sorted[skip]].push_back(epoch_);
  }
  RoundStats& st = stats_for(round);
  ++st.exposed;
  if (appears) ++st.appeared;
  return appears;
}

std::vector<VertexId> ExposureLedger::expose_at(const CoinOracle& coins, int round,
                                                std::span<const VertexId> a,
                                                std::span<const VertexId> candidates) {
  check_set(a, r_ - 1);
  std::vector<VertexId> appeared_at;
  std::vector<VertexId> e(a.begin(), a.end());
  e.push_back(0);
  for (VertexId c : candidates) {
    e.back() = c;
    if (auto hit = expose(coins, round, e); hit.value_or(false)) appeared_at.push_back(c);
  }
  return appeared_at;
}

void ExposureLedger::note_bridge_exposures(int round, std::uint64_t exposed,
                                           std::uint64_t appeared) {
  RoundStats& st = stats_for(round);
  st.exposed += exposed;
  st.appeared += appeared;
}

void ExposureLedger::record_leaf_pairs(const std::vector<Tuple>& left,
                                       const std::vector<Tuple>& right) {
  if (left.empty() || right.empty()) return;
  const auto id = static_cast<std::uint32_t>(records_.size());
  records_.push_back(LeafRecord{epoch_, left, right});
  auto index_all = [&](const std::vector<Tuple>& leaves,
                       absl::flat_hash_map<std::uint64_t, std::vector<std::uint32_t>>& index,
                       std::vector<char>& seen) {
    VertexId buf[16];
    for (const Tuple& leaf : leaves) {
      check_set(leaf, r_ - 1);
      for (VertexId v : leaf) seen[v] = 1;
      Edge s = canonical(leaf);
      const unsigned full = 1u << s.size();
      for (unsigned mask = 1; mask < full; ++mask) {
        std::size_t k = 0;
        for (std::size_t i = 0; i < s.size(); ++i) {
          if (mask & (1u << i)) buf[k++] = s[i];
        }
        auto& ids = index[packer_.pack_sorted({buf, k})];
        if (ids.empty() || ids.back() != id) ids.push_back(id);
      }
    }
  };
  index_all(left, left_index_, in_left_record_);
  index_all(right, right_index_, in_right_record_);
}

std::uint32_t ExposureLedger::degree(std::span<const VertexId> s) const {
  check_set(s, r_ - 1);
  auto it = degree_.find(packer_.pack(s));
  return it == degree_.end() ? 0 : it->second;
}

std::uint32_t ExposureLedger::degree_at_snapshot(std::span<const VertexId> s) const {
  check_set(s, r_ - 1);
  const Edge sorted = canonical(s);
  VertexId pivot = sorted[0];
  for (VertexId v : sorted) {
    if (incidence_[v].size() < incidence_[pivot].size()) pivot = v;
  }
  std::uint32_t count = 0;
  for (std::uint64_t key : incidence_[pivot]) {
    if (entries_.at(key).epoch >= snapshot_epoch_) continue;
    const auto members = packer_.unpack(key);
    if (std::includes(members.begin(), members.end(), sorted.begin(), sorted.end())) ++count;
  }
  return count;
}

std::uint32_t ExposureLedger::snapshot_phase() {
  ++epoch_;
  snapshot_epoch_ = epoch_;
  return snapshot_epoch_;
}

}  // namespace tightham
