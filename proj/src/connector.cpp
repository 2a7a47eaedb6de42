#include "tightham/connector.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tightham/errors.hpp"
#include "tightham/rng.hpp"

namespace tightham {

namespace {

double factorial(int k) {
  double f = 1;
  for (int i = 2; i <= k; ++i) f *= i;
  return f;
}

double analytic_xi_prime(int r, double delta) { return delta / (48.0 * r * r); }

double analytic_xi(int r, double delta) {
  return std::pow(analytic_xi_prime(r, delta), r) / (static_cast<double>(r) * r * factorial(r - 1));
}

double analytic_cap(std::size_t n, int r, double eps, double xi, int j) {
  const double nn = static_cast<double>(n);
  return std::pow(xi, r - j) * std::pow(nn, (r - 1) / 2.0 - j * (1.0 - eps));
}

void check_r(int r) {
  if (r < 3) throw invalid_input("UnsupportedUniformity", "the connector needs r >= 3");
}

// Visits every k-subset of `items` (ascending input gives ascending subsets).
template <typename F>
void for_each_subset(std::span<const VertexId> items, std::size_t k, F&& f) {
  if (k > items.size()) return;
  std::vector<std::size_t> idx(k);
  std::iota(idx.begin(), idx.end(), 0);
  std::vector<VertexId> buf(k);
  while (true) {
    for (std::size_t i = 0; i < k; ++i) buf[i] = items[idx[i]];
    f(std::span<const VertexId>(buf));
    std::size_t i = k;
    while (i > 0 && idx[i - 1] == items.size() - k + i - 1) --i;
    if (i == 0) return;
    ++idx[i - 1];
    for (std::size_t j = i; j < k; ++j) idx[j] = idx[j - 1] + 1;
  }
}

bool contains(std::span<const VertexId> seq, VertexId v) {
  return std::find(seq.begin(), seq.end(), v) != seq.end();
}

// The set a_{j-1} ∪ {c}: last j-1 vertices of a, then c.
void tail_with(std::span<const VertexId> a, std::size_t j, VertexId c, std::vector<VertexId>& out) {
  out.assign(a.end() - static_cast<std::ptrdiff_t>(j - 1), a.end());
  out.push_back(c);
}

// `a_exposed`: some explicitly exposed r-set contains a (otherwise only leaf records can).
bool is_bad(std::span<const VertexId> a, VertexId c, const PhaseState& st,
            const ConnectorConfig& cfg, bool a_exposed, std::vector<VertexId>& buf) {
  const int r = cfg.r;
  buf.assign(a.begin(), a.end());
  buf.push_back(c);
  if (a_exposed ? st.ledger->in_h(buf) : st.ledger->in_records(buf)) return true;
  const SetPacker& packer = st.ledger->packer();
  for (int j = 1; j <= r - 1; ++j) {
    tail_with(a, static_cast<std::size_t>(j), c, buf);
    if (st.danger != nullptr && st.danger->dangerous(packer, buf)) return true;
    if (st.used_sets != nullptr && st.used_sets->count(buf) > cfg.mult_cap[j]) return true;
  }
  return false;
}

void cascade(std::vector<absl::flat_hash_set<std::uint64_t>>& levels, const SetPacker& packer,
             double threshold) {
  const int top = static_cast<int>(levels.size()) - 1;
  for (int j = top - 1; j >= 1; --j) {
    absl::flat_hash_map<std::uint64_t, std::uint32_t> deg;
    for (std::uint64_t key : levels[j + 1]) {
      const auto members = packer.unpack(key);
      for_each_subset(members, static_cast<std::size_t>(j),
                      [&](std::span<const VertexId> s) { ++deg[packer.pack_sorted(s)]; });
    }
    for (const auto& [key, d] : deg) {
      if (d >= threshold) levels[j].insert(key);
    }
  }
}

struct Window {
  VertexId v[16];
  std::size_t size;
  operator std::span<const VertexId>() const { return {v, size}; }
};

Window window(std::span<const VertexId> x, std::span<const VertexId> y, std::size_t start,
              std::size_t r) {
  Window w{{}, r};
  for (std::size_t i = 0; i < r; ++i) {
    const std::size_t k = start + i;
    w.v[i] = k < x.size() ? x[k] : y[k - x.size()];
  }
  return w;
}

std::uint64_t total_exposed(const ExposureLedger& ledger) {
  std::uint64_t total = 0;
  for (const RoundStats& s : ledger.round_stats()) total += s.exposed;
  return total;
}

}  // namespace

ConnectorConfig ConnectorConfig::strict(std::size_t n, int r, double eps, double delta) {
  check_r(r);
  ConnectorConfig cfg;
  const double nn = static_cast<double>(n);
  cfg.r = r;
  cfg.eps = eps;
  cfg.delta = delta;
  cfg.mode = ConnectorMode::kStrict;
  cfg.xi_prime = analytic_xi_prime(r, delta);
  cfg.xi = analytic_xi(r, delta);
  cfg.eta = delta / (16.0 * r);
  cfg.width_target = std::pow(nn, (r - 1) / 2.0 - eps / 2.0);
  cfg.c_min = delta * std::pow(nn, eps) / (16.0 * r);
  cfg.c_max = delta * std::pow(nn, eps) / (2.0 * r);
  cfg.mult_cap.assign(static_cast<std::size_t>(r), 0.0);
  for (int j = 1; j < r; ++j) cfg.mult_cap[j] = analytic_cap(n, r, eps, cfg.xi, j);
  cfg.max_fan_levels = static_cast<int>(std::ceil(4.0 * r / eps));
  cfg.direct_bridge = false;
  return cfg;
}

ConnectorConfig ConnectorConfig::practical(std::size_t n, int r, double eps, double delta) {
  check_r(r);
  ConnectorConfig cfg;
  const double nn = static_cast<double>(n);
  cfg.r = r;
  cfg.eps = eps;
  cfg.delta = delta;
  cfg.mode = ConnectorMode::kPractical;
  cfg.xi = 1.0 / (2.0 * r);
  cfg.xi_prime = 1.0 / (2.0 * r);
  cfg.eta = delta / (16.0 * r);
  cfg.width_target = std::max(1.0, std::pow(nn, (r - 1) / 2.0 - eps / 2.0));
  cfg.c_min = 1;
  cfg.c_max = std::max(8.0, std::ceil(delta * std::pow(nn, eps) / (2.0 * r)));
  cfg.mult_cap.assign(static_cast<std::size_t>(r), 0.0);
  const int half = (r + 1) / 2;
  const double xi_analytic = analytic_xi(r, delta);
  for (int j = 1; j < r; ++j) {
    cfg.mult_cap[j] = j < half ? std::max(1.0, analytic_cap(n, r, eps, xi_analytic, j)) : 0.0;
  }
  cfg.max_fan_levels = static_cast<int>(std::ceil(4.0 * r / eps));
  return cfg;
}

std::size_t ConnectorConfig::length_cap() const {
  return 2 * static_cast<std::size_t>(r - 1) + 2 * static_cast<std::size_t>(max_fan_levels);
}

void ConnectorConfig::validate() const {
  check_r(r);
  if (!(eps > 0 && eps < 1)) throw invalid_input("BadConnectorConfig", "eps must lie in (0,1)");
  if (!(delta > 0 && delta <= 1)) throw invalid_input("BadConnectorConfig", "delta must lie in (0,1]");
  if (!(c_min < c_max)) throw invalid_input("BadConnectorConfig", "need c_min < c_max");
  if (!(width_target >= 1)) throw invalid_input("BadConnectorConfig", "width_target must be >= 1");
  if (mult_cap.size() != static_cast<std::size_t>(r)) {
    throw invalid_input("BadConnectorConfig", "mult_cap needs one entry per set size 1..r-1");
  }
  if (max_fan_levels < 1) throw invalid_input("BadConnectorConfig", "max_fan_levels must be >= 1");
}

std::vector<Tuple> Fan::leaves() const {
  std::vector<Tuple> out;
  out.reserve(paths.size());
  const std::size_t k = root.size();
  for (const Tuple& p : paths) out.emplace_back(p.end() - static_cast<std::ptrdiff_t>(k), p.end());
  return out;
}

void UsedMultiset::add(std::span<const VertexId> s) {
  const std::uint32_t c = ++counts_[packer_->pack(s)];
  if (max_.size() <= s.size()) max_.resize(s.size() + 1, 0);
  max_[s.size()] = std::max(max_[s.size()], c);
}

std::uint32_t UsedMultiset::count(std::span<const VertexId> s) const {
  auto it = counts_.find(packer_->pack(s));
  return it == counts_.end() ? 0 : it->second;
}

std::uint32_t UsedMultiset::max_count(std::size_t size) const {
  return size < max_.size() ? max_[size] : 0;
}

bool DangerRegistry::dangerous(const SetPacker& packer, std::span<const VertexId> s) const {
  const std::size_t j = s.size();
  if (j == 0 || j >= d.size()) return false;
  if (d[j].empty() && d_tilde[j].empty()) return false;
  const std::uint64_t key = packer.pack(s);
  return d[j].contains(key) || d_tilde[j].contains(key);
}

Parts partition_X(std::span<const VertexId> x, int r, std::uint64_t seed) {
  check_r(r);
  const std::size_t parts = 4 * static_cast<std::size_t>(r);
  if (x.size() < parts) {
    throw invalid_input("XTooSmall", "|X| = " + std::to_string(x.size()) + " < 4r");
  }
  std::vector<VertexId> shuffled(x.begin(), x.end());
  std::sort(shuffled.begin(), shuffled.end());
  Rng rng(derive_seed(seed, 0x7061727469));
  rng.shuffle(std::span<VertexId>(shuffled));
  const std::size_t base = x.size() / parts, extra = x.size() % parts;
  Parts out;
  std::size_t pos = 0;
  for (std::size_t i = 0; i < parts; ++i) {
    const std::size_t len = base + (i < extra ? 1 : 0);
    std::vector<VertexId> part(shuffled.begin() + static_cast<std::ptrdiff_t>(pos),
                               shuffled.begin() + static_cast<std::ptrdiff_t>(pos + len));
    std::sort(part.begin(), part.end());
    pos += len;
    (i < parts / 2 ? out.y : out.y_prime).push_back(std::move(part));
  }
  return out;
}

DangerRegistry compute_danger_sets(const ExposureLedger& ledger, std::span<const VertexId> x,
                                   double xi, std::size_t n) {
  const int r = ledger.uniformity();
  DangerRegistry reg(r);
  const double threshold = xi * static_cast<double>(n);
  std::vector<char> in_x(ledger.vertex_count(), 0);
  for (VertexId v : x) in_x[v] = 1;
  const SetPacker& packer = ledger.packer();
  ledger.for_each_degree([&](std::uint64_t key, std::uint32_t d) {
    if (d < threshold) return;
    const auto members = packer.unpack(key);
    for (VertexId v : members) {
      if (!in_x[v]) return;
    }
    if (ledger.degree_at_snapshot(members) >= threshold) reg.d[r - 1].insert(key);
  });
  cascade(reg.d, packer, threshold);
  return reg;
}

void compute_temp_danger(DangerRegistry& reg, const std::vector<Tuple>& leaves_u,
                         const ExposureLedger& ledger, double xi_prime,
                         std::span<const VertexId> y_prime, std::size_t n) {
  const int r = ledger.uniformity();
  for (auto& level : reg.d_tilde) level.clear();
  if (leaves_u.empty()) return;
  const SetPacker& packer = ledger.packer();
  const std::uint32_t limit = ledger.snapshot_epoch();
  const double tau = xi_prime * static_cast<double>(leaves_u.size());

  std::vector<char> in_yp(ledger.vertex_count(), 0);
  for (VertexId v : y_prime) in_yp[v] = 1;

  // For each set Q in Y', the leaves x with x-part ∪ Q an r-set of H_i.
  absl::flat_hash_map<std::uint64_t, std::vector<std::uint32_t>> leaves_of;
  auto note_key = [&](std::uint64_t key, std::uint32_t leaf) {
    auto& ids = leaves_of[key];
    if (ids.empty() || ids.back() != leaf) ids.push_back(leaf);
  };
  auto note = [&](std::span<const VertexId> q, std::uint32_t leaf) {
    note_key(packer.pack_sorted(q), leaf);
  };
  // Distinct Y'-subsets of each record's right leaves, by (record, size).
  absl::flat_hash_map<std::uint64_t, std::vector<std::uint64_t>> record_sets;
  auto sets_of = [&](std::uint32_t id, std::size_t need) -> const std::vector<std::uint64_t>& {
    auto [it, fresh] = record_sets.try_emplace((static_cast<std::uint64_t>(id) << 8) | need);
    if (fresh) {
      absl::flat_hash_set<std::uint64_t> seen;
      std::vector<VertexId> ys;
      for (const Tuple& y : ledger.leaf_records()[id].right) {
        ys.clear();
        for (VertexId w : y) {
          if (in_yp[w]) ys.push_back(w);
        }
        std::sort(ys.begin(), ys.end());
        for_each_subset(ys, need, [&](std::span<const VertexId> q) {
          const std::uint64_t key = packer.pack_sorted(q);
          if (seen.insert(key).second) it->second.push_back(key);
        });
      }
    }
    return it->second;
  };

  std::vector<VertexId> q, sub;
  absl::flat_hash_set<std::uint64_t> done;
  for (std::uint32_t li = 0; li < leaves_u.size(); ++li) {
    const Edge x = canonical(leaves_u[li]);
    for (VertexId v : x) {
      for (std::uint64_t key : ledger.incident_before(v, limit)) {
        q.clear();
        bool inside = true;
        for (VertexId w : packer.unpack(key)) {
          if (std::binary_search(x.begin(), x.end(), w)) continue;
          if (!in_yp[w]) {
            inside = false;
            break;
          }
          q.push_back(w);
        }
        if (inside) note(q, li);
      }
    }
    const unsigned full = 1u << x.size();
    done.clear();
    for (unsigned mask = 1; mask < full; ++mask) {
      sub.clear();
      for (std::size_t i = 0; i < x.size(); ++i) {
        if (mask & (1u << i)) sub.push_back(x[i]);
      }
      const std::size_t need = static_cast<std::size_t>(r) - sub.size();
      for (std::uint32_t id : ledger.records_with_left(packer.pack_sorted(sub))) {
        if (ledger.leaf_records()[id].epoch >= limit) continue;
        if (!done.insert((static_cast<std::uint64_t>(id) << 8) | need).second) continue;
        for (std::uint64_t key : sets_of(id, need)) note_key(key, li);
      }
    }
  }

  const std::size_t top = static_cast<std::size_t>(r - 1);
  const double heavy = tau / static_cast<double>((1u << top) - 1);
  std::vector<VertexId> yp_sorted(y_prime.begin(), y_prime.end());
  std::sort(yp_sorted.begin(), yp_sorted.end());
  absl::flat_hash_set<std::uint64_t> candidates;
  for (const auto& [key, ids] : leaves_of) {
    const auto qs = packer.unpack(key);
    if (qs.size() == top) {
      candidates.insert(key);
      continue;
    }
    if (static_cast<double>(ids.size()) < heavy) continue;
    std::vector<VertexId> rest;
    std::set_difference(yp_sorted.begin(), yp_sorted.end(), qs.begin(), qs.end(),
                        std::back_inserter(rest));
    for_each_subset(rest, top - qs.size(), [&](std::span<const VertexId> extra) {
      std::vector<VertexId> y(qs.begin(), qs.end());
      y.insert(y.end(), extra.begin(), extra.end());
      candidates.insert(packer.pack(y));
    });
  }

  std::vector<std::uint32_t> stamp(leaves_u.size(), UINT32_MAX);
  std::uint32_t round = 0;
  for (std::uint64_t key : candidates) {
    const auto y = packer.unpack(key);
    std::size_t count = 0;
    for (unsigned mask = 1; mask < (1u << top); ++mask) {
      sub.clear();
      for (std::size_t i = 0; i < top; ++i) {
        if (mask & (1u << i)) sub.push_back(y[i]);
      }
      auto it = leaves_of.find(packer.pack_sorted(sub));
      if (it == leaves_of.end()) continue;
      for (std::uint32_t leaf : it->second) {
        if (stamp[leaf] != round) {
          stamp[leaf] = round;
          ++count;
        }
      }
    }
    if (static_cast<double>(count) >= tau) reg.d_tilde[top].insert(key);
    ++round;
  }
  cascade(reg.d_tilde, packer, xi_prime * static_cast<double>(n));
}

bool is_blocked(std::span<const VertexId> x, std::span<const VertexId> y,
                const ExposureLedger& ledger) {
  for (VertexId v : x) {
    if (contains(y, v)) throw invalid_input("TuplesIntersect", "blocked test needs disjoint tuples");
  }
  const std::size_t r = static_cast<std::size_t>(ledger.uniformity());
  for (std::size_t start = 0; start + r <= x.size() + y.size(); ++start) {
    if (ledger.in_h(window(x, y, start, r))) return true;
  }
  return false;
}

std::vector<VertexId> bad_vertices(std::span<const VertexId> a, const PhaseState& st,
                                   const ConnectorConfig& cfg) {
  std::vector<VertexId> out, buf;
  const bool a_exposed = st.ledger->degree(a) > 0;
  for (VertexId c = 0; c < st.in_x.size(); ++c) {
    if (!st.in_x[c] || (st.used != nullptr && (*st.used)[c]) || contains(a, c)) continue;
    if (is_bad(a, c, st, cfg, a_exposed, buf)) out.push_back(c);
  }
  return out;
}

Fan grow_fan(const Tuple& root, const std::vector<std::vector<VertexId>>& parts,
             const CoinOracle& coins, int round, ExposureLedger& ledger,
             const DangerRegistry& danger, std::vector<char>& used, const ConnectorConfig& cfg,
             FanStats* stats, int exact_levels) {
  const int r = cfg.r;
  if (root.size() != static_cast<std::size_t>(r - 1)) {
    throw invalid_input("WrongArity", "fan root must be an (r-1)-tuple");
  }
  if (parts.empty()) throw invalid_input("XTooSmall", "no parts to grow a fan in");
  UsedMultiset used_sets(ledger.packer());
  PhaseState st;
  st.ledger = &ledger;
  st.danger = &danger;
  st.used_sets = &used_sets;
  st.used = &used;

  FanStats local;
  FanStats& fs = stats != nullptr ? *stats : local;
  fs = FanStats{};
  const bool exact = exact_levels >= 0;
  double target = cfg.width_target;
  if (cfg.mode == ConnectorMode::kPractical) {
    std::size_t smallest = parts[0].size();
    for (const auto& part : parts) smallest = std::min(smallest, part.size());
    const double reachable = (std::floor(cfg.mult_cap[1]) + 1) * static_cast<double>(smallest) / 2;
    target = std::max(1.0, std::min(target, std::floor(reachable)));
  }
  const auto exact_width_cap = static_cast<std::size_t>(std::ceil(2 * target));

  Fan fan;
  fan.root = root;
  fan.paths.push_back(root);
  std::vector<VertexId> buf, candidates;
  std::size_t t = 0;

  auto finish = [&](std::vector<Tuple> paths, int levels) {
    fan.paths = std::move(paths);
    fan.length = levels;
    fs.levels = levels;
    fs.width = fan.paths.size();
    fs.max_multiplicity.assign(static_cast<std::size_t>(r), 0);
    for (int j = 1; j < r; ++j) fs.max_multiplicity[j] = used_sets.max_count(static_cast<std::size_t>(j));
    return fan;
  };

  for (int level = 0;; ++level) {
    if (exact && level == exact_levels) return finish(std::move(fan.paths), level);
    if (level >= cfg.max_fan_levels) {
      throw stage_failure("LevelBudgetExceeded",
                          "fan did not reach width " + std::to_string(target) + " within " +
                              std::to_string(cfg.max_fan_levels) + " levels");
    }
    const std::vector<VertexId>& yt = parts[t];
    std::vector<Tuple> next;
    for (const Tuple& p : fan.paths) {
      if (exact && next.size() >= exact_width_cap) {
        ++fs.dropped_paths;
        continue;
      }
      const std::span<const VertexId> a(p.end() - (r - 1), p.end());
      candidates.clear();
      const bool a_exposed = ledger.degree(a) > 0;
      for (VertexId c : yt) {
        if (used[c] || contains(p, c) || is_bad(a, c, st, cfg, a_exposed, buf)) continue;
        candidates.push_back(c);
      }
      std::vector<VertexId> appeared = ledger.expose_at(coins, round, a, candidates);
      fs.exposed += candidates.size();
      const double size = static_cast<double>(appeared.size());
      if (cfg.mode == ConnectorMode::kStrict) {
        if (size < cfg.c_min || size > cfg.c_max) {
          throw stage_failure("WidthWindowFailure",
                              "|C| = " + std::to_string(appeared.size()) + " outside [" +
                                  std::to_string(cfg.c_min) + ", " + std::to_string(cfg.c_max) + "]");
        }
      } else {
        if (size < cfg.c_min) {
          ++fs.dropped_paths;
          continue;
        }
        if (size > cfg.c_max) {
          appeared.resize(static_cast<std::size_t>(cfg.c_max));
          ++fs.truncated_paths;
        }
      }
      if (exact && next.size() + appeared.size() > exact_width_cap) {
        appeared.resize(exact_width_cap - next.size());
      }
      for (VertexId c : appeared) {
        Tuple child = p;
        child.push_back(c);
        const VertexId single[1] = {c};
        used_sets.add(single);
        for (int j = 1; j <= r - 2; ++j) {
          buf.assign(p.end() - j, p.end());
          buf.push_back(c);
          used_sets.add(buf);
        }
        next.push_back(std::move(child));
      }
      if (!exact && static_cast<double>(next.size()) >= target) {
        return finish(std::move(next), level + 1);
      }
    }
    if (next.empty()) {
      throw stage_failure("WidthWindowFailure",
                          "fan died out at level " + std::to_string(level + 1));
    }
    fan.paths = std::move(next);
    t = (t + 1) % parts.size();
  }
}

Tuple connect_pair(const Fan& fan_u, const Fan& fan_v, const CoinOracle& coins, int round,
                   ExposureLedger& ledger, const ConnectorConfig& cfg, BridgeStats* stats) {
  const std::size_t r = static_cast<std::size_t>(cfg.r);
  BridgeStats local;
  BridgeStats& bs = stats != nullptr ? *stats : local;
  bs = BridgeStats{};

  // Leaves in lexicographic order, keeping the first path for a repeated leaf.
  auto ordered = [&](const Fan& fan, bool reverse) {
    std::vector<std::pair<Tuple, std::size_t>> out;
    const auto leaves = fan.leaves();
    for (std::size_t i = 0; i < leaves.size(); ++i) {
      out.emplace_back(reverse ? reversed(leaves[i]) : leaves[i], i);
    }
    std::stable_sort(out.begin(), out.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    out.erase(std::unique(out.begin(), out.end(),
                          [](const auto& a, const auto& b) { return a.first == b.first; }),
              out.end());
    return out;
  };
  const auto left = ordered(fan_u, false);
  const auto right = ordered(fan_v, true);

  const SetPacker& packer = ledger.packer();
  absl::flat_hash_map<std::uint64_t, bool> flips;
  std::uint64_t appeared_count = 0;
  auto flip = [&](std::span<const VertexId> w) {
    const std::uint64_t key = packer.pack(w);
    auto [it, fresh] = flips.try_emplace(key, false);
    if (fresh) {
      it->second = coins.coin(round, w);
      ++bs.exposed;
      appeared_count += it->second;
    }
    return it->second;
  };

  std::optional<std::pair<std::size_t, std::size_t>> chosen;
  for (std::size_t i = 0; i < left.size() && !(chosen && cfg.early_exit_bridge); ++i) {
    for (std::size_t j = 0; j < right.size(); ++j) {
      const Tuple& x = left[i].first;
      const Tuple& y = right[j].first;
      if (is_blocked(x, y, ledger)) continue;
      ++bs.candidates;
      bool all = true;
      for (std::size_t s = 0; s + r <= 2 * (r - 1); ++s) {
        if (!flip(window(x, y, s, r))) {
          all = false;
          if (cfg.early_exit_bridge) break;
        }
      }
      if (all && !chosen) {
        chosen = {left[i].second, right[j].second};
        if (cfg.early_exit_bridge) break;
      }
    }
  }

  std::vector<Tuple> left_leaves, right_leaves;
  for (const auto& [leaf, idx] : left) left_leaves.push_back(leaf);
  for (const auto& [leaf, idx] : right) right_leaves.push_back(reversed(leaf));
  ledger.record_leaf_pairs(left_leaves, right_leaves);
  ledger.note_bridge_exposures(round, bs.exposed, appeared_count);

  if (!chosen) {
    throw stage_failure("BridgeFailure", "no bridge appeared among " + std::to_string(bs.candidates) +
                                             " unblocked leaf pairs");
  }
  Tuple path = fan_u.paths[chosen->first];
  const Tuple tail = reversed(fan_v.paths[chosen->second]);
  const std::span<const VertexId> x(path.end() - static_cast<std::ptrdiff_t>(r - 1), path.end());
  const std::span<const VertexId> y(tail.begin(), tail.begin() + static_cast<std::ptrdiff_t>(r - 1));
  for (std::size_t s = 0; s + r <= 2 * (r - 1); ++s) ledger.note_bridge_window(window(x, y, s, r), round);
  path.insert(path.end(), tail.begin(), tail.end());
  return path;
}

void ConnectionResult::throw_if_failed() const {
  if (failure) {
    throw stage_failure(failure->code,
                        "connection " + std::to_string(failure->phase) + ": " + failure->detail);
  }
}

ConnectionResult connect_all(const ConnectionRequest& request, const CoinOracle& coins,
                             ExposureLedger& ledger, const ConnectorConfig& cfg) {
  cfg.validate();
  ConnectionResult result;
  const std::size_t k = request.pairs.size();
  if (k == 0) return result;
  const std::size_t n = ledger.vertex_count();
  const int r = cfg.r;
  if (ledger.uniformity() != r) throw invalid_input("BadConnectorConfig", "ledger uniformity differs");
  if (!request.target_lengths.empty() && request.target_lengths.size() != k) {
    throw invalid_input("BadRequest", "target_lengths must have one entry per pair");
  }

  std::vector<char> used(n, 0), in_x(n, 0);
  for (VertexId v : request.x) {
    if (v >= n) throw invalid_input("VertexOutOfRange", "X vertex outside [0,n)");
    if (in_x[v]) throw invalid_input("BadRequest", "X lists a vertex twice");
    in_x[v] = 1;
  }
  for (const auto& [u, v] : request.pairs) {
    if (u.size() != static_cast<std::size_t>(r - 1) || v.size() != static_cast<std::size_t>(r - 1)) {
      throw invalid_input("WrongArity", "request tuples must have r-1 vertices");
    }
    for (const Tuple* t : {&u, &v}) {
      for (VertexId w : *t) {
        if (w >= n) throw invalid_input("VertexOutOfRange", "tuple vertex outside [0,n)");
        if (used[w] || in_x[w]) throw invalid_input("TuplesIntersect", "request tuples must be disjoint from each other and from X");
        used[w] = 1;
      }
    }
  }

  std::optional<Parts> parts;
  std::vector<VertexId> y_prime_all;
  if (request.x.size() >= 4 * static_cast<std::size_t>(r)) {
    parts = partition_X(request.x, r, request.seed);
    for (const auto& p : parts->y_prime) y_prime_all.insert(y_prime_all.end(), p.begin(), p.end());
  }

  const double nn = static_cast<double>(n);
  for (std::size_t i = 0; i < k; ++i) {
    const auto& [u, v] = request.pairs[i];
    const std::size_t target = request.target_lengths.empty() ? 0 : request.target_lengths[i];
    PhaseStats ps;
    const std::uint64_t before = total_exposed(ledger);
    ledger.snapshot_phase();
    try {
      int total_levels = -1;
      if (target != 0) {
        if (target < 2 * static_cast<std::size_t>(r - 1)) {
          throw invalid_input("LengthInfeasible", "target length shorter than 2(r-1)");
        }
        total_levels = static_cast<int>(target - 2 * static_cast<std::size_t>(r - 1));
      }
      std::optional<Tuple> path;
      if ((cfg.direct_bridge && total_levels <= 0) || total_levels == 0) {
        if (!is_blocked(u, v, ledger)) {
          Tuple joined = u;
          joined.insert(joined.end(), v.begin(), v.end());
          bool all = true;
          for (std::size_t s = 0; s + r <= joined.size(); ++s) {
            const std::vector<VertexId> w(joined.begin() + s, joined.begin() + s + r);
            all = ledger.expose(coins, request.round, w).value_or(false) && all;
          }
          ps.bridge.direct = all;
          if (all) path = std::move(joined);
        }
      }
      if (!path) {
        if (total_levels == 0 || !parts) {
          throw stage_failure("BridgeFailure", parts ? "direct bridge did not appear"
                                                     : "direct bridge did not appear and |X| < 4r");
        }
        DangerRegistry danger = compute_danger_sets(ledger, request.x, cfg.xi, n);
        const int levels_u = total_levels < 0 ? -1 : (total_levels + 1) / 2;
        const int levels_v = total_levels < 0 ? -1 : total_levels / 2;
        const Fan fan_u = grow_fan(u, parts->y, coins, request.round, ledger, danger, used, cfg,
                                   &ps.fan_u, levels_u);
        compute_temp_danger(danger, fan_u.leaves(), ledger, cfg.xi_prime, y_prime_all, n);
        const Fan fan_v = grow_fan(reversed(v), parts->y_prime, coins, request.round, ledger,
                                   danger, used, cfg, &ps.fan_v, levels_v);
        path = connect_pair(fan_u, fan_v, coins, request.round, ledger, cfg, &ps.bridge);
      }
      for (VertexId w : *path) used[w] = 1;
      result.paths.push_back(std::move(*path));
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::kStageFailure) throw;
      ps.exposed = total_exposed(ledger) - before;
      result.phases.push_back(ps);
      result.failure = ConnectionFailure{e.code(), i, e.what()};
      return result;
    }
    ps.exposed = total_exposed(ledger) - before;
    ps.ledger_size = total_exposed(ledger);
    const double bound = std::pow(2.0, 2 * r + 1) * static_cast<double>(i + 1) *
                         std::pow(nn, r - 1 - cfg.eps / 2);
    ps.ledger_bound_ok = static_cast<double>(ps.ledger_size) <= bound;
    result.phases.push_back(ps);
  }
  return result;
}

}  // namespace tightham
