#include "tightham/oracle.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <numeric>

#include <absl/container/flat_hash_set.h>

#include "tightham/errors.hpp"

namespace tightham {

namespace {

std::string window_text(std::span<const VertexId> w) {
  std::string s = "{";
  for (std::size_t i = 0; i < w.size(); ++i) s += (i ? "," : "") + std::to_string(w[i]);
  return s + "}";
}

Verdict check_distinct(std::size_t n, std::span<const VertexId> seq) {
  std::vector<char> seen(n, 0);
  for (std::size_t i = 0; i < seq.size(); ++i) {
    if (seq[i] >= n) {
      return Verdict::reject("vertex " + std::to_string(seq[i]) + " at position " +
                             std::to_string(i) + " is out of range");
    }
    if (seen[seq[i]]) {
      return Verdict::reject("duplicate vertex " + std::to_string(seq[i]) + " at position " +
                             std::to_string(i));
    }
    seen[seq[i]] = 1;
  }
  return Verdict::ok();
}

Verdict check_cyclic_windows(const EdgeTest& is_edge, int r, std::span<const VertexId> seq) {
  const std::size_t len = seq.size();
  std::vector<VertexId> w(r);
  for (std::size_t i = 0; i < len; ++i) {
    for (int j = 0; j < r; ++j) w[j] = seq[(i + j) % len];
    if (!is_edge(w)) return Verdict::reject("missing edge " + window_text(w) + " at window " +
                                            std::to_string(i), i);
  }
  return Verdict::ok();
}

EdgeTest host_test(const Hypergraph& g) {
  return [&g](std::span<const VertexId> e) { return g.has_edge(e); };
}

}  // namespace

Verdict verify_tight_path(const EdgeTest& is_edge, std::size_t n, int r,
                          std::span<const VertexId> seq) {
  if (Verdict d = check_distinct(n, seq); !d.accepted) return d;
  const auto rr = static_cast<std::size_t>(r);
  for (std::size_t i = 0; i + rr <= seq.size(); ++i) {
    auto w = seq.subspan(i, rr);
    if (!is_edge(w)) {
      return Verdict::reject("missing edge " + window_text(w) + " at window " + std::to_string(i),
                             i);
    }
  }
  return Verdict::ok();
}

Verdict verify_tight_path(const Hypergraph& g, std::span<const VertexId> seq) {
  return verify_tight_path(host_test(g), g.vertex_count(), g.uniformity(), seq);
}

Verdict verify_cycle_on_subset(const EdgeTest& is_edge, std::size_t n, int r,
                               std::span<const VertexId> seq) {
  if (seq.size() <= static_cast<std::size_t>(r)) {
    return Verdict::reject("a tight cycle needs more than r vertices");
  }
  if (Verdict d = check_distinct(n, seq); !d.accepted) return d;
  return check_cyclic_windows(is_edge, r, seq);
}

Verdict verify_tight_cycle(const EdgeTest& is_edge, std::size_t n, int r,
                           std::span<const VertexId> seq) {
  if (seq.size() != n) {
    return Verdict::reject("sequence has " + std::to_string(seq.size()) +
                           " vertices, host has " + std::to_string(n));
  }
  return verify_cycle_on_subset(is_edge, n, r, seq);
}

Verdict verify_tight_cycle(const Hypergraph& g, std::span<const VertexId> seq) {
  return verify_tight_cycle(host_test(g), g.vertex_count(), g.uniformity(), seq);
}

DensityWitness brute_m1(const Hypergraph& h) {
  const std::size_t v = h.vertex_count();
  if (v > 24) throw invalid_input("TooLarge", "brute_m1 supports at most 24 vertices");
  // Edges grouped by their lowest vertex as bitmasks.
  std::vector<std::vector<std::uint32_t>> by_low(v);
  for (const Edge& e : h.edges()) {
    std::uint32_t mask = 0;
    for (VertexId x : e) mask |= 1u << x;
    by_low[e.front()].push_back(mask);
  }
  const std::uint32_t total = 1u << v;
  std::vector<std::uint16_t> count(total, 0);
  Rational best(0, 1);
  std::uint32_t best_mask = total - 1;
  int best_size = static_cast<int>(v);
  for (std::uint32_t w = 1; w < total; ++w) {
    const int low = std::countr_zero(w);
    std::uint32_t c = count[w & (w - 1)];
    for (std::uint32_t e : by_low[low]) {
      if ((e & w) == e) ++c;
    }
    count[w] = static_cast<std::uint16_t>(c);
    const int size = std::popcount(w);
    if (size <= 1) continue;
    const Rational d(c, size - 1);
    if (d > best || (d == best && (size > best_size || (size == best_size && w < best_mask)))) {
      best = d;
      best_mask = w;
      best_size = size;
    }
  }
  DensityWitness out{best, {}};
  for (std::size_t x = 0; x < v; ++x) {
    if (best_mask & (1u << x)) out.subset.push_back(static_cast<VertexId>(x));
  }
  return out;
}

namespace {

class CycleSearch {
 public:
  CycleSearch(const Hypergraph& g) : g_(g), n_(g.vertex_count()), r_(g.uniformity()) {
    bits_ = std::max(1, static_cast<int>(std::bit_width(n_)));
  }

  std::optional<Tuple> run() {
    // Anchor vertex 0 first; enumerate the remaining r-2 start vertices.
    Tuple start{0};
    return enumerate_start(start);
  }

 private:
  std::optional<Tuple> enumerate_start(Tuple& start) {
    if (static_cast<int>(start.size()) == r_ - 1) {
      failed_.clear();
      seq_ = start;
      std::uint32_t mask = 0;
      for (VertexId x : start) mask |= 1u << x;
      if (dfs(mask)) return seq_;
      return std::nullopt;
    }
    for (VertexId x = 1; x < n_; ++x) {
      if (std::find(start.begin(), start.end(), x) != start.end()) continue;
      start.push_back(x);
      if (auto found = enumerate_start(start)) return found;
      start.pop_back();
    }
    return std::nullopt;
  }

  std::uint64_t state_key(std::uint32_t mask) const {
    std::uint64_t key = mask;
    for (std::size_t i = seq_.size() - (r_ - 1); i < seq_.size(); ++i) {
      key = (key << bits_) | seq_[i];
    }
    return key;
  }

  bool closes() const {
    const std::size_t len = seq_.size();
    std::vector<VertexId> w(r_);
    for (int j = 1; j < r_; ++j) {
      // Window starting r-j positions before the end, wrapping into the start.
      for (int i = 0; i < r_; ++i) w[i] = seq_[(len - (r_ - j) + i) % len];
      if (!g_.has_edge(w)) return false;
    }
    return true;
  }

  bool dfs(std::uint32_t mask) {
    if (seq_.size() == n_) return closes();
    const std::uint64_t key = state_key(mask);
    if (failed_.contains(key)) return false;
    std::vector<VertexId> tail(seq_.end() - (r_ - 1), seq_.end());
    for (VertexId c : g_.completions(tail)) {
      if (mask & (1u << c)) continue;
      seq_.push_back(c);
      if (dfs(mask | (1u << c))) return true;
      seq_.pop_back();
    }
    failed_.insert(key);
    return false;
  }

  const Hypergraph& g_;
  std::size_t n_;
  int r_;
  int bits_;
  Tuple seq_;
  absl::flat_hash_set<std::uint64_t> failed_;
};

}  // namespace

std::optional<Tuple> dp_has_tight_hamilton_cycle(const Hypergraph& g) {
  const std::size_t n = g.vertex_count();
  const int r = g.uniformity();
  double states = std::ldexp(1.0, static_cast<int>(std::min<std::size_t>(n, 60)));
  for (int i = 0; i < r - 1; ++i) states *= static_cast<double>(n);
  if (n > 32 || states > std::ldexp(1.0, 24)) {
    throw invalid_input("TooLarge", "Hamilton cycle DP limited to 2^n * n^(r-1) <= 2^24");
  }
  if (n <= static_cast<std::size_t>(r)) return std::nullopt;
  return CycleSearch(g).run();
}

std::optional<Tuple> brute_connect_exists(const Hypergraph& g, std::span<const VertexId> u,
                                          std::span<const VertexId> v,
                                          std::span<const VertexId> x, std::size_t max_len) {
  const int r = g.uniformity();
  if (x.size() > 20) throw invalid_input("TooLarge", "brute_connect_exists supports |X| <= 20");
  if (static_cast<int>(u.size()) != r - 1 || static_cast<int>(v.size()) != r - 1) {
    throw invalid_input("WrongArity", "end tuples must have r-1 vertices");
  }
  Tuple path(u.begin(), u.end());
  std::vector<VertexId> pool;
  for (VertexId c : x) {
    if (std::find(u.begin(), u.end(), c) == u.end() && std::find(v.begin(), v.end(), c) == v.end())
      pool.push_back(c);
  }
  std::sort(pool.begin(), pool.end());
  pool.erase(std::unique(pool.begin(), pool.end()), pool.end());
  std::vector<char> used(pool.size(), 0);

  auto window_ok = [&](const Tuple& seq) {
    return g.has_edge(std::span<const VertexId>(seq).subspan(seq.size() - r));
  };
  std::function<std::optional<Tuple>()> search = [&]() -> std::optional<Tuple> {
    if (path.size() + v.size() <= max_len) {
      Tuple full = path;
      bool ok = true;
      for (VertexId y : v) {
        full.push_back(y);
        if (full.size() >= static_cast<std::size_t>(r) && !window_ok(full)) {
          ok = false;
          break;
        }
      }
      if (ok && all_distinct(full)) return full;
    }
    if (path.size() + v.size() + 1 > max_len) return std::nullopt;
    for (std::size_t i = 0; i < pool.size(); ++i) {
      if (used[i]) continue;
      path.push_back(pool[i]);
      if (path.size() < static_cast<std::size_t>(r) || window_ok(path)) {
        used[i] = 1;
        if (auto found = search()) return found;
        used[i] = 0;
      }
      path.pop_back();
    }
    return std::nullopt;
  };
  return search();
}

bool is_one_degenerate(const Hypergraph& h) {
  const std::size_t n = h.vertex_count();
  std::vector<std::vector<std::size_t>> incident(n);
  std::vector<Edge> edges(h.edges().begin(), h.edges().end());
  for (std::size_t i = 0; i < edges.size(); ++i) {
    for (VertexId x : edges[i]) incident[x].push_back(i);
  }
  std::vector<std::size_t> degree(n);
  for (std::size_t x = 0; x < n; ++x) degree[x] = incident[x].size();
  std::vector<char> edge_alive(edges.size(), 1), vertex_alive(n, 1);
  std::vector<VertexId> stack;
  for (std::size_t x = 0; x < n; ++x) {
    if (degree[x] <= 1) stack.push_back(static_cast<VertexId>(x));
  }
  std::size_t removed = 0;
  while (!stack.empty()) {
    const VertexId x = stack.back();
    stack.pop_back();
    if (!vertex_alive[x]) continue;
    vertex_alive[x] = 0;
    ++removed;
    for (std::size_t ei : incident[x]) {
      if (!edge_alive[ei]) continue;
      edge_alive[ei] = 0;
      for (VertexId y : edges[ei]) {
        if (y == x || !vertex_alive[y]) continue;
        if (--degree[y] == 1 || degree[y] == 0) stack.push_back(y);
      }
    }
  }
  return removed == n;
}

Hypergraph delete_vertex(const Hypergraph& h, VertexId x) {
  if (x >= h.vertex_count()) throw invalid_input("VertexOutOfRange", "vertex to delete is absent");
  std::vector<VertexId> keep;
  for (VertexId y = 0; y < h.vertex_count(); ++y) {
    if (y != x) keep.push_back(y);
  }
  return induced_subhypergraph(h, keep);
}

}  // namespace tightham
