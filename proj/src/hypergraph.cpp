#include "tightham/hypergraph.hpp"

#include <algorithm>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "tightham/errors.hpp"

namespace tightham {

Tuple reversed(std::span<const VertexId> t) { return Tuple(t.rbegin(), t.rend()); }

Edge canonical(std::span<const VertexId> vertices) {
  Edge e(vertices.begin(), vertices.end());
  std::sort(e.begin(), e.end());
  return e;
}

bool all_distinct(std::span<const VertexId> vertices) {
  Edge e = canonical(vertices);
  return std::adjacent_find(e.begin(), e.end()) == e.end();
}

Rational::Rational(std::int64_t num, std::int64_t den) {
  if (den <= 0 || num < 0) throw invalid_input("BadRational", "expected num >= 0 and den > 0");
  const std::int64_t g = std::gcd(num, den);
  num_ = num / g;
  den_ = den / g;
}

std::string Rational::str() const { return std::to_string(num_) + "/" + std::to_string(den_); }

std::strong_ordering operator<=>(const Rational& a, const Rational& b) {
  const __int128 lhs = static_cast<__int128>(a.num_) * b.den_;
  const __int128 rhs = static_cast<__int128>(b.num_) * a.den_;
  return lhs <=> rhs;
}

Hypergraph::Hypergraph(std::size_t n, int r) : n_(n), r_(r) {
  if (r < 3) {
    throw invalid_input("UnsupportedUniformity",
                        "uniformity r=" + std::to_string(r) + " is not supported (need r >= 3)");
  }
}

void Hypergraph::check_vertices(std::span<const VertexId> vs) const {
  for (VertexId v : vs) {
    if (v >= n_) {
      throw invalid_input("VertexOutOfRange",
                          "vertex " + std::to_string(v) + " >= n=" + std::to_string(n_));
    }
  }
}

bool Hypergraph::add_edge(std::span<const VertexId> e) {
  if (static_cast<int>(e.size()) != r_) {
    throw invalid_input("WrongArity", "edge has " + std::to_string(e.size()) +
                                          " vertices, expected " + std::to_string(r_));
  }
  check_vertices(e);
  Edge c = canonical(e);
  if (std::adjacent_find(c.begin(), c.end()) != c.end()) {
    throw invalid_input("RepeatedVertex", "edge vertices must be distinct");
  }
  if (!edges_.insert(c).second) return false;
  for (int skip = 0; skip < r_; ++skip) {
    Edge sub;
    sub.reserve(r_ - 1);
    for (int i = 0; i < r_; ++i) {
      if (i != skip) sub.push_back(c[i]);
    }
    completion_index_[sub].insert(c[skip]);
  }
  return true;
}

bool Hypergraph::has_edge(std::span<const VertexId> e) const {
  if (static_cast<int>(e.size()) != r_) return false;
  return edges_.contains(canonical(e));
}

std::vector<VertexId> Hypergraph::completions(std::span<const VertexId> s) const {
  if (static_cast<int>(s.size()) != r_ - 1) {
    throw invalid_input("WrongArity", "completion query needs an (r-1)-set");
  }
  auto it = completion_index_.find(canonical(s));
  if (it == completion_index_.end()) return {};
  return {it->second.begin(), it->second.end()};
}

std::size_t Hypergraph::degree(VertexId v) const {
  std::size_t d = 0;
  for (const Edge& e : edges_) {
    if (std::binary_search(e.begin(), e.end(), v)) ++d;
  }
  return d;
}

Rational one_density(const Hypergraph& h) {
  const auto v = static_cast<std::int64_t>(h.vertex_count());
  if (v <= 1) return Rational(0, 1);
  return Rational(static_cast<std::int64_t>(h.edge_count()), v - 1);
}

Hypergraph induced_subhypergraph(const Hypergraph& g, std::span<const VertexId> w) {
  Edge keep = canonical(w);
  keep.erase(std::unique(keep.begin(), keep.end()), keep.end());
  for (VertexId v : keep) {
    if (v >= g.vertex_count()) throw invalid_input("VertexOutOfRange", "induced set outside [0,n)");
  }
  Hypergraph out(keep.size(), g.uniformity());
  auto index_of = [&](VertexId v) -> std::ptrdiff_t {
    auto it = std::lower_bound(keep.begin(), keep.end(), v);
    if (it == keep.end() || *it != v) return -1;
    return it - keep.begin();
  };
  Edge mapped(g.uniformity());
  for (const Edge& e : g.edges()) {
    bool inside = true;
    for (int i = 0; i < g.uniformity() && inside; ++i) {
      const auto idx = index_of(e[i]);
      if (idx < 0) inside = false;
      else mapped[i] = static_cast<VertexId>(idx);
    }
    if (inside) out.add_edge(mapped);
  }
  return out;
}

Hypergraph tight_cycle(std::size_t len, int r) {
  if (len < static_cast<std::size_t>(r) + 1) {
    throw invalid_input("CycleTooShort", "tight cycle needs more than r vertices");
  }
  Hypergraph g(len, r);
  Edge e(r);
  for (std::size_t i = 0; i < len; ++i) {
    for (int j = 0; j < r; ++j) e[j] = static_cast<VertexId>((i + j) % len);
    g.add_edge(e);
  }
  return g;
}

Hypergraph complete_hypergraph(std::size_t n, int r) {
  Hypergraph g(n, r);
  if (n < static_cast<std::size_t>(r)) return g;
  std::vector<VertexId> idx(r);
  std::iota(idx.begin(), idx.end(), 0);
  while (true) {
    g.add_edge(idx);
    int i = r - 1;
    while (i >= 0 && idx[i] == n - r + i) --i;
    if (i < 0) break;
    ++idx[i];
    for (int j = i + 1; j < r; ++j) idx[j] = idx[j - 1] + 1;
  }
  return g;
}

namespace {

bool next_data_line(std::istream& in, std::string& line) {
  while (std::getline(in, line)) {
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (line.find_first_not_of(" \t\r") != std::string::npos) return true;
  }
  return false;
}

}  // namespace

Hypergraph read_edge_list(std::istream& in) {
  std::string line;
  if (!next_data_line(in, line)) throw invalid_input("BadEdgeList", "missing header line");
  std::istringstream header(line);
  long long r = 0, n = 0, m = 0;
  if (!(header >> r >> n >> m) || r < 0 || n < 0 || m < 0) {
    throw invalid_input("BadEdgeList", "header must be 'r n m'");
  }
  Hypergraph g(static_cast<std::size_t>(n), static_cast<int>(r));
  Edge e(static_cast<std::size_t>(r));
  for (long long i = 0; i < m; ++i) {
    if (!next_data_line(in, line)) {
      throw invalid_input("BadEdgeList", "expected " + std::to_string(m) + " edges, found " +
                                             std::to_string(i));
    }
    std::istringstream row(line);
    for (auto& v : e) {
      long long x = -1;
      if (!(row >> x) || x < 0) throw invalid_input("BadEdgeList", "bad vertex on line: " + line);
      v = static_cast<VertexId>(x);
    }
    long long extra = 0;
    if (row >> extra) throw invalid_input("WrongArity", "edge line has more than r ids: " + line);
    g.add_edge(e);
  }
  return g;
}

void write_edge_list(std::ostream& out, const Hypergraph& g) {
  out << g.uniformity() << ' ' << g.vertex_count() << ' ' << g.edge_count() << '\n';
  for (const Edge& e : g.edges()) {
    for (std::size_t i = 0; i < e.size(); ++i) out << (i ? " " : "") << e[i];
    out << '\n';
  }
}

}  // namespace tightham
