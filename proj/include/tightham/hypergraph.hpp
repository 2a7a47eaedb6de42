#pragma once

#include <cstddef>
#include <compare>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace tightham {

using VertexId = std::uint32_t;

/// Ordered sequence of distinct vertices (tuples, tight paths, cycles).
using Tuple = std::vector<VertexId>;

/// Canonical (ascending) vertex set; every stored edge has this form.
using Edge = std::vector<VertexId>;

Tuple reversed(std::span<const VertexId> t);
Edge canonical(std::span<const VertexId> vertices);
bool all_distinct(std::span<const VertexId> vertices);

/// Exact non-negative fraction, always kept in lowest terms.
class Rational {
 public:
  Rational() = default;
  Rational(std::int64_t num, std::int64_t den);

  std::int64_t num() const { return num_; }
  std::int64_t den() const { return den_; }
  double to_double() const { return static_cast<double>(num_) / static_cast<double>(den_); }
  std::string str() const;

  friend bool operator==(const Rational& a, const Rational& b) = default;
  friend std::strong_ordering operator<=>(const Rational& a, const Rational& b);

 private:
  std::int64_t num_ = 0;
  std::int64_t den_ = 1;
};

/// r-uniform hypergraph on vertices [0, n) with an (r-1)-set completion index.
class Hypergraph {
 public:
  Hypergraph(std::size_t n, int r);

  std::size_t vertex_count() const { return n_; }
  int uniformity() const { return r_; }
  std::size_t edge_count() const { return edges_.size(); }
  const std::set<Edge>& edges() const { return edges_; }

  /// Inserts the canonical form of `e`. Returns false if it was already present.
  bool add_edge(std::span<const VertexId> e);
  bool has_edge(std::span<const VertexId> e) const;

  /// All c with S ∪ {c} an edge, ascending.
  std::vector<VertexId> completions(std::span<const VertexId> s) const;

  std::size_t degree(VertexId v) const;

 private:
  void check_vertices(std::span<const VertexId> vs) const;

  std::size_t n_;
  int r_;
  std::set<Edge> edges_;
  std::map<Edge, std::set<VertexId>> completion_index_;
};

/// e(H)/(v(H)-1), with 0 for v(H) <= 1.
Rational one_density(const Hypergraph& h);

/// Subhypergraph induced on `w`, relabelled to [0, |w|) in ascending order of `w`.
Hypergraph induced_subhypergraph(const Hypergraph& g, std::span<const VertexId> w);

/// Tight cycle C^(r)_len on [0, len): edges {i, ..., i+r-1} mod len.
Hypergraph tight_cycle(std::size_t len, int r);
Hypergraph complete_hypergraph(std::size_t n, int r);

/// Edge-list text: header "r n m", then one edge per line; '#' starts a comment.
Hypergraph read_edge_list(std::istream& in);
void write_edge_list(std::ostream& out, const Hypergraph& g);

}  // namespace tightham
