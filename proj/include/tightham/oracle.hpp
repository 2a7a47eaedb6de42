#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tightham/hypergraph.hpp"

namespace tightham {

struct Verdict {
  bool accepted = true;
  std::string first_violation;           // empty when accepted
  std::optional<std::size_t> window;     // index of the first failing r-window, if any

  static Verdict ok() { return {}; }
  static Verdict reject(std::string why, std::optional<std::size_t> window = std::nullopt) {
    return Verdict{false, std::move(why), window};
  }
};

/// Edge membership test used when the host graph is only known implicitly.
using EdgeTest = std::function<bool(std::span<const VertexId>)>;

Verdict verify_tight_path(const Hypergraph& g, std::span<const VertexId> seq);
Verdict verify_tight_path(const EdgeTest& is_edge, std::size_t n, int r,
                          std::span<const VertexId> seq);

/// Accepts iff `seq` is a permutation of [0, n) and all n cyclic windows are edges.
Verdict verify_tight_cycle(const Hypergraph& g, std::span<const VertexId> seq);
Verdict verify_tight_cycle(const EdgeTest& is_edge, std::size_t n, int r,
                           std::span<const VertexId> seq);

/// Cycle check without the spanning requirement (vertices distinct, in range, length > r).
Verdict verify_cycle_on_subset(const EdgeTest& is_edge, std::size_t n, int r,
                               std::span<const VertexId> seq);

struct DensityWitness {
  Rational value;
  std::vector<VertexId> subset;
};

/// Exact maximum 1-density over induced subgraphs. Throws TooLarge for v(H) > 24.
DensityWitness brute_m1(const Hypergraph& h);

/// Exact test for a tight Hamilton cycle. Throws TooLarge when 2^n n^(r-1) > 2^24.
std::optional<Tuple> dp_has_tight_hamilton_cycle(const Hypergraph& g);

/// Tight u-v path (u first, v last) with interior in `x` and at most `max_len` vertices.
/// Throws TooLarge for |x| > 20.
std::optional<Tuple> brute_connect_exists(const Hypergraph& g, std::span<const VertexId> u,
                                          std::span<const VertexId> v,
                                          std::span<const VertexId> x, std::size_t max_len);

/// Iterated removal of vertices of degree <= 1 empties the hypergraph.
bool is_one_degenerate(const Hypergraph& h);

/// H minus vertex x, relabelled to [0, n-1).
Hypergraph delete_vertex(const Hypergraph& h, VertexId x);

}  // namespace tightham
