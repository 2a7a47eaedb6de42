#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "tightham/hypergraph.hpp"

namespace tightham {

struct VertexGroup {
  std::string name;               // "U", "V", "A1", "B2", "I(U,A1)", ...
  std::vector<VertexId> vertices; // in the group's defining order
};

/// The gadget D_{r,l}: labelled groups U, V, A_1..A_{l-1}, B_1..B_{l-2}.
struct ReservoirCore {
  int r = 0;
  int ell = 0;
  Hypergraph graph{0, 3};
  std::vector<VertexGroup> groups;
  VertexId w_star = 0;
  std::vector<VertexId> s_set;    // vertices whose deletion leaves a 1-degenerate graph
};

/// The reservoir graph H*: D_{r,l} with insertion blocks and two stored Hamilton paths.
struct ReservoirGraph {
  int r = 0;
  int ell = 0;
  std::size_t k = 0;              // vertices per insertion block
  Hypergraph h_star{0, 3};
  ReservoirCore core;
  std::vector<VertexGroup> blocks;  // insertion blocks in path order
  Tuple u;
  Tuple v;
  VertexId w_star = 0;
  Tuple path_with;                // tight Hamilton u-v path of H*
  Tuple path_without;             // tight Hamilton u-v path of H* - w*

  std::size_t vertex_count() const { return h_star.vertex_count(); }
};

int choose_ell(int r, double eps);

/// Closed-form counts.
std::size_t core_vertex_count(int r, int ell);
std::size_t insertion_size(int r, int ell);
std::size_t reservoir_vertex_count(int r, int ell);
std::size_t reservoir_edge_count(int r, int ell);

ReservoirCore build_core(int r, int ell);
ReservoirGraph build_reservoir_graph(int r, int ell);

struct DensityCertificate {
  bool exact_checked = false;     // m^(1)(D) computed exhaustively
  Rational m1_core;               // valid when exact_checked
  Rational d_core;
  Rational d_star;
  std::vector<VertexId> peeled;   // S vertices whose deletion was verified 1-degenerate
  double eps = 0;
};

/// Throws Error{kVerification, "CertificationFailure"} naming the violated clause.
DensityCertificate certify_density(const ReservoirGraph& rg, double eps);

}  // namespace tightham
