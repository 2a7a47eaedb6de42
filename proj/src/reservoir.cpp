#include "tightham/reservoir.hpp"

#include <algorithm>
#include <cmath>

#include "tightham/errors.hpp"
#include "tightham/oracle.hpp"

namespace tightham {

namespace {

void require_ell(int r, int ell) {
  if (r < 3) throw invalid_input("UnsupportedUniformity", "r must be >= 3");
  if (ell < 3) throw invalid_input("EllTooSmall", "ell must be >= 3, got " + std::to_string(ell));
}

void add_windows(Hypergraph& g, const Tuple& seq) {
  const auto r = static_cast<std::size_t>(g.uniformity());
  for (std::size_t i = 0; i + r <= seq.size(); ++i) {
    g.add_edge(std::span<const VertexId>(seq).subspan(i, r));
  }
}

void append(Tuple& out, const std::vector<VertexId>& part) {
  out.insert(out.end(), part.begin(), part.end());
}

std::vector<VertexId> rev(const std::vector<VertexId>& part) { return {part.rbegin(), part.rend()}; }

/// Labelled view of the groups of D_{r,l}, with 1-based accessors.
struct CoreLayout {
  int r;
  int ell;
  std::vector<VertexId> U, V;
  std::vector<std::vector<VertexId>> A, B;  // A[0] is A_1

  CoreLayout(int r_, int ell_) : r(r_), ell(ell_) {
    VertexId next = 0;
    auto take = [&](int count) {
      std::vector<VertexId> g(count);
      for (auto& x : g) x = next++;
      return g;
    };
    const int m = 2 * (r - 1);
    U = take(m + 1);
    V = take(m);
    for (int i = 1; i <= ell - 1; ++i) A.push_back(take(m));
    for (int i = 1; i <= ell - 2; ++i) B.push_back(take(m));
  }

  int m() const { return 2 * (r - 1); }
  VertexId u(int j) const { return j <= r - 1 ? U[j - 1] : U[j]; }
  VertexId w_star() const { return U[r - 1]; }
  VertexId vp(int j) const { return V[j - 1]; }
  VertexId a(int i, int j) const { return A[i - 1][j - 1]; }
  VertexId b(int i, int j) const { return B[i - 1][j - 1]; }

  // (x_{2(r-1)}, ..., x_r) followed by (y_{r-1}, ..., y_1).
  template <typename X, typename Y>
  Tuple bridge(X x, Y y) const {
    Tuple s;
    for (int j = m(); j >= r; --j) s.push_back(x(j));
    for (int j = r - 1; j >= 1; --j) s.push_back(y(j));
    return s;
  }

  Tuple u_a() const {
    Tuple s;
    for (int j = 1; j <= r - 1; ++j) s.push_back(u(j));
    for (int j = r - 1; j >= 1; --j) s.push_back(a(1, j));
    return s;
  }
  Tuple v_a() const {
    Tuple s;
    for (int j = m(); j >= r; --j) s.push_back(a(ell - 1, j));
    for (int j = r; j <= m(); ++j) s.push_back(vp(j));
    return s;
  }
  Tuple u_b() const {
    return bridge([&](int j) { return u(j); }, [&](int j) { return b(1, j); });
  }
  Tuple v_b() const {
    return bridge([&](int j) { return b(ell - 2, j); }, [&](int j) { return vp(j); });
  }
  Tuple a_a(int i) const {
    return bridge([&](int j) { return a(i, j); }, [&](int j) { return a(i + 1, j); });
  }
  Tuple b_b(int i) const {
    return bridge([&](int j) { return b(i, j); }, [&](int j) { return b(i + 1, j); });
  }
};

}  // namespace

int choose_ell(int r, double eps) {
  if (r < 2) throw invalid_input("UnsupportedUniformity", "r must be >= 2");
  if (!(eps > 0.0) || !(eps < 1.0 / (6.0 * r))) {
    throw invalid_input("EpsOutOfRange", "eps must lie in (0, 1/(6r))");
  }
  const double x = 1.0 / (2.0 * (r - 1) * eps);
  const double nearest = std::round(x);
  const double c = std::abs(x - nearest) < 1e-9 ? nearest : std::ceil(x);
  return static_cast<int>(c) + 2;
}

std::size_t core_vertex_count(int r, int ell) {
  return 2 * static_cast<std::size_t>(r - 1) * (2 * ell - 1) + 1;
}

std::size_t insertion_size(int r, int ell) {
  return 3 * static_cast<std::size_t>(r - 1) * (r - 1) * (2 * ell - 1);
}

std::size_t reservoir_vertex_count(int r, int ell) {
  return core_vertex_count(r, ell) + 2 * insertion_size(r, ell) * (ell - 1);
}

std::size_t reservoir_edge_count(int r, int ell) {
  return core_vertex_count(r, ell) + 2 * (insertion_size(r, ell) + r - 1) * (ell - 1);
}

ReservoirCore build_core(int r, int ell) {
  require_ell(r, ell);
  const CoreLayout lay(r, ell);
  ReservoirCore core;
  core.r = r;
  core.ell = ell;
  core.graph = Hypergraph(core_vertex_count(r, ell), r);
  core.w_star = lay.w_star();

  core.groups.push_back({"U", lay.U});
  core.groups.push_back({"V", lay.V});
  for (int i = 1; i <= ell - 1; ++i) core.groups.push_back({"A" + std::to_string(i), lay.A[i - 1]});
  for (int i = 1; i <= ell - 2; ++i) core.groups.push_back({"B" + std::to_string(i), lay.B[i - 1]});
  for (const VertexGroup& g : core.groups) add_windows(core.graph, g.vertices);

  add_windows(core.graph, lay.u_a());
  add_windows(core.graph, lay.v_a());
  add_windows(core.graph, lay.u_b());
  add_windows(core.graph, lay.v_b());
  for (int i = 1; i <= ell - 2; ++i) add_windows(core.graph, lay.a_a(i));
  for (int i = 1; i <= ell - 3; ++i) add_windows(core.graph, lay.b_b(i));

  if (core.graph.edge_count() != core_vertex_count(r, ell)) {
    throw internal_error("InternalVerificationFailure", "core edge count differs from formula");
  }

  const int m = lay.m();
  for (int j = 2; j <= m - 1; ++j) core.s_set.push_back(lay.u(j));
  core.s_set.push_back(lay.w_star());
  for (int j = 2; j <= m - 1; ++j) core.s_set.push_back(lay.vp(j));
  for (const auto& grp : lay.A) {
    for (int j = 2; j <= m - 1; ++j) core.s_set.push_back(grp[j - 1]);
  }
  for (const auto& grp : lay.B) {
    for (int j = 2; j <= m - 1; ++j) core.s_set.push_back(grp[j - 1]);
  }
  std::sort(core.s_set.begin(), core.s_set.end());
  return core;
}

ReservoirGraph build_reservoir_graph(int r, int ell) {
  require_ell(r, ell);
  const CoreLayout lay(r, ell);
  ReservoirGraph rg;
  rg.r = r;
  rg.ell = ell;
  rg.k = insertion_size(r, ell);
  rg.core = build_core(r, ell);
  rg.w_star = rg.core.w_star;
  rg.h_star = Hypergraph(reservoir_vertex_count(r, ell), r);
  for (const Edge& e : rg.core.graph.edges()) rg.h_star.add_edge(e);

  VertexId next = static_cast<VertexId>(core_vertex_count(r, ell));
  auto block = [&](const std::string& from, const std::string& to) {
    VertexGroup g{"I(" + from + "," + to + ")", std::vector<VertexId>(rg.k)};
    for (auto& x : g.vertices) x = next++;
    rg.blocks.push_back(g);
    return g.vertices;
  };
  auto a_name = [](int i) { return "A" + std::to_string(i); };
  auto b_name = [](int i) { return "B" + std::to_string(i); };

  const auto i_u_a1 = block("U", a_name(1));
  std::vector<std::vector<VertexId>> i_a_b(ell), i_b_a(ell);  // indexed by i in [1, ell-2]
  for (int i = 1; i <= ell - 2; ++i) {
    i_a_b[i] = block(a_name(i), b_name(i));
    i_b_a[i] = block(b_name(i), a_name(i + 1));
  }
  const auto i_a_v = block(a_name(ell - 1), "V");

  Tuple& with = rg.path_with;
  append(with, lay.U);
  append(with, i_u_a1);
  append(with, lay.A[0]);
  for (int i = 1; i <= ell - 2; ++i) {
    append(with, i_a_b[i]);
    append(with, lay.B[i - 1]);
    append(with, i_b_a[i]);
    append(with, lay.A[i]);
  }
  append(with, i_a_v);
  append(with, lay.V);
  add_windows(rg.h_star, with);

  Tuple& without = rg.path_without;
  append(without, lay.u_a());
  append(without, rev(i_u_a1));
  append(without, lay.u_b());
  append(without, rev(i_a_b[1]));
  for (int i = 1; i <= ell - 2; ++i) {
    append(without, lay.a_a(i));
    append(without, rev(i_b_a[i]));
    if (i <= ell - 3) {
      append(without, lay.b_b(i));
      append(without, rev(i_a_b[i + 1]));
    }
  }
  append(without, lay.v_b());
  append(without, rev(i_a_v));
  append(without, lay.v_a());

  rg.u.assign(with.begin(), with.begin() + (r - 1));
  rg.v.assign(with.end() - (r - 1), with.end());

  auto fail = [](const std::string& what) {
    throw internal_error("InternalVerificationFailure", what);
  };
  if (rg.h_star.edge_count() != reservoir_edge_count(r, ell)) fail("H* edge count differs from formula");
  if (with.size() != rg.h_star.vertex_count()) fail("path through w* is not spanning");
  if (without.size() + 1 != rg.h_star.vertex_count()) fail("path avoiding w* has wrong length");
  if (std::find(without.begin(), without.end(), rg.w_star) != without.end()) {
    fail("path avoiding w* contains w*");
  }
  if (!std::equal(rg.u.begin(), rg.u.end(), without.begin()) ||
      !std::equal(rg.v.begin(), rg.v.end(), without.end() - (r - 1))) {
    fail("the two stored paths have different end tuples");
  }
  if (Verdict vd = verify_tight_path(rg.h_star, with); !vd.accepted) fail(vd.first_violation);
  if (Verdict vd = verify_tight_path(rg.h_star, without); !vd.accepted) fail(vd.first_violation);
  return rg;
}

DensityCertificate certify_density(const ReservoirGraph& rg, double eps) {
  auto fail = [](const std::string& clause, const std::string& what) {
    throw verification_failure("CertificationFailure", clause + ": " + what);
  };
  DensityCertificate cert;
  cert.eps = eps;
  const Hypergraph& d = rg.core.graph;
  cert.d_core = one_density(d);
  cert.d_star = one_density(rg.h_star);

  if (d.vertex_count() <= 24) {
    const DensityWitness m1 = brute_m1(d);
    cert.exact_checked = true;
    cert.m1_core = m1.value;
    if (m1.value != cert.d_core) {
      fail("exact-density", "m1(D) = " + m1.value.str() + " but d(D) = " + cert.d_core.str());
    }
  }
  for (VertexId x : rg.core.s_set) {
    if (!is_one_degenerate(delete_vertex(d, x))) {
      fail("peeling", "D - " + std::to_string(x) + " is not 1-degenerate");
    }
    cert.peeled.push_back(x);
  }
  if (!(cert.d_star < cert.d_core)) {
    fail("arithmetic", "d(H*) = " + cert.d_star.str() + " is not below d(D) = " + cert.d_core.str());
  }
  const double excess = static_cast<double>(cert.d_core.num() - cert.d_core.den());
  if (excess > eps * static_cast<double>(cert.d_core.den()) * (1.0 + 1e-12)) {
    fail("arithmetic", "d(D) = " + cert.d_core.str() + " exceeds 1 + eps");
  }
  return cert;
}

}  // namespace tightham
