#include <doctest.h>

#include <algorithm>

#include "tightham/errors.hpp"
#include "tightham/oracle.hpp"
#include "tightham/reservoir.hpp"

using namespace tightham;

TEST_CASE("choose_ell") {
  CHECK(choose_ell(3, 0.05) == 7);
  CHECK(choose_ell(3, 0.04) == 9);
  try {
    choose_ell(3, 1.0 / 6.0);
    FAIL("expected EpsOutOfRange");
  } catch (const Error& e) {
    CHECK(e.code() == "EpsOutOfRange");
  }
}

TEST_CASE("build_core counts") {
  const ReservoirCore d33 = build_core(3, 3);
  CHECK(d33.graph.vertex_count() == 21);
  CHECK(d33.graph.edge_count() == 21);
  CHECK(one_density(d33.graph) == Rational(21, 20));
  const ReservoirCore d43 = build_core(4, 3);
  CHECK(d43.graph.vertex_count() == 2 * 3 * 5 + 1);
  CHECK(d43.graph.edge_count() == 2 * 3 * 5 + 1);
  CHECK(is_one_degenerate(delete_vertex(d33.graph, d33.w_star)));
  CHECK_THROWS_AS(build_core(3, 2), Error);
}

TEST_CASE("build_reservoir_graph for r=3, ell=3") {
  const ReservoirGraph rg = build_reservoir_graph(3, 3);
  CHECK(rg.k == 60);
  CHECK(rg.h_star.vertex_count() == 21 + 2 * 60 * 2);
  CHECK(rg.h_star.edge_count() == 21 + 2 * 62 * 2);
  CHECK(one_density(rg.h_star) == Rational(260 + 9, 260));
  CHECK(one_density(rg.h_star) < one_density(rg.core.graph));
  CHECK(rg.u == Tuple{0, 1});
  CHECK(rg.w_star == 2);
}

TEST_CASE("counts, paths and degree profile over a parameter grid") {
  for (int r = 3; r <= 5; ++r) {
    for (int ell = 3; ell <= 5; ++ell) {
      CAPTURE(r);
      CAPTURE(ell);
      const ReservoirGraph rg = build_reservoir_graph(r, ell);
      const std::size_t core = 2 * (r - 1) * (2 * ell - 1) + 1;
      const std::size_t k = 3 * (r - 1) * (r - 1) * (2 * ell - 1);
      CHECK(rg.core.graph.vertex_count() == core);
      CHECK(rg.core.graph.edge_count() == core);
      CHECK(rg.h_star.vertex_count() == core + 2 * k * (ell - 1));
      CHECK(rg.h_star.edge_count() == core + 2 * (k + r - 1) * (ell - 1));

      CHECK(rg.path_with.size() == rg.h_star.vertex_count());
      CHECK(rg.path_without.size() == rg.h_star.vertex_count() - 1);
      CHECK(std::count(rg.path_without.begin(), rg.path_without.end(), rg.w_star) == 0);
      CHECK(verify_tight_path(rg.h_star, rg.path_with).accepted);
      CHECK(verify_tight_path(delete_vertex(rg.h_star, rg.w_star), [&] {
              Tuple shifted;
              for (VertexId x : rg.path_without) shifted.push_back(x > rg.w_star ? x - 1 : x);
              return shifted;
            }()).accepted);
      CHECK(std::equal(rg.u.begin(), rg.u.end(), rg.path_without.begin()));
      CHECK(std::equal(rg.v.begin(), rg.v.end(), rg.path_without.end() - (r - 1)));

      const auto& s = rg.core.s_set;
      CHECK(s.size() == 1 + (2 * ell - 1) * (2 * r - 4));
      for (VertexId x = 0; x < rg.core.graph.vertex_count(); ++x) {
        if (!std::binary_search(s.begin(), s.end(), x)) CHECK(rg.core.graph.degree(x) == 2);
      }
    }
  }
}

namespace {

// Position (1-based) of x inside its group; w* reports 0.
int group_position(const ReservoirCore& core, VertexId x) {
  if (x == core.w_star) return 0;
  for (const VertexGroup& g : core.groups) {
    for (std::size_t i = 0; i < g.vertices.size(); ++i) {
      if (g.vertices[i] != x) continue;
      if (g.name == "U" && i > static_cast<std::size_t>(core.r - 1)) return static_cast<int>(i);
      return static_cast<int>(i) + 1;
    }
  }
  return -1;
}

}  // namespace

TEST_CASE("S-vertex deletion peels completely for r = 3") {
  for (int ell = 3; ell <= 5; ++ell) {
    const ReservoirCore core = build_core(3, ell);
    for (VertexId x : core.s_set) CHECK(is_one_degenerate(delete_vertex(core.graph, x)));
  }
}

TEST_CASE("S-vertex deletion for r >= 4 peels only w* and the two middle positions") {
  for (int r = 4; r <= 5; ++r) {
    for (int ell = 3; ell <= 4; ++ell) {
      CAPTURE(r);
      CAPTURE(ell);
      const ReservoirCore core = build_core(r, ell);
      for (VertexId x : core.s_set) {
        const int pos = group_position(core, x);
        const bool middle = pos == 0 || pos == r - 1 || pos == r;
        CHECK(is_one_degenerate(delete_vertex(core.graph, x)) == middle);
      }
    }
  }
}

TEST_CASE("certify_density") {
  const ReservoirGraph rg = build_reservoir_graph(3, 3);
  const DensityCertificate cert = certify_density(rg, 1.0 / 20.0);
  CHECK(cert.exact_checked);
  CHECK(cert.m1_core == Rational(21, 20));
  CHECK(cert.peeled.size() == rg.core.s_set.size());
  try {
    certify_density(rg, 1.0 / 30.0);
    FAIL("expected CertificationFailure");
  } catch (const Error& e) {
    CHECK(e.code() == "CertificationFailure");
    CHECK(e.kind() == ErrorKind::kVerification);
  }
  try {
    certify_density(build_reservoir_graph(4, 3), 0.1);
    FAIL("expected CertificationFailure");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("peeling") != std::string::npos);
  }
}
