#include <doctest.h>

#include <cmath>
#include <numeric>

#include "tightham/errors.hpp"
#include "tightham/exposure.hpp"
#include "tightham/rng.hpp"

using namespace tightham;

namespace {

ExposureConfig lazy(std::size_t n, std::vector<double> rounds, std::uint64_t seed = 1) {
  ExposureConfig cfg;
  cfg.n = n;
  cfg.r = 3;
  cfg.master_seed = seed;
  cfg.rounds = std::move(rounds);
  return cfg;
}

std::string code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return "";
}

}  // namespace

TEST_CASE("coin at the probability extremes and determinism") {
  const CoinOracle coins(lazy(50, {1.0, 0.0, 0.5}, 99));
  const std::vector<VertexId> e{3, 17, 8};
  CHECK(coins.coin(1, e));
  CHECK_FALSE(coins.coin(2, e));
  CHECK(coins.coin(3, e) == coins.coin(3, e));
  CHECK(coins.coin(3, e) == coins.coin(3, std::vector<VertexId>{8, 3, 17}));
}

TEST_CASE("coin depends on round and seed") {
  const CoinOracle a(lazy(200, {0.5, 0.5}, 1));
  const CoinOracle b(lazy(200, {0.5, 0.5}, 2));
  int differ_round = 0, differ_seed = 0, hits = 0;
  for (VertexId x = 0; x < 1000; ++x) {
    const std::vector<VertexId> e{x % 200, (x / 200) + 100, 199 - (x % 50)};
    if (!all_distinct(e)) continue;
    differ_round += a.coin(1, e) != a.coin(2, e);
    differ_seed += a.coin(1, e) != b.coin(1, e);
    hits += a.coin(1, e);
  }
  CHECK(differ_round > 200);
  CHECK(differ_seed > 200);
  CHECK(hits > 300);
  CHECK(hits < 700);
}

TEST_CASE("explicit-graph coins are round membership") {
  ExposureConfig cfg;
  cfg.n = 6;
  cfg.r = 3;
  cfg.rounds = {0.5};
  cfg.mode = ExposureMode::kExplicitGraph;
  cfg.round_graphs.push_back(tight_cycle(6, 3));
  const CoinOracle coins(cfg);
  CHECK(coins.coin(1, std::vector<VertexId>{2, 1, 3}));
  CHECK_FALSE(coins.coin(1, std::vector<VertexId>{0, 2, 4}));
  cfg.round_graphs.clear();
  CHECK(code_of([&] { CoinOracle bad(cfg); }) == "BadExposureConfig");
}

TEST_CASE("expose records, counts degrees and refuses repeats") {
  const CoinOracle coins(lazy(10, {1.0}));
  ExposureLedger ledger(10, 3);
  const std::vector<VertexId> abc{0, 1, 2}, abd{0, 1, 3};
  CHECK(ledger.expose(coins, 1, abc) == std::optional<bool>(true));
  CHECK(ledger.in_h(abc));
  CHECK(ledger.appeared(abc));
  CHECK(code_of([&] { ledger.expose(coins, 1, abc); }) == "AlreadyExposed");
  ledger.expose(coins, 1, abd);
  CHECK(ledger.degree(std::vector<VertexId>{0, 1}) == 2);
  CHECK(ledger.degree(std::vector<VertexId>{1, 3}) == 1);
  CHECK(ledger.degree(std::vector<VertexId>{2, 3}) == 0);

  ExposureLedger lenient(10, 3, ExposurePolicy::kSkip);
  lenient.expose(coins, 1, abc);
  CHECK_FALSE(lenient.expose(coins, 1, abc).has_value());
  CHECK(lenient.already_exposed_events() == 1);
}

TEST_CASE("expose_at") {
  const CoinOracle all(lazy(10, {1.0}));
  ExposureLedger ledger(10, 3);
  const std::vector<VertexId> a{0, 1};
  CHECK(ledger.expose_at(all, 1, a, std::vector<VertexId>{}).empty());
  CHECK(ledger.explicit_count() == 0);
  const std::vector<VertexId> cands{4, 5, 7};
  CHECK(ledger.expose_at(all, 1, a, cands) == cands);
  CHECK(ledger.degree(a) == 3);
}

TEST_CASE("expose_at appearance count follows the binomial law over seeds") {
  const std::size_t seeds = 10000;
  std::vector<VertexId> cands(80);
  std::iota(cands.begin(), cands.end(), 10);
  const std::vector<VertexId> a{0, 1};
  double total = 0;
  for (std::uint64_t s = 0; s < seeds; ++s) {
    const CoinOracle coins(lazy(100, {0.25}, s));
    ExposureLedger ledger(100, 3);
    total += static_cast<double>(ledger.expose_at(coins, 1, a, cands).size());
  }
  const double mean = total / seeds;
  const double sigma = std::sqrt(80 * 0.25 * 0.75);
  CHECK(std::abs(mean - 20.0) <= 3 * sigma / std::sqrt(static_cast<double>(seeds)));
}

TEST_CASE("snapshots isolate later exposures") {
  const CoinOracle coins(lazy(10, {1.0}));
  ExposureLedger ledger(10, 3);
  const std::vector<VertexId> s{0, 1};
  ledger.snapshot_phase();
  CHECK(ledger.degree_at_snapshot(s) == 0);
  ledger.expose(coins, 1, std::vector<VertexId>{0, 1, 2});
  ledger.expose(coins, 1, std::vector<VertexId>{0, 1, 3});
  ledger.expose(coins, 1, std::vector<VertexId>{0, 1, 4});
  const auto epoch = ledger.snapshot_phase();
  ledger.expose(coins, 1, std::vector<VertexId>{0, 1, 5});
  CHECK(ledger.degree_at_snapshot(s) == 3);
  CHECK(ledger.degree(s) == 4);
  CHECK(ledger.in_h_before(std::vector<VertexId>{0, 1, 2}, epoch));
  CHECK_FALSE(ledger.in_h_before(std::vector<VertexId>{0, 1, 5}, epoch));

  ExposureLedger twice(10, 3);
  twice.expose(coins, 1, std::vector<VertexId>{0, 1, 2});
  twice.snapshot_phase();
  const auto first = twice.degree_at_snapshot(s);
  twice.snapshot_phase();
  CHECK(twice.degree_at_snapshot(s) == first);
}

TEST_CASE("leaf-pair records cover every r-subset of each union") {
  ExposureLedger ledger(20, 3);
  ledger.record_leaf_pairs({{0, 1}, {2, 3}}, {{10, 11}});
  CHECK(ledger.in_h(std::vector<VertexId>{0, 1, 10}));
  CHECK(ledger.in_h(std::vector<VertexId>{3, 10, 11}));
  CHECK(ledger.in_h(std::vector<VertexId>{1, 11, 10}));
  CHECK_FALSE(ledger.in_h(std::vector<VertexId>{0, 2, 10}));
  CHECK_FALSE(ledger.in_h(std::vector<VertexId>{0, 1, 2}));
  CHECK_FALSE(ledger.in_h(std::vector<VertexId>{0, 10, 12}));
  const CoinOracle coins(lazy(20, {1.0}));
  CHECK(code_of([&] { ledger.expose(coins, 1, std::vector<VertexId>{2, 10, 11}); }) ==
        "AlreadyExposed");
}

TEST_CASE("colour distribution") {
  const double q = 0.05, qp = 0.01;
  const double qpp = solve_q_dprime(q, qp);
  const auto dist = colour_distribution(q, qp, qpp);
  double sum = 0, independent = 0;
  for (unsigned c = 1; c < 32; ++c) {
    sum += dist[c];
    // Direct product form: each round i joins with its own probability, conditioned on e in G.
    double prob = 1.0;
    for (int i = 0; i < 5; ++i) {
      const double pi = i == 0 ? qpp : qp;
      prob *= (c >> i & 1u) ? pi : 1.0 - pi;
    }
    independent += prob / q;
    CHECK(dist[c] == doctest::Approx(prob / q).epsilon(1e-12));
  }
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(independent == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(code_of([&] { colour_distribution(0.05, 0.01, 0.02); }) == "InfeasibleProbabilities");
  CHECK(code_of([&] { colour_distribution(0.01, 0.05, solve_q_dprime(0.01, 0.05)); }) ==
        "InfeasibleProbabilities");
}

TEST_CASE("split_explicit with q' = 0 puts everything in round 1") {
  const Hypergraph g = complete_hypergraph(8, 3);
  const ExplicitSplit s = split_explicit(g, 0.3, 0.0, 0.3, 5);
  for (std::uint8_t c : s.colour) CHECK(c == 1);
  CHECK(s.part(1, 8, 3).edges() == g.edges());
  for (int round = 2; round <= 5; ++round) CHECK(s.part(round, 8, 3).edge_count() == 0);
}

TEST_CASE("split_explicit partitions and matches the marginal") {
  const Hypergraph g = complete_hypergraph(9, 3);
  const double q = 0.05, qp = 0.01, qpp = solve_q_dprime(q, qp);
  const std::size_t trials = 10000;
  std::size_t hits = 0;
  for (std::uint64_t seed = 0; seed < trials; ++seed) {
    const ExplicitSplit s = split_explicit(g, q, qp, qpp, seed);
    if (seed < 50) {
      std::set<Edge> un;
      for (int round = 1; round <= 5; ++round) {
        const Hypergraph part = s.part(round, 9, 3);
        un.insert(part.edges().begin(), part.edges().end());
      }
      CHECK(un == g.edges());
      for (std::uint8_t c : s.colour) CHECK((c >= 1 && c <= 31));
    }
    hits += (s.colour[0] >> 1) & 1u;
  }
  const double p = qp / q;
  const double freq = static_cast<double>(hits) / trials;
  CHECK(std::abs(freq - p) <= 3 * std::sqrt(p * (1 - p) / trials));
}

TEST_CASE("round plans") {
  const RoundPlan even = plan_rounds_even(0.2);
  CHECK(1 - 0.2 == doctest::Approx(std::pow(1 - even.q_prime, 5)));
  CHECK(even.as_rounds().size() == 5);
  const RoundPlan strict = plan_rounds_strict(10000, 0.5, 0.1);
  CHECK(strict.q_prime == doctest::Approx(std::pow(10000.0, -0.95)));
  CHECK(strict.q_dprime >= strict.q_prime);
  CHECK(code_of([] { plan_rounds_strict(100, 0.001, 0.1); }) == "InfeasibleProbabilities");
}
