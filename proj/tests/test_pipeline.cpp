#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <random>
#include <set>

#include "tightham/errors.hpp"
#include "tightham/pipeline.hpp"
#include "tightham/reservoir.hpp"

using namespace tightham;

namespace {

std::string code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return "";
}

std::vector<VertexId> range(VertexId from, VertexId to) {
  std::vector<VertexId> out(to - from);
  std::iota(out.begin(), out.end(), from);
  return out;
}

CoinOracle coins_for(std::size_t n, double p, std::uint64_t seed = 3, int rounds = 5) {
  ExposureConfig cfg;
  cfg.n = n;
  cfg.r = 3;
  cfg.master_seed = seed;
  cfg.rounds.assign(static_cast<std::size_t>(rounds), p);
  return CoinOracle(cfg);
}

const ReservoirGraph& gadget() {
  static const ReservoirGraph g = build_reservoir_graph(3, 3);
  return g;
}

// Edge set of every embedded copy, built straight from the gadget maps.
std::set<Edge> copy_edges(const ReservoirState& st) {
  std::set<Edge> out;
  for (const GadgetCopy& c : st.copies()) {
    for (const Edge& e : gadget().h_star.edges()) {
      Edge img;
      for (VertexId x : e) img.push_back(c.map[x]);
      std::sort(img.begin(), img.end());
      out.insert(img);
    }
  }
  return out;
}

// Independent checks: distinct vertices, every window an edge of `coins` in
// `round` or of a gadget copy.
bool windows_ok(const Tuple& seq, bool cyclic, const CoinOracle& coins, int round,
                const std::set<Edge>& extra, std::size_t r = 3) {
  if (std::set<VertexId>(seq.begin(), seq.end()).size() != seq.size()) return false;
  if (seq.size() < r) return false;
  const std::size_t windows = cyclic ? seq.size() : seq.size() - r + 1;
  for (std::size_t i = 0; i < windows; ++i) {
    Edge e;
    for (std::size_t j = 0; j < r; ++j) e.push_back(seq[(i + j) % seq.size()]);
    std::sort(e.begin(), e.end());
    if (!extra.contains(e) && !coins.coin(round, e)) return false;
  }
  return true;
}

bool same_ends(const Tuple& a, const Tuple& b, std::size_t k = 2) {
  return std::equal(a.begin(), a.begin() + k, b.begin()) &&
         std::equal(a.end() - k, a.end(), b.end() - k);
}

struct Linked {
  CoinOracle coins;
  ExposureLedger ledger;
  ReservoirState state;
  Tuple path;
};

Linked linked_instance(std::size_t n, std::size_t count, double p = 1.0) {
  Linked out{coins_for(n, p), ExposureLedger(n, 3), ReservoirState(n, 3), {}};
  const auto all = range(0, static_cast<VertexId>(n));
  out.state = step1_find_reservoir_copies(gadget(), count, out.coins, 1, out.ledger, all, 1u << 30);
  std::vector<char> in_gadget(n, 0);
  for (VertexId v : out.state.gadget_vertices()) in_gadget[v] = 1;
  std::vector<VertexId> x;
  for (VertexId v : all) {
    if (!in_gadget[v]) x.push_back(v);
  }
  const auto cc = ConnectorConfig::practical(n, 3, 0.5, 0.5);
  LinkResult link = step2_link_reservoirs(out.coins, 2, out.ledger, out.state, x, cc, 9);
  REQUIRE(link.connection.ok());
  out.path = link.path;
  return out;
}

PipelineConfig config(std::size_t n, double p, std::uint64_t seed = 1) {
  PipelineConfig cfg;
  cfg.n = n;
  cfg.p = p;
  cfg.seed = seed;
  return cfg;
}

}  // namespace

TEST_CASE("plan: practical split multiplies back to the input probability") {
  PipelineConfig cfg = config(1000, 0.3);
  const ResolvedPlan plan = resolve_plan(cfg);
  double miss = 1;
  for (double q : plan.rounds) miss *= 1 - q;
  CHECK(1 - miss == doctest::Approx(0.3));
  CHECK(plan.gadget_vertices == 261);
  CHECK(plan.reservoir_count <= 1000 / 522);
}

TEST_CASE("plan: reservoir count above n/2 is rejected") {
  PipelineConfig cfg = config(1100, 1.0);
  cfg.reservoir_count = 2;
  CHECK(resolve_plan(cfg).reservoir_count == 2);
  cfg.reservoir_count = 3;
  CHECK(code_of([&] { resolve_plan(cfg); }) == "ReservoirTooLarge");
  CHECK(code_of([] { parse_pipeline_mode("fast"); }) == "BadMode");
}

TEST_CASE("step1: zero copies gives an empty state without exposure") {
  const auto coins = coins_for(600, 0.5);
  ExposureLedger ledger(600, 3);
  const auto all = range(0, 600);
  const ReservoirState st = step1_find_reservoir_copies(gadget(), 0, coins, 1, ledger, all, 1000);
  CHECK(st.copies().empty());
  CHECK(st.w_star().empty());
  CHECK(ledger.explicit_count() == 0);
}

TEST_CASE("step1: probability one fills the lowest labels") {
  const auto coins = coins_for(3000, 1.0);
  ExposureLedger ledger(3000, 3);
  const auto all = range(0, 3000);
  const ReservoirState st = step1_find_reservoir_copies(gadget(), 5, coins, 1, ledger, all, 1u << 20);
  REQUIRE(st.copies().size() == 5);
  const auto used = st.gadget_vertices();
  CHECK(used.size() == 1305);
  CHECK(used.size() <= 1500);
  CHECK(used == range(0, 1305));
  CHECK(st.w_star().size() == 5);
  for (const GadgetCopy& c : st.copies()) {
    CHECK(c.map[gadget().w_star] == c.w_star);
    CHECK(c.path_with.size() == 261);
    CHECK(c.path_without.size() == 260);
  }
  CHECK(ledger.round_stats().size() >= 1);
  CHECK(ledger.round_stats()[0].exposed == ledger.explicit_count());
}

TEST_CASE("step1: embedded copies carry every gadget edge in round 1") {
  const auto coins = coins_for(1200, 0.9, 5);
  ExposureLedger ledger(1200, 3);
  const auto all = range(0, 1200);
  const ReservoirState st = step1_find_reservoir_copies(gadget(), 2, coins, 1, ledger, all, 1u << 24);
  REQUIRE(st.copies().size() == 2);
  for (const Edge& e : copy_edges(st)) CHECK(coins.coin(1, e));
  const auto g = st.gadget_vertices();
  CHECK(std::set<VertexId>(g.begin(), g.end()).size() == 522);
}

TEST_CASE("step1: probability zero exhausts the budget") {
  const auto coins = coins_for(600, 0.0);
  ExposureLedger ledger(600, 3);
  const auto all = range(0, 600);
  CHECK(code_of([&] { step1_find_reservoir_copies(gadget(), 1, coins, 1, ledger, all, 5000); }) ==
        "EmbeddingBudgetExhausted");
  CHECK(code_of([&] { step1_find_reservoir_copies(gadget(), 2, coins, 1, ledger, all, 5000); }) ==
        "ReservoirTooLarge");
}

TEST_CASE("step2: one copy is its own path") {
  Linked inst = linked_instance(600, 1);
  CHECK(inst.path == inst.state.copies()[0].path_with);
  CHECK(inst.state.copies()[0].offset == 0);
}

TEST_CASE("step2: two copies are joined by one connection") {
  Linked inst = linked_instance(1200, 2);
  const auto& copies = inst.state.copies();
  REQUIRE(copies.size() == 2);
  CHECK(inst.path.size() >= 522);
  CHECK(std::equal(copies[0].path_with.begin(), copies[0].path_with.end(), inst.path.begin()));
  CHECK(std::equal(copies[1].path_with.begin(), copies[1].path_with.end(),
                   inst.path.begin() + static_cast<std::ptrdiff_t>(copies[1].offset)));
  CHECK(windows_ok(inst.path, false, inst.coins, 2, copy_edges(inst.state)));
}

TEST_CASE("splice: all reservoir vertices on a 600-vertex forced instance") {
  Linked inst = linked_instance(600, 1);
  const auto w = inst.state.w_star();
  const Tuple out = remove_reservoir_subset(inst.path, w, inst.state,
                                            run_edge_test(inst.ledger, inst.state));
  CHECK(out.size() == inst.path.size() - 1);
  CHECK(same_ends(out, inst.path));
  CHECK(std::find(out.begin(), out.end(), w[0]) == out.end());
  CHECK(windows_ok(out, false, inst.coins, 2, copy_edges(inst.state)));
}

TEST_CASE("splice: empty, single and invalid subsets") {
  Linked inst = linked_instance(2100, 4);
  const EdgeTest is_edge = run_edge_test(inst.ledger, inst.state);
  CHECK(remove_reservoir_subset(inst.path, {}, inst.state, is_edge) == inst.path);

  const VertexId w = inst.state.w_star()[2];
  const std::vector<VertexId> one{w};
  const Tuple out = remove_reservoir_subset(inst.path, one, inst.state, is_edge);
  CHECK(out.size() + 1 == inst.path.size());
  CHECK(same_ends(out, inst.path));

  const std::vector<VertexId> bad{inst.state.copies()[0].map[0] == inst.state.copies()[0].w_star
                                      ? inst.state.copies()[0].map[1]
                                      : inst.state.copies()[0].map[0]};
  CHECK(code_of([&] { remove_reservoir_subset(inst.path, bad, inst.state, is_edge); }) ==
        "NotReservoirVertex");
  const std::vector<VertexId> outside{2099};
  CHECK(code_of([&] { remove_reservoir_subset(inst.path, outside, inst.state, is_edge); }) ==
        "NotReservoirVertex");
}

TEST_CASE("splice: random subsets keep a tight path with the same ends") {
  Linked inst = linked_instance(2100, 4, 0.97);
  const auto w_star = inst.state.w_star();
  const auto extra = copy_edges(inst.state);
  const EdgeTest is_edge = run_edge_test(inst.ledger, inst.state);
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<VertexId> w;
    for (VertexId v : w_star) {
      if (rng() & 1) w.push_back(v);
    }
    const Tuple out = remove_reservoir_subset(inst.path, w, inst.state, is_edge);
    CHECK(out.size() == inst.path.size() - w.size());
    CHECK(same_ends(out, inst.path));
    CHECK(windows_ok(out, false, inst.coins, 2, extra));
  }
}

TEST_CASE("step3: probability one covers everything, zero changes nothing") {
  const auto all = range(0, 500);
  {
    const auto coins = coins_for(500, 1.0);
    ExposureLedger ledger(500, 3);
    const Tuple start{0, 1};
    const ExtendResult res = step3_greedy_extend(coins, 3, ledger, start, range(2, 500), 0);
    CHECK(res.path.size() == 500);
    CHECK(res.leftover.empty());
    CHECK(res.path == all);
  }
  {
    const auto coins = coins_for(500, 0.0);
    ExposureLedger ledger(500, 3);
    const Tuple start{7, 3, 9};
    std::vector<VertexId> pool;
    for (VertexId v : all) {
      if (v != 7 && v != 3 && v != 9) pool.push_back(v);
    }
    const ExtendResult res = step3_greedy_extend(coins, 3, ledger, start, pool, 0);
    CHECK(res.path == start);
    CHECK(res.leftover == pool);
    CHECK(res.steps == 0);
  }
}

TEST_CASE("step3: exposures stay within n per step") {
  const std::size_t n = 500;
  const auto coins = coins_for(n, 0.05, 17);
  ExposureLedger ledger(n, 3);
  const ExtendResult res = step3_greedy_extend(coins, 3, ledger, Tuple{0, 1}, range(2, 500), 0);
  CHECK(res.steps > 10);
  CHECK(res.path.size() == 2 + res.steps);
  CHECK(res.path.size() + res.leftover.size() == n);
  // One pass per step plus the final failing pass, each over the unused vertices.
  std::uint64_t bound = 0;
  for (std::size_t len = 2; len <= res.path.size(); ++len) bound += n - len;
  CHECK(res.exposed <= bound);
  CHECK(res.exposed <= n * (res.steps + 1));
  CHECK(ledger.round_stats()[2].exposed == res.exposed);
  CHECK(windows_ok(res.path, false, coins, 3, {}));
}

TEST_CASE("step45: no leftover closes start to end with one round-4 path") {
  Linked inst = linked_instance(1200, 2);
  const ExtendResult ext = step3_greedy_extend(inst.coins, 3, inst.ledger, inst.path,
                                               std::vector<VertexId>{}, 0);
  const auto cc = ConnectorConfig::practical(1200, 3, 0.5, 0.5);
  const AbsorbResult a = step45_absorb(inst.coins, inst.ledger, ext.path, {}, inst.state, cc, cc, 4, 1.0);
  CHECK(a.chain.size() == 2);
  CHECK(a.even_paths.size() == 1);
  CHECK(a.odd_paths.empty());
  CHECK(a.chain[0] == Tuple{ext.path[1], ext.path[0]});
  CHECK(a.l.empty());
}

TEST_CASE("step45: one leftover tuple uses round 4 then round 5") {
  const std::size_t n = 7000;
  Linked inst = linked_instance(n, 13);
  std::vector<char> on(n, 0);
  for (VertexId v : inst.path) on[v] = 1;
  std::vector<VertexId> pool;
  for (VertexId v = 0; v < n; ++v) {
    if (!on[v]) pool.push_back(v);
  }
  const ExtendResult ext = step3_greedy_extend(inst.coins, 3, inst.ledger, inst.path, pool, 2);
  REQUIRE(ext.leftover.size() == 2);
  const auto cc = ConnectorConfig::practical(n, 3, 0.5, 0.5);
  const AbsorbResult a = step45_absorb(inst.coins, inst.ledger, ext.path, ext.leftover, inst.state,
                                       cc, cc, 4, 2.0);
  CHECK(a.chain.size() == 3);
  CHECK(a.chain[1] == ext.leftover);
  REQUIRE(a.even_paths.size() == 1);
  REQUIRE(a.odd_paths.size() == 1);
  CHECK(std::equal(a.even_paths[0].end() - 2, a.even_paths[0].end(), a.chain[1].begin()));
  CHECK(std::equal(a.odd_paths[0].begin(), a.odd_paths[0].begin() + 2, a.chain[1].begin()));
  for (const auto& [round, path] : {std::pair{4, a.even_paths[0]}, std::pair{5, a.odd_paths[0]}}) {
    CHECK(windows_ok(path, false, inst.coins, round, {}));
  }
}

TEST_CASE("step45: a single leftover vertex is padded from the reservoir") {
  const std::size_t n = 7000;
  Linked inst = linked_instance(n, 13);
  std::vector<char> on(n, 0);
  for (VertexId v : inst.path) on[v] = 1;
  std::vector<VertexId> pool;
  for (VertexId v = 0; v < n; ++v) {
    if (!on[v]) pool.push_back(v);
  }
  const ExtendResult ext = step3_greedy_extend(inst.coins, 3, inst.ledger, inst.path, pool, 1);
  REQUIRE(ext.leftover.size() == 1);
  const auto cc = ConnectorConfig::practical(n, 3, 0.5, 0.5);
  const AbsorbResult a = step45_absorb(inst.coins, inst.ledger, ext.path, ext.leftover, inst.state,
                                       cc, cc, 4, 2.0);
  CHECK(a.l.size() == 2);
  const auto w_star = inst.state.w_star();
  const VertexId pad = a.l[0] == ext.leftover[0] ? a.l[1] : a.l[0];
  CHECK(std::find(w_star.begin(), w_star.end(), pad) != w_star.end());
  CHECK(std::find(a.w_used.begin(), a.w_used.end(), pad) != a.w_used.end());

  const Tuple spliced = remove_reservoir_subset(ext.path, a.w_used, inst.state,
                                                run_edge_test(inst.ledger, inst.state));
  const Tuple cycle = assemble_cycle(spliced, a.closing, 3);
  CHECK(cycle.size() == n);
  CHECK(windows_ok(cycle, true, inst.coins, 1, copy_edges(inst.state)));
}

TEST_CASE("step45: leftover beyond the reservoir is reported") {
  Linked inst = linked_instance(1200, 2);
  const std::vector<VertexId> lots = range(1100, 1200);
  const auto cc = ConnectorConfig::practical(1200, 3, 0.5, 0.5);
  CHECK(code_of([&] { step45_absorb(inst.coins, inst.ledger, inst.path, lots, inst.state, cc, cc, 4, 4.0); }) ==
        "AbsorbCapacityExceeded");
  CHECK(absorbable_bound(10, 3, 4.0) == 2);
  CHECK(absorbable_bound(1, 3, 4.0) == 0);
}

TEST_CASE("hamilton: probability one at n = 400") {
  const RunReport rep = find_tight_hamilton_cycle(config(400, 1.0));
  REQUIRE(rep.success());
  REQUIRE(rep.cycle);
  CHECK(rep.cycle->size() == 400);
  CHECK(std::set<VertexId>(rep.cycle->begin(), rep.cycle->end()).size() == 400);
  CHECK(rep.already_exposed_events == 0);
}

TEST_CASE("hamilton: probability one with reservoir copies") {
  const RunReport rep = find_tight_hamilton_cycle(config(2000, 1.0, 4));
  REQUIRE(rep.success());
  CHECK(rep.gadgets_embedded == 3);
  CHECK(rep.cycle->size() == 2000);
}

TEST_CASE("hamilton: probability zero fails in step 1") {
  PipelineConfig cfg = config(2000, 0.0);
  cfg.step1_retry_budget = 20000;
  const RunReport rep = find_tight_hamilton_cycle(cfg);
  CHECK_FALSE(rep.success());
  CHECK_FALSE(rep.cycle);
  REQUIRE(rep.failed_stage() != nullptr);
  CHECK(rep.failed_stage()->name == "step1_reservoir_copies");
  CHECK(rep.failed_stage()->code == "EmbeddingBudgetExhausted");
}

TEST_CASE("hamilton: fixed seed is reproducible") {
  PipelineConfig cfg;
  cfg.n = 2000;
  cfg.eps = 0.6;
  cfg.seed = 42;
  const RunReport a = find_tight_hamilton_cycle(cfg);
  const RunReport b = find_tight_hamilton_cycle(cfg);
  REQUIRE(a.stages.size() == b.stages.size());
  for (std::size_t i = 0; i < a.stages.size(); ++i) {
    CHECK(a.stages[i].name == b.stages[i].name);
    CHECK(a.stages[i].ok == b.stages[i].ok);
    CHECK(a.stages[i].detail == b.stages[i].detail);
  }
  CHECK(a.step1_probes == b.step1_probes);
  CHECK(a.cycle == b.cycle);
  REQUIRE(a.exposures.size() == b.exposures.size());
  for (std::size_t i = 0; i < a.exposures.size(); ++i) {
    CHECK(a.exposures[i].exposed == b.exposures[i].exposed);
    CHECK(a.exposures[i].appeared == b.exposures[i].appeared);
  }
}

TEST_CASE("hamilton: explicit complete graph") {
  const Hypergraph g = complete_hypergraph(30, 3);
  PipelineConfig cfg = config(30, 1.0, 2);
  const RunReport rep = find_tight_hamilton_cycle(cfg, &g);
  REQUIRE(rep.success());
  CHECK(rep.explicit_graph);
  CHECK(verify_tight_cycle(g, *rep.cycle).accepted);
}

TEST_CASE("factor: a single full length is a Hamilton run") {
  const RunReport rep = find_disjoint_tight_cycles(config(400, 1.0), {400});
  REQUIRE(rep.success());
  CHECK(rep.cycles.size() == 1);
  CHECK(rep.cycle->size() == 400);
}

TEST_CASE("factor: 300, 50, 50 on n = 400") {
  const std::vector<std::size_t> lengths{300, 50, 50};
  const RunReport rep = find_disjoint_tight_cycles(config(400, 1.0), lengths);
  REQUIRE(rep.success());
  REQUIRE(rep.cycles.size() == 3);
  std::set<VertexId> seen;
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(rep.cycles[i].size() == lengths[i]);
    seen.insert(rep.cycles[i].begin(), rep.cycles[i].end());
  }
  CHECK(seen.size() == 400);
}

TEST_CASE("factor: infeasible lengths") {
  const PipelineConfig cfg = config(400, 1.0);
  CHECK(code_of([&] { find_disjoint_tight_cycles(cfg, {300, 11}); }) == "LengthInfeasible");
  CHECK(code_of([&] { find_disjoint_tight_cycles(cfg, {300, 60, 60}); }) == "LengthInfeasible");
  CHECK(code_of([&] { find_disjoint_tight_cycles(cfg, {100, 50}); }) == "LengthInfeasible");
  CHECK(code_of([&] { find_disjoint_tight_cycles(cfg, {}); }) == "LengthInfeasible");
}
