#include "tightham/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <numeric>
#include <string>

#include "tightham/errors.hpp"
#include "tightham/rng.hpp"

namespace tightham {

namespace {

constexpr std::uint64_t kSplitTag = 0x73706c6974ULL;
constexpr std::uint64_t kLinkTag = 0x6c696e6bULL;
constexpr std::uint64_t kAbsorbTag = 0x6162736f7262ULL;
constexpr std::uint64_t kShortTag = 0x73686f7274ULL;

Tuple head(const Tuple& p, int r) { return Tuple(p.begin(), p.begin() + (r - 1)); }
Tuple tail(const Tuple& p, int r) { return Tuple(p.end() - (r - 1), p.end()); }

// Interior of a connector path whose end tuples both have r-1 vertices.
Tuple interior(const Tuple& p, int r) {
  return Tuple(p.begin() + (r - 1), p.end() - (r - 1));
}

std::vector<VertexId> minus(std::span<const VertexId> a, std::span<const VertexId> b,
                            std::size_t n) {
  std::vector<char> drop(n, 0);
  for (VertexId v : b) drop[v] = 1;
  std::vector<VertexId> out;
  for (VertexId v : a) {
    if (!drop[v]) out.push_back(v);
  }
  return out;
}

ConnectorConfig make_connector(PipelineMode mode, std::size_t n, int r, double eps, double delta,
                               bool early_exit) {
  ConnectorConfig c = mode == PipelineMode::kStrict ? ConnectorConfig::strict(n, r, eps, delta)
                                                    : ConnectorConfig::practical(n, r, eps, delta);
  c.early_exit_bridge = early_exit;
  return c;
}

std::uint64_t exposed_in(const ExposureLedger& ledger, int round) {
  const auto& st = ledger.round_stats();
  return static_cast<std::size_t>(round) <= st.size() ? st[round - 1].exposed : 0;
}

// Appends vertices of `pool` (ascending) to `path` while some (end tuple, w) set
// appears, until `done` holds. Vertices taken are removed from `pool`.
std::uint64_t extend_greedily(const CoinOracle& coins, int round, ExposureLedger& ledger,
                              Tuple& path, std::vector<VertexId>& pool,
                              const std::function<bool()>& done) {
  const int r = ledger.uniformity();
  std::uint64_t steps = 0;
  std::vector<VertexId> e(static_cast<std::size_t>(r));
  while (!pool.empty() && !done()) {
    std::copy(path.end() - (r - 1), path.end(), e.begin());
    auto chosen = pool.end();
    for (auto it = pool.begin(); it != pool.end(); ++it) {
      e[r - 1] = *it;
      if (probe_edge(coins, round, ledger, e)) {
        chosen = it;
        break;
      }
    }
    if (chosen == pool.end()) break;
    path.push_back(*chosen);
    pool.erase(chosen);
    ++steps;
  }
  return steps;
}

class StageTimer {
 public:
  StageTimer(RunReport& report, std::string name) : report_(report) {
    outcome_.name = std::move(name);
    start_ = std::chrono::steady_clock::now();
  }

  void succeed() { finish(true, "", ""); }
  void fail(const Error& e) { finish(false, e.code(), e.what()); }

 private:
  void finish(bool ok, std::string code, std::string detail) {
    outcome_.ok = ok;
    outcome_.code = std::move(code);
    outcome_.detail = std::move(detail);
    outcome_.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    report_.stages.push_back(outcome_);
  }

  RunReport& report_;
  StageOutcome outcome_;
  std::chrono::steady_clock::time_point start_;
};

// Runs `body` as a named stage; returns false after recording a stage or
// verification failure.
template <typename F>
bool run_stage(RunReport& report, const char* name, F&& body) {
  StageTimer timer(report, name);
  try {
    body();
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::kStageFailure && e.kind() != ErrorKind::kVerification) throw;
    timer.fail(e);
    return false;
  }
  timer.succeed();
  return true;
}

struct RunContext {
  const PipelineConfig& cfg;
  ResolvedPlan plan;
  ReservoirGraph gadget;
  CoinOracle coins;
  ExposureLedger ledger;
  ReservoirState state;
  RunReport& report;
};

ReservoirGraph build_gadget(const ResolvedPlan& plan, int r) {
  return build_reservoir_graph(r, plan.gadget_ell);
}

// Steps 1 and 2 on `universe`; leaves the linked path in `path`.
bool run_front(RunContext& ctx, std::span<const VertexId> universe, Tuple& path) {
  const std::size_t n = ctx.cfg.n;
  const int r = ctx.cfg.r;
  RunReport& report = ctx.report;

  if (!run_stage(report, "step1_reservoir_copies", [&] {
        std::size_t probes = 0;
        try {
          ctx.state = step1_find_reservoir_copies(ctx.gadget, ctx.plan.reservoir_count, ctx.coins, 1,
                                                  ctx.ledger, universe, ctx.plan.step1_budget,
                                                  &probes);
        } catch (...) {
          report.step1_probes = probes;
          throw;
        }
        report.step1_probes = probes;
        report.gadgets_embedded = ctx.state.copies().size();
        report.w_star = ctx.state.w_star().size();
      })) {
    return false;
  }

  return run_stage(report, "step2_link", [&] {
    const std::vector<VertexId> x = minus(universe, ctx.state.gadget_vertices(), n);
    const ConnectorConfig cc = make_connector(ctx.cfg.mode, n, r, ctx.plan.eps_connect, 0.5,
                                              ctx.cfg.early_exit_bridge);
    LinkResult link = step2_link_reservoirs(ctx.coins, 2, ctx.ledger, ctx.state, x, cc,
                                            derive_seed(ctx.cfg.seed, kLinkTag));
    if (!link.connection.ok()) {
      const ConnectionFailure& f = *link.connection.failure;
      throw stage_failure(f.code, "copy link " + std::to_string(f.phase) + ": " + f.detail);
    }
    path = std::move(link.path);
    report.path_after_step2 = path.size();
  });
}

// Steps 3 to 5, the splice and the final check on `universe` (which contains `path`).
bool run_tail(RunContext& ctx, std::span<const VertexId> universe, Tuple path,
              Tuple& cycle) {
  const std::size_t n = ctx.cfg.n;
  const int r = ctx.cfg.r;
  RunReport& report = ctx.report;

  std::vector<VertexId> leftover;
  if (!run_stage(report, "step3_extend", [&] {
        const std::vector<VertexId> pool = minus(universe, path, n);
        ExtendResult ext = step3_greedy_extend(ctx.coins, 3, ctx.ledger, std::move(path), pool,
                                               ctx.plan.greedy_stop);
        path = std::move(ext.path);
        leftover = std::move(ext.leftover);
        report.path_after_step3 = path.size();
        report.leftover = leftover.size();
      })) {
    return false;
  }

  AbsorbResult absorbed;
  if (!run_stage(report, "step45_absorb", [&] {
        const double c = static_cast<double>(ctx.state.copies().size()) / static_cast<double>(n);
        const double delta = std::clamp(c / 2.0, 1.0 / (2.0 * static_cast<double>(n)), 1.0);
        const ConnectorConfig cc = make_connector(ctx.cfg.mode, n, r, ctx.plan.eps_connect, delta,
                                                  ctx.cfg.early_exit_bridge);
        absorbed = step45_absorb(ctx.coins, ctx.ledger, path, leftover, ctx.state, cc, cc,
                                 derive_seed(ctx.cfg.seed, kAbsorbTag), ctx.cfg.absorb_safety);
        report.l_size = absorbed.l.size();
        report.w_star_star = absorbed.w_star_star;
        report.w_used = absorbed.w_used.size();
      })) {
    return false;
  }

  const EdgeTest is_edge = run_edge_test(ctx.ledger, ctx.state);
  Tuple spliced;
  if (!run_stage(report, "splice", [&] {
        spliced = remove_reservoir_subset(path, absorbed.w_used, ctx.state, is_edge);
      })) {
    return false;
  }

  return run_stage(report, "verify", [&] {
    Tuple candidate = assemble_cycle(spliced, absorbed.closing, r);
    Verdict v = universe.size() == n ? verify_tight_cycle(is_edge, n, r, candidate)
                                     : verify_cycle_on_subset(is_edge, n, r, candidate);
    if (v.accepted && candidate.size() != universe.size()) {
      v = Verdict::reject("cycle has " + std::to_string(candidate.size()) + " vertices, expected " +
                          std::to_string(universe.size()));
    }
    if (!v.accepted) throw verification_failure("SelfVerificationFailed", v.first_violation);
    cycle = std::move(candidate);
  });
}

RunReport base_report(const PipelineConfig& cfg, const ResolvedPlan& plan) {
  RunReport report;
  report.seed = cfg.seed;
  report.n = cfg.n;
  report.r = cfg.r;
  report.eps = cfg.eps;
  report.p = plan.q;
  report.mode = cfg.mode;
  report.plan = plan;
  return report;
}

void finish_report(RunReport& report, const ExposureLedger& ledger) {
  report.exposures = ledger.round_stats();
  report.exposures.resize(report.plan.rounds.size());
  report.already_exposed_events = ledger.already_exposed_events();
}

}  // namespace

std::string to_string(PipelineMode mode) {
  return mode == PipelineMode::kStrict ? "strict" : "practical";
}

PipelineMode parse_pipeline_mode(const std::string& s) {
  if (s == "strict") return PipelineMode::kStrict;
  if (s == "practical") return PipelineMode::kPractical;
  throw invalid_input("BadMode", "mode must be strict or practical, got '" + s + "'");
}

void PipelineConfig::validate() const {
  if (r < 3) throw invalid_input("UnsupportedUniformity", "r must be >= 3, got " + std::to_string(r));
  if (!(eps > 0 && eps < 1)) throw invalid_input("BadConfig", "eps must lie in (0,1)");
  if (n < 2 * static_cast<std::size_t>(r)) throw invalid_input("BadConfig", "n must be >= 2r");
  if (p && !(*p >= 0 && *p <= 1)) throw invalid_input("BadConfig", "p must lie in [0,1]");
  if (!(absorb_safety > 0)) throw invalid_input("BadConfig", "absorb_safety must be positive");
  if (!(nu > 0) || !(eta1 > 0)) throw invalid_input("BadConfig", "nu and eta1 must be positive");
  if (!(factor_delta > 0 && factor_delta <= 1)) {
    throw invalid_input("BadConfig", "factor_delta must lie in (0,1]");
  }
  if (factor_gap < 1) throw invalid_input("BadConfig", "factor_gap must be >= 1");
}

double PipelineConfig::input_probability() const {
  if (p) return *p;
  return std::min(1.0, std::pow(static_cast<double>(n), -1.0 + eps));
}

ResolvedPlan resolve_plan(const PipelineConfig& cfg, std::size_t round_count) {
  cfg.validate();
  ResolvedPlan plan;
  const double nn = static_cast<double>(cfg.n);
  plan.q = cfg.input_probability();
  const int r = cfg.r;
  if (cfg.mode == PipelineMode::kPractical) {
    const double qp = 1.0 - std::pow(1.0 - plan.q, 1.0 / static_cast<double>(round_count));
    plan.rounds.assign(round_count, qp);
    plan.eps_connect = qp > 0 ? std::clamp(1.0 + std::log(qp) / std::log(nn), 0.05, 0.95) : 0.05;
    plan.gadget_ell = cfg.gadget_ell > 0 ? cfg.gadget_ell : 3;
    plan.greedy_stop = cfg.greedy_stop.value_or(0.0);
  } else {
    const double qp = std::pow(nn, -1.0 + cfg.eps / 2.0);
    const double qpp = 1.0 - (1.0 - plan.q) / std::pow(1.0 - qp, static_cast<double>(round_count - 1));
    if (!(qpp >= qp) || qpp > 1.0) {
      throw invalid_input("InfeasibleProbabilities",
                          "p is too small for the strict round split at this n and eps");
    }
    plan.rounds.assign(round_count, qp);
    plan.rounds[0] = qpp;
    plan.eps_connect = cfg.eps / 2.0;
    plan.gadget_ell = cfg.gadget_ell > 0 ? cfg.gadget_ell : choose_ell(r, cfg.eps / 4.0);
    plan.greedy_stop = cfg.greedy_stop.value_or(std::pow(nn, 1.0 - cfg.eps / 4.0));
  }
  plan.gadget_vertices = reservoir_vertex_count(r, plan.gadget_ell);
  const double nstar = static_cast<double>(plan.gadget_vertices);
  const std::size_t cap = cfg.n / (2 * plan.gadget_vertices);
  if (cfg.reservoir_count) {
    if (*cfg.reservoir_count > cap) {
      throw invalid_input("ReservoirTooLarge", std::to_string(*cfg.reservoir_count) +
                                                   " copies of " + std::to_string(plan.gadget_vertices) +
                                                   " vertices exceed n/2");
    }
    plan.reservoir_count = *cfg.reservoir_count;
  } else if (cfg.mode == PipelineMode::kStrict) {
    const double c = std::min({1.0 / (2.0 * nstar), cfg.nu / nstar, cfg.eta1});
    plan.reservoir_count = std::min(cap, static_cast<std::size_t>(std::floor(c * nn)));
  } else {
    const double q3 = plan.rounds[std::min<std::size_t>(2, round_count - 1)];
    const double expected_leftover = q3 > 0 ? (1.0 - q3) / q3 : nn;
    const double padded = expected_leftover + (r - 2);
    const double tuples = std::ceil(padded / (r - 1));
    const double raw = std::ceil(cfg.absorb_safety * padded + (tuples + 1) * 2.0 * (r - 1));
    plan.reservoir_count = raw >= static_cast<double>(cap) ? cap : static_cast<std::size_t>(raw);
  }
  plan.step1_budget = cfg.step1_retry_budget > 0 ? cfg.step1_retry_budget
                                                 : 2000 * plan.gadget_vertices;
  return plan;
}

bool RunReport::success() const {
  if (!cycle) return false;
  return std::all_of(stages.begin(), stages.end(), [](const StageOutcome& s) { return s.ok; });
}

const StageOutcome* RunReport::failed_stage() const {
  for (const StageOutcome& s : stages) {
    if (!s.ok) return &s;
  }
  return nullptr;
}

ReservoirState::ReservoirState(std::size_t n, int r) : n_(n), r_(r), packer_(n, r), owner_(n, -1) {}

void ReservoirState::add_copy(const ReservoirGraph& gadget, GadgetCopy copy) {
  const auto index = static_cast<std::int32_t>(copies_.size());
  for (VertexId v : copy.map) {
    if (v >= owner_.size() || owner_[v] != -1) {
      throw internal_error("OverlappingCopies", "gadget images must be vertex-disjoint");
    }
    owner_[v] = index;
  }
  std::vector<VertexId> img;
  for (const Edge& e : gadget.h_star.edges()) {
    img.clear();
    for (VertexId x : e) img.push_back(copy.map[x]);
    edge_keys_.insert(packer_.pack(img));
  }
  copies_.push_back(std::move(copy));
}

std::vector<VertexId> ReservoirState::w_star() const {
  std::vector<VertexId> out;
  for (const GadgetCopy& c : copies_) out.push_back(c.w_star);
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<VertexId> ReservoirState::gadget_vertices() const {
  std::vector<VertexId> out;
  for (const GadgetCopy& c : copies_) out.insert(out.end(), c.map.begin(), c.map.end());
  std::sort(out.begin(), out.end());
  return out;
}

std::optional<std::size_t> ReservoirState::owner(VertexId v) const {
  if (v >= owner_.size() || owner_[v] < 0) return std::nullopt;
  return static_cast<std::size_t>(owner_[v]);
}

bool ReservoirState::is_gadget_edge(std::span<const VertexId> e) const {
  if (edge_keys_.empty()) return false;
  return edge_keys_.contains(packer_.pack(e));
}

bool probe_edge(const CoinOracle& coins, int round, ExposureLedger& ledger,
                std::span<const VertexId> e) {
  if (ledger.in_h(e)) return ledger.appeared(e);
  return ledger.expose(coins, round, e).value_or(false);
}

ReservoirState step1_find_reservoir_copies(const ReservoirGraph& gadget, std::size_t count,
                                           const CoinOracle& coins, int round,
                                           ExposureLedger& ledger,
                                           std::span<const VertexId> available,
                                           std::size_t budget, std::size_t* probes) {
  const std::size_t n = ledger.vertex_count();
  const int r = ledger.uniformity();
  if (gadget.r != r) throw invalid_input("WrongArity", "gadget uniformity differs from the ledger");
  ReservoirState state(n, r);
  if (probes != nullptr) *probes = 0;
  if (count == 0) return state;
  const std::size_t nv = gadget.vertex_count();
  if (2 * count * nv > n) {
    throw invalid_input("ReservoirTooLarge", "copies would cover more than n/2 vertices");
  }

  const Tuple& order = gadget.path_with;
  std::vector<std::size_t> pos(nv);
  for (std::size_t i = 0; i < nv; ++i) pos[order[i]] = i;
  // needed[i]: edges whose last vertex in path order sits at position i.
  std::vector<std::vector<std::vector<std::size_t>>> needed(nv);
  for (const Edge& e : gadget.h_star.edges()) {
    std::vector<std::size_t> ps;
    for (VertexId x : e) ps.push_back(pos[x]);
    std::sort(ps.begin(), ps.end());
    needed[ps.back()].push_back(ps);
  }
  // Probe edges through the whole start tuple last, so few of its completions are exposed.
  const auto through_start = [&](const std::vector<std::size_t>& ps) {
    return ps[static_cast<std::size_t>(r - 2)] == static_cast<std::size_t>(r - 2);
  };
  for (auto& list : needed) {
    std::stable_partition(list.begin(), list.end(),
                          [&](const std::vector<std::size_t>& ps) { return !through_start(ps); });
  }

  std::vector<VertexId> cand(available.begin(), available.end());
  std::sort(cand.begin(), cand.end());
  std::vector<char> taken(n, 0);
  std::vector<VertexId> host(nv), set(static_cast<std::size_t>(r));
  std::vector<std::size_t> cursor(nv, 0);
  std::size_t total = 0;

  for (std::size_t copy = 0; copy < count; ++copy) {
    std::size_t spent = 0;
    std::size_t i = 0;
    cursor[0] = 0;
    while (i < nv) {
      bool placed = false;
      while (cursor[i] < cand.size()) {
        const VertexId w = cand[cursor[i]++];
        if (taken[w]) continue;
        bool ok = true;
        for (const auto& ps : needed[i]) {
          for (std::size_t j = 0; j < ps.size(); ++j) set[j] = ps[j] == i ? w : host[ps[j]];
          ++spent;
          ++total;
          if (!probe_edge(coins, round, ledger, set)) {
            ok = false;
            break;
          }
        }
        if (spent > budget) {
          if (probes != nullptr) *probes = total;
          throw stage_failure("EmbeddingBudgetExhausted",
                              "copy " + std::to_string(copy + 1) + " of " + std::to_string(count) +
                                  " not embedded within " + std::to_string(budget) + " probes");
        }
        if (ok) {
          host[i] = w;
          taken[w] = 1;
          placed = true;
          break;
        }
      }
      if (placed) {
        if (++i < nv) cursor[i] = 0;
        continue;
      }
      if (i == 0) {
        if (probes != nullptr) *probes = total;
        throw stage_failure("EmbeddingBudgetExhausted",
                            "copy " + std::to_string(copy + 1) + " of " + std::to_string(count) +
                                " has no embedding in the remaining vertices");
      }
      --i;
      taken[host[i]] = 0;
      // Retrying the first closing position would keep exposing sets through the
      // copy's start tuple; pick a new first vertex instead.
      if (i + 1 == static_cast<std::size_t>(r)) {
        while (i > 0) taken[host[--i]] = 0;
      }
    }

    GadgetCopy gc;
    gc.map.resize(nv);
    for (std::size_t j = 0; j < nv; ++j) gc.map[order[j]] = host[j];
    gc.w_star = gc.map[gadget.w_star];
    for (VertexId x : gadget.path_with) gc.path_with.push_back(gc.map[x]);
    for (VertexId x : gadget.path_without) gc.path_without.push_back(gc.map[x]);
    state.add_copy(gadget, std::move(gc));
  }
  if (probes != nullptr) *probes = total;
  return state;
}

LinkResult step2_link_reservoirs(const CoinOracle& coins, int round, ExposureLedger& ledger,
                                 ReservoirState& state, std::span<const VertexId> x,
                                 const ConnectorConfig& cfg, std::uint64_t seed) {
  const int r = ledger.uniformity();
  LinkResult out;
  auto& copies = state.copies();
  if (copies.empty()) {
    std::vector<VertexId> xs(x.begin(), x.end());
    std::sort(xs.begin(), xs.end());
    if (xs.size() < static_cast<std::size_t>(r - 1)) {
      throw invalid_input("BadRequest", "fewer than r-1 vertices to start a path");
    }
    out.path.assign(xs.begin(), xs.begin() + (r - 1));
    return out;
  }

  ConnectionRequest req;
  req.round = round;
  req.seed = seed;
  req.x.assign(x.begin(), x.end());
  for (std::size_t i = 0; i + 1 < copies.size(); ++i) {
    req.pairs.emplace_back(tail(copies[i].path_with, r), head(copies[i + 1].path_with, r));
  }
  out.connection = connect_all(req, coins, ledger, cfg);

  copies[0].offset = 0;
  out.path = copies[0].path_with;
  for (std::size_t i = 0; i < out.connection.paths.size(); ++i) {
    const Tuple mid = interior(out.connection.paths[i], r);
    out.path.insert(out.path.end(), mid.begin(), mid.end());
    copies[i + 1].offset = out.path.size();
    out.path.insert(out.path.end(), copies[i + 1].path_with.begin(), copies[i + 1].path_with.end());
  }
  return out;
}

ExtendResult step3_greedy_extend(const CoinOracle& coins, int round, ExposureLedger& ledger,
                                 Tuple path, std::span<const VertexId> pool, double greedy_stop) {
  const int r = ledger.uniformity();
  if (path.size() < static_cast<std::size_t>(r - 1)) {
    throw invalid_input("BadPath", "greedy extension needs a path with at least r-1 vertices");
  }
  ExtendResult out;
  std::vector<VertexId> rest(pool.begin(), pool.end());
  std::sort(rest.begin(), rest.end());
  const std::uint64_t before = exposed_in(ledger, round);
  out.steps = extend_greedily(coins, round, ledger, path, rest, [&] {
    return static_cast<double>(rest.size()) <= greedy_stop;
  });
  out.exposed = exposed_in(ledger, round) - before;
  out.path = std::move(path);
  out.leftover = std::move(rest);
  return out;
}

std::size_t absorbable_bound(std::size_t w_star_count, int r, double safety) {
  const std::size_t pad = static_cast<std::size_t>(r - 2);
  if (w_star_count <= pad) return 0;
  return static_cast<std::size_t>(std::floor(static_cast<double>(w_star_count - pad) / safety));
}

AbsorbResult step45_absorb(const CoinOracle& coins, ExposureLedger& ledger, const Tuple& path,
                           std::span<const VertexId> leftover, const ReservoirState& state,
                           const ConnectorConfig& cfg4, const ConnectorConfig& cfg5,
                           std::uint64_t seed, double safety) {
  const std::size_t n = ledger.vertex_count();
  const int r = ledger.uniformity();
  const std::size_t k = static_cast<std::size_t>(r - 1);
  if (path.size() < 2 * k) {
    throw stage_failure("PathTooShort", "the path needs disjoint start and end tuples");
  }
  const Tuple start = head(path, r);
  const Tuple end = tail(path, r);
  std::vector<VertexId> w_star = minus(state.w_star(), start, n);
  w_star = minus(w_star, end, n);

  const std::size_t bound = absorbable_bound(w_star.size(), r, safety);
  if (leftover.size() > bound) {
    const auto suggest = static_cast<std::size_t>(
        std::ceil(safety * static_cast<double>(leftover.size()) + static_cast<double>(r - 2)));
    throw stage_failure("AbsorbCapacityExceeded",
                        std::to_string(leftover.size()) + " leftover vertices exceed the absorbable " +
                            std::to_string(bound) + "; try reservoir_count >= " +
                            std::to_string(suggest));
  }

  AbsorbResult out;
  out.l.assign(leftover.begin(), leftover.end());
  std::sort(out.l.begin(), out.l.end());
  std::vector<VertexId> padding;
  for (VertexId w : w_star) {
    if ((out.l.size() + padding.size()) % k == 0) break;
    padding.push_back(w);
  }
  if ((out.l.size() + padding.size()) % k != 0) {
    throw stage_failure("AbsorbCapacityExceeded", "not enough reservoir vertices for padding");
  }
  out.l.insert(out.l.end(), padding.begin(), padding.end());
  std::sort(out.l.begin(), out.l.end());
  const std::size_t t = out.l.size() / k;

  out.chain.push_back(reversed(start));
  for (std::size_t i = 0; i < t; ++i) {
    out.chain.emplace_back(out.l.begin() + static_cast<std::ptrdiff_t>(i * k),
                           out.l.begin() + static_cast<std::ptrdiff_t>((i + 1) * k));
  }
  out.chain.push_back(reversed(end));

  auto connect = [&](std::size_t first, int round, std::span<const VertexId> x,
                     const ConnectorConfig& cc) {
    ConnectionRequest req;
    req.round = round;
    req.seed = derive_seed(seed, static_cast<std::uint64_t>(round));
    req.x.assign(x.begin(), x.end());
    for (std::size_t i = first; i + 1 <= t + 1; i += 2) req.pairs.emplace_back(out.chain[i], out.chain[i + 1]);
    ConnectionResult res = connect_all(req, coins, ledger, cc);
    if (!res.ok()) {
      const ConnectionFailure& f = *res.failure;
      throw stage_failure(f.code, "round " + std::to_string(round) + " connection " +
                                      std::to_string(f.phase) + ": " + f.detail);
    }
    return res.paths;
  };

  const std::vector<VertexId> x4 = minus(w_star, out.l, n);
  out.even_paths = connect(0, 4, x4, cfg4);
  std::vector<VertexId> used;
  for (const Tuple& p : out.even_paths) {
    const Tuple mid = interior(p, r);
    used.insert(used.end(), mid.begin(), mid.end());
  }
  const std::vector<VertexId> x5 = minus(x4, used, n);
  out.w_star_star = x5.size();
  out.odd_paths = connect(1, 5, x5, cfg5);
  for (const Tuple& p : out.odd_paths) {
    const Tuple mid = interior(p, r);
    used.insert(used.end(), mid.begin(), mid.end());
  }

  out.closing = out.even_paths.front();
  for (std::size_t j = 1; j <= t; ++j) {
    const Tuple& p = j % 2 == 1 ? out.odd_paths[(j - 1) / 2] : out.even_paths[j / 2];
    out.closing.insert(out.closing.end(), p.begin() + static_cast<std::ptrdiff_t>(k), p.end());
  }
  out.w_used = padding;
  out.w_used.insert(out.w_used.end(), used.begin(), used.end());
  std::sort(out.w_used.begin(), out.w_used.end());
  return out;
}

Tuple remove_reservoir_subset(const Tuple& path, std::span<const VertexId> w,
                              const ReservoirState& state, const EdgeTest& is_edge) {
  if (w.empty()) return path;
  const auto& copies = state.copies();
  std::vector<char> splice(copies.size(), 0);
  for (VertexId v : w) {
    const auto c = state.owner(v);
    if (!c || copies[*c].w_star != v) {
      throw invalid_input("NotReservoirVertex", "vertex " + std::to_string(v) + " is not a reservoir vertex");
    }
    const GadgetCopy& g = copies[*c];
    if (g.offset + g.path_with.size() > path.size() ||
        !std::equal(g.path_with.begin(), g.path_with.end(),
                    path.begin() + static_cast<std::ptrdiff_t>(g.offset))) {
      throw invalid_input("NotReservoirVertex",
                          "copy owning vertex " + std::to_string(v) + " is not at its place in the path");
    }
    splice[*c] = 1;
  }

  std::vector<std::size_t> order(copies.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return copies[a].offset < copies[b].offset; });
  Tuple out;
  out.reserve(path.size());
  std::size_t at = 0;
  for (std::size_t c : order) {
    if (!splice[c]) continue;
    const GadgetCopy& g = copies[c];
    out.insert(out.end(), path.begin() + static_cast<std::ptrdiff_t>(at),
               path.begin() + static_cast<std::ptrdiff_t>(g.offset));
    out.insert(out.end(), g.path_without.begin(), g.path_without.end());
    at = g.offset + g.path_with.size();
  }
  out.insert(out.end(), path.begin() + static_cast<std::ptrdiff_t>(at), path.end());

  const int r = state.uniformity();
  Verdict v = verify_tight_path(is_edge, state.vertex_count(), r, out);
  if (v.accepted && (!std::equal(out.begin(), out.begin() + (r - 1), path.begin()) ||
                     !std::equal(out.end() - (r - 1), out.end(), path.end() - (r - 1)))) {
    v = Verdict::reject("end tuples changed");
  }
  if (!v.accepted) throw verification_failure("SpliceFailure", v.first_violation);
  return out;
}

Tuple assemble_cycle(const Tuple& spliced, const Tuple& closing, int r) {
  const std::size_t k = static_cast<std::size_t>(r - 1);
  const Tuple rev = reversed(closing);
  if (rev.size() < 2 * k || spliced.size() < 2 * k ||
      !std::equal(rev.begin(), rev.begin() + static_cast<std::ptrdiff_t>(k),
                  spliced.end() - static_cast<std::ptrdiff_t>(k)) ||
      !std::equal(rev.end() - static_cast<std::ptrdiff_t>(k), rev.end(), spliced.begin())) {
    throw internal_error("ChainMismatch", "closing path does not join the path ends");
  }
  Tuple out = spliced;
  out.insert(out.end(), rev.begin() + static_cast<std::ptrdiff_t>(k),
             rev.end() - static_cast<std::ptrdiff_t>(k));
  return out;
}

EdgeTest run_edge_test(const ExposureLedger& ledger, const ReservoirState& state) {
  return [&ledger, &state](std::span<const VertexId> e) {
    return ledger.appeared(e) || state.is_gadget_edge(e);
  };
}

RunReport find_tight_hamilton_cycle(const PipelineConfig& cfg, const Hypergraph* graph) {
  const ResolvedPlan plan = resolve_plan(cfg, 5);
  ExposureConfig ec;
  ec.n = cfg.n;
  ec.r = cfg.r;
  ec.master_seed = cfg.seed;
  ec.rounds = plan.rounds;
  if (graph != nullptr) {
    if (graph->vertex_count() != cfg.n || graph->uniformity() != cfg.r) {
      throw invalid_input("BadGraph", "graph size or uniformity differs from the configuration");
    }
    const ExplicitSplit split = split_explicit(*graph, plan.q, plan.rounds[1], plan.rounds[0],
                                               derive_seed(cfg.seed, kSplitTag));
    ec.mode = ExposureMode::kExplicitGraph;
    for (int round = 1; round <= 5; ++round) ec.round_graphs.push_back(split.part(round, cfg.n, cfg.r));
  }

  RunReport report = base_report(cfg, plan);
  report.explicit_graph = graph != nullptr;
  RunContext ctx{cfg,
                 plan,
                 build_gadget(plan, cfg.r),
                 CoinOracle(std::move(ec)),
                 ExposureLedger(cfg.n, cfg.r, ExposurePolicy::kStrict),
                 ReservoirState(cfg.n, cfg.r),
                 report};
  std::vector<VertexId> universe(cfg.n);
  std::iota(universe.begin(), universe.end(), VertexId{0});

  Tuple path, cycle;
  if (run_front(ctx, universe, path) && run_tail(ctx, universe, std::move(path), cycle)) {
    report.cycle = cycle;
    report.cycles.push_back(std::move(cycle));
  }
  report.lengths = {cfg.n};
  finish_report(report, ctx.ledger);
  return report;
}

void check_factor_lengths(const PipelineConfig& cfg, const std::vector<std::size_t>& lengths) {
  if (lengths.empty()) throw invalid_input("LengthInfeasible", "at least one length is required");
  const std::size_t total = std::accumulate(lengths.begin(), lengths.end(), std::size_t{0});
  if (total > cfg.n) {
    throw invalid_input("LengthInfeasible", "lengths sum to " + std::to_string(total) + " > n");
  }
  const double nn = static_cast<double>(cfg.n);
  if (static_cast<double>(lengths[0]) < cfg.factor_delta * nn) {
    throw invalid_input("LengthInfeasible", "the first length must be at least " +
                                                std::to_string(cfg.factor_delta) + " n");
  }
  const double shortest = 2.0 * cfg.r / cfg.eps;
  const std::size_t k = static_cast<std::size_t>(cfg.r - 1);
  for (std::size_t i = 1; i < lengths.size(); ++i) {
    if (static_cast<double>(lengths[i]) < shortest) {
      throw invalid_input("LengthInfeasible", "length " + std::to_string(lengths[i]) +
                                                  " is below 2r/eps = " + std::to_string(static_cast<std::size_t>(std::ceil(shortest))));
    }
    if (lengths[i] < 2 * k + static_cast<std::size_t>(cfg.factor_gap) + 1) {
      throw invalid_input("LengthInfeasible", "length " + std::to_string(lengths[i]) +
                                                  " leaves no room for the closing connection");
    }
  }
}

RunReport find_disjoint_tight_cycles(const PipelineConfig& cfg,
                                     const std::vector<std::size_t>& lengths) {
  cfg.validate();
  check_factor_lengths(cfg, lengths);
  if (lengths.size() == 1 && lengths[0] == cfg.n) return find_tight_hamilton_cycle(cfg);

  const std::size_t n = cfg.n;
  const int r = cfg.r;
  ResolvedPlan plan = resolve_plan(cfg, 7);
  plan.reservoir_count = std::min(plan.reservoir_count, lengths[0] / (2 * plan.gadget_vertices));

  ExposureConfig ec;
  ec.n = n;
  ec.r = r;
  ec.master_seed = cfg.seed;
  ec.rounds = plan.rounds;
  RunReport report = base_report(cfg, plan);
  report.lengths = lengths;
  RunContext ctx{cfg,
                 plan,
                 build_gadget(plan, r),
                 CoinOracle(std::move(ec)),
                 ExposureLedger(n, r, ExposurePolicy::kStrict),
                 ReservoirState(n, r),
                 report};
  std::vector<VertexId> all(n);
  std::iota(all.begin(), all.end(), VertexId{0});

  Tuple path;
  if (!run_front(ctx, all, path)) {
    finish_report(report, ctx.ledger);
    return report;
  }

  std::vector<Tuple> short_cycles;
  std::vector<VertexId> occupied = path;
  const bool shorts_ok = run_stage(report, "short_cycles", [&] {
    const ConnectorConfig cc = make_connector(cfg.mode, n, r, plan.eps_connect, 0.5,
                                              cfg.early_exit_bridge);
    const EdgeTest is_edge = run_edge_test(ctx.ledger, ctx.state);
    const std::size_t k = static_cast<std::size_t>(r - 1);
    const std::size_t gap = static_cast<std::size_t>(cfg.factor_gap);
    for (std::size_t i = 1; i < lengths.size(); ++i) {
      std::vector<VertexId> pool = minus(all, occupied, n);
      if (pool.size() < lengths[i]) {
        throw stage_failure("LengthInfeasible", "not enough free vertices for a short cycle");
      }
      Tuple p(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(k));
      pool.erase(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(k));
      const std::size_t want = lengths[i] - gap;
      extend_greedily(ctx.coins, 6, ctx.ledger, p, pool, [&] { return p.size() >= want; });
      if (p.size() < want) {
        throw stage_failure("GreedyStalled", "short path " + std::to_string(i) + " stopped at " +
                                                 std::to_string(p.size()) + " of " +
                                                 std::to_string(want) + " vertices");
      }
      ConnectionRequest req;
      req.round = 7;
      req.seed = derive_seed(cfg.seed, kShortTag + i);
      req.pairs.emplace_back(tail(p, r), head(p, r));
      req.x = pool;
      req.target_lengths = {2 * k + gap};
      const ConnectionResult res = connect_all(req, ctx.coins, ctx.ledger, cc);
      if (!res.ok()) {
        const ConnectionFailure& f = *res.failure;
        throw stage_failure(f.code, "closing short cycle " + std::to_string(i) + ": " + f.detail);
      }
      const Tuple mid = interior(res.paths.front(), r);
      p.insert(p.end(), mid.begin(), mid.end());
      const Verdict v = verify_cycle_on_subset(is_edge, n, r, p);
      if (!v.accepted) throw verification_failure("SelfVerificationFailed", v.first_violation);
      if (p.size() != lengths[i]) {
        throw verification_failure("SelfVerificationFailed", "short cycle has the wrong length");
      }
      occupied.insert(occupied.end(), p.begin(), p.end());
      short_cycles.push_back(std::move(p));
    }
  });
  if (!shorts_ok) {
    finish_report(report, ctx.ledger);
    return report;
  }

  // Universe of the long cycle: everything not in a short cycle, trimmed from
  // the top labels (never touching the linked path) down to lengths[0].
  std::vector<VertexId> in_short;
  for (const Tuple& c : short_cycles) in_short.insert(in_short.end(), c.begin(), c.end());
  std::vector<VertexId> universe = minus(all, in_short, n);
  std::vector<char> on_path(n, 0);
  for (VertexId v : path) on_path[v] = 1;
  std::size_t excess = universe.size() - lengths[0];
  for (auto it = universe.end(); excess > 0 && it != universe.begin();) {
    --it;
    if (on_path[*it]) continue;
    it = universe.erase(it);
    --excess;
  }
  if (excess > 0) {
    run_stage(report, "long_cycle_universe", [&] {
      throw stage_failure("LengthInfeasible", "the linked path is longer than the long cycle");
    });
    finish_report(report, ctx.ledger);
    return report;
  }

  Tuple cycle;
  if (run_tail(ctx, universe, std::move(path), cycle)) {
    report.cycle = cycle;
    report.cycles.push_back(std::move(cycle));
    for (Tuple& c : short_cycles) report.cycles.push_back(std::move(c));
    run_stage(report, "disjointness", [&] {
      std::vector<char> seen(n, 0);
      for (std::size_t i = 0; i < report.cycles.size(); ++i) {
        if (report.cycles[i].size() != lengths[i]) {
          throw verification_failure("SelfVerificationFailed", "cycle length mismatch");
        }
        for (VertexId v : report.cycles[i]) {
          if (seen[v]) throw verification_failure("SelfVerificationFailed", "cycles share a vertex");
          seen[v] = 1;
        }
      }
    });
    if (!report.success()) {
      report.cycle.reset();
      report.cycles.clear();
    }
  }
  finish_report(report, ctx.ledger);
  return report;
}

}  // namespace tightham
