#include "tightham/cli.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "tightham/connector.hpp"
#include "tightham/exposure.hpp"
#include "tightham/oracle.hpp"
#include "tightham/reservoir.hpp"
#include "tightham/rng.hpp"

namespace tightham {

using nlohmann::json;

namespace {

volatile std::sig_atomic_t g_interrupted = 0;

extern "C" void on_interrupt(int) { g_interrupted = 1; }

std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag) {
  if (flag) return *flag;
  if (const char* env = std::getenv("TIGHTHAM_SEED"); env != nullptr && *env != '\0') {
    try {
      std::size_t used = 0;
      const std::uint64_t v = std::stoull(env, &used, 0);
      if (used == std::string(env).size()) return v;
    } catch (const std::exception&) {
    }
    throw invalid_input("BadSeed", std::string("TIGHTHAM_SEED is not an integer: ") + env);
  }
  return 0;
}

unsigned resolve_threads(const std::optional<unsigned>& flag) {
  if (flag) return std::max(1u, *flag);
  if (const char* env = std::getenv("TIGHTHAM_THREADS"); env != nullptr && *env != '\0') {
    try {
      return std::max(1u, static_cast<unsigned>(std::stoul(env)));
    } catch (const std::exception&) {
      throw invalid_input("BadThreads", std::string("TIGHTHAM_THREADS is not an integer: ") + env);
    }
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw invalid_input("FileNotFound", "cannot open " + path);
  return in;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw invalid_input("FileNotWritable", "cannot write " + path);
  return out;
}

Hypergraph load_graph(const std::string& path) {
  std::ifstream in = open_in(path);
  return read_edge_list(in);
}

void write_json(const json& j, const std::string& path) {
  std::ofstream out = open_out(path);
  out << j.dump(2) << '\n';
}

void write_sequence(std::ostream& out, std::span<const VertexId> seq) {
  for (std::size_t i = 0; i < seq.size(); ++i) out << (i ? " " : "") << seq[i];
  out << '\n';
}

std::string fmt_double(double x) {
  std::ostringstream s;
  s << std::setprecision(10) << x;
  return s.str();
}

json stats_json(const std::vector<RoundStats>& stats) {
  json out = json::array();
  for (std::size_t i = 0; i < stats.size(); ++i) {
    out.push_back({{"round", i + 1}, {"exposed", stats[i].exposed}, {"appeared", stats[i].appeared}});
  }
  return out;
}

json fan_json(const FanStats& f) {
  return {{"levels", f.levels},
          {"width", f.width},
          {"exposed", f.exposed},
          {"dropped_paths", f.dropped_paths},
          {"truncated_paths", f.truncated_paths},
          {"max_multiplicity", f.max_multiplicity}};
}

// Options shared by solve, factor and bench.
struct RunFlags {
  std::size_t n = 0;
  int r = 3;
  std::optional<double> eps;
  std::optional<double> p;
  std::string mode = "practical";
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> reservoir_count;
  int gadget_ell = 0;
  double absorb_safety = 4.0;
  std::optional<double> greedy_stop;
  std::size_t step1_budget = 0;
  bool early_exit_bridge = false;
  double nu = 0.5;
  double eta1 = 1.0;
  std::string report;
};

void add_run_flags(CLI::App* cmd, RunFlags& f) {
  cmd->add_option("--n", f.n, "number of vertices")->required();
  cmd->add_option("--r", f.r, "uniformity");
  cmd->add_option("--eps", f.eps, "p = n^(-1+eps)");
  cmd->add_option("--p", f.p, "edge probability (overrides --eps)");
  cmd->add_option("--mode", f.mode, "strict or practical");
  cmd->add_option("--seed", f.seed, "master seed (default TIGHTHAM_SEED or 0)");
  cmd->add_option("--reservoir-count", f.reservoir_count, "number of gadget copies");
  cmd->add_option("--ell", f.gadget_ell, "gadget parameter (0 = mode default)");
  cmd->add_option("--absorb-safety", f.absorb_safety, "reservoir vertices per absorbed vertex");
  cmd->add_option("--greedy-stop", f.greedy_stop, "leftover size at which greedy extension halts");
  cmd->add_option("--step1-budget", f.step1_budget, "coin probes per gadget copy (0 = default)");
  cmd->add_flag("--early-exit-bridge", f.early_exit_bridge, "stop bridge search at the first hit");
  cmd->add_option("--nu", f.nu, "strict-mode reservoir constant");
  cmd->add_option("--eta1", f.eta1, "strict-mode reservoir constant");
  cmd->add_option("--report", f.report, "JSON report path");
}

PipelineConfig to_config(const RunFlags& f) {
  PipelineConfig cfg;
  cfg.n = f.n;
  cfg.r = f.r;
  cfg.eps = f.eps.value_or(0.5);
  cfg.p = f.p;
  cfg.mode = parse_pipeline_mode(f.mode);
  cfg.seed = resolve_seed(f.seed);
  cfg.reservoir_count = f.reservoir_count;
  cfg.gadget_ell = f.gadget_ell;
  cfg.absorb_safety = f.absorb_safety;
  cfg.greedy_stop = f.greedy_stop;
  cfg.step1_retry_budget = f.step1_budget;
  cfg.early_exit_bridge = f.early_exit_bridge;
  cfg.nu = f.nu;
  cfg.eta1 = f.eta1;
  cfg.validate();
  return cfg;
}

int finish_run(const RunReport& rep, const std::string& command, const RunFlags& f,
               const std::string& cycle_out, std::ostream& out) {
  json j = report_to_json(rep, command);
  validate_report_schema(j);
  if (!f.report.empty()) write_json(j, f.report);
  if (!cycle_out.empty() && rep.success()) {
    std::ofstream c = open_out(cycle_out);
    c << "# " << command << " n=" << rep.n << " r=" << rep.r << " seed=" << rep.seed << '\n';
    for (const Tuple& cyc : rep.cycles) write_sequence(c, cyc);
  }
  if (rep.success()) {
    out << command << ": verified";
    for (const Tuple& cyc : rep.cycles) out << ' ' << cyc.size();
    out << " (seed " << rep.seed << ")\n";
    return 0;
  }
  const StageOutcome* s = rep.failed_stage();
  out << command << ": failed at " << (s ? s->name : "unknown") << ": "
      << (s ? s->detail : "") << " (seed " << rep.seed << ")\n";
  if (s != nullptr && s->code == "SelfVerificationFailed") return 1;
  return 2;
}

// ---------------------------------------------------------------- gen

struct GenFlags {
  std::size_t n = 0;
  int r = 3;
  double p = 0;
  std::optional<std::uint64_t> seed;
  std::string out;
};

int cmd_gen(const GenFlags& f, std::ostream& out) {
  const std::uint64_t seed = resolve_seed(f.seed);
  const Hypergraph g = sample_gnp(f.n, f.r, f.p, seed);
  auto emit = [&](std::ostream& o) {
    write_edge_list(o, g);
    o << "# gen n=" << f.n << " r=" << f.r << " p=" << fmt_double(f.p) << " seed=" << seed << '\n';
  };
  if (f.out.empty()) {
    emit(out);
  } else {
    std::ofstream o = open_out(f.out);
    emit(o);
  }
  return 0;
}

// ---------------------------------------------------------------- split

struct SplitFlags {
  std::string graph;
  double q = 0;
  std::optional<double> q_prime;
  std::optional<double> eps;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string report;
};

int cmd_split(const SplitFlags& f, std::ostream& out) {
  const std::uint64_t seed = resolve_seed(f.seed);
  const Hypergraph g = load_graph(f.graph);
  const std::size_t n = g.vertex_count();
  const int r = g.uniformity();
  RoundPlan plan;
  if (f.q_prime) {
    plan.q = f.q;
    plan.q_prime = *f.q_prime;
    plan.q_dprime = solve_q_dprime(f.q, *f.q_prime);
  } else if (f.eps) {
    plan = plan_rounds_strict(n, f.q, *f.eps);
  } else {
    plan = plan_rounds_even(f.q);
  }
  const ExplicitSplit split = split_explicit(g, plan.q, plan.q_prime, plan.q_dprime, seed);
  const std::string prefix = f.out.empty() ? f.graph : f.out;
  json rounds = json::array();
  for (int round = 1; round <= 5; ++round) {
    const Hypergraph part = split.part(round, n, r);
    const std::string path = prefix + ".g" + std::to_string(round);
    std::ofstream o = open_out(path);
    write_edge_list(o, part);
    o << "# split round=" << round << " q=" << fmt_double(plan.q) << " q'=" << fmt_double(plan.q_prime)
      << " q''=" << fmt_double(plan.q_dprime) << " seed=" << seed << '\n';
    rounds.push_back({{"round", round}, {"file", path}, {"edges", part.edge_count()}});
    out << path << ": " << part.edge_count() << " edges\n";
  }
  if (!f.report.empty()) {
    write_json({{"schema_version", kReportSchemaVersion},
                {"command", "split"},
                {"seed", seed},
                {"q", plan.q},
                {"q_prime", plan.q_prime},
                {"q_dprime", plan.q_dprime},
                {"edges", g.edge_count()},
                {"rounds", rounds}},
               f.report);
  }
  return 0;
}

// ---------------------------------------------------------------- reservoir

struct ReservoirFlags {
  int r = 3;
  int ell = 3;
  std::optional<double> eps;
  std::string out;
};

json groups_json(const std::vector<VertexGroup>& groups) {
  json out = json::array();
  for (const VertexGroup& g : groups) out.push_back({{"name", g.name}, {"vertices", g.vertices}});
  return out;
}

int cmd_reservoir(const ReservoirFlags& f, std::ostream& out) {
  const ReservoirGraph rg = build_reservoir_graph(f.r, f.ell);
  const Verdict with = verify_tight_path(rg.h_star, rg.path_with);
  const Verdict without = verify_tight_path(rg.h_star, rg.path_without);
  if (!with.accepted) throw verification_failure("GadgetPath", "path_with: " + with.first_violation);
  if (!without.accepted) {
    throw verification_failure("GadgetPath", "path_without: " + without.first_violation);
  }
  json cert = nullptr;
  if (f.eps) {
    const DensityCertificate c = certify_density(rg, *f.eps);
    cert = {{"eps", c.eps},
            {"exact_checked", c.exact_checked},
            {"m1_core", c.exact_checked ? json(c.m1_core.str()) : json(nullptr)},
            {"d_core", c.d_core.str()},
            {"d_star", c.d_star.str()},
            {"peeled", c.peeled}};
  }
  std::ofstream o = open_out(f.out);
  write_edge_list(o, rg.h_star);
  json side = {{"schema_version", kReportSchemaVersion},
               {"command", "reservoir"},
               {"r", rg.r},
               {"ell", rg.ell},
               {"vertex_count", rg.vertex_count()},
               {"edge_count", rg.h_star.edge_count()},
               {"core_vertex_count", rg.core.graph.vertex_count()},
               {"core_edge_count", rg.core.graph.edge_count()},
               {"core_groups", groups_json(rg.core.groups)},
               {"blocks", groups_json(rg.blocks)},
               {"u", rg.u},
               {"v", rg.v},
               {"w_star", rg.w_star},
               {"path_with", rg.path_with},
               {"path_without", rg.path_without},
               {"certificate", cert}};
  write_json(side, f.out + ".json");
  out << "reservoir r=" << rg.r << " ell=" << rg.ell << ": " << rg.vertex_count() << " vertices, "
      << rg.h_star.edge_count() << " edges\n";
  return 0;
}

// ---------------------------------------------------------------- connect

struct ConnectFlags {
  std::string graph;
  bool lazy = false;
  std::size_t n = 0;
  int r = 3;
  double p = 1.0;
  std::string request;
  int round = 1;
  std::string mode = "practical";
  std::optional<double> eps;
  double delta = 0.5;
  bool early_exit_bridge = false;
  bool no_direct_bridge = false;
  std::optional<double> xi;
  std::optional<double> xi_prime;
  std::optional<double> width_target;
  std::optional<int> max_fan_levels;
  std::optional<std::uint64_t> seed;
  std::string report;
};

Tuple tuple_from(const json& j) {
  if (!j.is_array()) throw invalid_input("BadRequest", "tuples must be arrays of vertex ids");
  Tuple t;
  for (const json& v : j) {
    if (!v.is_number_unsigned()) throw invalid_input("BadRequest", "vertex ids must be non-negative integers");
    t.push_back(v.get<VertexId>());
  }
  return t;
}

ConnectionRequest parse_request(const std::string& path, int round, std::uint64_t seed) {
  std::ifstream in = open_in(path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw invalid_input("BadRequest", std::string("request is not valid JSON: ") + e.what());
  }
  if (!j.is_object() || !j.contains("pairs") || !j.contains("x")) {
    throw invalid_input("BadRequest", "request needs \"pairs\" and \"x\"");
  }
  ConnectionRequest req;
  req.round = j.value("round", round);
  req.seed = seed;
  for (const json& pr : j.at("pairs")) {
    if (!pr.is_array() || pr.size() != 2) throw invalid_input("BadRequest", "each pair is [u, v]");
    req.pairs.emplace_back(tuple_from(pr[0]), tuple_from(pr[1]));
  }
  req.x = tuple_from(j.at("x"));
  if (j.contains("target_lengths")) {
    for (const json& t : j.at("target_lengths")) req.target_lengths.push_back(t.get<std::size_t>());
  }
  return req;
}

int cmd_connect(const ConnectFlags& f, std::ostream& out) {
  const std::uint64_t seed = resolve_seed(f.seed);
  ExposureConfig ec;
  ec.master_seed = seed;
  std::optional<Hypergraph> g;
  if (!f.graph.empty()) {
    g = load_graph(f.graph);
    ec.n = g->vertex_count();
    ec.r = g->uniformity();
    ec.mode = ExposureMode::kExplicitGraph;
  } else {
    if (f.n == 0) throw invalid_input("BadConfig", "lazy mode needs --n");
    ec.n = f.n;
    ec.r = f.r;
  }
  ConnectionRequest req = parse_request(f.request, f.round, seed);
  if (req.round < 1) throw invalid_input("BadRound", "round must be >= 1");
  ec.rounds.assign(static_cast<std::size_t>(req.round), f.p);
  if (g) ec.round_graphs.assign(static_cast<std::size_t>(req.round), *g);
  const CoinOracle coins(ec);
  const std::size_t n = ec.n;
  const int r = ec.r;

  double eps = 0.5;
  if (f.eps) {
    eps = *f.eps;
  } else if (!g && f.p > 0 && f.p < 1) {
    eps = std::clamp(1.0 + std::log(f.p) / std::log(static_cast<double>(n)), 0.05, 0.95);
  }
  ConnectorConfig cfg = parse_pipeline_mode(f.mode) == PipelineMode::kStrict
                            ? ConnectorConfig::strict(n, r, eps, f.delta)
                            : ConnectorConfig::practical(n, r, eps, f.delta);
  cfg.early_exit_bridge = f.early_exit_bridge;
  cfg.direct_bridge = !f.no_direct_bridge;
  if (f.xi) cfg.xi = *f.xi;
  if (f.xi_prime) cfg.xi_prime = *f.xi_prime;
  if (f.width_target) cfg.width_target = *f.width_target;
  if (f.max_fan_levels) cfg.max_fan_levels = *f.max_fan_levels;
  cfg.validate();

  ExposureLedger ledger(n, r);
  const ConnectionResult res = connect_all(req, coins, ledger, cfg);

  // Independent re-check of the returned paths against the exposed coins.
  std::string violation;
  const EdgeTest appeared = [&](std::span<const VertexId> e) { return ledger.appeared(e); };
  for (std::size_t i = 0; res.ok() && i < res.paths.size() && violation.empty(); ++i) {
    const Verdict v = verify_tight_path(appeared, n, r, res.paths[i]);
    if (!v.accepted) violation = "path " + std::to_string(i) + ": " + v.first_violation;
  }

  json phases = json::array();
  for (const PhaseStats& ph : res.phases) {
    phases.push_back({{"fan_u", fan_json(ph.fan_u)},
                      {"fan_v", fan_json(ph.fan_v)},
                      {"bridge",
                       {{"candidates", ph.bridge.candidates},
                        {"exposed", ph.bridge.exposed},
                        {"direct", ph.bridge.direct}}},
                      {"exposed", ph.exposed},
                      {"ledger_size", ph.ledger_size},
                      {"ledger_bound_ok", ph.ledger_bound_ok}});
  }
  json failure = nullptr;
  if (res.failure) {
    failure = {{"code", res.failure->code}, {"phase", res.failure->phase}, {"detail", res.failure->detail}};
  }
  json j = {{"schema_version", kReportSchemaVersion},
            {"command", "connect"},
            {"seed", seed},
            {"n", n},
            {"r", r},
            {"mode", f.mode},
            {"eps", eps},
            {"ok", res.ok() && violation.empty()},
            {"failure", failure},
            {"verification", violation.empty() ? json(nullptr) : json(violation)},
            {"paths", res.paths},
            {"phases", phases},
            {"exposures", stats_json(ledger.round_stats())}};
  if (!f.report.empty()) {
    write_json(j, f.report);
  } else {
    out << j.dump(2) << '\n';
  }
  if (!violation.empty()) return 1;
  return res.ok() ? 0 : 2;
}

// ---------------------------------------------------------------- verify

struct VerifyFlags {
  std::string graph;
  std::string cycle;
  std::string path;
  std::string interior_in;
};

int cmd_verify(const VerifyFlags& f, std::ostream& out) {
  if (f.cycle.empty() == f.path.empty()) {
    throw invalid_input("BadArguments", "give exactly one of --cycle and --path");
  }
  const Hypergraph g = load_graph(f.graph);
  std::ifstream in = open_in(f.cycle.empty() ? f.path : f.cycle);
  const Tuple seq = read_sequence(in);
  Verdict v;
  if (!f.cycle.empty()) {
    v = verify_tight_cycle(g, seq);
  } else {
    v = verify_tight_path(g, seq);
    if (v.accepted && !f.interior_in.empty()) {
      std::ifstream xs = open_in(f.interior_in);
      const Tuple x = read_sequence(xs);
      std::vector<char> allowed(g.vertex_count(), 0);
      for (VertexId w : x) {
        if (w < allowed.size()) allowed[w] = 1;
      }
      const std::size_t k = static_cast<std::size_t>(g.uniformity() - 1);
      for (std::size_t i = k; i + k < seq.size(); ++i) {
        if (!allowed[seq[i]]) {
          v = Verdict::reject("interior vertex " + std::to_string(seq[i]) + " at position " +
                              std::to_string(i) + " is outside the allowed set");
          break;
        }
      }
    }
  }
  if (v.accepted) {
    out << "accepted: " << seq.size() << " vertices\n";
    return 0;
  }
  out << "rejected: " << v.first_violation << '\n';
  return 1;
}

// ---------------------------------------------------------------- bench

struct BenchFlags {
  std::vector<std::size_t> n;
  std::vector<int> r{3};
  std::vector<double> eps;
  std::vector<double> p;
  std::vector<std::string> mode{"practical"};
  std::size_t trials = 1;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
  std::string out;
  std::string summary;
  bool timing = false;
};

struct Cell {
  std::size_t n;
  int r;
  bool by_p;
  double value;
  std::string mode;
};

struct TrialRow {
  bool done = false;
  std::uint64_t seed = 0;
  std::string outcome;
  std::string stage;
  std::string code;
  std::size_t cycle_length = 0;
  std::vector<RoundStats> exposures;
  std::uint64_t already_exposed = 0;
  double seconds = 0;
};

TrialRow run_trial(const Cell& cell, std::uint64_t seed) {
  TrialRow row;
  row.seed = seed;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    PipelineConfig cfg;
    cfg.n = cell.n;
    cfg.r = cell.r;
    if (cell.by_p) cfg.p = cell.value; else cfg.eps = cell.value;
    cfg.mode = parse_pipeline_mode(cell.mode);
    cfg.seed = seed;
    const RunReport rep = find_tight_hamilton_cycle(cfg);
    row.exposures = rep.exposures;
    row.already_exposed = rep.already_exposed_events;
    if (rep.success()) {
      row.outcome = "success";
      row.cycle_length = rep.cycle->size();
    } else {
      row.outcome = "failure";
      if (const StageOutcome* s = rep.failed_stage()) {
        row.stage = s->name;
        row.code = s->code;
      }
    }
  } catch (const Error& e) {
    row.outcome = e.kind() == ErrorKind::kInvalidInput ? "invalid" : "error";
    row.code = e.code();
  }
  row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  row.exposures.resize(5);
  row.done = true;
  return row;
}

int cmd_bench(const BenchFlags& f, std::ostream& out) {
  if (f.eps.empty() == f.p.empty()) throw invalid_input("BadArguments", "give exactly one of --eps and --p");
  if (f.n.empty()) throw invalid_input("BadArguments", "--n needs at least one value");
  if (f.out.empty()) throw invalid_input("BadArguments", "--out is required");
  const std::uint64_t base = resolve_seed(f.seed);
  const unsigned threads = resolve_threads(f.threads);
  for (const std::string& m : f.mode) parse_pipeline_mode(m);

  std::vector<Cell> cells;
  const bool by_p = !f.p.empty();
  for (std::size_t n : f.n) {
    for (int r : f.r) {
      for (double v : by_p ? f.p : f.eps) {
        for (const std::string& m : f.mode) cells.push_back(Cell{n, r, by_p, v, m});
      }
    }
  }
  const std::size_t total = cells.size() * f.trials;
  std::vector<TrialRow> rows(total);
  std::atomic<std::size_t> next{0};
  g_interrupted = 0;
  auto previous = std::signal(SIGINT, on_interrupt);
  auto worker = [&] {
    while (!g_interrupted) {
      const std::size_t k = next.fetch_add(1);
      if (k >= total) break;
      const std::size_t j = k / f.trials;
      const std::size_t i = k % f.trials;
      rows[k] = run_trial(cells[j], trial_seed(base, i, j));
    }
  };
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < std::min<std::size_t>(threads, std::max<std::size_t>(total, 1)); ++t) {
    pool.emplace_back(worker);
  }
  worker();
  for (std::thread& t : pool) t.join();
  std::signal(SIGINT, previous);
  const bool interrupted = g_interrupted != 0;

  std::ofstream csv = open_out(f.out);
  csv << "cell,n,r,eps,p,mode,trial,seed,outcome,failed_stage,failure_code,cycle_length";
  for (int k = 1; k <= 5; ++k) csv << ",exposed_" << k << ",appeared_" << k;
  csv << ",already_exposed";
  if (f.timing) csv << ",wall_seconds";
  csv << '\n';
  json cell_summaries = json::array();
  for (std::size_t j = 0; j < cells.size(); ++j) {
    const Cell& c = cells[j];
    std::size_t done = 0, ok = 0;
    double seconds = 0;
    for (std::size_t i = 0; i < f.trials; ++i) {
      const TrialRow& row = rows[j * f.trials + i];
      if (!row.done) continue;
      ++done;
      ok += row.outcome == "success";
      seconds += row.seconds;
      csv << j << ',' << c.n << ',' << c.r << ',' << (c.by_p ? "" : fmt_double(c.value)) << ','
          << (c.by_p ? fmt_double(c.value) : "") << ',' << c.mode << ',' << i << ',' << row.seed << ','
          << row.outcome << ',' << row.stage << ',' << row.code << ',' << row.cycle_length;
      for (const RoundStats& s : row.exposures) csv << ',' << s.exposed << ',' << s.appeared;
      csv << ',' << row.already_exposed;
      if (f.timing) csv << ',' << fmt_double(row.seconds);
      csv << '\n';
    }
    const WilsonInterval w = wilson_interval(ok, done);
    cell_summaries.push_back({{"cell", j},
                              {"n", c.n},
                              {"r", c.r},
                              {c.by_p ? "p" : "eps", c.value},
                              {"mode", c.mode},
                              {"trials", done},
                              {"successes", ok},
                              {"success_rate", done ? static_cast<double>(ok) / static_cast<double>(done) : 0.0},
                              {"wilson_low", w.low},
                              {"wilson_high", w.high},
                              {"wall_seconds", seconds}});
    out << "cell " << j << " n=" << c.n << " r=" << c.r << (c.by_p ? " p=" : " eps=")
        << fmt_double(c.value) << ' ' << c.mode << ": " << ok << '/' << done << " ["
        << fmt_double(w.low) << ", " << fmt_double(w.high) << "]\n";
  }
  csv.flush();
  if (!f.summary.empty()) {
    write_json({{"schema_version", kReportSchemaVersion},
                {"command", "bench"},
                {"base_seed", base},
                {"trials_per_cell", f.trials},
                {"interrupted", interrupted},
                {"cells", cell_summaries}},
               f.summary);
  }
  if (interrupted) {
    out << "interrupted: partial results written\n";
    return 130;
  }
  return 0;
}

}  // namespace

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidInput:
      return 3;
    case ErrorKind::kVerification:
      return 1;
    case ErrorKind::kStageFailure:
    case ErrorKind::kInternal:
      return 2;
  }
  return 2;
}

std::uint64_t trial_seed(std::uint64_t base, std::uint64_t trial, std::uint64_t cell) {
  return base ^ mix64(mix64(cell) ^ trial);
}

WilsonInterval wilson_interval(std::size_t successes, std::size_t trials, double z) {
  if (trials == 0) return {};
  const double n = static_cast<double>(trials);
  const double phat = static_cast<double>(successes) / n;
  const double z2 = z * z;
  const double denom = 1 + z2 / n;
  const double centre = (phat + z2 / (2 * n)) / denom;
  const double half = z * std::sqrt(phat * (1 - phat) / n + z2 / (4 * n * n)) / denom;
  return {std::max(0.0, centre - half), std::min(1.0, centre + half)};
}

json report_to_json(const RunReport& rep, const std::string& command) {
  json stages = json::array();
  for (const StageOutcome& s : rep.stages) {
    stages.push_back({{"name", s.name},
                      {"ok", s.ok},
                      {"code", s.code},
                      {"detail", s.detail},
                      {"seconds", s.seconds}});
  }
  const StageOutcome* failed = rep.failed_stage();
  json cycles = json::array();
  for (const Tuple& c : rep.cycles) cycles.push_back(c);
  return {{"schema_version", kReportSchemaVersion},
          {"command", command},
          {"seed", rep.seed},
          {"config",
           {{"n", rep.n},
            {"r", rep.r},
            {"eps", rep.eps},
            {"p", rep.p},
            {"mode", to_string(rep.mode)},
            {"explicit_graph", rep.explicit_graph},
            {"lengths", rep.lengths}}},
          {"plan",
           {{"q", rep.plan.q},
            {"rounds", rep.plan.rounds},
            {"eps_connect", rep.plan.eps_connect},
            {"gadget_ell", rep.plan.gadget_ell},
            {"gadget_vertices", rep.plan.gadget_vertices},
            {"reservoir_count", rep.plan.reservoir_count},
            {"greedy_stop", rep.plan.greedy_stop},
            {"step1_budget", rep.plan.step1_budget}}},
          {"stages", stages},
          {"counts",
           {{"gadgets_embedded", rep.gadgets_embedded},
            {"step1_probes", rep.step1_probes},
            {"path_after_step2", rep.path_after_step2},
            {"path_after_step3", rep.path_after_step3},
            {"leftover", rep.leftover},
            {"l_size", rep.l_size},
            {"w_star", rep.w_star},
            {"w_star_star", rep.w_star_star},
            {"w_used", rep.w_used}}},
          {"exposures", stats_json(rep.exposures)},
          {"already_exposed_events", rep.already_exposed_events},
          {"success", rep.success()},
          {"failed_stage", failed ? json(failed->name) : json(nullptr)},
          {"cycles", cycles}};
}

void validate_report_schema(const json& j) {
  auto need = [&](const json& obj, const char* key, json::value_t type, const std::string& where) {
    if (!obj.is_object() || !obj.contains(key)) {
      throw internal_error("SchemaViolation", where + " lacks \"" + key + "\"");
    }
    const json& v = obj.at(key);
    const bool ok = type == json::value_t::number_float ? v.is_number()
                    : type == json::value_t::number_unsigned ? v.is_number_integer() && v >= 0
                                                             : v.type() == type;
    if (!ok) throw internal_error("SchemaViolation", where + "." + key + " has the wrong type");
  };
  using T = json::value_t;
  need(j, "schema_version", T::number_unsigned, "report");
  if (j.at("schema_version") != kReportSchemaVersion) {
    throw internal_error("SchemaViolation", "unexpected schema_version");
  }
  need(j, "command", T::string, "report");
  need(j, "seed", T::number_unsigned, "report");
  need(j, "config", T::object, "report");
  need(j, "plan", T::object, "report");
  need(j, "stages", T::array, "report");
  need(j, "counts", T::object, "report");
  need(j, "exposures", T::array, "report");
  need(j, "already_exposed_events", T::number_unsigned, "report");
  need(j, "success", T::boolean, "report");
  need(j, "cycles", T::array, "report");
  for (const char* k : {"n", "r"}) need(j.at("config"), k, T::number_unsigned, "config");
  for (const char* k : {"eps", "p"}) need(j.at("config"), k, T::number_float, "config");
  need(j.at("config"), "mode", T::string, "config");
  need(j.at("plan"), "rounds", T::array, "plan");
  for (const json& s : j.at("stages")) {
    need(s, "name", T::string, "stage");
    need(s, "ok", T::boolean, "stage");
    need(s, "code", T::string, "stage");
  }
  for (const json& e : j.at("exposures")) {
    for (const char* k : {"round", "exposed", "appeared"}) need(e, k, T::number_unsigned, "exposure");
  }
  if (j.at("success").get<bool>() == j.at("cycles").empty()) {
    throw internal_error("SchemaViolation", "cycles must be present exactly on success");
  }
}

Tuple read_sequence(std::istream& in) {
  Tuple out;
  for (const Tuple& line : read_sequences(in)) out.insert(out.end(), line.begin(), line.end());
  return out;
}

std::vector<Tuple> read_sequences(std::istream& in) {
  std::vector<Tuple> out;
  std::string line;
  while (std::getline(in, line)) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    Tuple t;
    std::string tok;
    while (ls >> tok) {
      std::size_t used = 0;
      unsigned long v = 0;
      try {
        v = std::stoul(tok, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != tok.size() || tok[0] == '-' || v > UINT32_MAX) {
        throw invalid_input("BadSequence", "not a vertex id: '" + tok + "'");
      }
      t.push_back(static_cast<VertexId>(v));
    }
    if (!t.empty()) out.push_back(std::move(t));
  }
  return out;
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Tight Hamilton cycles in random hypergraphs", "tightham"};
  app.require_subcommand(1);

  GenFlags gen;
  auto* c_gen = app.add_subcommand("gen", "sample G(n,p) as an edge list");
  c_gen->add_option("--n", gen.n)->required();
  c_gen->add_option("--r", gen.r);
  c_gen->add_option("--p", gen.p)->required();
  c_gen->add_option("--seed", gen.seed);
  c_gen->add_option("--out", gen.out, "output file (stdout if absent)");

  SplitFlags split;
  auto* c_split = app.add_subcommand("split", "colour an edge list into five round graphs");
  c_split->add_option("--graph", split.graph)->required();
  c_split->add_option("--q", split.q, "input edge probability")->required();
  c_split->add_option("--q-prime", split.q_prime, "probability of rounds 2..5");
  c_split->add_option("--eps", split.eps, "use q' = n^(-1+eps/2)");
  c_split->add_option("--seed", split.seed);
  c_split->add_option("--out", split.out, "output prefix (default: the graph path)");
  c_split->add_option("--report", split.report);

  ReservoirFlags res;
  auto* c_res = app.add_subcommand("reservoir", "build the absorbing gadget");
  c_res->add_option("--r", res.r);
  c_res->add_option("--ell", res.ell);
  c_res->add_option("--eps", res.eps, "certify the density bound for this eps");
  c_res->add_option("--out", res.out)->required();

  ConnectFlags con;
  auto* c_con = app.add_subcommand("connect", "connect tuple pairs by disjoint tight paths");
  c_con->add_option("--graph", con.graph, "edge list (explicit mode)");
  c_con->add_flag("--lazy", con.lazy, "use lazy coins with --n --r --p");
  c_con->add_option("--n", con.n);
  c_con->add_option("--r", con.r);
  c_con->add_option("--p", con.p);
  c_con->add_option("--request", con.request, "JSON with pairs, x and optional target_lengths")->required();
  c_con->add_option("--round", con.round);
  c_con->add_option("--mode", con.mode);
  c_con->add_option("--eps", con.eps);
  c_con->add_option("--delta", con.delta);
  c_con->add_flag("--early-exit-bridge", con.early_exit_bridge);
  c_con->add_flag("--no-direct-bridge", con.no_direct_bridge);
  c_con->add_option("--xi", con.xi);
  c_con->add_option("--xi-prime", con.xi_prime);
  c_con->add_option("--width-target", con.width_target);
  c_con->add_option("--max-fan-levels", con.max_fan_levels);
  c_con->add_option("--seed", con.seed);
  c_con->add_option("--report", con.report);

  RunFlags solve;
  std::string graph_file, solve_cycle_out;
  bool lazy = false;
  auto* c_solve = app.add_subcommand("solve", "find a tight Hamilton cycle");
  add_run_flags(c_solve, solve);
  c_solve->add_option("--graph", graph_file, "edge list (explicit mode)");
  c_solve->add_flag("--lazy", lazy, "lazy coins (default)");
  c_solve->add_option("--cycle-out", solve_cycle_out, "write the verified cycle here");

  RunFlags factor;
  std::vector<std::size_t> lengths;
  std::string factor_cycle_out;
  double factor_delta = 0.5;
  auto* c_factor = app.add_subcommand("factor", "find disjoint tight cycles of given lengths");
  add_run_flags(c_factor, factor);
  c_factor->add_option("--lengths", lengths, "cycle lengths, the first one long")->required()->delimiter(',');
  c_factor->add_option("--delta", factor_delta, "the first length must be at least delta n");
  c_factor->add_option("--cycle-out", factor_cycle_out, "write the cycles here, one per line");

  VerifyFlags ver;
  auto* c_ver = app.add_subcommand("verify", "check a tight cycle or path against an edge list");
  c_ver->add_option("--graph", ver.graph)->required();
  c_ver->add_option("--cycle", ver.cycle);
  c_ver->add_option("--path", ver.path);
  c_ver->add_option("--interior-in", ver.interior_in, "vertex file bounding the path interior");

  BenchFlags bench;
  auto* c_bench = app.add_subcommand("bench", "run a seeded grid of solve trials");
  c_bench->add_option("--n", bench.n)->required()->delimiter(',');
  c_bench->add_option("--r", bench.r)->delimiter(',');
  c_bench->add_option("--eps", bench.eps)->delimiter(',');
  c_bench->add_option("--p", bench.p)->delimiter(',');
  c_bench->add_option("--mode", bench.mode)->delimiter(',');
  c_bench->add_option("--trials", bench.trials);
  c_bench->add_option("--seed", bench.seed);
  c_bench->add_option("--threads", bench.threads, "worker count (default TIGHTHAM_THREADS)");
  c_bench->add_option("--out", bench.out, "CSV path")->required();
  c_bench->add_option("--summary,--report", bench.summary, "JSON summary path");
  c_bench->add_flag("--timing", bench.timing, "add a wall_seconds column");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 3;
  }

  try {
    if (c_gen->parsed()) return cmd_gen(gen, out);
    if (c_split->parsed()) return cmd_split(split, out);
    if (c_res->parsed()) return cmd_reservoir(res, out);
    if (c_con->parsed()) {
      if (con.lazy == !con.graph.empty()) {
        throw invalid_input("BadArguments", "give exactly one of --graph and --lazy");
      }
      return cmd_connect(con, out);
    }
    if (c_solve->parsed()) {
      if (lazy && !graph_file.empty()) throw invalid_input("BadArguments", "--graph and --lazy exclude each other");
      const PipelineConfig cfg = to_config(solve);
      RunReport rep;
      if (graph_file.empty()) {
        rep = find_tight_hamilton_cycle(cfg);
      } else {
        const Hypergraph g = load_graph(graph_file);
        rep = find_tight_hamilton_cycle(cfg, &g);
      }
      return finish_run(rep, "solve", solve, solve_cycle_out, out);
    }
    if (c_factor->parsed()) {
      PipelineConfig cfg = to_config(factor);
      cfg.factor_delta = factor_delta;
      const RunReport rep = find_disjoint_tight_cycles(cfg, lengths);
      return finish_run(rep, "factor", factor, factor_cycle_out, out);
    }
    if (c_ver->parsed()) return cmd_verify(ver, out);
    if (c_bench->parsed()) return cmd_bench(bench, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e.kind());
  } catch (const json::exception& e) {
    err << "error: BadRequest: " << e.what() << '\n';
    return 3;
  }
  return 3;
}

}  // namespace tightham
