#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <unistd.h>

#include "tightham/cli.hpp"
#include "tightham/exposure.hpp"

using namespace tightham;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run cli(std::vector<std::string> args) {
  args.insert(args.begin(), "tightham");
  std::vector<const char*> argv;
  for (const std::string& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch() {
  static const fs::path dir = [] {
    fs::path d = fs::temp_directory_path() / ("tightham_cli_" + std::to_string(::getpid()));
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

std::string file(const std::string& name) { return (scratch() / name).string(); }

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

Hypergraph load(const std::string& path) {
  std::ifstream in(path);
  return read_edge_list(in);
}

void save(const std::string& path, const Hypergraph& g) {
  std::ofstream out(path);
  write_edge_list(out, g);
}

}  // namespace

TEST_CASE("gen: probability zero writes only the header") {
  const Run r = cli({"gen", "--n", "12", "--r", "3", "--p", "0", "--seed", "4"});
  CHECK(r.code == 0);
  std::istringstream in(r.out);
  std::string first;
  std::getline(in, first);
  CHECK(first == "3 12 0");
  std::istringstream again(r.out);
  CHECK(read_edge_list(again).edge_count() == 0);
}

TEST_CASE("gen: probability one on five vertices lists all ten triples") {
  const Run r = cli({"gen", "--n", "5", "--r", "3", "--p", "1", "--out", file("k5.txt")});
  CHECK(r.code == 0);
  const Hypergraph g = load(file("k5.txt"));
  CHECK(g.edge_count() == 10);
  CHECK(g.edges() == complete_hypergraph(5, 3).edges());
}

TEST_CASE("gen: edge counts follow the binomial law") {
  const int seeds = 1000;
  const double mean_expected = 0.1 * 19600;
  const double sd = std::sqrt(19600 * 0.1 * 0.9);
  double sum = 0;
  for (int s = 0; s < seeds; ++s) sum += static_cast<double>(sample_gnp(50, 3, 0.1, s).edge_count());
  const double mean = sum / seeds;
  CHECK(std::abs(mean - mean_expected) <= 3 * sd / std::sqrt(static_cast<double>(seeds)));
  CHECK(mean_expected == doctest::Approx(1960));
}

TEST_CASE("gen: oversized requests are refused") {
  const Run r = cli({"gen", "--n", "100000", "--r", "3", "--p", "0.5"});
  CHECK(r.code == 3);
  CHECK(r.err.find("TooLarge") != std::string::npos);
}

TEST_CASE("solve: complete host exits 0 and writes a verified cycle") {
  const Run r = cli({"solve", "--n", "400", "--r", "3", "--p", "1.0", "--seed", "7", "--report",
                     file("solve.json"), "--cycle-out", file("solve.cyc")});
  CHECK(r.code == 0);
  const auto report = nlohmann::json::parse(slurp(file("solve.json")));
  CHECK(report["schema_version"] == kReportSchemaVersion);
  CHECK(report["seed"] == 7);
  CHECK(report["success"] == true);
  CHECK(slurp(file("solve.cyc")).find("seed=7") != std::string::npos);

}

TEST_CASE("solve: explicit graph output passes verify") {
  CHECK(cli({"gen", "--n", "40", "--r", "3", "--p", "1", "--out", file("k40.txt")}).code == 0);
  CHECK(cli({"solve", "--n", "40", "--p", "1", "--graph", file("k40.txt"), "--cycle-out",
             file("k40.cyc")}).code == 0);
  CHECK(cli({"verify", "--graph", file("k40.txt"), "--cycle", file("k40.cyc")}).code == 0);
}

TEST_CASE("solve: r = 2 is invalid input") {
  const Run r = cli({"solve", "--n", "400", "--r", "2", "--p", "1.0"});
  CHECK(r.code == 3);
  CHECK(r.err.find("UnsupportedUniformity") != std::string::npos);
  CHECK(cli({"solve", "--n", "400", "--mode", "fast"}).code == 3);
  CHECK(cli({"solve", "--bogus"}).code == 3);
  CHECK(cli({}).code == 3);
}

TEST_CASE("solve: stage failure exits 2") {
  const Run r = cli({"solve", "--n", "2000", "--p", "0", "--step1-budget", "1000", "--report",
                     file("fail.json")});
  CHECK(r.code == 2);
  const auto report = nlohmann::json::parse(slurp(file("fail.json")));
  CHECK(report["failed_stage"] == "step1_reservoir_copies");
  CHECK(report["cycles"].empty());
}

TEST_CASE("seed: flag wins over the environment") {
  ::setenv("TIGHTHAM_SEED", "99", 1);
  cli({"solve", "--n", "400", "--p", "1", "--report", file("env.json")});
  cli({"solve", "--n", "400", "--p", "1", "--seed", "5", "--report", file("flag.json")});
  ::unsetenv("TIGHTHAM_SEED");
  CHECK(nlohmann::json::parse(slurp(file("env.json")))["seed"] == 99);
  CHECK(nlohmann::json::parse(slurp(file("flag.json")))["seed"] == 5);
}

TEST_CASE("verify: a tampered cycle is rejected with its first bad window") {
  save(file("c20.txt"), tight_cycle(20, 3));
  {
    std::ofstream c(file("good.cyc"));
    for (int i = 0; i < 20; ++i) c << i << ' ';
  }
  {
    std::ofstream c(file("bad.cyc"));
    c << "# tampered\n";
    for (int i : {0, 1, 2, 3, 5, 4, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 16, 17, 18, 19}) c << i << ' ';
  }
  CHECK(cli({"verify", "--graph", file("c20.txt"), "--cycle", file("good.cyc")}).code == 0);
  const Run bad = cli({"verify", "--graph", file("c20.txt"), "--cycle", file("bad.cyc")});
  CHECK(bad.code == 1);
  CHECK(bad.out.find("rejected") != std::string::npos);
  CHECK(bad.out.find("window") != std::string::npos);
}

TEST_CASE("verify: path with an interior bound") {
  save(file("c12.txt"), tight_cycle(12, 3));
  std::ofstream(file("p.seq")) << "0 1 2 3 4 5\n";
  std::ofstream(file("x_ok.seq")) << "2 3\n";
  std::ofstream(file("x_bad.seq")) << "2\n";
  CHECK(cli({"verify", "--graph", file("c12.txt"), "--path", file("p.seq")}).code == 0);
  CHECK(cli({"verify", "--graph", file("c12.txt"), "--path", file("p.seq"), "--interior-in",
             file("x_ok.seq")}).code == 0);
  CHECK(cli({"verify", "--graph", file("c12.txt"), "--path", file("p.seq"), "--interior-in",
             file("x_bad.seq")}).code == 1);
  CHECK(cli({"verify", "--graph", file("c12.txt")}).code == 3);
  CHECK(cli({"verify", "--graph", file("missing.txt"), "--path", file("p.seq")}).code == 3);
}

TEST_CASE("split: five round files whose union is the input") {
  CHECK(cli({"gen", "--n", "40", "--p", "0.3", "--seed", "2", "--out", file("g40.txt")}).code == 0);
  CHECK(cli({"split", "--graph", file("g40.txt"), "--q", "0.3", "--seed", "6", "--out",
             file("g40")}).code == 0);
  const Hypergraph g = load(file("g40.txt"));
  std::set<Edge> all;
  for (int k = 1; k <= 5; ++k) {
    const Hypergraph part = load(file("g40.g" + std::to_string(k)));
    for (const Edge& e : part.edges()) {
      CHECK(g.has_edge(e));
      all.insert(e);
    }
  }
  CHECK(all == g.edges());
}

TEST_CASE("reservoir: edge list and sidecar") {
  const Run r = cli({"reservoir", "--r", "3", "--ell", "3", "--out", file("gadget.txt")});
  CHECK(r.code == 0);
  const Hypergraph g = load(file("gadget.txt"));
  CHECK(g.vertex_count() == 261);
  CHECK(g.edge_count() == 269);
  const auto side = nlohmann::json::parse(slurp(file("gadget.txt.json")));
  CHECK(side["path_with"].size() == 261);
  CHECK(side["path_without"].size() == 260);
  CHECK(side["certificate"].is_null());
}

TEST_CASE("connect: lazy request round trip") {
  std::ofstream(file("req.json")) << R"({"pairs": [[[0, 1], [2, 3]], [[4, 5], [6, 7]]],
                                         "x": [8, 9, 10, 11, 12, 13, 14, 15, 16, 17, 18, 19,
                                               20, 21, 22, 23, 24, 25, 26, 27, 28, 29]})";
  const Run r = cli({"connect", "--lazy", "--n", "30", "--p", "1", "--request", file("req.json"),
                     "--seed", "3", "--report", file("con.json")});
  CHECK(r.code == 0);
  const auto rep = nlohmann::json::parse(slurp(file("con.json")));
  CHECK(rep["ok"] == true);
  CHECK(rep["paths"].size() == 2);
  CHECK(rep["paths"][0][0] == 0);
  CHECK(cli({"connect", "--n", "30", "--request", file("req.json")}).code == 3);
  std::ofstream(file("broken.json")) << "{";
  CHECK(cli({"connect", "--lazy", "--n", "30", "--request", file("broken.json")}).code == 3);
}

TEST_CASE("bench: zero trials gives a header only") {
  CHECK(cli({"bench", "--n", "400", "--p", "1", "--trials", "0", "--out", file("b0.csv")}).code == 0);
  const std::string csv = slurp(file("b0.csv"));
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 1);
  CHECK(csv.rfind("cell,n,r,eps,p,mode,trial,seed,outcome", 0) == 0);
}

TEST_CASE("bench: probability one succeeds and reruns are byte-identical") {
  const std::vector<std::string> base{"bench", "--n", "400", "--p", "1,0.5", "--trials", "3", "--seed",
                                      "5"};
  auto with = [&](std::vector<std::string> extra) {
    std::vector<std::string> a = base;
    a.insert(a.end(), extra.begin(), extra.end());
    return cli(a);
  };
  CHECK(with({"--threads", "1", "--out", file("b1.csv"), "--summary", file("b1.json")}).code == 0);
  CHECK(with({"--threads", "3", "--out", file("b2.csv"), "--summary", file("b2.json")}).code == 0);
  CHECK(slurp(file("b1.csv")) == slurp(file("b2.csv")));
  const auto summary = nlohmann::json::parse(slurp(file("b1.json")));
  CHECK(summary["cells"][0]["success_rate"] == 1.0);
  CHECK(summary["cells"][0]["trials"] == 3);
  CHECK(summary["base_seed"] == 5);
  const std::string csv = slurp(file("b1.csv"));
  CHECK(csv.find(std::to_string(trial_seed(5, 2, 1))) != std::string::npos);
}

TEST_CASE("bench: trial seeds and Wilson intervals") {
  std::set<std::uint64_t> seeds;
  for (std::uint64_t j = 0; j < 10; ++j) {
    for (std::uint64_t i = 0; i < 100; ++i) seeds.insert(trial_seed(1, i, j));
  }
  CHECK(seeds.size() == 1000);
  const double z2 = 1.96 * 1.96;
  const WilsonInterval all = wilson_interval(3, 3);
  CHECK(all.low == doctest::Approx(3.0 / (3.0 + z2)));
  CHECK(all.high == doctest::Approx(1.0));
  const WilsonInterval none = wilson_interval(0, 3);
  CHECK(none.low == doctest::Approx(0.0));
  CHECK(none.high == doctest::Approx(z2 / (3.0 + z2)));
  const WilsonInterval half = wilson_interval(50, 100);
  CHECK(half.low == doctest::Approx(0.4038).epsilon(1e-3));
  CHECK(half.high == doctest::Approx(0.5962).epsilon(1e-3));
}

TEST_CASE("report: schema check catches missing fields") {
  RunReport rep;
  rep.n = 10;
  rep.exposures.resize(5);
  nlohmann::json j = report_to_json(rep, "solve");
  CHECK_NOTHROW(validate_report_schema(j));
  j.erase("seed");
  CHECK_THROWS_AS(validate_report_schema(j), Error);
  nlohmann::json k = report_to_json(rep, "solve");
  k["success"] = true;
  CHECK_THROWS_AS(validate_report_schema(k), Error);
}

TEST_CASE("sequences: comments and bad tokens") {
  std::istringstream in("# header\n1 2 3 # trailing\n\n4 5\n");
  CHECK(read_sequences(in) == std::vector<Tuple>{{1, 2, 3}, {4, 5}});
  std::istringstream bad("1 x 3");
  CHECK_THROWS_AS(read_sequence(bad), Error);
}
