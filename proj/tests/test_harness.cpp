#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "highway/harness.hpp"

using namespace highway;
using Catch::Matchers::ContainsSubstring;

namespace {

std::filesystem::path temp_dir() {
  const auto dir = std::filesystem::temp_directory_path() / "highway_harness_tests";
  std::filesystem::create_directories(dir);
  return dir;
}

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

nlohmann::json base_config() {
  return nlohmann::json{{"kind", "fixed_point"}, {"env", "threefork"}};
}

}  // namespace

TEST_CASE("config parsing reports field paths", "[harness]") {
  REQUIRE_THROWS_WITH(parse_config(nlohmann::json::array()),
                      ContainsSubstring("$: config"));
  REQUIRE_THROWS_WITH(parse_config(nlohmann::json{{"env", "threefork"}}),
                      ContainsSubstring("$.kind"));
  REQUIRE_THROWS_WITH(parse_config(nlohmann::json{{"kind", "nonsense"}}),
                      ContainsSubstring("$.kind: unknown kind"));

  nlohmann::json stray = base_config();
  stray["extra"] = 1;
  REQUIRE_THROWS_WITH(parse_config(stray), ContainsSubstring("$.extra: unknown field"));

  REQUIRE_THROWS_WITH(parse_config(nlohmann::json{{"kind", "fixed_point"}}),
                      ContainsSubstring("$.env: required"));
  REQUIRE_THROWS_WITH(
      parse_config(nlohmann::json{{"kind", "multiroom"}, {"env", "threefork"}}),
      ContainsSubstring("$.env: not used"));

  nlohmann::json empty_seeds = base_config();
  empty_seeds["seeds"] = nlohmann::json::array();
  REQUIRE_THROWS_WITH(parse_config(empty_seeds), ContainsSubstring("$.seeds"));

  nlohmann::json bad_seed = base_config();
  bad_seed["seeds"] = {0, "one"};
  REQUIRE_THROWS_WITH(parse_config(bad_seed), ContainsSubstring("$.seeds"));
}

TEST_CASE("config defaults are derived from the id", "[harness]") {
  const ExperimentConfig cfg = parse_config(base_config());
  REQUIRE(cfg.id == "fixed_point");
  REQUIRE(cfg.out == "results/fixed_point.csv");
  REQUIRE(cfg.seeds == std::vector<long long>{0});
  REQUIRE(cfg.check.empty());

  nlohmann::json named = base_config();
  named["id"] = "probe";
  named["out"] = "elsewhere.csv";
  named["seeds"] = {3, 4};
  const ExperimentConfig c2 = parse_config(named);
  REQUIRE(c2.id == "probe");
  REQUIRE(c2.out == "elsewhere.csv");
  REQUIRE(c2.seeds == std::vector<long long>{3, 4});
}

TEST_CASE("unknown params are rejected per kind", "[harness]") {
  nlohmann::json j = base_config();
  j["params"] = {{"budget", 100}};  // a toy_tasks key, invalid here
  const ExperimentConfig cfg = parse_config(j);
  REQUIRE_THROWS_WITH(run(cfg), ContainsSubstring("$.params.budget"));
}

TEST_CASE("config files load with path context", "[harness]") {
  const auto dir = temp_dir();
  const auto good = dir / "good.json";
  std::ofstream(good) << base_config().dump();
  REQUIRE(load_config(good.string()).id == "fixed_point");

  const auto bad = dir / "bad.json";
  std::ofstream(bad) << "{ nope";
  REQUIRE_THROWS_WITH(load_config(bad.string()), ContainsSubstring("bad.json"));
  REQUIRE_THROWS_WITH(load_config((dir / "absent.json").string()),
                      ContainsSubstring("cannot open"));
}

TEST_CASE("operator specs parse names and arguments", "[harness]") {
  REQUIRE(parse_operator("bellman").name == "bellman");
  const OperatorSpec soft = parse_operator("softmax:2.5");
  REQUIRE(soft.has_arg);
  REQUIRE(soft.arg == 2.5);
  REQUIRE(soft.label == "softmax:2.5");
  const OperatorSpec broken = parse_operator("broken:0");
  REQUIRE(broken.arg == 0.0);

  REQUIRE_THROWS_WITH(parse_operator("magic"), ContainsSubstring("unknown name"));
  REQUIRE_THROWS_WITH(parse_operator("broken"), ContainsSubstring("integer threshold"));
  REQUIRE_THROWS_WITH(parse_operator("broken:1"), ContainsSubstring("integer threshold"));
  REQUIRE_THROWS_WITH(parse_operator("broken:2.5"), ContainsSubstring("integer threshold"));
  REQUIRE_THROWS_WITH(parse_operator("softmax:-1"), ContainsSubstring("temperature"));
  REQUIRE_THROWS_WITH(parse_operator("softmax:abc"), ContainsSubstring("bad argument"));
}

TEST_CASE("env resolution covers presets and files", "[harness]") {
  REQUIRE(resolve_env("twostate").mdp.num_states == 2);
  const ResolvedEnv fork = resolve_env("threefork");
  REQUIRE(fork.policies.size() == 3);
  REQUIRE(fork.policy_names == std::vector<std::string>{"red", "orange", "blue"});
  REQUIRE(resolve_env("multiroom:2").mdp.num_states == 100);
  REQUIRE(resolve_env("choice:4").mdp.num_states == 8);
  REQUIRE(resolve_env("traceback:2").mdp.num_states == 4);

  const auto path = temp_dir() / "saved_env.json";
  save_mdp(build_twostate(), path.string());
  const ResolvedEnv loaded = resolve_env(path.string());
  REQUIRE(loaded.id == "saved_env");
  REQUIRE(loaded.mdp.num_states == 2);

  REQUIRE_THROWS_WITH(resolve_env("nowhere"), ContainsSubstring("unknown preset"));
  REQUIRE_THROWS_WITH(resolve_env("multiroom:x"), ContainsSubstring("bad preset argument"));
}

TEST_CASE("experiment streams are keyed by id and seed", "[harness]") {
  const std::uint64_t base = experiment_stream("exp", 3).next_u64();
  REQUIRE(experiment_stream("exp", 3).next_u64() == base);
  REQUIRE(experiment_stream("exp", 4).next_u64() != base);
  REQUIRE(experiment_stream("other", 3).next_u64() != base);
}

TEST_CASE("csv rows are validated, sorted, and round-trip", "[harness]") {
  const auto path = (temp_dir() / "rows.csv").string();
  std::vector<ResultRow> rows;
  rows.push_back({"e", "env", "alg", 1, "iterations", 2.0, 5.0, 1});
  rows.push_back({"e", "env", "alg", 0, "iterations", 1.0, 0.1 + 0.2, 0});
  write_csv(path, rows);

  const std::vector<ResultRow> back = read_csv(path);
  REQUIRE(back.size() == 2);
  REQUIRE(back[0].seed == 0);  // sorted by the full tuple
  REQUIRE(back[0].y == 0.1 + 0.2);  // %.17g survives the round trip exactly
  REQUIRE(back[1].x == 2.0);

  REQUIRE_THROWS_WITH(
      write_csv(path, {{"e", "env", "alg", 0, "not_a_metric", 0, 0, 0}}),
      ContainsSubstring("metric not in registry"));
  REQUIRE_THROWS_WITH(write_csv(path, {{"e,vil", "env", "alg", 0, "checks", 0, 0, 0}}),
                      ContainsSubstring("delimiter"));
  REQUIRE_THROWS_WITH(write_csv(path, {{"e", "env", "alg", 0, "checks", 0, 0, 2}}),
                      ContainsSubstring("flag"));
}

TEST_CASE("csv reading rejects schema damage", "[harness]") {
  const auto dir = temp_dir();
  const auto bad_header = dir / "bad_header.csv";
  std::ofstream(bad_header) << "nope\n";
  REQUIRE_THROWS_WITH(read_csv(bad_header.string()), ContainsSubstring("bad header"));

  const auto short_row = dir / "short_row.csv";
  std::ofstream(short_row) << kCsvHeader << "\ne,env,alg,0,checks,0\n";
  REQUIRE_THROWS_WITH(read_csv(short_row.string()), ContainsSubstring("expected 8 fields"));

  const auto bad_num = dir / "bad_num.csv";
  std::ofstream(bad_num) << kCsvHeader << "\ne,env,alg,zero,checks,0,0,0\n";
  REQUIRE_THROWS_WITH(read_csv(bad_num.string()), ContainsSubstring("unparsable numeric"));

  const auto bad_metric = dir / "bad_metric.csv";
  std::ofstream(bad_metric) << kCsvHeader << "\ne,env,alg,0,upside,0,0,0\n";
  REQUIRE_THROWS_WITH(read_csv(bad_metric.string()),
                      ContainsSubstring("metric not in registry"));
}

TEST_CASE("experiment runs rewrite byte-identical csv files", "[harness]") {
  const auto dir = temp_dir();
  nlohmann::json j = base_config();
  j["id"] = "determinism_probe";
  j["params"] = {{"operators", {"highway"}}, {"n", {1, 2}}};
  j["out"] = (dir / "det_a.csv").string();
  const std::vector<ResultRow> first = run(parse_config(j));
  REQUIRE_FALSE(first.empty());

  const std::string bytes_a = slurp(dir / "det_a.csv");
  j["out"] = (dir / "det_b.csv").string();
  run(parse_config(j));
  REQUIRE(bytes_a == slurp(dir / "det_b.csv"));
  REQUIRE(bytes_a.substr(0, std::string(kCsvHeader).size()) == kCsvHeader);
}

TEST_CASE("fixed-point runs converge to the optimum on the fork", "[harness]") {
  const auto dir = temp_dir();
  nlohmann::json j = base_config();
  j["id"] = "fp_probe";
  j["params"] = {{"operators", {"highway"}}, {"n", {5}}};
  j["out"] = (dir / "fp_probe.csv").string();
  const std::vector<ResultRow> rows = run(parse_config(j));

  bool saw_value = false;
  for (const ResultRow& r : rows) {
    REQUIRE(r.experiment == "fp_probe");
    REQUIRE(r.env == "threefork");
    REQUIRE(r.algorithm == "highway");
    if (r.metric == "fixed_point_value") {
      REQUIRE(r.y == Catch::Approx(9.0).margin(1e-8));
      REQUIRE(r.flag == 1);
      saw_value = true;
    }
    if (r.metric == "value_error") REQUIRE(r.y <= 1e-8);
  }
  REQUIRE(saw_value);
}

TEST_CASE("gate traces need named policies", "[harness]") {
  nlohmann::json j{{"kind", "gate_trace"}, {"env", "twostate"}};
  j["out"] = (temp_dir() / "gt.csv").string();
  REQUIRE_THROWS_WITH(run(parse_config(j)), ContainsSubstring("no named behavioral"));
}

TEST_CASE("gate traces settle on the fork depths", "[harness]") {
  const auto dir = temp_dir();
  nlohmann::json j{{"kind", "gate_trace"}, {"env", "threefork"}, {"id", "gt_probe"}};
  j["out"] = (dir / "gt_probe.csv").string();
  const std::vector<ResultRow> rows = run(parse_config(j));
  double last_x = 0.0;
  for (const ResultRow& r : rows) last_x = std::max(last_x, r.x);
  for (const ResultRow& r : rows) {
    if (r.x != last_x) continue;
    REQUIRE(r.flag == 1);
    if (r.algorithm == "blue") REQUIRE(r.y == 10.0);
    else REQUIRE(r.y == 1.0);
  }
}

TEST_CASE("property suite runs summarize violations", "[harness]") {
  const auto dir = temp_dir();
  nlohmann::json j{{"kind", "property_suite"}, {"id", "prop_probe"}};
  j["params"] = {{"suite", "softmax"}};
  j["out"] = (dir / "prop_probe.csv").string();
  const std::vector<ResultRow> rows = run(parse_config(j));
  REQUIRE(rows.size() == 4);  // two properties, violations and checks each
  for (const ResultRow& r : rows) {
    if (r.metric == "violations") {
      REQUIRE(r.y == 0.0);
      REQUIRE(r.flag == 1);
    }
  }
  nlohmann::json bad = j;
  bad["params"] = {{"suite", "nonsense"}};
  bad["out"] = (dir / "prop_bad.csv").string();
  REQUIRE_THROWS_AS(run(parse_config(bad)), std::exception);
}

TEST_CASE("retrace profile rows decay toward zero", "[harness]") {
  const auto dir = temp_dir();
  nlohmann::json j{{"kind", "retrace_profile"}, {"id", "rw_probe"}};
  j["out"] = (dir / "rw_probe.csv").string();
  const std::vector<ResultRow> rows = run(parse_config(j));
  REQUIRE(rows.size() == 25);
  for (const ResultRow& r : rows) {
    REQUIRE(r.flag == 1);
    if (r.x == 0.0) REQUIRE(r.y == 1.0);
    if (r.x == 20.0) REQUIRE(r.y < 0.01);
  }
}

TEST_CASE("report aggregates seeds by nearest rank", "[harness]") {
  const auto dir = temp_dir();
  const auto csv = (dir / "agg.csv").string();
  std::vector<ResultRow> rows;
  for (int seed = 0; seed < 5; ++seed)
    rows.push_back({"e", "env", "alg", seed, "episodes_to_solve", 1.0,
                    static_cast<double>(seed + 1), 1});
  rows.push_back({"e", "env", "alg", 0, "episodes_to_solve", 2.0, 42.0, 1});
  write_csv(csv, rows);

  const std::string summary = report({csv}, (dir / "plots").string());
  REQUIRE_THAT(summary, ContainsSubstring("experiment,env,algorithm,metric,x,median,p16,p84,n"));
  REQUIRE_THAT(summary, ContainsSubstring("e,env,alg,episodes_to_solve,1,3,1,5,5"));
  // a single observation collapses the band onto the median
  REQUIRE_THAT(summary, ContainsSubstring("e,env,alg,episodes_to_solve,2,42,42,42,1"));

  const auto dat = dir / "plots" / "e_env_alg_episodes_to_solve.dat";
  REQUIRE(std::filesystem::exists(dat));
  REQUIRE(slurp(dat) == "1 3\n2 42\n");
}

TEST_CASE("report refuses empty inputs", "[harness]") {
  const auto dir = temp_dir();
  const auto empty = (dir / "empty.csv").string();
  write_csv(empty, {});
  REQUIRE_THROWS_WITH(report({empty}, (dir / "plots2").string()),
                      ContainsSubstring("no data rows"));
}

TEST_CASE("acceptance checks demand a check id", "[harness]") {
  ExperimentConfig cfg = parse_config(base_config());
  REQUIRE_THROWS_WITH(run_check(cfg), ContainsSubstring("check"));
  cfg.check = "c99";
  cfg.out = (temp_dir() / "c99.csv").string();
  REQUIRE_THROWS_WITH(run_check(cfg), ContainsSubstring("unknown"));
}

TEST_CASE("the ungated fixed-point criterion passes end to end", "[harness]") {
  nlohmann::json j = base_config();
  j["id"] = "c01_probe";
  j["check"] = "c01";
  j["params"] = {{"operators", {"msbo"}}, {"n", {2, 3, 4, 5, 6, 7, 8, 9, 10}}};
  j["out"] = (temp_dir() / "c01_probe.csv").string();
  const CheckResult res = run_check(parse_config(j));
  REQUIRE(res.id == "c01");
  REQUIRE(res.pass);
  REQUIRE_FALSE(res.detail.empty());
}
