#include <cstdint>
#include <iostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include <highway/highway.hpp>

namespace {

// Accepts "2,4,8", "1..10", and mixtures like "1,4..6".
std::vector<int> parse_int_list(const std::string& spec) {
  std::vector<int> out;
  std::stringstream ss(spec);
  std::string tok;
  const auto to_int = [&](const std::string& s) {
    std::size_t used = 0;
    const int v = std::stoi(s, &used);
    if (used != s.size()) throw std::invalid_argument("bad integer in list: " + spec);
    return v;
  };
  while (std::getline(ss, tok, ',')) {
    const std::size_t dots = tok.find("..");
    if (dots != std::string::npos) {
      const int lo = to_int(tok.substr(0, dots));
      const int hi = to_int(tok.substr(dots + 2));
      if (lo > hi) throw std::invalid_argument("descending range in list: " + spec);
      for (int v = lo; v <= hi; ++v) out.push_back(v);
    } else {
      out.push_back(to_int(tok));
    }
  }
  if (out.empty()) throw std::invalid_argument("empty integer list: " + spec);
  return out;
}

std::vector<std::string> parse_str_list(const std::string& spec) {
  std::vector<std::string> out;
  std::stringstream ss(spec);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok.empty()) throw std::invalid_argument("empty entry in list: " + spec);
    out.push_back(tok);
  }
  if (out.empty()) throw std::invalid_argument("empty list: " + spec);
  return out;
}

void run_and_announce(const nlohmann::json& j) {
  const highway::ExperimentConfig cfg = highway::parse_config(j);
  const std::vector<highway::ResultRow> rows = highway::run(cfg);
  std::cout << "wrote " << rows.size() << " rows to " << cfg.out << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gated multi-step Bellman backup laboratory"};
  app.require_subcommand(1);
  int exit_code = 0;

  // fixed-point ------------------------------------------------------------
  auto* fp = app.add_subcommand("fixed-point",
                                "Operator fixed points per lookahead depth");
  struct {
    std::string env = "threefork";
    std::string operators = "msbo,highway";
    std::string n = "1..10";
    std::string policies = "env";
    double tol = 1e-10;
    std::string id = "fixed_point";
    std::string out;
  } fp_opt;
  fp->add_option("--env", fp_opt.env, "Env preset or MDP file");
  fp->add_option("--operators", fp_opt.operators, "Comma list of operator specs");
  fp->add_option("--operator", fp_opt.operators, "Alias of --operators");
  fp->add_option("--n", fp_opt.n, "Lookahead depths, e.g. 2,4,8 or 1..10");
  fp->add_option("--policies", fp_opt.policies, "Behavioral set: env or uniform");
  fp->add_option("--tol", fp_opt.tol, "Fixed-point tolerance");
  fp->add_option("--id", fp_opt.id, "Experiment id");
  fp->add_option("--out", fp_opt.out, "Output CSV path");
  fp->callback([&] {
    nlohmann::json j = {{"kind", "fixed_point"},
                        {"id", fp_opt.id},
                        {"env", fp_opt.env},
                        {"params",
                         {{"operators", parse_str_list(fp_opt.operators)},
                          {"n", parse_int_list(fp_opt.n)},
                          {"policies", fp_opt.policies},
                          {"tol", fp_opt.tol}}}};
    if (!fp_opt.out.empty()) j["out"] = fp_opt.out;
    run_and_announce(j);
  });

  // convergence ------------------------------------------------------------
  auto* cv = app.add_subcommand("convergence",
                                "Iterations to convergence per depth");
  struct {
    std::string env = "threefork";
    std::string operators = "msbo,highway";
    std::string n = "1..10";
    std::string policies = "env";
    double tol = 1e-10;
    std::string id = "convergence";
    std::string out;
  } cv_opt;
  cv->add_option("--env", cv_opt.env, "Env preset or MDP file");
  cv->add_option("--operators", cv_opt.operators, "Comma list of operator specs");
  cv->add_option("--n", cv_opt.n, "Lookahead depths");
  cv->add_option("--policies", cv_opt.policies, "Behavioral set: env or uniform");
  cv->add_option("--tol", cv_opt.tol, "Fixed-point tolerance");
  cv->add_option("--id", cv_opt.id, "Experiment id");
  cv->add_option("--out", cv_opt.out, "Output CSV path");
  cv->callback([&] {
    nlohmann::json j = {{"kind", "convergence_iters"},
                        {"id", cv_opt.id},
                        {"env", cv_opt.env},
                        {"params",
                         {{"operators", parse_str_list(cv_opt.operators)},
                          {"n", parse_int_list(cv_opt.n)},
                          {"policies", cv_opt.policies},
                          {"tol", cv_opt.tol}}}};
    if (!cv_opt.out.empty()) j["out"] = cv_opt.out;
    run_and_announce(j);
  });

  // gate-trace ---------------------------------------------------------------
  auto* gt = app.add_subcommand("gate-trace",
                                "Per-iteration gate depth per behavioral policy");
  struct {
    std::string env = "threefork";
    int n = 10;
    std::string id = "gate_trace";
    std::string out;
  } gt_opt;
  gt->add_option("--env", gt_opt.env, "Env preset with named policies");
  gt->add_option("--n", gt_opt.n, "Deep branch length");
  gt->add_option("--id", gt_opt.id, "Experiment id");
  gt->add_option("--out", gt_opt.out, "Output CSV path");
  gt->callback([&] {
    nlohmann::json j = {{"kind", "gate_trace"},
                        {"id", gt_opt.id},
                        {"env", gt_opt.env},
                        {"params", {{"n", gt_opt.n}}}};
    if (!gt_opt.out.empty()) j["out"] = gt_opt.out;
    run_and_announce(j);
  });

  // multiroom ----------------------------------------------------------------
  auto* mr = app.add_subcommand("multiroom",
                                "Planner comparison on the gridworld family");
  struct {
    std::string rooms = "2,4,6";
    std::string id = "multiroom";
    std::string out;
  } mr_opt;
  mr->add_option("--rooms", mr_opt.rooms, "Room counts, e.g. 2,4,6");
  mr->add_option("--id", mr_opt.id, "Experiment id");
  mr->add_option("--out", mr_opt.out, "Output CSV path");
  mr->callback([&] {
    nlohmann::json j = {{"kind", "multiroom"},
                        {"id", mr_opt.id},
                        {"params", {{"rooms", parse_int_list(mr_opt.rooms)}}}};
    if (!mr_opt.out.empty()) j["out"] = mr_opt.out;
    run_and_announce(j);
  });

  // toy ------------------------------------------------------------------
  auto* toy = app.add_subcommand("toy", "Delayed-reward learning comparison");
  struct {
    std::string task = "choice,traceback";
    std::string delay = "6,12,18";
    std::string agents = "highway_q,q_lambda,sarsa_lambda,monte_carlo,n_step_q";
    int seeds = 20;
    int budget = 2000;
    std::string id = "toy_tasks";
    std::string out;
  } toy_opt;
  toy->add_option("--task", toy_opt.task, "Toys: choice,traceback");
  toy->add_option("--delay", toy_opt.delay, "Reward delays");
  toy->add_option("--agents", toy_opt.agents, "Agents to run");
  toy->add_option("--seeds", toy_opt.seeds, "Number of seeds (0..k-1)");
  toy->add_option("--budget", toy_opt.budget, "Episode budget per run");
  toy->add_option("--id", toy_opt.id, "Experiment id");
  toy->add_option("--out", toy_opt.out, "Output CSV path");
  toy->callback([&] {
    if (toy_opt.seeds < 1) throw std::invalid_argument("--seeds must be >= 1");
    std::vector<long long> seeds(static_cast<std::size_t>(toy_opt.seeds));
    for (std::size_t i = 0; i < seeds.size(); ++i) seeds[i] = static_cast<long long>(i);
    nlohmann::json j = {{"kind", "toy_tasks"},
                        {"id", toy_opt.id},
                        {"seeds", seeds},
                        {"params",
                         {{"toys", parse_str_list(toy_opt.task)},
                          {"delays", parse_int_list(toy_opt.delay)},
                          {"agents", parse_str_list(toy_opt.agents)},
                          {"budget", toy_opt.budget}}}};
    if (!toy_opt.out.empty()) j["out"] = toy_opt.out;
    run_and_announce(j);
  });

  // properties -----------------------------------------------------------
  auto* pr = app.add_subcommand("properties", "Operator property suites");
  struct {
    std::string suite;
    long long seed = 0;
    std::string id = "property_suite";
    std::string out;
  } pr_opt;
  pr->add_option("--suite", pr_opt.suite,
                 "contraction, distance, softmax, is; empty runs all");
  pr->add_option("--seed", pr_opt.seed, "Suite seed");
  pr->add_option("--id", pr_opt.id, "Experiment id");
  pr->add_option("--out", pr_opt.out, "Output CSV path");
  pr->callback([&] {
    nlohmann::json j = {{"kind", "property_suite"},
                        {"id", pr_opt.id},
                        {"seeds", std::vector<long long>{pr_opt.seed}},
                        {"params", {{"suite", pr_opt.suite}}}};
    if (!pr_opt.out.empty()) j["out"] = pr_opt.out;
    const highway::ExperimentConfig cfg = highway::parse_config(j);
    const std::vector<highway::ResultRow> rows = highway::run(cfg);
    for (const highway::ResultRow& r : rows)
      if (r.metric == "violations")
        std::cout << r.algorithm << ": " << r.y << " violations\n";
    std::cout << "wrote " << rows.size() << " rows to " << cfg.out << "\n";
  });

  // retrace-profile --------------------------------------------------------
  auto* rp = app.add_subcommand("retrace-profile",
                                "Cumulative clipped-ratio trace weights");
  struct {
    std::string lambdas = "0.5";
    double epsilon = 0.2;
    int steps = 25;
    std::string id = "retrace_profile";
    std::string out;
  } rp_opt;
  rp->add_option("--lambda", rp_opt.lambdas, "Comma list of lambda values");
  rp->add_option("--epsilon", rp_opt.epsilon, "Behavior exploration rate");
  rp->add_option("--steps", rp_opt.steps, "Trajectory length");
  rp->add_option("--id", rp_opt.id, "Experiment id");
  rp->add_option("--out", rp_opt.out, "Output CSV path");
  rp->callback([&] {
    std::vector<double> lambdas;
    for (const std::string& tok : parse_str_list(rp_opt.lambdas))
      lambdas.push_back(std::stod(tok));
    nlohmann::json j = {{"kind", "retrace_profile"},
                        {"id", rp_opt.id},
                        {"params",
                         {{"lambdas", lambdas},
                          {"epsilon", rp_opt.epsilon},
                          {"steps", rp_opt.steps}}}};
    if (!rp_opt.out.empty()) j["out"] = rp_opt.out;
    run_and_announce(j);
  });

  // report -----------------------------------------------------------------
  auto* rep = app.add_subcommand("report", "Aggregate CSVs into plot data");
  struct {
    std::vector<std::string> paths;
    std::string out_dir = "plots";
  } rep_opt;
  rep->add_option("paths", rep_opt.paths, "Result CSV files")->required();
  rep->add_option("--out-dir", rep_opt.out_dir, "Plot data directory");
  rep->callback([&] {
    std::cout << highway::report(rep_opt.paths, rep_opt.out_dir);
    std::cout << "plot data written to " << rep_opt.out_dir << "\n";
  });

  // run ----------------------------------------------------------------------
  auto* rn = app.add_subcommand("run", "Run an experiment config file");
  struct {
    std::string config;
    std::string out;
    bool check = false;
  } rn_opt;
  rn->add_option("--config", rn_opt.config, "Experiment config JSON")->required();
  rn->add_option("--out", rn_opt.out, "Override the config's output CSV path");
  rn->add_flag("--check", rn_opt.check, "Evaluate the config's acceptance check");
  rn->callback([&] {
    highway::ExperimentConfig cfg = highway::load_config(rn_opt.config);
    if (!rn_opt.out.empty()) cfg.out = rn_opt.out;
    if (rn_opt.check) {
      const highway::CheckResult res = highway::run_check(cfg);
      std::cout << (res.pass ? "[PASS] " : "[FAIL] ") << res.id << ": "
                << res.detail << "\n";
      if (!res.pass) exit_code = 2;
    } else {
      const std::vector<highway::ResultRow> rows = highway::run(cfg);
      std::cout << "wrote " << rows.size() << " rows to " << cfg.out << "\n";
    }
  });

  // env-export -------------------------------------------------------------
  auto* ex = app.add_subcommand("env-export", "Write a preset env as an MDP file");
  struct {
    std::string env;
    std::string out;
  } ex_opt;
  ex->add_option("--env", ex_opt.env, "Env preset")->required();
  ex->add_option("--out", ex_opt.out, "Destination file")->required();
  ex->callback([&] {
    const highway::ResolvedEnv r = highway::resolve_env(ex_opt.env);
    highway::save_mdp(r.mdp, ex_opt.out);
    std::cout << "wrote " << r.id << " (" << r.mdp.num_states << " states) to "
              << ex_opt.out << "\n";
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return exit_code;
}
