#pragma once

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <tuple>
#include <utility>
#include <vector>

#include <json.hpp>

#include "highway/algorithms.hpp"
#include "highway/baselines.hpp"
#include "highway/envs.hpp"
#include "highway/mdp.hpp"
#include "highway/mdp_io.hpp"
#include "highway/operators.hpp"
#include "highway/properties.hpp"
#include "highway/rng.hpp"

namespace highway {

// ---------------------------------------------------------------------------
// Result rows and CSV emission

inline const std::set<std::string>& metric_registry() {
  static const std::set<std::string> names = {
      "fixed_point_value", "value_error", "iterations",       "samples",
      "residual",          "gate_depth",  "episodes_to_solve", "env_steps",
      "cumulative_weight", "violations",  "checks"};
  return names;
}

struct ResultRow {
  std::string experiment;
  std::string env;
  std::string algorithm;
  long long seed = 0;
  std::string metric;
  double x = 0.0;
  double y = 0.0;
  int flag = 0;  // 1 when the row meets its tolerance / success condition
};

namespace detail {

inline bool row_less(const ResultRow& a, const ResultRow& b) {
  return std::tie(a.experiment, a.env, a.algorithm, a.seed, a.metric, a.x, a.y,
                  a.flag) < std::tie(b.experiment, b.env, b.algorithm, b.seed,
                                     b.metric, b.x, b.y, b.flag);
}

inline void require_csv_safe(const std::string& field, const std::string& what) {
  if (field.empty()) throw std::invalid_argument("csv: empty " + what);
  if (field.find_first_of(",\n\r") != std::string::npos)
    throw std::invalid_argument("csv: " + what + " contains a delimiter: " + field);
}

}  // namespace detail

/// Round-trip-safe rendering used for every real in the CSV schema.
inline std::string format_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline constexpr const char* kCsvHeader = "experiment,env,algorithm,seed,metric,x,y,flag";

/// Writes rows sorted by the full tuple so reruns are byte-identical.
inline void write_csv(const std::string& path, std::vector<ResultRow> rows) {
  for (const ResultRow& r : rows) {
    detail::require_csv_safe(r.experiment, "experiment id");
    detail::require_csv_safe(r.env, "env id");
    detail::require_csv_safe(r.algorithm, "algorithm id");
    if (!metric_registry().count(r.metric))
      throw std::invalid_argument("csv: metric not in registry: " + r.metric);
    if (r.flag != 0 && r.flag != 1)
      throw std::invalid_argument("csv: flag must be 0 or 1");
  }
  std::sort(rows.begin(), rows.end(), detail::row_less);
  const std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("csv: cannot open for writing: " + path);
  out << kCsvHeader << "\n";
  for (const ResultRow& r : rows)
    out << r.experiment << ',' << r.env << ',' << r.algorithm << ',' << r.seed
        << ',' << r.metric << ',' << format_real(r.x) << ',' << format_real(r.y)
        << ',' << r.flag << "\n";
  if (!out) throw std::runtime_error("csv: write failed: " + path);
}

inline std::vector<ResultRow> read_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("csv: cannot open: " + path);
  std::string line;
  if (!std::getline(in, line) || line != kCsvHeader)
    throw std::runtime_error("csv: bad header in " + path);
  std::vector<ResultRow> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::size_t pos = 0;
    while (true) {
      const std::size_t comma = line.find(',', pos);
      f.push_back(line.substr(pos, comma == std::string::npos ? comma : comma - pos));
      if (comma == std::string::npos) break;
      pos = comma + 1;
    }
    if (f.size() != 8)
      throw std::runtime_error("csv: " + path + ":" + std::to_string(lineno) +
                               ": expected 8 fields, got " + std::to_string(f.size()));
    ResultRow r;
    r.experiment = f[0];
    r.env = f[1];
    r.algorithm = f[2];
    try {
      r.seed = std::stoll(f[3]);
      r.metric = f[4];
      r.x = std::stod(f[5]);
      r.y = std::stod(f[6]);
      r.flag = std::stoi(f[7]);
    } catch (const std::exception&) {
      throw std::runtime_error("csv: " + path + ":" + std::to_string(lineno) +
                               ": unparsable numeric field");
    }
    if (!metric_registry().count(r.metric))
      throw std::runtime_error("csv: " + path + ":" + std::to_string(lineno) +
                               ": metric not in registry: " + r.metric);
    if (r.flag != 0 && r.flag != 1)
      throw std::runtime_error("csv: " + path + ":" + std::to_string(lineno) +
                               ": flag must be 0 or 1");
    rows.push_back(std::move(r));
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Experiment configuration

enum class ExperimentKind {
  fixed_point,
  convergence_iters,
  gate_trace,
  multiroom,
  toy_tasks,
  retrace_profile,
  property_suite,
};

inline const std::vector<std::pair<std::string, ExperimentKind>>& kind_table() {
  static const std::vector<std::pair<std::string, ExperimentKind>> table = {
      {"fixed_point", ExperimentKind::fixed_point},
      {"convergence_iters", ExperimentKind::convergence_iters},
      {"gate_trace", ExperimentKind::gate_trace},
      {"multiroom", ExperimentKind::multiroom},
      {"toy_tasks", ExperimentKind::toy_tasks},
      {"retrace_profile", ExperimentKind::retrace_profile},
      {"property_suite", ExperimentKind::property_suite},
  };
  return table;
}

inline std::string kind_name(ExperimentKind k) {
  for (const auto& [name, kind] : kind_table())
    if (kind == k) return name;
  throw std::logic_error("unnamed experiment kind");
}

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::fixed_point;
  std::string id;     // defaults to the kind name
  std::string check;  // acceptance check id, empty when the config is plain
  std::string env;    // preset name or MDP file path, for env-scoped kinds
  nlohmann::json params = nlohmann::json::object();
  std::vector<long long> seeds{0};
  std::string out;  // defaults to results/<id>.csv
};

namespace detail {

inline bool kind_takes_env(ExperimentKind k) {
  return k == ExperimentKind::fixed_point || k == ExperimentKind::convergence_iters ||
         k == ExperimentKind::gate_trace;
}

inline void require_param_keys(const nlohmann::json& params, ExperimentKind kind,
                               const std::set<std::string>& allowed) {
  for (const auto& item : params.items())
    if (!allowed.count(item.key()))
      throw std::invalid_argument("$.params." + item.key() +
                                  ": unknown field for kind " + kind_name(kind));
}

inline long long param_int(const nlohmann::json& p, const std::string& key,
                           long long dflt) {
  if (!p.contains(key)) return dflt;
  if (!p.at(key).is_number_integer())
    throw std::invalid_argument("$.params." + key + ": expected an integer");
  return p.at(key).get<long long>();
}

inline double param_real(const nlohmann::json& p, const std::string& key,
                         double dflt) {
  if (!p.contains(key)) return dflt;
  if (!p.at(key).is_number())
    throw std::invalid_argument("$.params." + key + ": expected a number");
  return p.at(key).get<double>();
}

inline std::string param_str(const nlohmann::json& p, const std::string& key,
                             const std::string& dflt) {
  if (!p.contains(key)) return dflt;
  if (!p.at(key).is_string())
    throw std::invalid_argument("$.params." + key + ": expected a string");
  return p.at(key).get<std::string>();
}

inline std::vector<int> param_int_list(const nlohmann::json& p, const std::string& key,
                                       std::vector<int> dflt) {
  if (!p.contains(key)) return dflt;
  const auto& v = p.at(key);
  if (!v.is_array() || v.empty())
    throw std::invalid_argument("$.params." + key + ": expected a nonempty array");
  std::vector<int> out;
  for (const auto& e : v) {
    if (!e.is_number_integer())
      throw std::invalid_argument("$.params." + key + ": expected integers");
    out.push_back(e.get<int>());
  }
  return out;
}

inline std::vector<std::string> param_str_list(const nlohmann::json& p,
                                               const std::string& key,
                                               std::vector<std::string> dflt) {
  if (!p.contains(key)) return dflt;
  const auto& v = p.at(key);
  if (!v.is_array() || v.empty())
    throw std::invalid_argument("$.params." + key + ": expected a nonempty array");
  std::vector<std::string> out;
  for (const auto& e : v) {
    if (!e.is_string())
      throw std::invalid_argument("$.params." + key + ": expected strings");
    out.push_back(e.get<std::string>());
  }
  return out;
}

}  // namespace detail

inline ExperimentConfig parse_config(const nlohmann::json& j) {
  if (!j.is_object()) throw std::invalid_argument("$: config must be a JSON object");
  static const std::set<std::string> known = {"kind", "id",    "check", "env",
                                              "params", "seeds", "out"};
  for (const auto& item : j.items())
    if (!known.count(item.key()))
      throw std::invalid_argument("$." + item.key() + ": unknown field");

  ExperimentConfig cfg;
  if (!j.contains("kind") || !j.at("kind").is_string())
    throw std::invalid_argument("$.kind: required string");
  const std::string kind = j.at("kind").get<std::string>();
  bool found = false;
  for (const auto& [name, k] : kind_table())
    if (name == kind) {
      cfg.kind = k;
      found = true;
    }
  if (!found) throw std::invalid_argument("$.kind: unknown kind " + kind);

  cfg.id = kind;
  if (j.contains("id")) {
    if (!j.at("id").is_string() || j.at("id").get<std::string>().empty())
      throw std::invalid_argument("$.id: expected a nonempty string");
    cfg.id = j.at("id").get<std::string>();
  }
  if (j.contains("check")) {
    if (!j.at("check").is_string())
      throw std::invalid_argument("$.check: expected a string");
    cfg.check = j.at("check").get<std::string>();
  }
  if (j.contains("env")) {
    if (!j.at("env").is_string())
      throw std::invalid_argument("$.env: expected a string");
    cfg.env = j.at("env").get<std::string>();
  }
  if (detail::kind_takes_env(cfg.kind)) {
    if (cfg.env.empty())
      throw std::invalid_argument("$.env: required for kind " + kind);
  } else if (!cfg.env.empty()) {
    throw std::invalid_argument("$.env: not used by kind " + kind);
  }
  if (j.contains("params")) {
    if (!j.at("params").is_object())
      throw std::invalid_argument("$.params: expected an object");
    cfg.params = j.at("params");
  }
  if (j.contains("seeds")) {
    if (!j.at("seeds").is_array())
      throw std::invalid_argument("$.seeds: expected an array of integers");
    cfg.seeds.clear();
    for (const auto& e : j.at("seeds")) {
      if (!e.is_number_integer())
        throw std::invalid_argument("$.seeds: expected an array of integers");
      cfg.seeds.push_back(e.get<long long>());
    }
  }
  if (cfg.seeds.empty()) throw std::invalid_argument("$.seeds: must be nonempty");
  cfg.out = "results/" + cfg.id + ".csv";
  if (j.contains("out")) {
    if (!j.at("out").is_string() || j.at("out").get<std::string>().empty())
      throw std::invalid_argument("$.out: expected a nonempty string");
    cfg.out = j.at("out").get<std::string>();
  }
  return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("config: cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw std::invalid_argument("config: " + path + ": " + e.what());
  }
  return parse_config(j);
}

// ---------------------------------------------------------------------------
// Environment resolution

struct ResolvedEnv {
  std::string id;
  TabularMdp mdp;
  std::vector<PolicySpec> policies;        // named behavioral set, may be empty
  std::vector<std::string> policy_names;
  int probe_state = 0;
  int probe_action = 0;
};

namespace detail {

inline int parse_preset_arg(const std::string& spec, std::size_t colon) {
  const std::string arg = spec.substr(colon + 1);
  try {
    std::size_t used = 0;
    const int v = std::stoi(arg, &used);
    if (used != arg.size()) throw std::invalid_argument(arg);
    return v;
  } catch (const std::exception&) {
    throw std::invalid_argument("env: bad preset argument in " + spec);
  }
}

}  // namespace detail

/// Accepts the named presets (twostate, threefork, multiroom:<rooms>,
/// choice:<delay>, traceback:<delay>) or a path to a saved MDP file.
inline ResolvedEnv resolve_env(const std::string& spec) {
  ResolvedEnv r;
  r.id = spec;
  const std::size_t colon = spec.find(':');
  const std::string head = spec.substr(0, colon);
  if (spec == "twostate") {
    r.mdp = build_twostate();
    return r;
  }
  if (spec == "threefork") {
    ThreeFork tf = build_threefork();
    r.mdp = std::move(tf.mdp);
    r.policies = {tf.pi_red, tf.pi_orange, tf.pi_blue};
    r.policy_names = {"red", "orange", "blue"};
    r.probe_state = tf.start;
    r.probe_action = tf.up_action;
    return r;
  }
  if (head == "multiroom" && colon != std::string::npos) {
    r.mdp = build_multiroom(detail::parse_preset_arg(spec, colon));
    return r;
  }
  if (head == "choice" && colon != std::string::npos) {
    r.mdp = build_choice(detail::parse_preset_arg(spec, colon)).mdp;
    return r;
  }
  if (head == "traceback" && colon != std::string::npos) {
    r.mdp = build_traceback(detail::parse_preset_arg(spec, colon)).mdp;
    return r;
  }
  if (std::filesystem::exists(spec)) {
    r.mdp = load_mdp(spec);
    r.id = std::filesystem::path(spec).stem().string();
    return r;
  }
  throw std::invalid_argument("env: unknown preset or missing file: " + spec);
}

/// Per-run random stream, derived so that execution order and parallelism
/// never affect results.
inline CounterRng experiment_stream(const std::string& experiment_id, long long seed) {
  return CounterRng(0).child(experiment_id).child(static_cast<std::uint64_t>(seed));
}

// ---------------------------------------------------------------------------
// Parallel cell pool

namespace detail {

inline void run_cells(std::size_t count, const std::function<void(std::size_t)>& cell) {
  if (count == 0) return;
  unsigned hw = std::thread::hardware_concurrency();
  if (hw == 0) hw = 1;
  const std::size_t workers = std::min<std::size_t>(hw, count);
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) cell(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      while (true) {
        const std::size_t i = next.fetch_add(1);
        if (i >= count) return;
        cell(i);
      }
    });
  for (std::thread& t : pool) t.join();
}

/// Runs `fn` over cell indices in a pool; rows are merged in cell order so
/// the outcome is independent of scheduling. The first failing cell's message
/// is reported through `failure`, with the surviving rows kept.
template <typename CellFn>
std::vector<ResultRow> collect_cells(std::size_t count, std::string* failure,
                                     CellFn&& fn) {
  std::vector<std::vector<ResultRow>> slots(count);
  std::vector<std::string> errors(count);
  std::vector<char> failed(count, 0);
  run_cells(count, [&](std::size_t i) {
    try {
      slots[i] = fn(i);
    } catch (const std::exception& e) {
      errors[i] = e.what();
      failed[i] = 1;
    }
  });
  std::vector<ResultRow> rows;
  for (auto& s : slots) rows.insert(rows.end(), s.begin(), s.end());
  for (std::size_t i = 0; i < count; ++i)
    if (failed[i]) {
      if (failure && failure->empty())
        *failure = "cell " + std::to_string(i) + " failed: " + errors[i];
      break;
    }
  return rows;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Operator registry for the fixed-point experiments

struct OperatorSpec {
  std::string label;  // spec string as written, used as the algorithm column
  std::string name;   // head before the optional ':'
  double arg = 0.0;
  bool has_arg = false;
};

inline OperatorSpec parse_operator(const std::string& spec) {
  OperatorSpec op;
  op.label = spec;
  const std::size_t colon = spec.find(':');
  op.name = spec.substr(0, colon);
  if (colon != std::string::npos) {
    const std::string arg = spec.substr(colon + 1);
    try {
      std::size_t used = 0;
      op.arg = std::stod(arg, &used);
      if (used != arg.size()) throw std::invalid_argument(arg);
      op.has_arg = true;
    } catch (const std::exception&) {
      throw std::invalid_argument("operator: bad argument in " + spec);
    }
  }
  static const std::set<std::string> names = {"bellman", "msbo",   "highway",
                                              "highway_optimality", "softmax",
                                              "broken"};
  if (!names.count(op.name))
    throw std::invalid_argument("operator: unknown name " + spec);
  if (op.name == "broken") {
    if (!op.has_arg || op.arg != std::floor(op.arg) || op.arg < 0.0 || op.arg == 1.0)
      throw std::invalid_argument(
          "operator: broken needs an integer threshold >= 0, != 1");
  }
  if (op.name == "softmax" && op.has_arg && !(op.arg > 0.0))
    throw std::invalid_argument("operator: softmax temperature must be > 0");
  return op;
}

namespace detail {

inline PolicySet experiment_policy_set(const ResolvedEnv& env,
                                       const std::string& mode) {
  if (mode == "uniform")
    return PolicySet::of({PolicySpec::uniform(env.mdp.num_states, env.mdp.num_actions)});
  if (mode != "env")
    throw std::invalid_argument("$.params.policies: expected \"env\" or \"uniform\"");
  if (!env.policies.empty()) return PolicySet::of(env.policies);
  return PolicySet::of({PolicySpec::uniform(env.mdp.num_states, env.mdp.num_actions)});
}

inline std::function<QTable(const QTable&)> make_operator(const TabularMdp& m,
                                                          const PolicySet& set,
                                                          const OperatorSpec& op,
                                                          int n) {
  HighwayConfig hc;
  hc.policies = set;
  hc.lookahead = LookaheadSet::single(n);
  if (op.name == "bellman")
    return [&m](const QTable& q) { return bellman_optimality(m, q); };
  if (op.name == "msbo")
    return [&m, hc](const QTable& q) { return multistep_bo(m, hc, q); };
  if (op.name == "highway")
    return [&m, hc](const QTable& q) { return highway_generalized(m, hc, q); };
  if (op.name == "highway_optimality") {
    const LookaheadSet look = hc.lookahead;
    return [&m, set, look](const QTable& q) {
      return highway_optimality(m, set, look, q);
    };
  }
  if (op.name == "softmax") {
    hc.temperature = op.has_arg ? op.arg : 1.0;
    return [&m, hc](const QTable& q) { return highway_softmax(m, hc, q); };
  }
  hc.gate_threshold = static_cast<int>(op.arg);
  return [&m, hc](const QTable& q) { return broken_gate_variant(m, hc, q); };
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Runners

namespace detail {

/// Shared engine for the fixed_point and convergence_iters kinds. One cell
/// per (operator, depth); the broken:0 variant is launched from Q* + 1 to
/// exhibit its spurious fixed point, everything else from the zero table.
inline std::vector<ResultRow> run_fixed_point_kind(const ExperimentConfig& cfg,
                                                   bool emit_values,
                                                   std::string* failure) {
  require_param_keys(cfg.params, cfg.kind,
                     {"operators", "n", "policies", "tol", "max_iters"});
  const ResolvedEnv env = resolve_env(cfg.env);
  const std::vector<std::string> op_specs =
      param_str_list(cfg.params, "operators", {"msbo", "highway"});
  std::vector<OperatorSpec> ops;
  for (const std::string& s : op_specs) ops.push_back(parse_operator(s));
  const std::vector<int> depths = param_int_list(cfg.params, "n", {1, 2, 3, 4, 5, 6, 7, 8, 9, 10});
  for (const int n : depths)
    if (n < 1) throw std::invalid_argument("$.params.n: depths must be >= 1");
  const std::string policy_mode = param_str(cfg.params, "policies", "env");
  const PolicySet set = experiment_policy_set(env, policy_mode);
  const double tol = param_real(cfg.params, "tol", 1e-10);
  const long long max_iters = param_int(cfg.params, "max_iters", 100000);
  if (!(tol > 0.0)) throw std::invalid_argument("$.params.tol: must be > 0");

  const QTable q_star = q_star_oracle(env.mdp);
  const std::size_t cells = ops.size() * depths.size();
  return collect_cells(cells, failure, [&](std::size_t i) {
    const OperatorSpec& op = ops[i / depths.size()];
    const int n = depths[i % depths.size()];
    const auto apply = make_operator(env.mdp, set, op, n);
    QTable q0(env.mdp.num_states, env.mdp.num_actions);
    if (op.name == "broken" && op.arg == 0.0) {
      q0 = q_star;
      for (double& v : q0.data) v += 1.0;
    }
    const FixedPointReport fp =
        fixed_point(apply, std::move(q0), tol, static_cast<int>(max_iters));
    const int ok = fp.converged ? 1 : 0;
    std::vector<ResultRow> rows;
    const double x = n;
    if (emit_values) {
      rows.push_back({cfg.id, env.id, op.label, 0, "fixed_point_value", x,
                      fp.q(env.probe_state, env.probe_action), ok});
      rows.push_back({cfg.id, env.id, op.label, 0, "value_error", x,
                      distance_sup(fp.q, q_star), ok});
    }
    rows.push_back({cfg.id, env.id, op.label, 0, "iterations", x,
                    static_cast<double>(fp.iterations), ok});
    rows.push_back({cfg.id, env.id, op.label, 0, "residual", x, fp.residual, ok});
    return rows;
  });
}

inline std::vector<ResultRow> run_gate_trace(const ExperimentConfig& cfg,
                                             std::string* failure) {
  require_param_keys(cfg.params, cfg.kind, {"n", "tol", "max_iters"});
  const ResolvedEnv env = resolve_env(cfg.env);
  if (env.policies.empty())
    throw std::invalid_argument("gate_trace: env " + env.id +
                                " has no named behavioral policies");
  const int n = static_cast<int>(param_int(cfg.params, "n", 10));
  if (n < 1) throw std::invalid_argument("$.params.n: must be >= 1");
  const double tol = param_real(cfg.params, "tol", 1e-10);
  const long long max_iters = param_int(cfg.params, "max_iters", 10000);

  return collect_cells(1, failure, [&](std::size_t) {
    HighwayConfig hc;
    hc.policies = PolicySet::of(env.policies);
    hc.lookahead = LookaheadSet::single(n);
    const std::size_t probe =
        static_cast<std::size_t>(env.probe_state) * env.mdp.num_actions +
        env.probe_action;
    std::vector<ResultRow> rows;
    QTable q(env.mdp.num_states, env.mdp.num_actions);
    for (long long k = 1; k <= max_iters; ++k) {
      QTable next = highway_generalized(env.mdp, hc, q);
      const double resid = sup_diff(next, q);
      q = std::move(next);
      const int settled = resid <= tol ? 1 : 0;
      for (std::size_t f = 0; f < env.policies.size(); ++f) {
        const std::vector<int> choice = gate_choices(env.mdp, env.policies[f], n, q);
        rows.push_back({cfg.id, env.id, env.policy_names[f], 0, "gate_depth",
                        static_cast<double>(k), static_cast<double>(choice[probe]),
                        settled});
      }
      if (settled) return rows;
    }
    throw std::runtime_error("gate_trace: no convergence within iteration budget");
  });
}

inline std::vector<ResultRow> run_multiroom(const ExperimentConfig& cfg,
                                            std::string* failure) {
  require_param_keys(cfg.params, cfg.kind,
                     {"rooms", "room_size", "error_bound", "max_lookahead",
                      "capacity", "interval", "eval_depth"});
  const std::vector<int> rooms = param_int_list(cfg.params, "rooms", {2, 4, 6});
  const int room_size = static_cast<int>(param_int(cfg.params, "room_size", 5));
  const double error_bound = param_real(cfg.params, "error_bound", 1e-10);
  const int max_lookahead = static_cast<int>(param_int(cfg.params, "max_lookahead", 10));
  const int capacity = static_cast<int>(param_int(cfg.params, "capacity", 5));
  const int interval = static_cast<int>(param_int(cfg.params, "interval", 7));
  const int eval_depth = static_cast<int>(param_int(cfg.params, "eval_depth", 10));

  return collect_cells(rooms.size(), failure, [&](std::size_t i) {
    const int r = rooms[i];
    const TabularMdp m = build_multiroom(r, room_size);
    const VTable v_star = v_from_q(q_star_oracle(m));
    const std::string env_id = "multiroom:" + std::to_string(r);

    HviParams hp;
    hp.error_bound = error_bound;
    hp.policy_set_capacity = capacity;
    hp.policy_add_interval = interval;
    hp.lookahead = LookaheadSet::range(1, max_lookahead);
    const PlanningReport hvi = highway_value_iteration(m, hp);
    const PlanningReport vi = value_iteration(m, error_bound);
    const PlanningReport pi = policy_iteration(m, eval_depth, error_bound);

    std::vector<ResultRow> rows;
    const auto emit = [&](const std::string& alg, const PlanningReport& rep) {
      const int ok = rep.converged ? 1 : 0;
      const double err = sup_diff(rep.v, v_star);
      rows.push_back({cfg.id, env_id, alg, 0, "iterations",
                      static_cast<double>(r), static_cast<double>(rep.iterations), ok});
      rows.push_back({cfg.id, env_id, alg, 0, "samples", static_cast<double>(r),
                      static_cast<double>(rep.samples), 1});
      rows.push_back({cfg.id, env_id, alg, 0, "value_error",
                      static_cast<double>(r), err,
                      err <= 10.0 * error_bound ? 1 : 0});
      rows.push_back({cfg.id, env_id, alg, 0, "residual", static_cast<double>(r),
                      rep.residual, ok});
    };
    emit("highway_vi", hvi);
    emit("vi", vi);
    emit("pi", pi);
    return rows;
  });
}

inline const std::vector<std::string>& toy_agent_registry() {
  static const std::vector<std::string> agents = {
      "highway_q", "q_lambda", "sarsa_lambda", "monte_carlo", "n_step_q"};
  return agents;
}

// Protocol constants for the delayed-reward experiment. The classical agents
// share one learning rate, sized so TD backups stay stable against the toys'
// payout scales; Monte Carlo keeps its own moving-average coefficient from
// AgentParams. Solving demands a long run of consecutive optimal greedy
// evaluations so that a transient lucky argmax does not count as solved; the
// recorded episode index is the start of the run, so the streak length does
// not penalize agents that genuinely converged.
inline constexpr double kToyClassicalAlpha = 0.02;
inline constexpr int kToySolveStreak = 100;

inline std::vector<ResultRow> run_toy_tasks(const ExperimentConfig& cfg,
                                            std::string* failure) {
  require_param_keys(cfg.params, cfg.kind,
                     {"toys", "delays", "agents", "budget", "epsilon"});
  const std::vector<std::string> toys =
      param_str_list(cfg.params, "toys", {"choice", "traceback"});
  for (const std::string& t : toys)
    if (t != "choice" && t != "traceback")
      throw std::invalid_argument("$.params.toys: unknown toy " + t);
  const std::vector<int> delays = param_int_list(cfg.params, "delays", {6, 12, 18});
  const std::vector<std::string> agents =
      param_str_list(cfg.params, "agents", toy_agent_registry());
  for (const std::string& a : agents)
    if (std::find(toy_agent_registry().begin(), toy_agent_registry().end(), a) ==
        toy_agent_registry().end())
      throw std::invalid_argument("$.params.agents: unknown agent " + a);
  const int budget = static_cast<int>(param_int(cfg.params, "budget", 2000));
  if (budget < 1) throw std::invalid_argument("$.params.budget: must be >= 1");
  const double epsilon = param_real(cfg.params, "epsilon", 0.2);

  struct Cell {
    std::string toy;
    int delay;
    std::string agent;
    long long seed;
  };
  std::vector<Cell> cells;
  for (const std::string& toy : toys)
    for (const int delay : delays)
      for (const std::string& agent : agents)
        for (const long long seed : cfg.seeds) cells.push_back({toy, delay, agent, seed});

  return collect_cells(cells.size(), failure, [&](std::size_t i) {
    const Cell& c = cells[i];
    const EpisodicEnv env =
        c.toy == "choice" ? build_choice(c.delay) : build_traceback(c.delay);
    const std::string env_id = c.toy + ":" + std::to_string(c.delay);
    CounterRng stream =
        experiment_stream(cfg.id, c.seed).child(env_id).child(c.agent);
    const std::uint64_t agent_seed = stream.next_u64();

    LearningLog log;
    if (c.agent == "highway_q") {
      HqlParams hp;
      hp.run_epochs = budget;
      hp.epsilon = epsilon;
      hp.solve_streak = kToySolveStreak;
      log = highway_q_learning(env, hp, agent_seed);
    } else {
      AgentParams ap;
      ap.max_episodes = budget;
      ap.epsilon = epsilon;
      ap.alpha = kToyClassicalAlpha;
      ap.solve_streak = kToySolveStreak;
      if (c.agent == "q_lambda") log = q_lambda_agent(env, ap, agent_seed);
      else if (c.agent == "sarsa_lambda") log = sarsa_lambda_agent(env, ap, agent_seed);
      else if (c.agent == "monte_carlo") log = monte_carlo_agent(env, ap, agent_seed);
      else log = n_step_q_agent(env, ap, agent_seed);
    }
    const bool solved = log.solved_at >= 0;
    std::vector<ResultRow> rows;
    rows.push_back({cfg.id, env_id, c.agent, c.seed, "episodes_to_solve",
                    static_cast<double>(c.delay),
                    static_cast<double>(solved ? log.solved_at : budget),
                    solved ? 1 : 0});
    rows.push_back({cfg.id, env_id, c.agent, c.seed, "env_steps",
                    static_cast<double>(c.delay),
                    static_cast<double>(log.env_steps), 1});
    return rows;
  });
}

inline std::vector<ResultRow> run_retrace_profile(const ExperimentConfig& cfg,
                                                  std::string* failure) {
  require_param_keys(cfg.params, cfg.kind,
                     {"lambdas", "epsilon", "actions", "steps"});
  nlohmann::json p = cfg.params;
  std::vector<double> lambdas{0.5};
  if (p.contains("lambdas")) {
    const auto& v = p.at("lambdas");
    if (!v.is_array() || v.empty())
      throw std::invalid_argument("$.params.lambdas: expected a nonempty array");
    lambdas.clear();
    for (const auto& e : v) {
      if (!e.is_number())
        throw std::invalid_argument("$.params.lambdas: expected numbers");
      lambdas.push_back(e.get<double>());
    }
  }
  const double epsilon = param_real(cfg.params, "epsilon", 0.2);
  const int actions = static_cast<int>(param_int(cfg.params, "actions", 4));
  const int steps = static_cast<int>(param_int(cfg.params, "steps", 25));
  if (actions < 2) throw std::invalid_argument("$.params.actions: must be >= 2");
  if (steps < 1) throw std::invalid_argument("$.params.steps: must be >= 1");

  return collect_cells(lambdas.size(), failure, [&](std::size_t i) {
    const double lambda = lambdas[i];
    const int states = steps + 1;
    QTable shape(states, actions);
    for (int s = 0; s < states; ++s) shape(s, 0) = 1.0;
    const PolicySpec target = greedy_policy(shape);
    const PolicySpec behavior = epsilon_greedy(shape, epsilon);
    std::vector<std::pair<int, int>> trajectory;
    for (int t = 0; t < steps; ++t) trajectory.push_back({t, 0});
    const std::vector<double> w =
        retrace_weight_profile(target, behavior, trajectory, lambda);
    std::vector<ResultRow> rows;
    const std::string alg = "retrace:" + format_real(lambda);
    const std::string env_id = "chain:" + std::to_string(steps);
    for (std::size_t t = 0; t < w.size(); ++t) {
      const int ok = t == 0 || w[t] <= w[t - 1] ? 1 : 0;
      rows.push_back({cfg.id, env_id, alg, 0, "cumulative_weight",
                      static_cast<double>(t), w[t], ok});
    }
    return rows;
  });
}

inline std::vector<ResultRow> run_property_kind(const ExperimentConfig& cfg,
                                                std::string* failure) {
  require_param_keys(cfg.params, cfg.kind, {"suite"});
  const std::string suite = param_str(cfg.params, "suite", "");
  const long long seed = cfg.seeds.front();
  return collect_cells(1, failure, [&](std::size_t) {
    const std::vector<PropertyResult> results =
        run_property_suite(suite, static_cast<std::uint64_t>(seed));
    std::vector<ResultRow> rows;
    for (const PropertyResult& r : results) {
      rows.push_back({cfg.id, "random", r.name, seed, "violations", 0,
                      static_cast<double>(r.violations), r.violations == 0 ? 1 : 0});
      rows.push_back({cfg.id, "random", r.name, seed, "checks", 0,
                      static_cast<double>(r.checks), 1});
    }
    return rows;
  });
}

}  // namespace detail

/// Runs one experiment and writes its CSV. When a cell fails, the rows from
/// the surviving cells are still flushed before the error propagates.
inline std::vector<ResultRow> run(const ExperimentConfig& cfg) {
  std::string failure;
  std::vector<ResultRow> rows;
  switch (cfg.kind) {
    case ExperimentKind::fixed_point:
      rows = detail::run_fixed_point_kind(cfg, true, &failure);
      break;
    case ExperimentKind::convergence_iters:
      rows = detail::run_fixed_point_kind(cfg, false, &failure);
      break;
    case ExperimentKind::gate_trace:
      rows = detail::run_gate_trace(cfg, &failure);
      break;
    case ExperimentKind::multiroom:
      rows = detail::run_multiroom(cfg, &failure);
      break;
    case ExperimentKind::toy_tasks:
      rows = detail::run_toy_tasks(cfg, &failure);
      break;
    case ExperimentKind::retrace_profile:
      rows = detail::run_retrace_profile(cfg, &failure);
      break;
    case ExperimentKind::property_suite:
      rows = detail::run_property_kind(cfg, &failure);
      break;
  }
  write_csv(cfg.out, rows);
  if (!failure.empty())
    throw std::runtime_error(cfg.id + ": " + failure +
                             " (partial results flushed to " + cfg.out + ")");
  return rows;
}

// ---------------------------------------------------------------------------
// Aggregation and plot data

namespace detail {

inline double nearest_rank(const std::vector<double>& sorted, double p) {
  const std::size_t n = sorted.size();
  std::size_t rank = static_cast<std::size_t>(std::ceil(p * static_cast<double>(n)));
  if (rank < 1) rank = 1;
  if (rank > n) rank = n;
  return sorted[rank - 1];
}

inline std::string sanitize_name(const std::string& s) {
  std::string out;
  for (const char c : s)
    out += (std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '-' ||
            c == '_')
               ? c
               : '_';
  return out;
}

}  // namespace detail

/// Aggregates rows across seeds: median and the central 68% band by nearest
/// rank. Returns the summary table and writes one two-column (x, median)
/// gnuplot data file per (experiment, env, algorithm, metric) under out_dir.
inline std::string report(const std::vector<std::string>& csv_paths,
                          const std::string& out_dir) {
  std::vector<ResultRow> rows;
  for (const std::string& path : csv_paths) {
    std::vector<ResultRow> r = read_csv(path);
    rows.insert(rows.end(), r.begin(), r.end());
  }
  if (rows.empty()) throw std::runtime_error("report: no data rows in inputs");

  using GroupKey = std::tuple<std::string, std::string, std::string, std::string, double>;
  std::map<GroupKey, std::vector<double>> groups;
  for (const ResultRow& r : rows)
    groups[{r.experiment, r.env, r.algorithm, r.metric, r.x}].push_back(r.y);

  std::ostringstream summary;
  summary << "experiment,env,algorithm,metric,x,median,p16,p84,n\n";
  using SeriesKey = std::tuple<std::string, std::string, std::string, std::string>;
  std::map<SeriesKey, std::vector<std::pair<double, double>>> series;
  for (auto& [key, ys] : groups) {
    std::sort(ys.begin(), ys.end());
    const double med = detail::nearest_rank(ys, 0.5);
    const double lo = detail::nearest_rank(ys, 0.16);
    const double hi = detail::nearest_rank(ys, 0.84);
    const auto& [exp_id, env_id, alg, metric, x] = key;
    summary << exp_id << ',' << env_id << ',' << alg << ',' << metric << ','
            << format_real(x) << ',' << format_real(med) << ',' << format_real(lo)
            << ',' << format_real(hi) << ',' << ys.size() << "\n";
    series[{exp_id, env_id, alg, metric}].push_back({x, med});
  }

  std::filesystem::create_directories(out_dir);
  for (const auto& [key, points] : series) {
    const auto& [exp_id, env_id, alg, metric] = key;
    const std::string name = detail::sanitize_name(exp_id + "_" + env_id + "_" +
                                                   alg + "_" + metric) +
                             ".dat";
    std::ofstream out(std::filesystem::path(out_dir) / name, std::ios::binary);
    if (!out) throw std::runtime_error("report: cannot write " + name);
    for (const auto& [x, med] : points)
      out << format_real(x) << ' ' << format_real(med) << "\n";
  }
  return summary.str();
}

// ---------------------------------------------------------------------------
// Acceptance checks. Each checker pins its own tolerances and scales; the
// config supplies the run shape (seeds, budgets) and its rows feed the
// checks that aggregate over stochastic runs.

struct CheckResult {
  std::string id;
  bool pass = false;
  std::string detail;
};

namespace detail {

inline PolicySet fork_set(const ThreeFork& tf) {
  return PolicySet::of({tf.pi_red, tf.pi_orange, tf.pi_blue});
}

inline FixedPointReport fork_fixed_point(const ThreeFork& tf, const PolicySet& set,
                                         const std::string& op_spec, int n,
                                         const QTable& q0) {
  const OperatorSpec op = parse_operator(op_spec);
  return fixed_point(make_operator(tf.mdp, set, op, n), q0, 1e-10, 100000);
}

inline std::string fmt(double v) { return format_real(v); }

/// Fixed point of the ungated multi-step operator undervalues the optimum at
/// the junction approach and flips the greedy choice to the near exit.
inline CheckResult check_c01(const ExperimentConfig&) {
  constexpr double kTol = 1e-8;
  const ThreeFork tf = build_threefork();
  const PolicySet set = fork_set(tf);
  const QTable q_star = q_star_oracle(tf.mdp);
  const QTable zeros(tf.mdp.num_states, tf.mdp.num_actions);
  const double star_up = q_star(tf.start, tf.up_action);
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  bool pass = true;
  for (int n = 2; n <= 10; ++n) {
    const FixedPointReport fp = fork_fixed_point(tf, set, "msbo", n, zeros);
    const double up = fp.q(tf.start, tf.up_action);
    const double alt = fp.q(tf.start, tf.alt_action);
    lo = std::min(lo, up);
    hi = std::max(hi, up);
    pass = pass && fp.converged && up < star_up - kTol && alt > up + kTol &&
           fp.q.row_argmax(tf.start) == tf.alt_action;
  }
  return {"c01", pass,
          "msbo fixed points n=2..10: probe in [" + fmt(lo) + ", " + fmt(hi) +
              "] vs Q* " + fmt(star_up) + ", greedy start action flips to the near exit"};
}

/// Deeper fixed points along the divisor chain never exceed shallower ones.
inline CheckResult check_c02(const ExperimentConfig&) {
  constexpr double kTol = 1e-9;
  const ThreeFork tf = build_threefork();
  const PolicySet uniform = PolicySet::of(
      {PolicySpec::uniform(tf.mdp.num_states, tf.mdp.num_actions)});
  const QTable q_star = q_star_oracle(tf.mdp);
  const QTable zeros(tf.mdp.num_states, tf.mdp.num_actions);
  QTable fp2 = fork_fixed_point(tf, uniform, "msbo", 2, zeros).q;
  QTable fp4 = fork_fixed_point(tf, uniform, "msbo", 4, zeros).q;
  QTable fp8 = fork_fixed_point(tf, uniform, "msbo", 8, zeros).q;
  double worst = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < fp2.data.size(); ++i) {
    worst = std::max(worst, fp8.data[i] - fp4.data[i]);
    worst = std::max(worst, fp4.data[i] - fp2.data[i]);
    worst = std::max(worst, fp2.data[i] - q_star.data[i]);
  }
  return {"c02", worst <= kTol,
          "uniform-policy chain fp8 <= fp4 <= fp2 <= Q*, worst excess " + fmt(worst)};
}

/// Very deep fixed points collapse onto the policy-averaged value table.
inline CheckResult check_c03(const ExperimentConfig&) {
  constexpr double kTol = 1e-6;
  const ThreeFork tf = build_threefork();
  const PolicySet set = fork_set(tf);
  const QTable zeros(tf.mdp.num_states, tf.mdp.num_actions);
  const FixedPointReport fp = fork_fixed_point(tf, set, "msbo", 200, zeros);
  QTable target = q_pi_oracle(tf.mdp, tf.pi_red);
  const QTable q_o = q_pi_oracle(tf.mdp, tf.pi_orange);
  const QTable q_b = q_pi_oracle(tf.mdp, tf.pi_blue);
  for (std::size_t i = 0; i < target.data.size(); ++i)
    target.data[i] = (target.data[i] + q_o.data[i] + q_b.data[i]) / 3.0;
  const double err = sup_diff(fp.q, target);
  const double probe = target(tf.start, tf.up_action);
  const bool pass =
      fp.converged && err <= kTol && std::abs(probe - 1.0) <= kTol;
  return {"c03", pass,
          "depth-200 fixed point vs policy-averaged values: sup gap " + fmt(err) +
              ", probe mean " + fmt(probe)};
}

/// The gated operator's fixed point is the optimal table at every depth.
inline CheckResult check_c04(const ExperimentConfig&) {
  constexpr double kTol = 1e-8;
  const ThreeFork tf = build_threefork();
  const PolicySet set = fork_set(tf);
  const QTable q_star = q_star_oracle(tf.mdp);
  const QTable zeros(tf.mdp.num_states, tf.mdp.num_actions);
  double worst = 0.0;
  bool pass = true;
  for (int n = 1; n <= 10; ++n) {
    const FixedPointReport fp = fork_fixed_point(tf, set, "highway", n, zeros);
    worst = std::max(worst, distance_sup(fp.q, q_star));
    pass = pass && fp.converged;
  }
  return {"c04", pass && worst <= kTol,
          "gated fixed points n=1..10 vs Q*: worst sup gap " + fmt(worst)};
}

inline CheckResult summarize_properties(const std::string& id,
                                        const std::vector<PropertyResult>& results,
                                        std::size_t expected_results) {
  long long violations = 0;
  long long checks = 0;
  double worst = -std::numeric_limits<double>::infinity();
  for (const PropertyResult& r : results) {
    violations += r.violations;
    checks += r.checks;
    worst = std::max(worst, r.worst);
  }
  const bool pass = results.size() == expected_results && violations == 0;
  return {id, pass,
          std::to_string(results.size()) + " properties, " + std::to_string(checks) +
              " checks, " + std::to_string(violations) + " violations, worst margin " +
              fmt(worst)};
}

inline CheckResult check_c05(const ExperimentConfig&) {
  return summarize_properties("c05", contraction_suite(50, 10, 0), 6);
}

/// The weakened gates lose the optimal fixed point in the promised ways.
inline CheckResult check_c06(const ExperimentConfig&) {
  constexpr double kResidTol = 1e-9;
  constexpr double kGapTol = 1e-8;
  const ThreeFork tf = build_threefork();
  const PolicySet set = fork_set(tf);
  const QTable q_star = q_star_oracle(tf.mdp);

  QTable shifted = q_star;
  for (double& v : shifted.data) v += 1.0;
  const OperatorSpec broken0 = parse_operator("broken:0");
  const QTable applied = make_operator(tf.mdp, set, broken0, 10)(shifted);
  const double resid = sup_diff(applied, shifted);

  const QTable zeros(tf.mdp.num_states, tf.mdp.num_actions);
  const FixedPointReport fp3 = fork_fixed_point(tf, set, "broken:3", 10, zeros);
  const double probe = fp3.q(tf.start, tf.up_action);
  const double star = q_star(tf.start, tf.up_action);
  const bool pass =
      resid <= kResidTol && fp3.converged && probe < star - kGapTol;
  return {"c06", pass,
          "zero-threshold gate keeps Q*+1 fixed (residual " + fmt(resid) +
              "); threshold-3 fixed point " + fmt(probe) + " < Q* " + fmt(star)};
}

inline CheckResult check_c07(const ExperimentConfig&) {
  return summarize_properties("c07", distance_suite(50, 0), 4);
}

inline CheckResult check_c08(const ExperimentConfig&) {
  return summarize_properties("c08", softmax_suite(20, 0), 2);
}

inline CheckResult check_c09(const ExperimentConfig&) {
  return summarize_properties("c09", is_suite(20, 0), 5);
}

inline const ResultRow* find_row(const std::vector<ResultRow>& rows,
                                 const std::string& alg, const std::string& metric,
                                 double x) {
  for (const ResultRow& r : rows)
    if (r.algorithm == alg && r.metric == metric && r.x == x) return &r;
  return nullptr;
}

/// Planner ordering on the gridworld family: the gated planner reaches the
/// oracle values within its error bound using no more sweeps than value
/// iteration, with sample counts on record.
inline CheckResult check_c10(const ExperimentConfig& cfg,
                             const std::vector<ResultRow>& rows) {
  constexpr double kValueTol = 1e-9;  // 10x the 1e-10 stopping bound
  const std::vector<int> rooms = param_int_list(cfg.params, "rooms", {2, 4, 6});
  if (std::set<int>(rooms.begin(), rooms.end()) != std::set<int>{2, 4, 6})
    return {"c10", false, "config must cover rooms {2, 4, 6}"};
  bool pass = true;
  std::string detail;
  for (const int r : rooms) {
    const double x = r;
    const ResultRow* herr = find_row(rows, "highway_vi", "value_error", x);
    const ResultRow* hit = find_row(rows, "highway_vi", "iterations", x);
    const ResultRow* vit = find_row(rows, "vi", "iterations", x);
    const ResultRow* hs = find_row(rows, "highway_vi", "samples", x);
    const ResultRow* vs = find_row(rows, "vi", "samples", x);
    if (!herr || !hit || !vit || !hs || !vs) return {"c10", false, "missing rows"};
    pass = pass && herr->y <= kValueTol && hit->flag == 1 && vit->flag == 1 &&
           hit->y <= vit->y && hs->y > 0 && vs->y > 0;
    detail += (detail.empty() ? "" : "; ") + std::to_string(r) + " rooms: err " +
              fmt(herr->y) + ", iters " + fmt(hit->y) + " vs vi " + fmt(vit->y) +
              ", samples " + fmt(hs->y) + " vs " + fmt(vs->y);
  }
  return {"c10", pass, detail};
}

inline double median_y(std::vector<double> ys) {
  std::sort(ys.begin(), ys.end());
  return nearest_rank(ys, 0.5);
}

/// Learning-curve medians on the delayed-reward toys: the gated learner
/// solves, beats the best classical baseline by at least 2x, and barely
/// grows with the delay, while Q(lambda) degrades monotonically.
inline CheckResult check_c11(const ExperimentConfig& cfg,
                             const std::vector<ResultRow>& rows) {
  const std::vector<std::string> toys =
      param_str_list(cfg.params, "toys", {"choice", "traceback"});
  const std::vector<int> delays = param_int_list(cfg.params, "delays", {6, 12, 18});
  const int budget = static_cast<int>(param_int(cfg.params, "budget", 2000));
  if (std::set<std::string>(toys.begin(), toys.end()) !=
      std::set<std::string>{"choice", "traceback"})
    return {"c11", false, "config must cover both toys"};
  if (delays.size() != 3) return {"c11", false, "config must use three delays"};
  if (cfg.seeds.size() < 20) return {"c11", false, "config must run >= 20 seeds"};

  const std::vector<std::string> baselines = {"q_lambda", "sarsa_lambda",
                                              "monte_carlo"};
  bool pass = true;
  std::string detail;
  for (const std::string& toy : toys) {
    std::map<std::string, std::map<int, double>> med;
    for (const int d : delays) {
      const std::string env_id = toy + ":" + std::to_string(d);
      std::map<std::string, std::vector<double>> ys;
      for (const ResultRow& r : rows)
        if (r.env == env_id && r.metric == "episodes_to_solve" &&
            r.x == static_cast<double>(d))
          ys[r.algorithm].push_back(r.y);
      for (const char* name : {"highway_q", "q_lambda", "sarsa_lambda",
                               "monte_carlo"}) {
        const std::string alg(name);
        if (ys[alg].size() < 20) return {"c11", false, env_id + ": missing " + alg + " rows"};
        med[alg][d] = median_y(ys[alg]);
      }
    }
    const int d_lo = *std::min_element(delays.begin(), delays.end());
    const int d_hi = *std::max_element(delays.begin(), delays.end());
    for (const int d : delays) {
      double best = std::numeric_limits<double>::infinity();
      for (const std::string& b : baselines) best = std::min(best, med[b][d]);
      pass = pass && med["highway_q"][d] < budget && 2.0 * med["highway_q"][d] <= best;
    }
    pass = pass && med["highway_q"][d_hi] <= 2.0 * med["highway_q"][d_lo];
    int prev = d_lo;
    for (const int d : delays)
      if (d != d_lo) {
        pass = pass && med["q_lambda"][prev] <= med["q_lambda"][d];
        prev = d;
      }
    detail += (detail.empty() ? "" : "; ") + toy + " medians highway_q " +
              fmt(med["highway_q"][d_lo]) + "/" + fmt(med["highway_q"][delays[1]]) +
              "/" + fmt(med["highway_q"][d_hi]) + ", best baseline " +
              fmt(std::min({med["q_lambda"][d_hi], med["sarsa_lambda"][d_hi],
                            med["monte_carlo"][d_hi]})) +
              " at delay " + std::to_string(d_hi);
  }
  return {"c11", pass, detail};
}

/// Converged gate choices at the junction approach: shallow for the two
/// poorer commitment policies, deep for the best one.
inline CheckResult check_c12(const ExperimentConfig& cfg,
                             const std::vector<ResultRow>& rows) {
  const int n = static_cast<int>(param_int(cfg.params, "n", 10));
  if (n != 10) return {"c12", false, "config must trace the 10-step gate"};
  double last = 0.0;
  for (const ResultRow& r : rows)
    if (r.metric == "gate_depth") last = std::max(last, r.x);
  const ResultRow* red = find_row(rows, "red", "gate_depth", last);
  const ResultRow* orange = find_row(rows, "orange", "gate_depth", last);
  const ResultRow* blue = find_row(rows, "blue", "gate_depth", last);
  if (!red || !orange || !blue || last == 0.0)
    return {"c12", false, "missing gate-depth rows"};
  const bool pass = red->flag == 1 && red->y == 1.0 && orange->y == 1.0 &&
                    blue->y == 10.0;
  return {"c12", pass,
          "converged gate depths red " + fmt(red->y) + ", orange " + fmt(orange->y) +
              ", blue " + fmt(blue->y)};
}

}  // namespace detail

/// Runs the config, writes its CSV, and evaluates the named acceptance check.
inline CheckResult run_check(const ExperimentConfig& cfg) {
  if (cfg.check.empty())
    throw std::invalid_argument("$.check: required when running a check");
  const std::vector<ResultRow> rows = run(cfg);
  if (cfg.check == "c01") return detail::check_c01(cfg);
  if (cfg.check == "c02") return detail::check_c02(cfg);
  if (cfg.check == "c03") return detail::check_c03(cfg);
  if (cfg.check == "c04") return detail::check_c04(cfg);
  if (cfg.check == "c05") return detail::check_c05(cfg);
  if (cfg.check == "c06") return detail::check_c06(cfg);
  if (cfg.check == "c07") return detail::check_c07(cfg);
  if (cfg.check == "c08") return detail::check_c08(cfg);
  if (cfg.check == "c09") return detail::check_c09(cfg);
  if (cfg.check == "c10") return detail::check_c10(cfg, rows);
  if (cfg.check == "c11") return detail::check_c11(cfg, rows);
  if (cfg.check == "c12") return detail::check_c12(cfg, rows);
  throw std::invalid_argument("$.check: unknown check " + cfg.check);
}

}  // namespace highway
