#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "highway/envs.hpp"
#include "highway/mdp.hpp"
#include "highway/operators.hpp"
#include "highway/rng.hpp"

namespace highway {

// ---------------------------------------------------------------------------
// Model-based planning

/// Sample counts tally model queries: reading the successor distribution of
/// one (s, a) row counts as one query.
struct PlanningReport {
  VTable v;
  long long iterations = 0;
  double residual = std::numeric_limits<double>::infinity();
  bool converged = false;
  long long samples = 0;
  std::vector<double> residual_log;
  std::vector<std::vector<int>> policy_set_log;  // policy ids per iteration
};

namespace detail {

/// Dense one-step backup of a state-value table; one row per (s, a).
inline QTable value_backup(const TabularMdp& m, const VTable& v) {
  QTable out(m.num_states, m.num_actions);
  for (int s = 0; s < m.num_states; ++s)
    for (int a = 0; a < m.num_actions; ++a)
      out(s, a) = m.is_terminal(s) ? 0.0 : m.r(s, a) + m.gamma * m.next_value(s, a, v);
  return out;
}

/// Expectation backup of v under pi, touching only supported actions.
/// Adds the number of queried rows to `samples`.
inline VTable policy_value_backup(const TabularMdp& m, const PolicySpec& pi,
                                  const VTable& v, long long& samples) {
  VTable out(m.num_states, 0.0);
  for (int s = 0; s < m.num_states; ++s) {
    if (m.is_terminal(s)) continue;
    double acc = 0.0;
    for (int a = 0; a < m.num_actions; ++a) {
      const double p = pi(s, a);
      if (p == 0.0) continue;
      acc += p * (m.r(s, a) + m.gamma * m.next_value(s, a, v));
      ++samples;
    }
    out[s] = acc;
  }
  return out;
}

}  // namespace detail

inline PlanningReport value_iteration(const TabularMdp& m, double tol = 1e-10,
                                      long long max_iters = 100000) {
  if (!(tol > 0.0)) throw std::invalid_argument("value_iteration: tol must be > 0");
  PlanningReport rep;
  rep.v.assign(m.num_states, 0.0);
  for (long long k = 1; k <= max_iters; ++k) {
    const QTable back = detail::value_backup(m, rep.v);
    rep.samples += static_cast<long long>(m.num_states) * m.num_actions;
    VTable next(m.num_states);
    for (int s = 0; s < m.num_states; ++s) next[s] = back.row_max(s);
    rep.residual = sup_diff(next, rep.v);
    rep.v = std::move(next);
    rep.iterations = k;
    rep.residual_log.push_back(rep.residual);
    if (rep.residual <= tol) {
      rep.converged = true;
      break;
    }
  }
  return rep;
}

/// Policy iteration with truncated evaluation: eval_depth expectation sweeps
/// under the current greedy policy, then one improvement pass. Stops once the
/// improvement pass moves the value table by at most tol.
inline PlanningReport policy_iteration(const TabularMdp& m, int eval_depth = 10,
                                       double tol = 1e-10,
                                       long long max_iters = 100000) {
  if (eval_depth < 1) throw std::invalid_argument("policy_iteration: eval_depth must be >= 1");
  if (!(tol > 0.0)) throw std::invalid_argument("policy_iteration: tol must be > 0");
  PlanningReport rep;
  rep.v.assign(m.num_states, 0.0);
  PolicySpec pi = PolicySpec::deterministic(m.num_states, m.num_actions,
                                            std::vector<int>(m.num_states, 0));
  for (long long k = 1; k <= max_iters; ++k) {
    for (int sweep = 0; sweep < eval_depth; ++sweep)
      rep.v = detail::policy_value_backup(m, pi, rep.v, rep.samples);
    const QTable back = detail::value_backup(m, rep.v);
    rep.samples += static_cast<long long>(m.num_states) * m.num_actions;
    VTable next(m.num_states);
    std::vector<int> choice(m.num_states);
    for (int s = 0; s < m.num_states; ++s) {
      next[s] = back.row_max(s);
      choice[s] = back.row_argmax(s);
    }
    pi = PolicySpec::deterministic(m.num_states, m.num_actions, choice);
    rep.residual = sup_diff(next, rep.v);
    rep.v = std::move(next);
    rep.iterations = k;
    rep.residual_log.push_back(rep.residual);
    if (rep.residual <= tol) {
      rep.converged = true;
      break;
    }
  }
  return rep;
}

struct HviParams {
  double error_bound = 1e-10;
  int policy_set_capacity = 5;
  int policy_add_interval = 7;
  LookaheadSet lookahead = LookaheadSet::range(1, 10);
  long long max_iters = 100000;

  void validate() const {
    if (!(error_bound > 0.0)) throw std::invalid_argument("hvi: error_bound must be > 0");
    if (policy_set_capacity < 1) throw std::invalid_argument("hvi: capacity must be >= 1");
    if (policy_add_interval < 1) throw std::invalid_argument("hvi: add interval must be >= 1");
    lookahead.validate();
  }
};

/// Highway value iteration. Every policy_add_interval iterations the current
/// one-step greedy policy joins a FIFO set (uniform selection); each sweep
/// replaces V with the expectation over (policy, depth) of the gated
/// deep-versus-shallow backup max{ BV, (B^pi)^(n-1) BV }.
inline PlanningReport highway_value_iteration(const TabularMdp& m, const HviParams& params) {
  params.validate();
  PlanningReport rep;
  rep.v.assign(m.num_states, 0.0);
  PolicySet set;
  set.capacity = static_cast<std::size_t>(params.policy_set_capacity);
  std::vector<int> ids;
  int next_policy_id = 0;
  const int max_depth = params.lookahead.max_depth();

  for (long long k = 1; k <= params.max_iters; ++k) {
    const QTable back = detail::value_backup(m, rep.v);
    rep.samples += static_cast<long long>(m.num_states) * m.num_actions;
    VTable bv(m.num_states);
    for (int s = 0; s < m.num_states; ++s) bv[s] = back.row_max(s);

    if ((k - 1) % params.policy_add_interval == 0) {
      std::vector<int> choice(m.num_states);
      for (int s = 0; s < m.num_states; ++s) choice[s] = back.row_argmax(s);
      set.push_fifo(PolicySpec::deterministic(m.num_states, m.num_actions, choice));
      ids.push_back(next_policy_id++);
      if (ids.size() > set.members.size()) ids.erase(ids.begin());
    }
    rep.policy_set_log.push_back(ids);

    VTable out(m.num_states, 0.0);
    for (std::size_t p = 0; p < set.members.size(); ++p) {
      VTable acc(m.num_states, 0.0);
      VTable cur = bv;
      for (std::size_t j = 0; j < params.lookahead.depths.size(); ++j)
        if (params.lookahead.depths[j] == 1)
          for (int s = 0; s < m.num_states; ++s)
            acc[s] += params.lookahead.probs[j] * bv[s];
      for (int depth = 2; depth <= max_depth; ++depth) {
        cur = detail::policy_value_backup(m, set.members[p], cur, rep.samples);
        for (std::size_t j = 0; j < params.lookahead.depths.size(); ++j)
          if (params.lookahead.depths[j] == depth)
            for (int s = 0; s < m.num_states; ++s)
              acc[s] += params.lookahead.probs[j] * std::max(bv[s], cur[s]);
      }
      for (int s = 0; s < m.num_states; ++s) out[s] += set.selection[p] * acc[s];
    }
    if (set.members.empty()) out = bv;

    rep.residual = sup_diff(out, rep.v);
    rep.v = std::move(out);
    rep.iterations = k;
    rep.residual_log.push_back(rep.residual);
    if (rep.residual <= params.error_bound) {
      rep.converged = true;
      break;
    }
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Episode bookkeeping shared by the model-free learners

struct Transition {
  int state = 0;
  int action = 0;
  double reward = 0.0;
  int next = 0;
  bool terminal = false;
};

using Episode = std::vector<Transition>;

struct LearningLog {
  QTable q;
  std::vector<double> greedy_returns;  // exact greedy-policy return after each episode
  long long episodes = 0;
  long long env_steps = 0;
  long long solved_at = -1;  // first index of the solve streak; -1 means unsolved
};

struct SolveCriterion {
  double optimal_return = 0.0;
  double tol = 1e-6;
  int streak = 10;
};

/// First episode index at which `streak` consecutive greedy evaluations reach
/// the optimal return within tol, or -1 if that never happens.
inline long long episodes_to_solve(const std::vector<double>& greedy_returns,
                                   const SolveCriterion& criterion) {
  int run = 0;
  for (std::size_t i = 0; i < greedy_returns.size(); ++i) {
    if (greedy_returns[i] >= criterion.optimal_return - criterion.tol) {
      if (++run == criterion.streak)
        return static_cast<long long>(i) - criterion.streak + 1;
    } else {
      run = 0;
    }
  }
  return -1;
}

namespace detail {

/// Exact greedy-return evaluator against the env's own model.
class SolveTracker {
 public:
  SolveTracker(const EpisodicEnv& env, double tol, int streak) : env_(env) {
    const QTable q_star = q_star_oracle(env.mdp);
    criterion_.optimal_return = q_star.row_max(env.start);
    criterion_.tol = tol;
    criterion_.streak = streak;
  }

  /// Records one evaluation; returns true once the streak is complete.
  bool record(const QTable& q, LearningLog& log) {
    const PolicySpec pi = greedy_policy(q);
    const VTable v = v_pi_oracle(env_.mdp, pi);
    log.greedy_returns.push_back(v[env_.start]);
    log.solved_at = episodes_to_solve(log.greedy_returns, criterion_);
    return log.solved_at >= 0;
  }

  const SolveCriterion& criterion() const { return criterion_; }

 private:
  const EpisodicEnv& env_;
  SolveCriterion criterion_;
};

inline int epsilon_greedy_action(const QTable& q, int s, double epsilon, CounterRng& rng) {
  if (rng.uniform01() < epsilon) return rng.uniform_int(q.num_actions);
  return q.row_argmax(s);
}

inline Episode rollout(EpisodicEnv& env, const QTable& q, double epsilon,
                       CounterRng env_rng, CounterRng action_rng) {
  Episode ep;
  int s = env.reset(env_rng);
  while (env.active()) {
    const int a = epsilon_greedy_action(q, s, epsilon, action_rng);
    const StepResult r = env.step(a);
    ep.push_back({s, a, r.reward, r.state, r.terminal});
    s = r.state;
  }
  return ep;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Highway Q-learning

/// Episodes tagged by the index of the policy that produced them, with a
/// suffix index (policy, s, a) -> (episode, offset) and a flat visit buffer
/// over all stored steps. Episodes are immutable once added.
class TrajectoryStore {
 public:
  TrajectoryStore(int num_states, int num_actions)
      : num_actions_(num_actions), per_sa_policies_(static_cast<std::size_t>(num_states) * num_actions) {}

  int add_policy() {
    suffix_.emplace_back();
    return static_cast<int>(suffix_.size()) - 1;
  }

  void add_episode(int policy, Episode ep) {
    const int e = static_cast<int>(episodes_.size());
    for (int t = 0; t < static_cast<int>(ep.size()); ++t) {
      const int key = ep[t].state * num_actions_ + ep[t].action;
      auto& refs = suffix_[policy][key];
      if (refs.empty()) per_sa_policies_[key].push_back(policy);
      refs.push_back({e, t});
      visit_buffer_.push_back({e, t});
    }
    episodes_.push_back(std::move(ep));
    episode_policy_.push_back(policy);
  }

  const Episode& episode(int e) const { return episodes_[e]; }
  int episode_count() const { return static_cast<int>(episodes_.size()); }
  int policy_count() const { return static_cast<int>(suffix_.size()); }
  const std::vector<std::pair<int, int>>& visits() const { return visit_buffer_; }

  const std::vector<int>& policies_with(int s, int a) const {
    return per_sa_policies_[static_cast<std::size_t>(s) * num_actions_ + a];
  }

  const std::vector<std::pair<int, int>>& refs(int policy, int s, int a) const {
    static const std::vector<std::pair<int, int>> kEmpty;
    const auto& index = suffix_[policy];
    const auto it = index.find(s * num_actions_ + a);
    return it == index.end() ? kEmpty : it->second;
  }

 private:
  int num_actions_;
  std::vector<Episode> episodes_;
  std::vector<int> episode_policy_;
  std::vector<std::map<int, std::vector<std::pair<int, int>>>> suffix_;
  std::vector<std::vector<int>> per_sa_policies_;
  std::vector<std::pair<int, int>> visit_buffer_;
};

struct HqlParams {
  int lookahead_cap = 0;  // 0 = every depth up to the end of each suffix
  int policy_batch = 3;
  int rollout_epochs = 1;
  int run_epochs = 4000;
  int update_epochs = 0;  // 0 = one update per step collected in the round
  double epsilon = 0.2;
  double solve_tol = 1e-6;
  int solve_streak = 10;

  void validate() const {
    if (lookahead_cap < 0) throw std::invalid_argument("hql: lookahead_cap must be >= 0");
    if (policy_batch < 1) throw std::invalid_argument("hql: policy_batch must be >= 1");
    if (rollout_epochs < 1) throw std::invalid_argument("hql: rollout_epochs must be >= 1");
    if (run_epochs < 1) throw std::invalid_argument("hql: run_epochs must be >= 1");
    if (update_epochs < 0) throw std::invalid_argument("hql: update_epochs must be >= 0");
    if (!(epsilon >= 0.0 && epsilon <= 1.0))
      throw std::invalid_argument("hql: epsilon must lie in [0, 1]");
    if (!(solve_tol > 0.0)) throw std::invalid_argument("hql: solve_tol must be > 0");
    if (solve_streak < 1) throw std::invalid_argument("hql: solve_streak must be >= 1");
  }
};

namespace detail {

/// Empirical n-step returns of one stored suffix for every depth 1..cap,
/// accumulated into sums. Depths beyond the suffix reuse its full return;
/// a suffix that reaches a terminal transition is grounded, otherwise the
/// final depth bootstraps at the cut state.
inline void accumulate_suffix_returns(const Episode& ep, int offset, double gamma,
                                      const QTable& q, int cap, std::vector<double>& sums) {
  const int len = static_cast<int>(ep.size()) - offset;
  const int reach = std::min(cap, len);
  double partial = 0.0;
  double scale = 1.0;
  for (int n = 1; n <= reach; ++n) {
    const Transition& tr = ep[offset + n - 1];
    partial += scale * tr.reward;
    scale *= gamma;
    double g = partial;
    if (n < len || !tr.terminal) g += scale * q.row_max(tr.next);
    sums[n - 1] += g;
  }
  if (reach < cap) {
    const Transition& tail = ep[offset + len - 1];
    double g = partial;
    if (!tail.terminal) g += scale * q.row_max(tail.next);
    for (int n = reach + 1; n <= cap; ++n) sums[n - 1] += g;
  }
}

}  // namespace detail

/// Tabular highway Q-learning. Each round rolls out a fresh epsilon-greedy
/// policy, indexes its episodes, then performs sampled updates that assign
/// Q(s, a) the best empirical gated return across a sampled batch of stored
/// policies and every admissible lookahead depth. Greedy progress is
/// evaluated exactly against the env model after every episode's round.
inline LearningLog highway_q_learning(const EpisodicEnv& env, const HqlParams& params,
                                      std::uint64_t seed) {
  env.validate();
  params.validate();
  const TabularMdp& m = env.mdp;
  CounterRng master(seed);
  EpisodicEnv sim = env;
  TrajectoryStore store(m.num_states, m.num_actions);
  detail::SolveTracker tracker(env, params.solve_tol, params.solve_streak);

  LearningLog log;
  log.q = QTable(m.num_states, m.num_actions);
  long long episode_counter = 0;
  bool solved = false;

  for (int round = 0; round < params.run_epochs && !solved; ++round) {
    const int policy = store.add_policy();
    int collected = 0;
    for (int e = 0; e < params.rollout_epochs; ++e) {
      Episode ep = detail::rollout(sim, log.q, params.epsilon,
                                   master.child("episode").child(episode_counter),
                                   master.child("explore").child(episode_counter));
      ++episode_counter;
      log.env_steps += static_cast<long long>(ep.size());
      collected += static_cast<int>(ep.size());
      store.add_episode(policy, std::move(ep));
    }

    const int updates = params.update_epochs > 0 ? params.update_epochs : collected;
    CounterRng pick = master.child("pick").child(round);
    CounterRng batch_rng = master.child("batch").child(round);
    for (int u = 0; u < updates; ++u) {
      const auto& visits = store.visits();
      const auto [e, t] = visits[pick.uniform_int(static_cast<int>(visits.size()))];
      const Transition& head = store.episode(e)[t];
      const int s = head.state;
      const int a = head.action;

      std::vector<int> eligible = store.policies_with(s, a);
      const int take = std::min<int>(params.policy_batch, static_cast<int>(eligible.size()));
      for (int i = 0; i < take; ++i) {
        const int j = i + batch_rng.uniform_int(static_cast<int>(eligible.size()) - i);
        std::swap(eligible[i], eligible[j]);
      }

      double target = -std::numeric_limits<double>::infinity();
      for (int i = 0; i < take; ++i) {
        const auto& refs = store.refs(eligible[i], s, a);
        int cap = 0;
        for (const auto& [re, rt] : refs)
          cap = std::max(cap, static_cast<int>(store.episode(re).size()) - rt);
        if (params.lookahead_cap > 0) cap = std::min(cap, params.lookahead_cap);
        std::vector<double> sums(cap, 0.0);
        for (const auto& [re, rt] : refs)
          detail::accumulate_suffix_returns(store.episode(re), rt, m.gamma, log.q, cap, sums);
        for (const double sum : sums)
          target = std::max(target, sum / static_cast<double>(refs.size()));
      }
      log.q(s, a) = target;
    }

    log.episodes = episode_counter;
    for (int e = 0; e < params.rollout_epochs && !solved; ++e)
      solved = tracker.record(log.q, log);
  }
  return log;
}

// ---------------------------------------------------------------------------
// Classical model-free baselines

struct AgentParams {
  double alpha = 0.1;
  double mc_alpha = 0.1;  // Monte Carlo moving-average coefficient
  double epsilon = 0.2;
  double lambda = 0.9;
  int nstep = 5;
  int max_episodes = 4000;
  double solve_tol = 1e-6;
  int solve_streak = 10;

  void validate() const {
    if (!(alpha > 0.0 && alpha <= 1.0)) throw std::invalid_argument("agent: alpha must lie in (0, 1]");
    if (!(mc_alpha > 0.0 && mc_alpha <= 1.0))
      throw std::invalid_argument("agent: mc_alpha must lie in (0, 1]");
    if (!(epsilon >= 0.0 && epsilon <= 1.0))
      throw std::invalid_argument("agent: epsilon must lie in [0, 1]");
    if (!(lambda >= 0.0 && lambda <= 1.0))
      throw std::invalid_argument("agent: lambda must lie in [0, 1]");
    if (nstep < 1) throw std::invalid_argument("agent: nstep must be >= 1");
    if (max_episodes < 1) throw std::invalid_argument("agent: max_episodes must be >= 1");
    if (!(solve_tol > 0.0)) throw std::invalid_argument("agent: solve_tol must be > 0");
    if (solve_streak < 1) throw std::invalid_argument("agent: solve_streak must be >= 1");
  }
};

namespace detail {

template <typename PerEpisode>
LearningLog run_agent(const EpisodicEnv& env, const AgentParams& params,
                      std::uint64_t seed, PerEpisode&& per_episode) {
  env.validate();
  params.validate();
  CounterRng master(seed);
  EpisodicEnv sim = env;
  SolveTracker tracker(env, params.solve_tol, params.solve_streak);

  LearningLog log;
  log.q = QTable(env.mdp.num_states, env.mdp.num_actions);
  for (int k = 0; k < params.max_episodes; ++k) {
    per_episode(sim, log.q, master.child("episode").child(k), master.child("explore").child(k));
    log.env_steps += sim.steps_taken();
    log.episodes = k + 1;
    if (tracker.record(log.q, log)) break;
  }
  return log;
}

}  // namespace detail

/// Watkins Q(lambda): accumulating traces, cut to zero whenever the step
/// taken is non-greedy for the current table.
inline LearningLog q_lambda_agent(const EpisodicEnv& env, const AgentParams& params,
                                  std::uint64_t seed) {
  const double gamma = env.mdp.gamma;
  return detail::run_agent(env, params, seed,
                           [&, gamma](EpisodicEnv& sim, QTable& q, CounterRng env_rng, CounterRng act_rng) {
    QTable trace(q.num_states, q.num_actions);
    int s = sim.reset(env_rng);
    while (sim.active()) {
      const int a = detail::epsilon_greedy_action(q, s, params.epsilon, act_rng);
      const bool greedy = q(s, a) == q.row_max(s);
      const StepResult r = sim.step(a);
      const double bootstrap = r.terminal ? 0.0 : gamma * q.row_max(r.state);
      const double delta = r.reward + bootstrap - q(s, a);
      trace(s, a) += 1.0;
      for (std::size_t i = 0; i < q.data.size(); ++i) {
        q.data[i] += params.alpha * delta * trace.data[i];
        trace.data[i] *= greedy ? gamma * params.lambda : 0.0;
      }
      s = r.state;
    }
  });
}

/// SARSA(lambda) with accumulating traces.
inline LearningLog sarsa_lambda_agent(const EpisodicEnv& env, const AgentParams& params,
                                      std::uint64_t seed) {
  const double gamma = env.mdp.gamma;
  return detail::run_agent(env, params, seed,
                           [&, gamma](EpisodicEnv& sim, QTable& q, CounterRng env_rng, CounterRng act_rng) {
    QTable trace(q.num_states, q.num_actions);
    int s = sim.reset(env_rng);
    int a = detail::epsilon_greedy_action(q, s, params.epsilon, act_rng);
    while (sim.active()) {
      const StepResult r = sim.step(a);
      const int next_a = r.terminal ? 0 : detail::epsilon_greedy_action(q, r.state, params.epsilon, act_rng);
      const double bootstrap = r.terminal ? 0.0 : gamma * q(r.state, next_a);
      const double delta = r.reward + bootstrap - q(s, a);
      trace(s, a) += 1.0;
      for (std::size_t i = 0; i < q.data.size(); ++i) {
        q.data[i] += params.alpha * delta * trace.data[i];
        trace.data[i] *= gamma * params.lambda;
      }
      s = r.state;
      a = next_a;
    }
  });
}

/// Every-visit Monte Carlo: Q is an exponential moving average of observed
/// episode returns, coefficient mc_alpha.
inline LearningLog monte_carlo_agent(const EpisodicEnv& env, const AgentParams& params,
                                     std::uint64_t seed) {
  const double gamma = env.mdp.gamma;
  return detail::run_agent(env, params, seed,
                           [&, gamma](EpisodicEnv& sim, QTable& q, CounterRng env_rng, CounterRng act_rng) {
    const Episode ep = detail::rollout(sim, q, params.epsilon, env_rng, act_rng);
    double g = 0.0;
    const Transition& tail = ep.back();
    if (!tail.terminal) g = q.row_max(tail.next);  // truncated episode
    for (int t = static_cast<int>(ep.size()) - 1; t >= 0; --t) {
      g = ep[t].reward + gamma * g;
      q(ep[t].state, ep[t].action) += params.mc_alpha * (g - q(ep[t].state, ep[t].action));
    }
  });
}

/// n-step Q-learning: after each episode, every visited (s, a) moves toward
/// its n-step return with a greedy bootstrap, in time order.
inline LearningLog n_step_q_agent(const EpisodicEnv& env, const AgentParams& params,
                                  std::uint64_t seed) {
  const double gamma = env.mdp.gamma;
  return detail::run_agent(env, params, seed,
                           [&, gamma](EpisodicEnv& sim, QTable& q, CounterRng env_rng, CounterRng act_rng) {
    const Episode ep = detail::rollout(sim, q, params.epsilon, env_rng, act_rng);
    const int len = static_cast<int>(ep.size());
    for (int t = 0; t < len; ++t) {
      const int reach = std::min(params.nstep, len - t);
      double g = 0.0;
      double scale = 1.0;
      for (int j = 0; j < reach; ++j) {
        g += scale * ep[t + j].reward;
        scale *= gamma;
      }
      const Transition& last = ep[t + reach - 1];
      if (!(reach == len - t && last.terminal)) g += scale * q.row_max(last.next);
      q(ep[t].state, ep[t].action) += params.alpha * (g - q(ep[t].state, ep[t].action));
    }
  });
}

}  // namespace highway
