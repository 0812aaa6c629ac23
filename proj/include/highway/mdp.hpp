#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "highway/rng.hpp"

namespace highway {

/// Tolerance for probability-row normalization checks.
inline constexpr double kProbTolerance = 1e-12;

/// Dense state-action value table.
struct QTable {
  int num_states = 0;
  int num_actions = 0;
  std::vector<double> data;

  QTable() = default;
  QTable(int states, int actions, double fill = 0.0)
      : num_states(states),
        num_actions(actions),
        data(static_cast<std::size_t>(states) * actions, fill) {}

  double& operator()(int s, int a) {
    return data[static_cast<std::size_t>(s) * num_actions + a];
  }
  double operator()(int s, int a) const {
    return data[static_cast<std::size_t>(s) * num_actions + a];
  }

  double row_max(int s) const {
    double m = -std::numeric_limits<double>::infinity();
    for (int a = 0; a < num_actions; ++a) m = std::max(m, (*this)(s, a));
    return m;
  }

  /// Lowest index wins ties.
  int row_argmax(int s) const {
    int best = 0;
    for (int a = 1; a < num_actions; ++a)
      if ((*this)(s, a) > (*this)(s, best)) best = a;
    return best;
  }

  bool finite() const {
    for (const double v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }

  bool same_shape(const QTable& o) const {
    return num_states == o.num_states && num_actions == o.num_actions;
  }
};

/// Dense state value table.
using VTable = std::vector<double>;

inline double sup_diff(const QTable& a, const QTable& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i)
    m = std::max(m, std::abs(a.data[i] - b.data[i]));
  return m;
}

inline double sup_diff(const VTable& a, const VTable& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline VTable v_from_q(const QTable& q) {
  VTable v(q.num_states);
  for (int s = 0; s < q.num_states; ++s) v[s] = q.row_max(s);
  return v;
}

/// Finite MDP with sparse successor lists per (s, a). Terminal states
/// self-loop with zero reward; backups treat their value as zero.
struct TabularMdp {
  int num_states = 0;
  int num_actions = 0;
  double gamma = 1.0;
  std::vector<std::uint8_t> terminal;
  std::vector<std::vector<std::pair<int, double>>> next;  // (s, a) -> {(s', p)}
  std::vector<double> reward;                             // (s, a) -> r

  TabularMdp() = default;
  TabularMdp(int states, int actions, double discount)
      : num_states(states),
        num_actions(actions),
        gamma(discount),
        terminal(states, 0),
        next(static_cast<std::size_t>(states) * actions),
        reward(static_cast<std::size_t>(states) * actions, 0.0) {}

  std::size_t sa(int s, int a) const {
    return static_cast<std::size_t>(s) * num_actions + a;
  }
  bool is_terminal(int s) const { return terminal[s] != 0; }
  double r(int s, int a) const { return reward[sa(s, a)]; }

  double p(int s, int a, int s2) const {
    for (const auto& [t, pr] : next[sa(s, a)])
      if (t == s2) return pr;
    return 0.0;
  }

  void add_transition(int s, int a, int s2, double pr) {
    next[sa(s, a)].emplace_back(s2, pr);
  }
  void set_reward(int s, int a, double value) { reward[sa(s, a)] = value; }
  void set_terminal(int s) { terminal[s] = 1; }

  /// Fills the canonical self-loop rows for terminal states and validates.
  void finalize() {
    for (int s = 0; s < num_states; ++s) {
      if (!is_terminal(s)) continue;
      for (int a = 0; a < num_actions; ++a) {
        auto& row = next[sa(s, a)];
        if (row.empty()) row.emplace_back(s, 1.0);
      }
    }
    validate();
  }

  void validate() const;

  /// Expected successor value sum for one (s, a) row.
  double next_value(int s, int a, const VTable& v) const {
    double acc = 0.0;
    for (const auto& [t, pr] : next[sa(s, a)]) acc += pr * v[t];
    return acc;
  }
};

/// True when every policy reaches a terminal state with probability one.
/// Iterates the maximal k-step survival probability u(s); an MDP with a
/// policy that can avoid terminals forever keeps u at exactly one on the
/// trapped states, while in the episodic case u contracts geometrically once
/// every state has escape probability.
inline bool episodic_under_all_policies(const TabularMdp& m) {
  VTable u(m.num_states, 1.0);
  for (int s = 0; s < m.num_states; ++s)
    if (m.is_terminal(s)) u[s] = 0.0;
  const int sweeps = m.num_states + 16;
  for (int k = 0; k < sweeps; ++k) {
    VTable nu(m.num_states, 0.0);
    for (int s = 0; s < m.num_states; ++s) {
      if (m.is_terminal(s)) continue;
      double best = 0.0;
      for (int a = 0; a < m.num_actions; ++a) {
        double surv = 0.0;
        for (const auto& [t, pr] : m.next[m.sa(s, a)])
          if (!m.is_terminal(t)) surv += pr * u[t];
        best = std::max(best, surv);
      }
      nu[s] = best;
    }
    u = std::move(nu);
  }
  double worst = 0.0;
  for (const double x : u) worst = std::max(worst, x);
  return worst < 1.0 - 1e-9;
}

inline void TabularMdp::validate() const {
  if (num_states <= 0 || num_actions <= 0)
    throw std::invalid_argument("mdp: state and action counts must be positive");
  if (!(gamma >= 0.0 && gamma <= 1.0))
    throw std::invalid_argument("mdp: gamma must lie in [0, 1]");
  if (terminal.size() != static_cast<std::size_t>(num_states) ||
      next.size() != reward.size() ||
      next.size() != static_cast<std::size_t>(num_states) * num_actions)
    throw std::invalid_argument("mdp: table shapes disagree with state/action counts");
  for (int s = 0; s < num_states; ++s) {
    for (int a = 0; a < num_actions; ++a) {
      const auto& row = next[sa(s, a)];
      if (!std::isfinite(reward[sa(s, a)]))
        throw std::invalid_argument("mdp: non-finite reward at s=" + std::to_string(s) +
                                    " a=" + std::to_string(a));
      double sum = 0.0;
      for (const auto& [t, pr] : row) {
        if (t < 0 || t >= num_states)
          throw std::invalid_argument("mdp: successor out of range at s=" +
                                      std::to_string(s) + " a=" + std::to_string(a));
        if (pr < 0.0)
          throw std::invalid_argument("mdp: negative probability at s=" +
                                      std::to_string(s) + " a=" + std::to_string(a) +
                                      " s'=" + std::to_string(t));
        sum += pr;
      }
      if (std::abs(sum - 1.0) > kProbTolerance)
        throw std::invalid_argument("mdp: transition row does not sum to one at s=" +
                                    std::to_string(s) + " a=" + std::to_string(a));
      if (is_terminal(s)) {
        if (row.size() != 1 || row[0].first != s)
          throw std::invalid_argument("mdp: terminal state s=" + std::to_string(s) +
                                      " must self-loop");
        if (reward[sa(s, a)] != 0.0)
          throw std::invalid_argument("mdp: terminal state s=" + std::to_string(s) +
                                      " must have zero reward");
      }
    }
  }
  if (gamma == 1.0 && !episodic_under_all_policies(*this))
    throw std::invalid_argument(
        "mdp: gamma = 1 requires termination under every policy");
}

/// Explicit per-state action distribution.
struct PolicySpec {
  int num_states = 0;
  int num_actions = 0;
  std::vector<double> prob;  // (s, a) -> pi(a | s)

  PolicySpec() = default;
  PolicySpec(int states, int actions, double fill = 0.0)
      : num_states(states),
        num_actions(actions),
        prob(static_cast<std::size_t>(states) * actions, fill) {}

  double& operator()(int s, int a) {
    return prob[static_cast<std::size_t>(s) * num_actions + a];
  }
  double operator()(int s, int a) const {
    return prob[static_cast<std::size_t>(s) * num_actions + a];
  }

  static PolicySpec deterministic(int states, int actions,
                                  const std::vector<int>& choice) {
    PolicySpec p(states, actions);
    for (int s = 0; s < states; ++s) p(s, choice[s]) = 1.0;
    return p;
  }

  static PolicySpec uniform(int states, int actions) {
    return PolicySpec(states, actions, 1.0 / actions);
  }

  void validate() const {
    for (int s = 0; s < num_states; ++s) {
      double sum = 0.0;
      for (int a = 0; a < num_actions; ++a) {
        if ((*this)(s, a) < 0.0)
          throw std::invalid_argument("policy: negative probability at s=" +
                                      std::to_string(s));
        sum += (*this)(s, a);
      }
      if (std::abs(sum - 1.0) > kProbTolerance)
        throw std::invalid_argument("policy: row does not sum to one at s=" +
                                    std::to_string(s));
    }
  }
};

/// Ordered policy collection with FIFO eviction and a selection distribution.
struct PolicySet {
  std::vector<PolicySpec> members;
  std::vector<double> selection;
  std::size_t capacity = std::numeric_limits<std::size_t>::max();

  static PolicySet of(std::vector<PolicySpec> policies) {
    PolicySet set;
    set.members = std::move(policies);
    set.reset_uniform_selection();
    return set;
  }

  std::size_t size() const { return members.size(); }
  bool empty() const { return members.empty(); }

  void reset_uniform_selection() {
    selection.assign(members.size(), members.empty() ? 0.0 : 1.0 / members.size());
  }

  /// Appends a policy, evicting the oldest past capacity; the selection
  /// distribution resets to uniform over the survivors.
  void push_fifo(PolicySpec policy) {
    members.push_back(std::move(policy));
    if (members.size() > capacity)
      members.erase(members.begin(),
                    members.begin() + (members.size() - capacity));
    reset_uniform_selection();
  }

  void validate() const {
    if (members.empty()) throw std::invalid_argument("policy set: empty");
    if (selection.size() != members.size())
      throw std::invalid_argument("policy set: selection size mismatch");
    double sum = 0.0;
    for (const double w : selection) {
      if (w < 0.0) throw std::invalid_argument("policy set: negative selection weight");
      sum += w;
    }
    if (std::abs(sum - 1.0) > kProbTolerance)
      throw std::invalid_argument("policy set: selection does not sum to one");
    for (const auto& p : members) p.validate();
  }
};

inline std::vector<int> greedy_actions(const QTable& q) {
  std::vector<int> out(q.num_states);
  for (int s = 0; s < q.num_states; ++s) out[s] = q.row_argmax(s);
  return out;
}

inline PolicySpec greedy_policy(const QTable& q) {
  return PolicySpec::deterministic(q.num_states, q.num_actions, greedy_actions(q));
}

inline PolicySpec epsilon_greedy(const QTable& q, double epsilon) {
  if (!(epsilon >= 0.0 && epsilon <= 1.0))
    throw std::invalid_argument("epsilon_greedy: epsilon must lie in [0, 1]");
  PolicySpec p(q.num_states, q.num_actions, epsilon / q.num_actions);
  for (int s = 0; s < q.num_states; ++s) p(s, q.row_argmax(s)) += 1.0 - epsilon;
  return p;
}

/// Optimal state-action values by value iteration to fixed-point tolerance.
/// Written as its own sweep so it can serve as an independent check on the
/// operator implementations.
inline QTable q_star_oracle(const TabularMdp& m, double tol = 1e-12,
                            int max_iters = 1000000) {
  QTable q(m.num_states, m.num_actions);
  VTable v(m.num_states, 0.0);
  for (int k = 0; k < max_iters; ++k) {
    double resid = 0.0;
    for (int s = 0; s < m.num_states; ++s) v[s] = q.row_max(s);
    for (int s = 0; s < m.num_states; ++s) {
      for (int a = 0; a < m.num_actions; ++a) {
        const double nq =
            m.is_terminal(s) ? 0.0 : m.r(s, a) + m.gamma * m.next_value(s, a, v);
        resid = std::max(resid, std::abs(nq - q(s, a)));
        q(s, a) = nq;
      }
    }
    if (resid <= tol) return q;
  }
  throw std::runtime_error("q_star_oracle: no convergence within iteration budget");
}

/// On-policy state-action values by iterative policy evaluation.
inline QTable q_pi_oracle(const TabularMdp& m, const PolicySpec& pi,
                          double tol = 1e-12, int max_iters = 1000000) {
  QTable q(m.num_states, m.num_actions);
  VTable v(m.num_states, 0.0);
  for (int k = 0; k < max_iters; ++k) {
    double resid = 0.0;
    for (int s = 0; s < m.num_states; ++s) {
      double acc = 0.0;
      for (int a = 0; a < m.num_actions; ++a) acc += pi(s, a) * q(s, a);
      v[s] = acc;
    }
    for (int s = 0; s < m.num_states; ++s) {
      for (int a = 0; a < m.num_actions; ++a) {
        const double nq =
            m.is_terminal(s) ? 0.0 : m.r(s, a) + m.gamma * m.next_value(s, a, v);
        resid = std::max(resid, std::abs(nq - q(s, a)));
        q(s, a) = nq;
      }
    }
    if (resid <= tol) return q;
  }
  throw std::runtime_error("q_pi_oracle: no convergence within iteration budget");
}

inline VTable v_pi_oracle(const TabularMdp& m, const PolicySpec& pi,
                          double tol = 1e-12) {
  const QTable q = q_pi_oracle(m, pi, tol);
  VTable v(m.num_states, 0.0);
  for (int s = 0; s < m.num_states; ++s)
    for (int a = 0; a < m.num_actions; ++a) v[s] += pi(s, a) * q(s, a);
  return v;
}

/// Random dense MDP for property checks: every row is a full Dirichlet draw,
/// rewards are uniform in [-1, 1], no terminal states.
inline TabularMdp random_mdp(CounterRng& rng, int states, int actions,
                             double gamma) {
  TabularMdp m(states, actions, gamma);
  for (int s = 0; s < states; ++s) {
    for (int a = 0; a < actions; ++a) {
      std::vector<double> w(states);
      double sum = 0.0;
      for (int t = 0; t < states; ++t) {
        w[t] = -std::log(1.0 - rng.uniform01());
        sum += w[t];
      }
      for (int t = 0; t < states; ++t) m.add_transition(s, a, t, w[t] / sum);
      m.set_reward(s, a, 2.0 * rng.uniform01() - 1.0);
    }
  }
  m.finalize();
  return m;
}

inline PolicySpec random_policy(CounterRng& rng, int states, int actions) {
  PolicySpec p(states, actions);
  for (int s = 0; s < states; ++s) {
    double sum = 0.0;
    for (int a = 0; a < actions; ++a) {
      p(s, a) = -std::log(1.0 - rng.uniform01());
      sum += p(s, a);
    }
    for (int a = 0; a < actions; ++a) p(s, a) /= sum;
  }
  return p;
}

inline QTable random_q(CounterRng& rng, int states, int actions,
                       double scale = 1.0) {
  QTable q(states, actions);
  for (double& v : q.data) v = scale * (2.0 * rng.uniform01() - 1.0);
  return q;
}

}  // namespace highway
