#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "highway/mdp.hpp"
#include "highway/operators.hpp"

namespace highway {

enum class TraceScheme { retrace, q_lambda, full_is };

struct TraceConfig {
  TraceScheme scheme = TraceScheme::retrace;
  double lambda = 0.9;
};

namespace detail {

/// Per-step trace factor applied when a transition lands on (s, a).
inline double trace_factor(TraceScheme scheme, double lambda, double target_p,
                           double behavior_p) {
  switch (scheme) {
    case TraceScheme::q_lambda:
      return lambda;
    case TraceScheme::retrace:
      return behavior_p > 0.0 ? lambda * std::min(1.0, target_p / behavior_p)
                              : 0.0;
    case TraceScheme::full_is:
      return behavior_p > 0.0 ? lambda * (target_p / behavior_p) : 0.0;
  }
  return 0.0;
}

/// One application of the weighted state-action kernel
///   (W x)(s, a) = sum_{s'} P(s'|s,a) sum_{a'} pi_b(a'|s') w(s', a') x(s', a')
/// with w the per-step correction. Terminal rows carry no continuation.
inline QTable weighted_kernel(const TabularMdp& m, const PolicySpec& behavior,
                              const QTable& weight_sa, const QTable& x) {
  VTable mixed(m.num_states, 0.0);
  for (int s = 0; s < m.num_states; ++s) {
    double acc = 0.0;
    for (int a = 0; a < m.num_actions; ++a)
      acc += behavior(s, a) * weight_sa(s, a) * x(s, a);
    mixed[s] = acc;
  }
  QTable out(m.num_states, m.num_actions);
  for (int s = 0; s < m.num_states; ++s)
    for (int a = 0; a < m.num_actions; ++a)
      out(s, a) = m.is_terminal(s) ? 0.0 : m.next_value(s, a, mixed);
  return out;
}

inline void check_coverage(const PolicySpec& target, const PolicySpec& behavior) {
  for (int s = 0; s < target.num_states; ++s)
    for (int a = 0; a < target.num_actions; ++a)
      if (target(s, a) > 0.0 && behavior(s, a) <= 0.0)
        throw std::invalid_argument(
            "importance sampling: behavior policy has no support at s=" +
            std::to_string(s) + " a=" + std::to_string(a) +
            " where the target acts");
}

inline QTable is_ratio_table(const PolicySpec& target, const PolicySpec& behavior) {
  QTable ratio(target.num_states, target.num_actions);
  for (int s = 0; s < target.num_states; ++s)
    for (int a = 0; a < target.num_actions; ++a)
      ratio(s, a) = behavior(s, a) > 0.0 ? target(s, a) / behavior(s, a) : 0.0;
  return ratio;
}

}  // namespace detail

/// Off-policy n-step expectation backup with per-step importance ratios,
/// evaluated in exact expectation over behavior-policy trajectories:
///   out(s,a) = E[ sum_k gamma^k rho_{1:k} r_k + gamma^n rho_{1:n} q(s_n,a_n) ].
/// Computed through the ratio-weighted transition kernel, under which the
/// corrections collapse onto the target policy; the fixed point is the target
/// policy's value table for any covered behavior mix.
inline QTable multistep_be_is(const TabularMdp& m, const PolicySpec& target,
                              const HighwayConfig& cfg, const QTable& q) {
  cfg.policies.validate();
  cfg.lookahead.validate();
  target.validate();
  QTable out(m.num_states, m.num_actions);
  for (std::size_t b = 0; b < cfg.policies.size(); ++b) {
    const PolicySpec& behavior = cfg.policies.members[b];
    detail::check_coverage(target, behavior);
    const QTable ratio = detail::is_ratio_table(target, behavior);

    std::vector<int> depths = cfg.lookahead.depths;
    std::sort(depths.begin(), depths.end());
    depths.erase(std::unique(depths.begin(), depths.end()), depths.end());

    // reward_term accumulates sum_{k<n} gamma^k W^k r; tail_n is gamma^n W^n q.
    QTable reward_acc(m.num_states, m.num_actions);
    QTable r_prop(m.num_states, m.num_actions);
    QTable q_prop = q;
    for (int s = 0; s < m.num_states; ++s)
      for (int a = 0; a < m.num_actions; ++a)
        r_prop(s, a) = m.is_terminal(s) ? 0.0 : m.r(s, a);

    std::size_t di = 0;
    double scale = 1.0;  // gamma^k
    for (int k = 0;; ++k) {
      for (std::size_t i = 0; i < reward_acc.data.size(); ++i)
        reward_acc.data[i] += scale * r_prop.data[i];
      // depth n == k + 1 finishes here with tail gamma^n W^n q
      const QTable tail = detail::weighted_kernel(m, behavior, ratio, q_prop);
      while (di < depths.size() && depths[di] == k + 1) {
        const double dn = scale * m.gamma;
        double weight = 0.0;
        for (std::size_t j = 0; j < cfg.lookahead.depths.size(); ++j)
          if (cfg.lookahead.depths[j] == depths[di]) weight += cfg.lookahead.probs[j];
        const double w = cfg.policies.selection[b] * weight;
        for (std::size_t i = 0; i < out.data.size(); ++i)
          out.data[i] += w * (reward_acc.data[i] + dn * tail.data[i]);
        ++di;
      }
      if (di >= depths.size()) break;
      q_prop = tail;
      r_prop = detail::weighted_kernel(m, behavior, ratio, r_prop);
      scale *= m.gamma;
    }
  }
  return out;
}

/// Sup-norm bound on the return mass ignored by truncating an exact trace
/// evaluation at `horizon`.
inline double trace_tail_bound(const TabularMdp& m, int horizon) {
  double rmax = 0.0;
  for (const double r : m.reward) rmax = std::max(rmax, std::abs(r));
  if (m.gamma >= 1.0) return std::numeric_limits<double>::infinity();
  return std::pow(m.gamma, horizon) * rmax / (1.0 - m.gamma);
}

/// General off-policy trace correction in exact expectation:
///   out = q + sum_{t<horizon} gamma^t U^t delta
/// where delta is the expected one-step error against the target bootstrap
/// and U propagates mass under the behavior policy scaled by the per-step
/// trace factor. lambda = 0 collapses to the one-step target backup; the
/// target policy's value table is a fixed point for every scheme.
inline QTable trace_operator(const TabularMdp& m, const PolicySpec& target,
                             const PolicySpec& behavior, const TraceConfig& trace,
                             int horizon, const QTable& q) {
  if (horizon < 1) throw std::invalid_argument("trace_operator: horizon must be >= 1");
  if (!(trace.lambda >= 0.0 && trace.lambda <= 1.0))
    throw std::invalid_argument("trace_operator: lambda must lie in [0, 1]");
  target.validate();
  behavior.validate();
  if (trace.scheme != TraceScheme::q_lambda) detail::check_coverage(target, behavior);

  QTable factor(m.num_states, m.num_actions);
  for (int s = 0; s < m.num_states; ++s)
    for (int a = 0; a < m.num_actions; ++a)
      factor(s, a) = detail::trace_factor(trace.scheme, trace.lambda,
                                          target(s, a), behavior(s, a));

  // expected TD error under the target bootstrap
  VTable v_target(m.num_states, 0.0);
  for (int s = 0; s < m.num_states; ++s) {
    double acc = 0.0;
    for (int a = 0; a < m.num_actions; ++a) acc += target(s, a) * q(s, a);
    v_target[s] = acc;
  }
  QTable delta(m.num_states, m.num_actions);
  for (int s = 0; s < m.num_states; ++s)
    for (int a = 0; a < m.num_actions; ++a) {
      const double backup =
          m.is_terminal(s) ? 0.0 : m.r(s, a) + m.gamma * m.next_value(s, a, v_target);
      delta(s, a) = backup - q(s, a);
    }

  QTable out = q;
  QTable prop = delta;
  double scale = 1.0;
  for (int t = 0;; ++t) {
    for (std::size_t i = 0; i < out.data.size(); ++i)
      out.data[i] += scale * prop.data[i];
    if (t + 1 >= horizon) break;
    prop = detail::weighted_kernel(m, behavior, factor, prop);
    scale *= m.gamma;
  }
  return out;
}

/// Cumulative per-step trace products along a recorded (s, a) trajectory.
/// Entry 0 is the empty product; entry t multiplies the factors of steps
/// 1..t. Clipped-ratio traces therefore decay at least geometrically in
/// lambda once the behavior policy is no likelier than the target.
inline std::vector<double> retrace_weight_profile(
    const PolicySpec& target, const PolicySpec& behavior,
    const std::vector<std::pair<int, int>>& trajectory, double lambda) {
  std::vector<double> out;
  out.reserve(trajectory.size());
  double acc = 1.0;
  for (std::size_t t = 0; t < trajectory.size(); ++t) {
    if (t > 0) {
      const auto& [s, a] = trajectory[t];
      acc *= detail::trace_factor(TraceScheme::retrace, lambda, target(s, a),
                                  behavior(s, a));
    }
    out.push_back(acc);
  }
  return out;
}

}  // namespace highway
