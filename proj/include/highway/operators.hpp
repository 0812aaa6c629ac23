#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <vector>

#include "highway/mdp.hpp"

namespace highway {

/// Lookahead depth set with a selection distribution.
struct LookaheadSet {
  std::vector<int> depths;
  std::vector<double> probs;

  static LookaheadSet single(int n) { return uniform({n}); }

  static LookaheadSet uniform(std::vector<int> ns) {
    LookaheadSet set;
    set.depths = std::move(ns);
    set.probs.assign(set.depths.size(),
                     set.depths.empty() ? 0.0 : 1.0 / set.depths.size());
    return set;
  }

  static LookaheadSet range(int lo, int hi) {
    std::vector<int> ns;
    for (int n = lo; n <= hi; ++n) ns.push_back(n);
    return uniform(std::move(ns));
  }

  int max_depth() const {
    int m = 0;
    for (const int n : depths) m = std::max(m, n);
    return m;
  }

  void validate() const {
    if (depths.empty()) throw std::invalid_argument("lookahead set: empty");
    if (probs.size() != depths.size())
      throw std::invalid_argument("lookahead set: weight size mismatch");
    double sum = 0.0;
    for (std::size_t i = 0; i < depths.size(); ++i) {
      if (depths[i] < 1)
        throw std::invalid_argument("lookahead set: depths must be >= 1");
      if (probs[i] < 0.0)
        throw std::invalid_argument("lookahead set: negative weight");
      sum += probs[i];
    }
    if (std::abs(sum - 1.0) > kProbTolerance)
      throw std::invalid_argument("lookahead set: weights do not sum to one");
  }
};

enum class Aggregation { expectation, max, smax };

/// Configuration shared by the multi-step operator family. `gate_threshold`
/// is the short branch the gate compares against (1 reproduces the
/// value-preserving gate; 0 and >= 2 are deliberately weakened variants).
struct HighwayConfig {
  PolicySet policies;
  LookaheadSet lookahead;
  int gate_threshold = 1;
  Aggregation policy_aggregation = Aggregation::expectation;
  Aggregation depth_aggregation = Aggregation::expectation;
  double temperature = 1.0;  // smax only
};

struct FixedPointReport {
  QTable q;
  int iterations = 0;
  double residual = 0.0;
  bool converged = false;
  long long samples = 0;
};

/// One-step optimality backup: greedy bootstrap over the successor row.
/// Terminal rows map to zero.
inline QTable bellman_optimality(const TabularMdp& m, const QTable& q) {
  const VTable v = v_from_q(q);
  QTable out(m.num_states, m.num_actions);
  for (int s = 0; s < m.num_states; ++s)
    for (int a = 0; a < m.num_actions; ++a)
      out(s, a) = m.is_terminal(s) ? 0.0 : m.r(s, a) + m.gamma * m.next_value(s, a, v);
  return out;
}

/// One-step expectation backup under `pi`.
inline QTable bellman_expectation(const TabularMdp& m, const PolicySpec& pi,
                                  const QTable& q) {
  VTable v(m.num_states, 0.0);
  for (int s = 0; s < m.num_states; ++s) {
    double acc = 0.0;
    for (int a = 0; a < m.num_actions; ++a) acc += pi(s, a) * q(s, a);
    v[s] = acc;
  }
  QTable out(m.num_states, m.num_actions);
  for (int s = 0; s < m.num_states; ++s)
    for (int a = 0; a < m.num_actions; ++a)
      out(s, a) = m.is_terminal(s) ? 0.0 : m.r(s, a) + m.gamma * m.next_value(s, a, v);
  return out;
}

/// n-step return backup: one optimality backup bootstraps the tail, then
/// n - 1 expectation backups under `pi` roll the head forward.
inline QTable n_step_return_operator(const TabularMdp& m, const PolicySpec& pi,
                                     int n, const QTable& q) {
  if (n < 1) throw std::invalid_argument("n_step_return_operator: n must be >= 1");
  QTable cur = bellman_optimality(m, q);
  for (int k = 1; k < n; ++k) cur = bellman_expectation(m, pi, cur);
  return cur;
}

namespace detail {

/// Self-weighted softmax combiner with max subtraction; weights that
/// underflow to zero are dropped. Infinite temperature degenerates to the
/// plain max.
inline double smax_of(const std::vector<double>& values, double alpha) {
  double top = -std::numeric_limits<double>::infinity();
  for (const double v : values) top = std::max(top, v);
  if (std::isinf(alpha)) return top;
  double wsum = 0.0, acc = 0.0;
  for (const double v : values) {
    const double w = std::exp(alpha * (v - top));
    if (w < 1e-300) continue;
    wsum += w;
    acc += w * v;
  }
  return acc / wsum;
}

enum class GateMode { none, threshold };

/// Shared evaluator for the multi-step family. For each policy it computes
/// the branch tables (B^pi)^(n-1) B q for all needed depths with one forward
/// pass (depths share prefixes), applies the gate, aggregates over depths,
/// then aggregates over policies.
inline QTable apply_multistep(const TabularMdp& m, const PolicySet& policies,
                              const LookaheadSet& look, GateMode gate,
                              int gate_threshold, Aggregation pol_agg,
                              Aggregation dep_agg, double alpha,
                              const QTable& q) {
  policies.validate();
  look.validate();
  if (!q.finite()) throw std::invalid_argument("multistep operator: non-finite input");
  if (gate == GateMode::threshold && gate_threshold < 0)
    throw std::invalid_argument("multistep operator: negative gate threshold");
  if ((pol_agg == Aggregation::smax || dep_agg == Aggregation::smax) &&
      !(alpha > 0.0))
    throw std::invalid_argument("multistep operator: smax needs positive temperature");

  std::vector<int> depths = look.depths;
  std::sort(depths.begin(), depths.end());
  depths.erase(std::unique(depths.begin(), depths.end()), depths.end());
  const bool need_threshold_branch =
      gate == GateMode::threshold && gate_threshold >= 2;
  const QTable base = bellman_optimality(m, q);

  const std::size_t cells = q.data.size();
  const std::size_t np = policies.size();
  // per-policy aggregated tables (for the outer aggregation)
  std::vector<QTable> per_policy(np);

  for (std::size_t pi_idx = 0; pi_idx < np; ++pi_idx) {
    const PolicySpec& pi = policies.members[pi_idx];
    // roll shared prefixes once per policy
    std::vector<QTable> branch(depths.size());
    QTable threshold_tbl;
    {
      QTable cur = base;
      int step = 1;
      std::size_t di = 0;
      const int deepest =
          std::max(depths.back(), need_threshold_branch ? gate_threshold : 1);
      while (true) {
        while (di < depths.size() && depths[di] == step) branch[di++] = cur;
        if (need_threshold_branch && gate_threshold == step) threshold_tbl = cur;
        if (step >= deepest) break;
        cur = bellman_expectation(m, pi, cur);
        ++step;
      }
    }
    if (gate == GateMode::threshold) {
      const QTable* short_branch = &base;  // gate_threshold == 1
      if (gate_threshold == 0) short_branch = &q;
      else if (gate_threshold >= 2) short_branch = &threshold_tbl;
      for (auto& tbl : branch)
        for (std::size_t i = 0; i < cells; ++i)
          tbl.data[i] = std::max(tbl.data[i], short_branch->data[i]);
    }

    // aggregate over depths; look.depths may repeat entries of `depths`
    QTable agg(q.num_states, q.num_actions,
               dep_agg == Aggregation::max ? -std::numeric_limits<double>::infinity()
                                           : 0.0);
    auto branch_of = [&](int n) -> const QTable& {
      const auto it = std::lower_bound(depths.begin(), depths.end(), n);
      return branch[static_cast<std::size_t>(it - depths.begin())];
    };
    if (dep_agg == Aggregation::expectation) {
      for (std::size_t k = 0; k < look.depths.size(); ++k) {
        const QTable& tbl = branch_of(look.depths[k]);
        for (std::size_t i = 0; i < cells; ++i)
          agg.data[i] += look.probs[k] * tbl.data[i];
      }
    } else if (dep_agg == Aggregation::max) {
      for (const int n : look.depths) {
        const QTable& tbl = branch_of(n);
        for (std::size_t i = 0; i < cells; ++i)
          agg.data[i] = std::max(agg.data[i], tbl.data[i]);
      }
    } else {
      std::vector<double> vals(look.depths.size());
      for (std::size_t i = 0; i < cells; ++i) {
        for (std::size_t k = 0; k < look.depths.size(); ++k)
          vals[k] = branch_of(look.depths[k]).data[i];
        agg.data[i] = smax_of(vals, alpha);
      }
    }
    per_policy[pi_idx] = std::move(agg);
  }

  QTable out(q.num_states, q.num_actions,
             pol_agg == Aggregation::max ? -std::numeric_limits<double>::infinity()
                                         : 0.0);
  if (pol_agg == Aggregation::expectation) {
    for (std::size_t pi_idx = 0; pi_idx < np; ++pi_idx)
      for (std::size_t i = 0; i < cells; ++i)
        out.data[i] += policies.selection[pi_idx] * per_policy[pi_idx].data[i];
  } else if (pol_agg == Aggregation::max) {
    for (std::size_t pi_idx = 0; pi_idx < np; ++pi_idx)
      for (std::size_t i = 0; i < cells; ++i)
        out.data[i] = std::max(out.data[i], per_policy[pi_idx].data[i]);
  } else {
    std::vector<double> vals(np);
    for (std::size_t i = 0; i < cells; ++i) {
      for (std::size_t pi_idx = 0; pi_idx < np; ++pi_idx)
        vals[pi_idx] = per_policy[pi_idx].data[i];
      out.data[i] = smax_of(vals, alpha);
    }
  }
  return out;
}

}  // namespace detail

/// Expectation over policies and depths of plain n-step backups (no gate).
/// Its fixed point generally undervalues the optimum when the policy mix is
/// not optimal everywhere it reaches.
inline QTable multistep_bo(const TabularMdp& m, const HighwayConfig& cfg,
                           const QTable& q) {
  return detail::apply_multistep(m, cfg.policies, cfg.lookahead,
                                 detail::GateMode::none, 1,
                                 Aggregation::expectation,
                                 Aggregation::expectation, 0.0, q);
}

/// Expectation over policies and depths of gated backups
/// max{ one-step, n-step }. The gate restores the optimal values as the
/// unique fixed point while keeping the one-step contraction rate.
inline QTable highway_generalized(const TabularMdp& m, const HighwayConfig& cfg,
                                  const QTable& q) {
  if (cfg.gate_threshold != 1)
    throw std::invalid_argument("highway_generalized: gate threshold must be 1");
  return detail::apply_multistep(m, cfg.policies, cfg.lookahead,
                                 detail::GateMode::threshold, 1,
                                 Aggregation::expectation,
                                 Aggregation::expectation, 0.0, q);
}

/// Hard-max aggregation over policies, depths, and the gate; pointwise the
/// tightest member of the family below the optimum.
inline QTable highway_optimality(const TabularMdp& m, const PolicySet& policies,
                                 const LookaheadSet& look, const QTable& q) {
  return detail::apply_multistep(m, policies, look, detail::GateMode::threshold,
                                 1, Aggregation::max, Aggregation::max, 0.0, q);
}

/// Weighted softmax combiner; `alpha` may be +infinity for a hard max.
inline double smax(const std::vector<double>& values, double alpha) {
  if (values.empty()) throw std::invalid_argument("smax: empty value set");
  if (!(alpha > 0.0)) throw std::invalid_argument("smax: temperature must be positive");
  return detail::smax_of(values, alpha);
}

/// Soft aggregation over policies and depths around the gated backups.
inline QTable highway_softmax(const TabularMdp& m, const HighwayConfig& cfg,
                              const QTable& q) {
  return detail::apply_multistep(m, cfg.policies, cfg.lookahead,
                                 detail::GateMode::threshold, 1,
                                 Aggregation::smax, Aggregation::smax,
                                 cfg.temperature, q);
}

/// Gate variants that compare against the wrong short branch. Threshold 0
/// gates against the input table itself (any table above the optimum becomes
/// a fixed point); thresholds >= 2 lose the optimality of the fixed point.
inline QTable broken_gate_variant(const TabularMdp& m, const HighwayConfig& cfg,
                                  const QTable& q) {
  if (cfg.gate_threshold == 1)
    throw std::invalid_argument(
        "broken_gate_variant: threshold 1 is the intact gate");
  return detail::apply_multistep(m, cfg.policies, cfg.lookahead,
                                 detail::GateMode::threshold, cfg.gate_threshold,
                                 Aggregation::expectation,
                                 Aggregation::expectation, 0.0, q);
}

/// Depth the {1, n} gate picks per cell for one policy; ties prefer the deep
/// branch, matching the convention that the long return is kept when it has
/// caught up with the one-step bootstrap.
inline std::vector<int> gate_choices(const TabularMdp& m, const PolicySpec& pi,
                                     int n, const QTable& q) {
  const QTable short_branch = bellman_optimality(m, q);
  const QTable long_branch = n_step_return_operator(m, pi, n, q);
  std::vector<int> out(q.data.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = long_branch.data[i] >= short_branch.data[i] ? n : 1;
  return out;
}

/// Iterates `op` from `q0` until the sup-norm step falls to `tol`. Divergence
/// (non-finite iterates, or residual growth beyond 1000x the first step)
/// yields a non-converged report instead of an exception.
inline FixedPointReport fixed_point(
    const std::function<QTable(const QTable&)>& op, QTable q0,
    double tol = 1e-10, int max_iters = 100000) {
  FixedPointReport rep;
  double first_resid = -1.0;
  QTable prev = std::move(q0);
  for (int k = 1; k <= max_iters; ++k) {
    QTable cur = op(prev);
    const double resid = sup_diff(cur, prev);
    rep.iterations = k;
    rep.residual = resid;
    prev = std::move(cur);
    if (!std::isfinite(resid) || !prev.finite()) {
      rep.q = std::move(prev);
      return rep;  // diverged
    }
    if (resid <= tol) {
      rep.converged = true;
      rep.q = std::move(prev);
      return rep;
    }
    if (first_resid < 0.0) first_resid = resid;
    else if (resid > 1e3 * first_resid) {
      rep.q = std::move(prev);
      return rep;  // diverged
    }
  }
  rep.q = std::move(prev);
  return rep;
}

inline QTable distance_pointwise(const QTable& applied, const QTable& q_star) {
  QTable d(applied.num_states, applied.num_actions);
  for (std::size_t i = 0; i < d.data.size(); ++i)
    d.data[i] = std::abs(applied.data[i] - q_star.data[i]);
  return d;
}

inline double distance_sup(const QTable& applied, const QTable& q_star) {
  return sup_diff(applied, q_star);
}

}  // namespace highway
