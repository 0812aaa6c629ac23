#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "highway/baselines.hpp"
#include "highway/envs.hpp"
#include "highway/mdp.hpp"
#include "highway/operators.hpp"
#include "highway/rng.hpp"

namespace highway {

struct PropertyResult {
  std::string name;
  long long checks = 0;
  long long violations = 0;
  double worst = 0.0;  // largest violation margin seen; <= 0 when clean

  void tally(double margin) {
    ++checks;
    if (margin > 0.0) ++violations;
    worst = std::max(worst, margin);
  }
};

namespace detail {

struct PropertyFixture {
  TabularMdp mdp;
  PolicySet policies;  // three random members, uniform selection
  LookaheadSet lookahead = LookaheadSet::range(1, 3);
  QTable q_star;
};

inline PropertyFixture property_fixture(CounterRng rng) {
  PropertyFixture f;
  const int states = 4 + rng.uniform_int(5);
  const int actions = 2 + rng.uniform_int(2);
  const double gamma = 0.5 + 0.45 * rng.uniform01();
  f.mdp = random_mdp(rng, states, actions, gamma);
  std::vector<PolicySpec> members;
  for (int i = 0; i < 3; ++i) members.push_back(random_policy(rng, states, actions));
  f.policies = PolicySet::of(std::move(members));
  f.q_star = q_star_oracle(f.mdp);
  return f;
}

inline HighwayConfig fixture_config(const PropertyFixture& f) {
  HighwayConfig cfg;
  cfg.policies = f.policies;
  cfg.lookahead = f.lookahead;
  return cfg;
}

}  // namespace detail

/// Sup-norm gamma-contraction of the six exact operator maps on random MDPs
/// and random table pairs. The softmax aggregation is excluded here: its
/// self-weighted average is only a contraction anchored at the fixed point,
/// which the softmax suite checks instead.
inline std::vector<PropertyResult> contraction_suite(int num_mdps = 50,
                                                     int pairs_per_mdp = 10,
                                                     std::uint64_t seed = 0) {
  const char* names[6] = {"contraction.bellman_optimality",
                          "contraction.bellman_expectation",
                          "contraction.n_step_return",
                          "contraction.multistep_bo",
                          "contraction.highway_generalized",
                          "contraction.highway_optimality"};
  std::vector<PropertyResult> out(6);
  for (int i = 0; i < 6; ++i) out[i].name = names[i];

  CounterRng root(seed);
  for (int i = 0; i < num_mdps; ++i) {
    CounterRng rng = root.child("mdp").child(i);
    const detail::PropertyFixture f = detail::property_fixture(rng);
    const HighwayConfig cfg = detail::fixture_config(f);
    const PolicySpec& pi = f.policies.members.front();
    const std::function<QTable(const QTable&)> ops[6] = {
        [&](const QTable& q) { return bellman_optimality(f.mdp, q); },
        [&](const QTable& q) { return bellman_expectation(f.mdp, pi, q); },
        [&](const QTable& q) { return n_step_return_operator(f.mdp, pi, 3, q); },
        [&](const QTable& q) { return multistep_bo(f.mdp, cfg, q); },
        [&](const QTable& q) { return highway_generalized(f.mdp, cfg, q); },
        [&](const QTable& q) { return highway_optimality(f.mdp, f.policies, f.lookahead, q); },
    };
    for (int p = 0; p < pairs_per_mdp; ++p) {
      const QTable qa = random_q(rng, f.mdp.num_states, f.mdp.num_actions, 2.0);
      const QTable qb = random_q(rng, f.mdp.num_states, f.mdp.num_actions, 2.0);
      const double bound = f.mdp.gamma * sup_diff(qa, qb) + 1e-9;
      for (int k = 0; k < 6; ++k)
        out[k].tally(sup_diff(ops[k](qa), ops[k](qb)) - bound);
    }
  }
  return out;
}

/// Distance comparisons against the optimal table on random MDPs:
/// the gated operator beats both the one-step and the ungated multi-step
/// backup pointwise below the optimum, the max-aggregated operator beats
/// every sampled (policy, depth) distribution pair, the sup-norm distance
/// never exceeds the one-step operator's anywhere, and iterates launched
/// below the optimum stay below it.
inline std::vector<PropertyResult> distance_suite(int num_mdps = 50,
                                                  std::uint64_t seed = 0) {
  std::vector<PropertyResult> out(4);
  out[0].name = "distance.gate_pointwise_dominance";
  out[1].name = "distance.optimality_tightest";
  out[2].name = "distance.supnorm_dominance";
  out[3].name = "distance.below_optimum_closure";

  CounterRng root(seed);
  for (int i = 0; i < num_mdps; ++i) {
    CounterRng rng = root.child("mdp").child(i);
    const detail::PropertyFixture f = detail::property_fixture(rng);
    const HighwayConfig cfg = detail::fixture_config(f);
    const int states = f.mdp.num_states;
    const int actions = f.mdp.num_actions;

    QTable below = f.q_star;
    {
      const QTable noise = random_q(rng, states, actions, 1.0);
      for (std::size_t j = 0; j < below.data.size(); ++j)
        below.data[j] -= std::abs(noise.data[j]);
    }

    const QTable d_h = distance_pointwise(highway_generalized(f.mdp, cfg, below), f.q_star);
    const QTable d_b = distance_pointwise(bellman_optimality(f.mdp, below), f.q_star);
    const QTable d_m = distance_pointwise(multistep_bo(f.mdp, cfg, below), f.q_star);
    for (std::size_t j = 0; j < d_h.data.size(); ++j)
      out[0].tally(d_h.data[j] - std::min(d_b.data[j], d_m.data[j]) - 1e-9);

    const QTable opt_applied = highway_optimality(f.mdp, f.policies, f.lookahead, below);
    const QTable d_opt = distance_pointwise(opt_applied, f.q_star);
    for (int pair = 0; pair < 2; ++pair) {
      HighwayConfig sampled = cfg;
      double sum = 0.0;
      for (double& w : sampled.policies.selection) {
        w = -std::log(1.0 - rng.uniform01());
        sum += w;
      }
      for (double& w : sampled.policies.selection) w /= sum;
      sum = 0.0;
      for (double& w : sampled.lookahead.probs) {
        w = -std::log(1.0 - rng.uniform01());
        sum += w;
      }
      for (double& w : sampled.lookahead.probs) w /= sum;
      const QTable d_g =
          distance_pointwise(highway_generalized(f.mdp, sampled, below), f.q_star);
      for (std::size_t j = 0; j < d_g.data.size(); ++j)
        out[1].tally(d_opt.data[j] - d_g.data[j] - 1e-9);
    }

    const QTable anywhere = random_q(rng, states, actions, 2.0);
    out[2].tally(distance_sup(highway_generalized(f.mdp, cfg, anywhere), f.q_star) -
                 distance_sup(bellman_optimality(f.mdp, anywhere), f.q_star) - 1e-9);

    QTable iterate = below;
    for (int k = 0; k < 30; ++k) {
      iterate = highway_generalized(f.mdp, cfg, iterate);
      double overshoot = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < iterate.data.size(); ++j)
        overshoot = std::max(overshoot, iterate.data[j] - f.q_star.data[j]);
      out[3].tally(overshoot - 1e-9);
    }
  }
  return out;
}

/// Softmax aggregation: contraction toward the optimal table across
/// temperatures, and agreement with the hard-max operator at high
/// temperature.
inline std::vector<PropertyResult> softmax_suite(int num_mdps = 20,
                                                 std::uint64_t seed = 0) {
  std::vector<PropertyResult> out(2);
  out[0].name = "softmax.contraction_to_optimum";
  out[1].name = "softmax.hard_max_limit";

  CounterRng root(seed);
  for (int i = 0; i < num_mdps; ++i) {
    CounterRng rng = root.child("mdp").child(i);
    const detail::PropertyFixture f = detail::property_fixture(rng);
    HighwayConfig cfg = detail::fixture_config(f);
    const QTable q = random_q(rng, f.mdp.num_states, f.mdp.num_actions, 2.0);
    const double radius = distance_sup(q, f.q_star);
    for (const double alpha : {0.01, 1.0, 100.0}) {
      cfg.temperature = alpha;
      out[0].tally(distance_sup(highway_softmax(f.mdp, cfg, q), f.q_star) -
                   f.mdp.gamma * radius - 1e-9);
    }
    cfg.temperature = 1e6;
    out[1].tally(sup_diff(highway_softmax(f.mdp, cfg, q),
                          highway_optimality(f.mdp, f.policies, f.lookahead, q)) -
                 1e-6);
  }
  return out;
}

/// Importance-sampling baselines: the target policy's value table is a fixed
/// point of the corrected multi-step expectation operator and of every trace
/// scheme, and clipped-ratio trace weights decay below 0.01 within 20 steps
/// for lambda = 0.5 under an epsilon-greedy behavior over four actions.
inline std::vector<PropertyResult> is_suite(int num_mdps = 20,
                                            std::uint64_t seed = 0) {
  std::vector<PropertyResult> out(5);
  out[0].name = "is.multistep_fixed_point";
  out[1].name = "is.retrace_fixed_point";
  out[2].name = "is.q_lambda_fixed_point";
  out[3].name = "is.full_is_fixed_point";
  out[4].name = "is.retrace_weight_decay";

  CounterRng root(seed);
  for (int i = 0; i < num_mdps; ++i) {
    CounterRng rng = root.child("mdp").child(i);
    const detail::PropertyFixture f = detail::property_fixture(rng);
    const int states = f.mdp.num_states;
    const int actions = f.mdp.num_actions;
    const PolicySpec target = random_policy(rng, states, actions);
    const QTable q_pi = q_pi_oracle(f.mdp, target);

    HighwayConfig cfg = detail::fixture_config(f);
    out[0].tally(sup_diff(multistep_be_is(f.mdp, target, cfg, q_pi), q_pi) - 1e-8);

    const PolicySpec& behavior = f.policies.members.front();
    const TraceScheme schemes[3] = {TraceScheme::retrace, TraceScheme::q_lambda,
                                    TraceScheme::full_is};
    for (int k = 0; k < 3; ++k) {
      const TraceConfig trace{schemes[k], 0.7};
      out[1 + k].tally(
          sup_diff(trace_operator(f.mdp, target, behavior, trace, 12, q_pi), q_pi) - 1e-8);
    }
  }

  {
    constexpr int kSteps = 25;
    constexpr double kLambda = 0.5;
    constexpr double kEpsilon = 0.2;
    const int states = kSteps + 1;
    QTable greedy_shape(states, 4);
    for (int s = 0; s < states; ++s) greedy_shape(s, 0) = 1.0;
    const PolicySpec target = greedy_policy(greedy_shape);
    const PolicySpec behavior = epsilon_greedy(greedy_shape, kEpsilon);
    std::vector<std::pair<int, int>> trajectory;
    for (int t = 0; t < kSteps; ++t) trajectory.push_back({t, 0});
    const std::vector<double> w =
        retrace_weight_profile(target, behavior, trajectory, kLambda);
    for (std::size_t t = 1; t < w.size(); ++t) out[4].tally(w[t] - w[t - 1]);
    out[4].tally(w[std::min<std::size_t>(20, w.size() - 1)] - 0.01);
  }
  return out;
}

/// Runs a named suite; the empty name runs every suite.
inline std::vector<PropertyResult> run_property_suite(const std::string& name,
                                                      std::uint64_t seed = 0) {
  std::vector<PropertyResult> out;
  const auto append = [&](std::vector<PropertyResult> block) {
    for (auto& r : block) out.push_back(std::move(r));
  };
  bool known = false;
  if (name.empty() || name == "contraction") {
    append(contraction_suite(50, 10, seed));
    known = true;
  }
  if (name.empty() || name == "distance") {
    append(distance_suite(50, seed));
    known = true;
  }
  if (name.empty() || name == "softmax") {
    append(softmax_suite(20, seed));
    known = true;
  }
  if (name.empty() || name == "is") {
    append(is_suite(20, seed));
    known = true;
  }
  if (!known) throw std::invalid_argument("unknown property suite: " + name);
  return out;
}

}  // namespace highway
