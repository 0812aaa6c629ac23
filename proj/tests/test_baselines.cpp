#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <utility>
#include <vector>

#include "highway/baselines.hpp"
#include "highway/mdp.hpp"
#include "highway/operators.hpp"
#include "highway/rng.hpp"

using namespace highway;
using Catch::Matchers::ContainsSubstring;

namespace {

struct OffPolicyFixture {
  TabularMdp m;
  PolicySpec target;
  PolicySpec behavior;
  QTable q;
};

OffPolicyFixture off_policy_fixture(std::uint64_t key) {
  CounterRng rng(key);
  OffPolicyFixture f;
  f.m = random_mdp(rng, 5, 3, 0.8);
  f.target = random_policy(rng, 5, 3);
  f.behavior = random_policy(rng, 5, 3);
  f.q = random_q(rng, 5, 3, 2.0);
  return f;
}

HighwayConfig behavior_config(const OffPolicyFixture& f, LookaheadSet look) {
  HighwayConfig cfg;
  cfg.policies = PolicySet::of({f.behavior});
  cfg.lookahead = std::move(look);
  return cfg;
}

}  // namespace

TEST_CASE("ratio-corrected n-step backup equals the on-policy composition",
          "[baselines]") {
  const OffPolicyFixture f = off_policy_fixture(21);
  for (const int n : {1, 2, 4}) {
    const QTable corrected =
        multistep_be_is(f.m, f.target, behavior_config(f, LookaheadSet::single(n)), f.q);
    QTable composed = f.q;
    for (int k = 0; k < n; ++k) composed = bellman_expectation(f.m, f.target, composed);
    REQUIRE(sup_diff(corrected, composed) <= 1e-10);
  }
}

TEST_CASE("ratio-corrected backup averages depths and behaviors", "[baselines]") {
  const OffPolicyFixture f = off_policy_fixture(22);
  CounterRng rng(220);
  HighwayConfig cfg;
  cfg.policies = PolicySet::of({f.behavior, random_policy(rng, 5, 3)});
  cfg.lookahead = LookaheadSet::uniform({2, 3});
  const QTable out = multistep_be_is(f.m, f.target, cfg, f.q);
  QTable manual(5, 3);
  for (const int n : {2, 3}) {
    QTable composed = f.q;
    for (int k = 0; k < n; ++k) composed = bellman_expectation(f.m, f.target, composed);
    for (std::size_t i = 0; i < manual.data.size(); ++i)
      manual.data[i] += 0.5 * composed.data[i];
  }
  REQUIRE(sup_diff(out, manual) <= 1e-10);
}

TEST_CASE("ratio-corrected backup fixes the target policy's values", "[baselines]") {
  const OffPolicyFixture f = off_policy_fixture(23);
  const QTable q_target = q_pi_oracle(f.m, f.target);
  const QTable out =
      multistep_be_is(f.m, f.target, behavior_config(f, LookaheadSet::range(1, 5)), q_target);
  REQUIRE(sup_diff(out, q_target) <= 1e-9);
}

TEST_CASE("coverage failures name the offending state-action pair", "[baselines]") {
  const OffPolicyFixture f = off_policy_fixture(24);
  PolicySpec hole = f.behavior;
  for (int a = 0; a < 3; ++a) hole(2, a) = a == 0 ? 1.0 : 0.0;
  REQUIRE(f.target(2, 1) > 0.0);
  HighwayConfig cfg;
  cfg.policies = PolicySet::of({hole});
  cfg.lookahead = LookaheadSet::single(2);
  REQUIRE_THROWS_WITH(multistep_be_is(f.m, f.target, cfg, f.q),
                      ContainsSubstring("s=2 a=1"));
}

TEST_CASE("trace schemes collapse to the one-step target backup at lambda zero",
          "[baselines]") {
  const OffPolicyFixture f = off_policy_fixture(25);
  const QTable one_step = bellman_expectation(f.m, f.target, f.q);
  for (const TraceScheme scheme :
       {TraceScheme::retrace, TraceScheme::q_lambda, TraceScheme::full_is}) {
    const QTable out =
        trace_operator(f.m, f.target, f.behavior, {scheme, 0.0}, 8, f.q);
    REQUIRE(sup_diff(out, one_step) <= 1e-12);
  }
}

TEST_CASE("full importance sampling at lambda one telescopes to the deep backup",
          "[baselines]") {
  const OffPolicyFixture f = off_policy_fixture(26);
  const int horizon = 4;
  const QTable out =
      trace_operator(f.m, f.target, f.behavior, {TraceScheme::full_is, 1.0}, horizon, f.q);
  QTable composed = f.q;
  for (int k = 0; k < horizon; ++k) composed = bellman_expectation(f.m, f.target, composed);
  REQUIRE(sup_diff(out, composed) <= 1e-10);
}

TEST_CASE("trace operators fix the target policy's values", "[baselines]") {
  const OffPolicyFixture f = off_policy_fixture(27);
  const QTable q_target = q_pi_oracle(f.m, f.target);
  for (const TraceScheme scheme :
       {TraceScheme::retrace, TraceScheme::q_lambda, TraceScheme::full_is}) {
    const QTable out =
        trace_operator(f.m, f.target, f.behavior, {scheme, 0.7}, 12, q_target);
    REQUIRE(sup_diff(out, q_target) <= 1e-9);
  }
}

TEST_CASE("trace operator validates its arguments", "[baselines]") {
  const OffPolicyFixture f = off_policy_fixture(28);
  REQUIRE_THROWS_WITH(
      trace_operator(f.m, f.target, f.behavior, {TraceScheme::retrace, 1.5}, 8, f.q),
      ContainsSubstring("lambda"));
  REQUIRE_THROWS_WITH(
      trace_operator(f.m, f.target, f.behavior, {TraceScheme::retrace, 0.5}, 0, f.q),
      ContainsSubstring("horizon"));

  PolicySpec hole = f.behavior;
  for (int a = 0; a < 3; ++a) hole(1, a) = a == 2 ? 1.0 : 0.0;
  REQUIRE(f.target(1, 0) > 0.0);
  REQUIRE_THROWS_WITH(
      trace_operator(f.m, f.target, hole, {TraceScheme::full_is, 0.5}, 8, f.q),
      ContainsSubstring("no support"));
  // the lambda-only scheme needs no coverage
  const QTable out = trace_operator(f.m, f.target, hole, {TraceScheme::q_lambda, 0.5}, 8, f.q);
  REQUIRE(out.finite());
}

TEST_CASE("truncation tail bound shrinks geometrically", "[baselines]") {
  const OffPolicyFixture f = off_policy_fixture(29);
  const double h8 = trace_tail_bound(f.m, 8);
  const double h16 = trace_tail_bound(f.m, 16);
  REQUIRE(h8 > 0.0);
  REQUIRE(h16 == Catch::Approx(h8 * std::pow(f.m.gamma, 8)).epsilon(1e-12));

  TabularMdp undiscounted(1, 1, 1.0);
  undiscounted.set_terminal(0);
  undiscounted.finalize();
  REQUIRE(std::isinf(trace_tail_bound(undiscounted, 8)));
}

TEST_CASE("clipped trace weights start at one and decay under a greedy target",
          "[baselines]") {
  const int states = 6;
  const int actions = 4;
  PolicySpec target = PolicySpec::deterministic(states, actions, std::vector<int>(states, 0));
  PolicySpec behavior(states, actions, 0.2 / actions);
  for (int s = 0; s < states; ++s) behavior(s, 0) += 0.8;

  std::vector<std::pair<int, int>> on_target;
  for (int t = 0; t < 10; ++t) on_target.push_back({t % states, 0});
  const std::vector<double> w = retrace_weight_profile(target, behavior, on_target, 0.5);
  REQUIRE(w.size() == on_target.size());
  REQUIRE(w[0] == 1.0);
  for (std::size_t t = 1; t < w.size(); ++t) {
    REQUIRE(w[t] == Catch::Approx(std::pow(0.5, t)).epsilon(1e-12));
    REQUIRE(w[t] <= w[t - 1]);
  }

  // one off-target step kills the remaining weight entirely
  std::vector<std::pair<int, int>> broken = on_target;
  broken[3].second = 1;
  const std::vector<double> wb = retrace_weight_profile(target, behavior, broken, 0.5);
  for (std::size_t t = 3; t < wb.size(); ++t) REQUIRE(wb[t] == 0.0);
}
