#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <set>
#include <vector>

#include "highway/envs.hpp"
#include "highway/mdp.hpp"
#include "highway/rng.hpp"

using namespace highway;
using Catch::Matchers::ContainsSubstring;

TEST_CASE("three-fork junction pays its advertised returns", "[envs]") {
  const ThreeFork tf = build_threefork();
  tf.mdp.validate();
  const QTable q_star = q_star_oracle(tf.mdp);
  REQUIRE(q_star(tf.start, tf.up_action) == Catch::Approx(9.0).margin(1e-10));
  REQUIRE(q_star(tf.start, tf.alt_action) == Catch::Approx(5.0).margin(1e-10));

  const QTable q_red = q_pi_oracle(tf.mdp, tf.pi_red);
  const QTable q_orange = q_pi_oracle(tf.mdp, tf.pi_orange);
  const QTable q_blue = q_pi_oracle(tf.mdp, tf.pi_blue);
  REQUIRE(q_red(tf.start, tf.up_action) == Catch::Approx(-9.0).margin(1e-10));
  REQUIRE(q_orange(tf.start, tf.up_action) == Catch::Approx(3.0).margin(1e-10));
  REQUIRE(q_blue(tf.start, tf.up_action) == Catch::Approx(9.0).margin(1e-10));
}

TEST_CASE("three-fork commitment policies pay out at their depths", "[envs]") {
  const ThreeFork tf = build_threefork();
  EpisodicEnv env;
  env.mdp = tf.mdp;
  env.start = tf.start;
  env.horizon = 32;

  const auto run = [&](const PolicySpec& pi) {
    env.reset(CounterRng(0));
    int steps = 0;
    double payout = 0.0;
    int s = tf.start;
    while (env.active()) {
      int a = 0;
      for (int cand = 0; cand < 3; ++cand)
        if (pi(s, cand) == 1.0) a = cand;
      const StepResult r = env.step(a);
      payout += r.reward;
      s = r.state;
      ++steps;
    }
    return std::pair<int, double>{steps, payout};
  };

  REQUIRE(run(tf.pi_red) == std::pair<int, double>{2, -9.0});
  REQUIRE(run(tf.pi_orange) == std::pair<int, double>{10, 3.0});
  REQUIRE(run(tf.pi_blue) == std::pair<int, double>{10, 9.0});
}

TEST_CASE("three-fork builder rejects inconsistent shapes", "[envs]") {
  ThreeForkSpec bad;
  bad.payout_steps = {2, 10, 11};  // beyond the corridor
  REQUIRE_THROWS_WITH(build_threefork(bad), ContainsSubstring("payout steps"));
  bad = ThreeForkSpec{};
  bad.corridor_length = 1;
  REQUIRE_THROWS_WITH(build_threefork(bad), ContainsSubstring("corridor_length"));
}

TEST_CASE("multi-room grid pays the goal at the shortest-path discount", "[envs]") {
  const TabularMdp one = build_multiroom(1);
  one.validate();
  REQUIRE(one.num_states == 25);
  const VTable v = v_from_q(q_star_oracle(one));
  // (0,0) to (4,4) takes 8 moves; the goal reward lands on the 8th
  REQUIRE(v[0] == Catch::Approx(1000.0 * std::pow(0.9, 7)).margin(1e-8));

  const TabularMdp two = build_multiroom(2);
  two.validate();
  REQUIRE(two.num_states == 2 * 2 * 25);
  const VTable v2 = v_from_q(q_star_oracle(two));
  // 13 moves through the door; the first door crossing adds its bonus on move 7
  const double expected = 0.001 * std::pow(0.9, 6) + 1000.0 * std::pow(0.9, 12);
  REQUIRE(v2[0] == Catch::Approx(expected).margin(1e-8));
}

TEST_CASE("multi-room walls absorb and doors open both ways", "[envs]") {
  const TabularMdp m = build_multiroom(2);
  const int cells = 50;
  // moving up from the start corner stays put
  REQUIRE(m.p(0, 0, 0) == 1.0);
  // door cell of room 0: middle row, rightmost column
  const int door0 = 2 * 5 + 4;
  const int door1 = 25 + 2 * 5;  // entry cell of room 1
  REQUIRE(m.p(door0, 3, 1 * cells + door1) == 1.0);  // right, door bit set
  REQUIRE(m.r(door0, 3) == Catch::Approx(0.001));
  REQUIRE(m.r(1 * cells + door0, 3) == 0.0);  // second crossing pays nothing
  REQUIRE(m.p(1 * cells + door1, 2, 1 * cells + door0) == 1.0);  // back left
  REQUIRE_THROWS_AS(build_multiroom(0), std::invalid_argument);
  REQUIRE_THROWS_AS(build_multiroom(2, 2), std::invalid_argument);
}

TEST_CASE("choice corridor hides a one-unit margin under wide noise", "[envs]") {
  EpisodicEnv env = build_choice(6);
  env.validate();
  REQUIRE(env.horizon == 6);
  const QTable q_star = q_star_oracle(env.mdp);
  REQUIRE(q_star(0, kToyBestArm) == Catch::Approx(kChoiceMargin).margin(1e-10));
  REQUIRE(q_star(0, 1 - kToyBestArm) == Catch::Approx(0.0).margin(1e-10));

  // rewards are zero until the final transition, which carries the noise;
  // the better arm's two-point payout usually dips below zero, with the rare
  // bonus branch restoring the one-unit mean
  const double amp = kChoiceStepNoise * std::sqrt(6.0);
  const double bonus = amp * std::sqrt((1.0 - kChoiceSkew) / kChoiceSkew);
  const double dip = amp * std::sqrt(kChoiceSkew / (1.0 - kChoiceSkew));
  REQUIRE(kChoiceMargin - dip < 0.0);
  REQUIRE(kChoiceSkew * bonus == Catch::Approx((1.0 - kChoiceSkew) * dip));

  int bonuses = 0, dips = 0;
  double mean = 0.0;
  const int trials = 4000;
  for (int trial = 0; trial < trials; ++trial) {
    env.reset(CounterRng(trial));
    std::vector<double> rewards;
    while (env.active()) rewards.push_back(env.step(kToyBestArm).reward);
    REQUIRE(rewards.size() == 6);
    for (std::size_t t = 0; t + 1 < rewards.size(); ++t) REQUIRE(rewards[t] == 0.0);
    const double last = rewards.back();
    if (last == Catch::Approx(kChoiceMargin + bonus)) ++bonuses;
    if (last == Catch::Approx(kChoiceMargin - dip)) ++dips;
    mean += last / trials;
  }
  REQUIRE(bonuses + dips == trials);
  REQUIRE(bonuses == Catch::Approx(kChoiceSkew * trials).epsilon(0.15));
  REQUIRE(mean == Catch::Approx(kChoiceMargin).margin(0.5));

  REQUIRE_THROWS_AS(build_choice(1), std::invalid_argument);
}

TEST_CASE("traceback pays a deterministic function of the first two actions",
          "[envs]") {
  for (const int delay : {2, 6}) {
    EpisodicEnv env = build_traceback(delay);
    env.validate();
    const QTable q_star = q_star_oracle(env.mdp);
    REQUIRE(v_from_q(q_star)[0] == Catch::Approx(kTracebackWin).margin(1e-10));
    REQUIRE(q_star(0, 1) == Catch::Approx(kTracebackWin).margin(1e-10));
    REQUIRE(q_star(0, 0) == Catch::Approx(0.0).margin(1e-10));
    // committing to (1, 0) walks into the trap
    REQUIRE(q_star(1 + 1, 0) == Catch::Approx(kTracebackTrap).margin(1e-10));

    const auto play = [&](int first, int second) {
      env.reset(CounterRng(0));
      double total = env.step(first).reward;
      total += env.step(second).reward;
      while (env.active()) total += env.step(0).reward;
      return total;
    };
    REQUIRE(play(1, 1) == kTracebackWin);
    REQUIRE(play(1, 0) == kTracebackTrap);
    REQUIRE(play(0, 1) == 0.0);
  }
}

TEST_CASE("episodes cut at the horizon without claiming termination", "[envs]") {
  EpisodicEnv env = build_choice(8);
  env.horizon = 3;
  env.reset(CounterRng(1));
  StepResult last{};
  while (env.active()) last = env.step(0);
  REQUIRE(env.steps_taken() == 3);
  REQUIRE(last.done);
  REQUIRE_FALSE(last.terminal);
  REQUIRE_THROWS_AS(env.step(0), std::logic_error);
  REQUIRE_THROWS_AS([&] { env.reset(CounterRng(1)); return env.step(9); }(),
                    std::invalid_argument);
}

TEST_CASE("episodic env validation catches bad wiring", "[envs]") {
  EpisodicEnv env = build_choice(4);
  env.start = env.mdp.num_states - 1;  // the terminal
  REQUIRE_THROWS_WITH(env.validate(), ContainsSubstring("terminal"));
  env = build_choice(4);
  env.horizon = 0;
  REQUIRE_THROWS_WITH(env.validate(), ContainsSubstring("horizon"));
  env = build_choice(4);
  env.reward_noise(1, 0) = -1.0;
  REQUIRE_THROWS_WITH(env.validate(), ContainsSubstring("noise"));
  env = build_choice(4);
  env.noise_skew(1, 0) = 1.0;
  REQUIRE_THROWS_WITH(env.validate(), ContainsSubstring("skew"));
}

TEST_CASE("delay wrapper defers intermediate rewards to the end", "[envs]") {
  // four-state chain with two mid-corridor payments of the same quantum
  TabularMdp chain(5, 2, 1.0);
  for (int s = 0; s < 4; ++s)
    for (int a = 0; a < 2; ++a) chain.add_transition(s, a, s + 1, 1.0);
  chain.set_reward(0, 0, 0.5);
  chain.set_reward(0, 1, 0.5);
  chain.set_reward(2, 0, 0.5);
  chain.set_reward(2, 1, 0.5);
  chain.set_reward(3, 0, 2.0);
  chain.set_reward(3, 1, 2.0);
  chain.set_terminal(4);
  chain.finalize();
  EpisodicEnv env;
  env.mdp = chain;
  env.start = 0;
  env.horizon = 4;

  const EpisodicEnv wrapped = delayed_wrapper(env);
  wrapped.validate();
  REQUIRE(v_from_q(q_star_oracle(wrapped.mdp))[wrapped.start] ==
          Catch::Approx(3.0).margin(1e-12));

  // the wrapped episode pays everything on the terminal transition
  EpisodicEnv sim = wrapped;
  sim.reset(CounterRng(0));
  std::vector<double> rewards;
  while (sim.active()) rewards.push_back(sim.step(0).reward);
  REQUIRE(rewards.size() == 4);
  REQUIRE(rewards[0] == 0.0);
  REQUIRE(rewards[1] == 0.0);
  REQUIRE(rewards[2] == 0.0);
  REQUIRE(rewards[3] == 3.0);

  // cutting before the end forfeits the withheld sum
  EpisodicEnv cut = wrapped;
  cut.horizon = 2;
  cut.reset(CounterRng(0));
  double total = 0.0;
  while (cut.active()) total += cut.step(0).reward;
  REQUIRE(total == 0.0);
}

TEST_CASE("delay wrapper preserves undiscounted returns per episode", "[envs]") {
  TabularMdp chain(5, 2, 1.0);
  for (int s = 0; s < 4; ++s) {
    chain.add_transition(s, 0, s + 1, 1.0);
    chain.add_transition(s, 1, s == 3 ? 4 : s + 1, 1.0);
  }
  chain.set_reward(1, 0, 0.25);
  chain.set_reward(2, 1, 0.25);
  chain.set_reward(3, 0, -1.0);
  chain.set_reward(3, 1, 5.0);
  chain.set_terminal(4);
  chain.finalize();
  EpisodicEnv env;
  env.mdp = chain;
  env.start = 0;
  env.horizon = 4;
  const EpisodicEnv wrapped = delayed_wrapper(env);

  CounterRng action_rng(99);
  for (int episode = 0; episode < 200; ++episode) {
    EpisodicEnv a = env;
    EpisodicEnv b = wrapped;
    a.reset(CounterRng(episode));
    b.reset(CounterRng(episode));
    double ra = 0.0, rb = 0.0;
    while (a.active()) {
      const int act = action_rng.uniform_int(2);
      ra += a.step(act).reward;
      rb += b.step(act).reward;
    }
    REQUIRE(ra == rb);
  }
}

TEST_CASE("delay wrapper shifts discounted values by the deferral", "[envs]") {
  const TabularMdp two = build_multiroom(2);
  EpisodicEnv env;
  env.mdp = two;
  env.start = 0;
  env.horizon = 200;
  const EpisodicEnv wrapped = delayed_wrapper(env);
  const VTable v = v_from_q(q_star_oracle(wrapped.mdp));
  // the door bonus now rides along to the goal transition
  const double expected = (1000.0 + 0.001) * std::pow(0.9, 12);
  REQUIRE(v[wrapped.start] == Catch::Approx(expected).margin(1e-8));
}

TEST_CASE("delay wrapper is the identity when nothing is withheld", "[envs]") {
  const EpisodicEnv env = build_traceback(6);
  const EpisodicEnv wrapped = delayed_wrapper(env);
  REQUIRE(wrapped.mdp.num_states == env.mdp.num_states);
  REQUIRE(wrapped.start == env.start);
  REQUIRE(sup_diff(q_star_oracle(wrapped.mdp), q_star_oracle(env.mdp)) == 0.0);

  const EpisodicEnv noisy = build_choice(5);
  const EpisodicEnv wrapped_noisy = delayed_wrapper(noisy);
  REQUIRE(wrapped_noisy.reward_noise.data == noisy.reward_noise.data);
  REQUIRE(wrapped_noisy.noise_skew.data == noisy.noise_skew.data);
}

TEST_CASE("delay wrapper rejects unsupported structure", "[envs]") {
  CounterRng rng(31);
  EpisodicEnv stochastic;
  stochastic.mdp = random_mdp(rng, 4, 2, 0.9);
  stochastic.start = 0;
  stochastic.horizon = 8;
  REQUIRE_THROWS_WITH(delayed_wrapper(stochastic), ContainsSubstring("deterministic"));

  TabularMdp mixed(4, 1, 1.0);
  for (int s = 0; s < 3; ++s) mixed.add_transition(s, 0, s + 1, 1.0);
  mixed.set_reward(0, 0, 0.5);
  mixed.set_reward(1, 0, 0.75);  // second distinct intermediate value
  mixed.set_terminal(3);
  mixed.finalize();
  EpisodicEnv env;
  env.mdp = mixed;
  env.start = 0;
  env.horizon = 3;
  REQUIRE_THROWS_WITH(delayed_wrapper(env), ContainsSubstring("share one value"));
}
