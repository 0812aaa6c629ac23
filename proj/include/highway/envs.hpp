#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "highway/mdp.hpp"
#include "highway/rng.hpp"

namespace highway {

struct StepResult {
  int state = 0;
  double reward = 0.0;
  bool done = false;
  bool terminal = false;  // natural termination, as opposed to the horizon cap
};

/// Episodic simulation face of a tabular model. Rewards are observed as
/// r(s, a) plus optional zero-mean two-point noise: per-cell amplitude
/// (the standard deviation) and, optionally, a per-cell skew giving the
/// probability of the positive branch. Skew 0.5 is the plain +/-amplitude
/// coin; skew p draws +amp*sqrt((1-p)/p) with probability p and the
/// compensating negative value otherwise, so mean stays 0 and the standard
/// deviation stays amp. Instances hold per-episode state and are
/// single-threaded; give each concurrent rollout its own copy with an
/// independent random stream.
class EpisodicEnv {
 public:
  TabularMdp mdp;
  int start = 0;
  int horizon = 0;
  QTable reward_noise;  // empty means noiseless
  QTable noise_skew;    // empty means 0.5 everywhere

  void validate() const {
    mdp.validate();
    if (start < 0 || start >= mdp.num_states)
      throw std::invalid_argument("env: start state out of range");
    if (mdp.is_terminal(start))
      throw std::invalid_argument("env: start state is terminal");
    if (horizon < 1) throw std::invalid_argument("env: horizon must be >= 1");
    if (!reward_noise.data.empty()) {
      if (reward_noise.num_states != mdp.num_states ||
          reward_noise.num_actions != mdp.num_actions)
        throw std::invalid_argument("env: reward noise shape mismatch");
      for (const double amp : reward_noise.data)
        if (!(amp >= 0.0) || !std::isfinite(amp))
          throw std::invalid_argument("env: reward noise amplitudes must be finite and >= 0");
    }
    if (!noise_skew.data.empty()) {
      if (reward_noise.data.empty())
        throw std::invalid_argument("env: noise skew without reward noise");
      if (noise_skew.num_states != mdp.num_states ||
          noise_skew.num_actions != mdp.num_actions)
        throw std::invalid_argument("env: noise skew shape mismatch");
      for (const double p : noise_skew.data)
        if (!(p > 0.0) || !(p < 1.0))
          throw std::invalid_argument("env: noise skew must lie strictly in (0, 1)");
    }
  }

  int reset(CounterRng rng) {
    rng_ = rng;
    state_ = start;
    steps_ = 0;
    active_ = true;
    return state_;
  }

  StepResult step(int action) {
    if (!active_) throw std::logic_error("env: step called on a finished episode");
    if (action < 0 || action >= mdp.num_actions)
      throw std::invalid_argument("env: action out of range");
    double reward = mdp.r(state_, action);
    if (!reward_noise.data.empty()) {
      const double amp = reward_noise(state_, action);
      const double p = noise_skew.data.empty() ? 0.5 : noise_skew(state_, action);
      if (amp != 0.0 && p == 0.5) {
        reward += rng_.coin() ? amp : -amp;
      } else if (amp != 0.0) {
        reward += rng_.uniform01() < p ? amp * std::sqrt((1.0 - p) / p)
                                       : -amp * std::sqrt(p / (1.0 - p));
      }
    }
    const auto& row = mdp.next[mdp.sa(state_, action)];
    int next = row.back().first;
    if (row.size() > 1) {
      double u = rng_.uniform01();
      for (const auto& [succ, p] : row) {
        if (u < p) {
          next = succ;
          break;
        }
        u -= p;
      }
    }
    ++steps_;
    const bool terminal = mdp.is_terminal(next);
    const bool done = terminal || steps_ >= horizon;
    state_ = next;
    active_ = !done;
    return {next, reward, done, terminal};
  }

  bool active() const { return active_; }
  int state() const { return state_; }
  int steps_taken() const { return steps_; }

 private:
  CounterRng rng_{0};
  int state_ = 0;
  int steps_ = 0;
  bool active_ = false;
};

// ---------------------------------------------------------------------------
// Three-fork junction chain

struct ThreeForkSpec {
  int corridor_length = 10;  // transitions from start to the distant payouts
  std::array<double, 3> fork_returns{-9.0, 3.0, 9.0};
  double alt_action_return = 5.0;
  std::array<int, 3> payout_steps{2, 10, 10};
};

struct ThreeFork {
  TabularMdp mdp;
  PolicySpec pi_red, pi_orange, pi_blue;
  int start = 0;
  int junction = 1;
  int up_action = 0;   // start action that enters the junction
  int alt_action = 1;  // start action that takes the near exit
};

/// Deterministic undiscounted chain: the start state offers a near exit of
/// middling return, or a junction whose three forks pay distinct returns at
/// fork-specific depths. One deterministic commitment policy per fork.
inline ThreeFork build_threefork(const ThreeForkSpec& spec = {}) {
  if (spec.corridor_length < 2)
    throw std::invalid_argument("threefork: corridor_length must be >= 2");
  for (const int p : spec.payout_steps)
    if (p < 2 || p > spec.corridor_length)
      throw std::invalid_argument("threefork: payout steps must lie in [2, corridor_length]");

  std::array<int, 3> cells{};  // interior states between junction and payout
  std::array<int, 3> first{};
  int next_id = 2;
  for (int f = 0; f < 3; ++f) {
    cells[f] = spec.payout_steps[f] - 2;
    first[f] = next_id;
    next_id += cells[f];
  }
  const int alt_t = next_id;
  const std::array<int, 3> fork_t{next_id + 1, next_id + 2, next_id + 3};
  const int num_states = next_id + 4;

  TabularMdp m(num_states, 3, 1.0);
  m.add_transition(0, 0, 1, 1.0);
  for (int a : {1, 2}) {
    m.add_transition(0, a, alt_t, 1.0);
    m.set_reward(0, a, spec.alt_action_return);
  }
  for (int f = 0; f < 3; ++f) {
    if (cells[f] == 0) {
      m.add_transition(1, f, fork_t[f], 1.0);
      m.set_reward(1, f, spec.fork_returns[f]);
      continue;
    }
    m.add_transition(1, f, first[f], 1.0);
    for (int i = 0; i < cells[f]; ++i) {
      const int s = first[f] + i;
      const bool last = i + 1 == cells[f];
      for (int a = 0; a < 3; ++a) {
        m.add_transition(s, a, last ? fork_t[f] : s + 1, 1.0);
        if (last) m.set_reward(s, a, spec.fork_returns[f]);
      }
    }
  }
  for (const int t : {alt_t, fork_t[0], fork_t[1], fork_t[2]}) m.set_terminal(t);
  m.finalize();

  ThreeFork out;
  out.mdp = std::move(m);
  for (int f = 0; f < 3; ++f) {
    std::vector<int> choice(num_states, 0);
    choice[1] = f;
    PolicySpec pi = PolicySpec::deterministic(num_states, 3, choice);
    (f == 0 ? out.pi_red : f == 1 ? out.pi_orange : out.pi_blue) = std::move(pi);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Two-state chain with hand-checkable values

/// gamma = 1/2. Staying pays nothing, switching pays 1, so V* = (2, 2),
/// Q*(s, switch) = 2, Q*(s, stay) = 1, and the uniform policy earns (1, 1).
inline TabularMdp build_twostate() {
  TabularMdp m(2, 2, 0.5);
  m.add_transition(0, 0, 0, 1.0);
  m.add_transition(0, 1, 1, 1.0);
  m.set_reward(0, 1, 1.0);
  m.add_transition(1, 0, 0, 1.0);
  m.set_reward(1, 0, 1.0);
  m.add_transition(1, 1, 1, 1.0);
  m.finalize();
  return m;
}

// ---------------------------------------------------------------------------
// Multi-room gridworld

inline constexpr int kMultiroomActions = 4;  // up, down, left, right

/// Square rooms in a row, joined by single-cell doors at the middle of each
/// shared wall. Walls absorb movement. Entering the far corner of the last
/// room pays goal_reward and ends the episode; the first traversal of each
/// door pays door_bonus, tracked by folding door-passed bits into the state:
/// state = mask * num_cells + cell, cell = room * size^2 + row * size + col.
/// The start is cell 0 of room 0 with no doors passed, which is state 0.
inline TabularMdp build_multiroom(int num_rooms, int room_size = 5,
                                  double gamma = 0.9,
                                  double goal_reward = 1000.0,
                                  double door_bonus = 0.001) {
  if (num_rooms < 1) throw std::invalid_argument("multiroom: num_rooms must be >= 1");
  if (room_size < 3) throw std::invalid_argument("multiroom: room_size must be >= 3");
  const int doors = num_rooms - 1;
  if (doors > 12) throw std::invalid_argument("multiroom: too many rooms for the door mask");

  const int area = room_size * room_size;
  const int cells = num_rooms * area;
  const int masks = 1 << doors;
  const int mid = room_size / 2;
  const int goal_cell = cells - 1;

  TabularMdp m(masks * cells, kMultiroomActions, gamma);
  const int drow[kMultiroomActions] = {-1, 1, 0, 0};
  const int dcol[kMultiroomActions] = {0, 0, -1, 1};

  for (int mask = 0; mask < masks; ++mask) {
    for (int cell = 0; cell < cells; ++cell) {
      if (cell == goal_cell) continue;
      const int room = cell / area;
      const int row = (cell % area) / room_size;
      const int col = cell % room_size;
      const int s = mask * cells + cell;
      for (int a = 0; a < kMultiroomActions; ++a) {
        int next_cell = cell;
        int door = -1;
        const int nr = row + drow[a];
        const int nc = col + dcol[a];
        if (nr >= 0 && nr < room_size && nc >= 0 && nc < room_size) {
          next_cell = room * area + nr * room_size + nc;
        } else if (row == mid && nc == room_size && room + 1 < num_rooms) {
          next_cell = (room + 1) * area + mid * room_size;
          door = room;
        } else if (row == mid && nc == -1 && room > 0) {
          next_cell = (room - 1) * area + mid * room_size + room_size - 1;
          door = room - 1;
        }
        int next_mask = mask;
        double reward = 0.0;
        if (door >= 0 && !(mask & (1 << door))) {
          next_mask = mask | (1 << door);
          reward += door_bonus;
        }
        if (next_cell == goal_cell) reward += goal_reward;
        m.add_transition(s, a, next_mask * cells + next_cell, 1.0);
        if (reward != 0.0) m.set_reward(s, a, reward);
      }
    }
  }
  for (int mask = 0; mask < masks; ++mask) m.set_terminal(mask * cells + goal_cell);
  m.finalize();
  return m;
}

// ---------------------------------------------------------------------------
// Delayed-reward toy tasks

inline constexpr int kToyBestArm = 1;
inline constexpr double kChoiceMargin = 1.0;      // mean gap between the arms
inline constexpr double kChoiceStepNoise = 3.0;   // per-step distractor deviation
inline constexpr double kChoiceSkew = 0.25;       // bonus-branch probability, better arm
inline constexpr double kChoiceOtherNoise = 1.0;  // coin amplitude, other arm
inline constexpr double kTracebackWin = 1.0;      // first two actions (1, 1)
inline constexpr double kTracebackTrap = -16.0;   // first two actions (1, 0)

/// Undiscounted two-armed corridor of length `delay`. The first action picks
/// an arm; every reward is zero until the final transition, which pays the
/// arm's mean plus zero-mean noise. The better arm has mean kChoiceMargin
/// and a payout that behaves like a sum of per-step distractors settled at
/// the end: its deviation is kChoiceStepNoise * sqrt(delay), skewed so most
/// draws land below the mean and a kChoiceSkew-probability bonus branch
/// compensates. The other arm has mean 0 and a narrow symmetric coin.
inline EpisodicEnv build_choice(int delay) {
  if (delay < 2) throw std::invalid_argument("choice: delay must be >= 2");
  const int terminal = 1 + (delay - 1) * 2;
  TabularMdp m(terminal + 1, 2, 1.0);
  QTable noise(terminal + 1, 2);
  QTable skew(terminal + 1, 2);
  for (double& p : skew.data) p = 0.5;
  const auto arm_state = [](int t, int arm) { return 1 + (t - 1) * 2 + arm; };
  for (int arm = 0; arm < 2; ++arm) {
    m.add_transition(0, arm, arm_state(1, arm), 1.0);
    for (int t = 1; t < delay - 1; ++t)
      for (int a = 0; a < 2; ++a)
        m.add_transition(arm_state(t, arm), a, arm_state(t + 1, arm), 1.0);
    const int last = arm_state(delay - 1, arm);
    const bool best = arm == kToyBestArm;
    for (int a = 0; a < 2; ++a) {
      m.add_transition(last, a, terminal, 1.0);
      m.set_reward(last, a, best ? kChoiceMargin : 0.0);
      noise(last, a) = best ? kChoiceStepNoise * std::sqrt(static_cast<double>(delay))
                            : kChoiceOtherNoise;
      if (best) skew(last, a) = kChoiceSkew;
    }
  }
  m.set_terminal(terminal);
  m.finalize();
  EpisodicEnv env;
  env.mdp = std::move(m);
  env.start = 0;
  env.horizon = delay;
  env.reward_noise = std::move(noise);
  env.noise_skew = std::move(skew);
  return env;
}

/// Undiscounted corridor of length `delay` whose single terminal reward is a
/// deterministic function of the first two actions: (1, 1) pays
/// kTracebackWin, (1, 0) pays kTracebackTrap, and a first action of 0 pays
/// nothing. The state carries the pair until payout.
inline EpisodicEnv build_traceback(int delay) {
  if (delay < 2) throw std::invalid_argument("traceback: delay must be >= 2");
  const int terminal = 3 + (delay - 2) * 4;
  TabularMdp m(terminal + 1, 2, 1.0);
  const auto pair_state = [](int t, int a, int b) { return 3 + (t - 2) * 4 + 2 * a + b; };
  const auto payout = [](int a, int b) {
    if (a != 1) return 0.0;
    return b == 1 ? kTracebackWin : kTracebackTrap;
  };
  for (int a = 0; a < 2; ++a) {
    m.add_transition(0, a, 1 + a, 1.0);
    for (int b = 0; b < 2; ++b) {
      if (delay == 2) {
        m.add_transition(1 + a, b, terminal, 1.0);
        m.set_reward(1 + a, b, payout(a, b));
        continue;
      }
      m.add_transition(1 + a, b, pair_state(2, a, b), 1.0);
      for (int t = 2; t < delay; ++t) {
        const int s = pair_state(t, a, b);
        const bool last = t == delay - 1;
        for (int act = 0; act < 2; ++act) {
          m.add_transition(s, act, last ? terminal : pair_state(t + 1, a, b), 1.0);
          if (last) m.set_reward(s, act, payout(a, b));
        }
      }
    }
  }
  m.set_terminal(terminal);
  m.finalize();
  EpisodicEnv env;
  env.mdp = std::move(m);
  env.start = 0;
  env.horizon = delay;
  return env;
}

// ---------------------------------------------------------------------------
// Delayed-reward wrapper

/// Withholds intermediate rewards and pays the accumulated sum on the
/// transition into a terminal state. The state is augmented with the count of
/// withheld nonzero rewards, which keeps the reward Markov because every
/// nonzero intermediate reward of the wrapped env shares one common value.
/// Episodes cut by the horizon forfeit the withheld sum, matching the model.
/// Requires deterministic transitions, noiseless intermediate rewards, and a
/// single common nonzero intermediate reward value.
inline EpisodicEnv delayed_wrapper(const EpisodicEnv& env) {
  env.validate();
  const TabularMdp& m = env.mdp;
  const bool noisy = !env.reward_noise.data.empty();

  double quantum = 0.0;
  for (int s = 0; s < m.num_states; ++s) {
    if (m.is_terminal(s)) continue;
    for (int a = 0; a < m.num_actions; ++a) {
      const auto& row = m.next[m.sa(s, a)];
      if (row.size() != 1)
        throw std::invalid_argument("delayed_wrapper: transitions must be deterministic");
      if (m.is_terminal(row.front().first)) continue;
      const double r = m.r(s, a);
      if (r != 0.0) {
        if (quantum != 0.0 && std::abs(r - quantum) > 1e-12)
          throw std::invalid_argument(
              "delayed_wrapper: intermediate rewards must share one value");
        quantum = r;
      }
      if (noisy && env.reward_noise(s, a) != 0.0)
        throw std::invalid_argument("delayed_wrapper: intermediate rewards must be noiseless");
    }
  }

  // reachable (state, count) pairs from the start
  constexpr int kCountCap = 4096;
  std::map<std::pair<int, int>, int> id;
  std::vector<std::pair<int, int>> stack{{env.start, 0}};
  id[stack.back()] = -1;
  while (!stack.empty()) {
    const auto [s, c] = stack.back();
    stack.pop_back();
    if (m.is_terminal(s)) continue;
    for (int a = 0; a < m.num_actions; ++a) {
      const int succ = m.next[m.sa(s, a)].front().first;
      int nc = c;
      if (!m.is_terminal(succ) && m.r(s, a) != 0.0) ++nc;
      if (nc >= kCountCap)
        throw std::invalid_argument("delayed_wrapper: reward accumulation does not terminate");
      if (id.emplace(std::pair{succ, nc}, -1).second) stack.push_back({succ, nc});
    }
  }
  int next_id = 0;
  for (auto& [pair, assigned] : id) assigned = next_id++;

  TabularMdp out(next_id, m.num_actions, m.gamma);
  QTable noise(next_id, m.num_actions);
  QTable skew(next_id, m.num_actions);
  const bool skewed = !env.noise_skew.data.empty();
  for (double& p : skew.data) p = 0.5;
  for (const auto& [pair, sid] : id) {
    const auto [s, c] = pair;
    if (m.is_terminal(s)) {
      out.set_terminal(sid);
      continue;
    }
    for (int a = 0; a < m.num_actions; ++a) {
      const int succ = m.next[m.sa(s, a)].front().first;
      const double r = m.r(s, a);
      if (m.is_terminal(succ)) {
        out.add_transition(sid, a, id.at({succ, c}), 1.0);
        out.set_reward(sid, a, c * quantum + r);
        if (noisy) noise(sid, a) = env.reward_noise(s, a);
        if (skewed) skew(sid, a) = env.noise_skew(s, a);
      } else {
        out.add_transition(sid, a, id.at({succ, c + (r != 0.0 ? 1 : 0)}), 1.0);
      }
    }
  }
  out.finalize();

  EpisodicEnv wrapped;
  wrapped.start = id.at({env.start, 0});
  wrapped.mdp = std::move(out);
  wrapped.horizon = env.horizon;
  if (noisy) wrapped.reward_noise = std::move(noise);
  if (skewed) wrapped.noise_skew = std::move(skew);
  return wrapped;
}

}  // namespace highway
