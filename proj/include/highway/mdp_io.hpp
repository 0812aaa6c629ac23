#pragma once

#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "highway/mdp.hpp"

namespace highway {

/// Serializes an MDP to the interchange schema: scalar counts and gamma, a
/// terminal-state list, and sparse `transitions` / `rewards` entry lists.
/// Terminal self-loops and zero rewards are implied and not written.
inline nlohmann::json mdp_to_json(const TabularMdp& m) {
  nlohmann::json j;
  j["num_states"] = m.num_states;
  j["num_actions"] = m.num_actions;
  j["gamma"] = m.gamma;
  auto terminal = nlohmann::json::array();
  for (int s = 0; s < m.num_states; ++s)
    if (m.is_terminal(s)) terminal.push_back(s);
  j["terminal"] = std::move(terminal);
  auto transitions = nlohmann::json::array();
  auto rewards = nlohmann::json::array();
  for (int s = 0; s < m.num_states; ++s) {
    if (m.is_terminal(s)) continue;
    for (int a = 0; a < m.num_actions; ++a) {
      for (const auto& [t, p] : m.next[m.sa(s, a)])
        transitions.push_back({{"s", s}, {"a", a}, {"s'", t}, {"p", p}});
      if (m.r(s, a) != 0.0)
        rewards.push_back({{"s", s}, {"a", a}, {"r", m.r(s, a)}});
    }
  }
  j["transitions"] = std::move(transitions);
  j["rewards"] = std::move(rewards);
  return j;
}

inline TabularMdp mdp_from_json(const nlohmann::json& j) {
  for (const char* key : {"num_states", "num_actions", "gamma", "terminal",
                          "transitions", "rewards"})
    if (!j.contains(key))
      throw std::invalid_argument(std::string("mdp file: missing field '") + key + "'");
  const int states = j["num_states"].get<int>();
  const int actions = j["num_actions"].get<int>();
  TabularMdp m(states, actions, j["gamma"].get<double>());
  if (states <= 0 || actions <= 0)
    throw std::invalid_argument("mdp file: state and action counts must be positive");
  std::size_t idx = 0;
  for (const auto& t : j["terminal"]) {
    const int s = t.get<int>();
    if (s < 0 || s >= states)
      throw std::invalid_argument("mdp file: terminal[" + std::to_string(idx) +
                                  "] out of range");
    m.set_terminal(s);
    ++idx;
  }
  idx = 0;
  for (const auto& e : j["transitions"]) {
    const std::string at = "transitions[" + std::to_string(idx) + "]";
    for (const char* key : {"s", "a", "s'", "p"})
      if (!e.contains(key))
        throw std::invalid_argument("mdp file: " + at + " missing '" + key + "'");
    const int s = e["s"].get<int>();
    const int a = e["a"].get<int>();
    const int s2 = e["s'"].get<int>();
    if (s < 0 || s >= states || a < 0 || a >= actions || s2 < 0 || s2 >= states)
      throw std::invalid_argument("mdp file: " + at + " index out of range");
    if (m.is_terminal(s))
      throw std::invalid_argument("mdp file: " + at +
                                  " names terminal state s=" + std::to_string(s));
    if (m.p(s, a, s2) != 0.0)
      throw std::invalid_argument("mdp file: " + at + " duplicates entry s=" +
                                  std::to_string(s) + " a=" + std::to_string(a) +
                                  " s'=" + std::to_string(s2));
    m.add_transition(s, a, s2, e["p"].get<double>());
    ++idx;
  }
  idx = 0;
  for (const auto& e : j["rewards"]) {
    const std::string at = "rewards[" + std::to_string(idx) + "]";
    for (const char* key : {"s", "a", "r"})
      if (!e.contains(key))
        throw std::invalid_argument("mdp file: " + at + " missing '" + key + "'");
    const int s = e["s"].get<int>();
    const int a = e["a"].get<int>();
    if (s < 0 || s >= states || a < 0 || a >= actions)
      throw std::invalid_argument("mdp file: " + at + " index out of range");
    if (m.is_terminal(s))
      throw std::invalid_argument("mdp file: " + at +
                                  " names terminal state s=" + std::to_string(s));
    m.set_reward(s, a, e["r"].get<double>());
    ++idx;
  }
  m.finalize();
  return m;
}

inline void save_mdp(const TabularMdp& m, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << mdp_to_json(m).dump(2) << "\n";
}

inline TabularMdp load_mdp(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument("mdp file: parse error in " + path + ": " + e.what());
  }
  return mdp_from_json(j);
}

}  // namespace highway
