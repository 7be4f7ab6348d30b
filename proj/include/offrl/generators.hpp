#pragma once

#include "offrl/mdp.hpp"

#include <cstdint>
#include <nlohmann/json.hpp>
#include <string>

namespace offrl {

/**
 * n x n gridworld. Actions are up/right/down/left; with probability `slip`
 * the agent moves in a uniformly random direction instead. Moves into a wall
 * leave the agent in place. Every step from a non-terminal cell pays
 * `step_reward`; entering the goal adds `goal_reward`, entering a pit adds
 * `pit_reward`. Goal and pits are absorbing. The start is the top-left cell,
 * the goal is placed in one of the other three corners (by seed) and `pits`
 * pit cells are scattered (by seed) without blocking every path.
 */
struct GridworldSpec {
    std::size_t size = 5;
    double slip = 0.1;
    double step_reward = -0.1;
    double goal_reward = 1.0;
    double pit_reward = -1.0;
    std::size_t pits = 2;
    double discount = 0.95;
    std::size_t horizon = 40;
    std::uint64_t seed = 1;
};

TabularMdp make_gridworld(const GridworldSpec& spec);

nlohmann::json to_json(const GridworldSpec& spec);
GridworldSpec gridworld_spec_from_json(const nlohmann::json& doc);

/// Dense random MDP: Dirichlet(1) transition rows restricted to `branching`
/// random successors, rewards uniform in [-r_max, r_max], uniform start, no
/// terminals.
struct RandomMdpSpec {
    std::size_t n_states = 5;
    std::size_t n_actions = 2;
    std::size_t branching = 3;
    double discount = 0.9;
    double r_max = 1.0;
    std::size_t horizon = 50;
    std::uint64_t seed = 1;
};

TabularMdp make_random_mdp(const RandomMdpSpec& spec);

/// Full-support random policy with Dirichlet(1) rows, floored at `min_prob`
/// and renormalized.
StochasticPolicy make_random_policy(std::size_t n_states, std::size_t n_actions,
                                    std::uint64_t seed, double min_prob = 0.0);

/// (1 - epsilon) * base + epsilon * uniform.
StochasticPolicy epsilon_mixture(const StochasticPolicy& base, double epsilon);

} // namespace offrl
