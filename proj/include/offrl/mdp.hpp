#pragma once

#include "offrl/matrix.hpp"

#include <cstddef>
#include <cstdint>
#include <set>
#include <stdexcept>
#include <utility>
#include <vector>

namespace offrl {

using StateIndex = std::size_t;
using ActionIndex = std::size_t;

/// Thrown when operands disagree on |S| or |A|.
class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Thrown when a model violates its structural invariants.
class ModelError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Tolerance used to validate that probability rows sum to one.
inline constexpr double kProbabilityTolerance = 1e-9;

/// Everything needed to construct a TabularMdp. Tensors are flattened in
/// row-major (s, a, s') order.
struct MdpData {
    std::size_t n_states = 0;
    std::size_t n_actions = 0;
    std::vector<double> transition;
    std::vector<double> reward;
    double discount = 0.0;
    double r_max = 0.0;
    std::vector<double> initial_dist;
    std::set<StateIndex> terminals;
    std::size_t horizon_cap = 1;
};

/**
 * Exact finite MDP. Immutable after construction; the constructor validates
 * every invariant and throws ModelError on violation:
 *  - each P[s][a][.] is a probability row (nonnegative, sums to 1 within 1e-9)
 *  - |r| <= r_max everywhere
 *  - initial_dist is a probability vector
 *  - terminal states self-loop with zero reward under every action
 *  - discount in [0, 1)
 */
class TabularMdp {
public:
    explicit TabularMdp(MdpData data);

    std::size_t n_states() const noexcept { return d_.n_states; }
    std::size_t n_actions() const noexcept { return d_.n_actions; }
    double discount() const noexcept { return d_.discount; }
    double r_max() const noexcept { return d_.r_max; }
    std::size_t horizon_cap() const noexcept { return d_.horizon_cap; }
    const std::vector<double>& initial_dist() const noexcept { return d_.initial_dist; }
    const std::set<StateIndex>& terminals() const noexcept { return d_.terminals; }
    bool is_terminal(StateIndex s) const { return d_.terminals.contains(s); }

    double p(StateIndex s, ActionIndex a, StateIndex s2) const {
        return d_.transition[offset(s, a) + s2];
    }
    double r(StateIndex s, ActionIndex a, StateIndex s2) const {
        return d_.reward[offset(s, a) + s2];
    }
    std::span<const double> transition_row(StateIndex s, ActionIndex a) const {
        return {d_.transition.data() + offset(s, a), d_.n_states};
    }
    std::span<const double> reward_row(StateIndex s, ActionIndex a) const {
        return {d_.reward.data() + offset(s, a), d_.n_states};
    }

    /// Expected immediate reward sum_{s'} p(s'|s,a) r(s,a,s').
    double expected_reward(StateIndex s, ActionIndex a) const;

    /// R_max / (1 - gamma): the magnitude bound on any Q value.
    double value_bound() const noexcept { return d_.r_max / (1.0 - d_.discount); }

    const MdpData& data() const noexcept { return d_; }

private:
    std::size_t offset(StateIndex s, ActionIndex a) const noexcept {
        return (s * d_.n_actions + a) * d_.n_states;
    }

    MdpData d_;
};

/// Row-stochastic |S| x |A| matrix pi(a|s).
class StochasticPolicy {
public:
    explicit StochasticPolicy(Matrix<double> probs);

    static StochasticPolicy uniform(std::size_t n_states, std::size_t n_actions);
    static StochasticPolicy deterministic(const std::vector<ActionIndex>& actions,
                                          std::size_t n_actions);

    std::size_t n_states() const noexcept { return probs_.rows(); }
    std::size_t n_actions() const noexcept { return probs_.cols(); }
    double operator()(StateIndex s, ActionIndex a) const { return probs_(s, a); }
    std::span<const double> row(StateIndex s) const { return probs_.row(s); }
    const Matrix<double>& probs() const noexcept { return probs_; }

    friend bool operator==(const StochasticPolicy&, const StochasticPolicy&) = default;

private:
    Matrix<double> probs_;
};

/// Per-(s,a) action values.
struct QTable {
    Matrix<double> values;

    std::size_t n_states() const noexcept { return values.rows(); }
    std::size_t n_actions() const noexcept { return values.cols(); }
    double operator()(StateIndex s, ActionIndex a) const { return values(s, a); }
};

/// Index of the largest entry; ties go to the lowest index.
ActionIndex argmax(std::span<const double> values);

/// Deterministic policy choosing argmax_a Q(s,a) (lowest index on ties) for
/// the first n_states rows of q.
StochasticPolicy greedy_policy(const QTable& q, std::size_t n_states);

/// Extends a policy to more states by appending uniform rows (used to cover
/// an estimated model's absorbing sink).
StochasticPolicy pad_policy(const StochasticPolicy& policy, std::size_t n_states);

/// Q^pi by successive approximation; stops when the sup-norm change of a
/// sweep drops below tol.
QTable policy_evaluation(const TabularMdp& mdp, const StochasticPolicy& policy, double tol);

/// V^pi(s) = sum_a pi(a|s) Q(s,a).
std::vector<double> state_values(const QTable& q, const StochasticPolicy& policy);

struct ValueIterationResult {
    QTable q;
    StochasticPolicy greedy;
};

/// Optimal Q* within tol (sup norm) and its greedy policy.
ValueIterationResult value_iteration(const TabularMdp& mdp, double tol);

/// Exact expected discounted return <initial_dist, V^pi>.
double mean_return(const TabularMdp& mdp, const StochasticPolicy& policy, double tol = 1e-10);

/// Exact expected undiscounted return over at most horizon_cap steps, the
/// quantity a rollout's G estimates.
double expected_episode_return(const TabularMdp& mdp, const StochasticPolicy& policy);

/// Max over (s,a) of |Q(s,a) - (T^pi Q)(s,a)|.
double bellman_residual(const TabularMdp& mdp, const StochasticPolicy& policy, const QTable& q);

/// One logged step, annotated with the return g of its episode.
struct Transition {
    std::int64_t episode_id = 0;
    std::int64_t step = 0;
    StateIndex s = 0;
    ActionIndex a = 0;
    double r = 0.0;
    StateIndex s_next = 0;
    bool done = false;
    double g = 0.0;

    friend bool operator==(const Transition&, const Transition&) = default;
};

struct Episode {
    std::vector<Transition> transitions;
    double ret = 0.0; ///< undiscounted sum of rewards
};

/// Samples one episode. Stops on entering a terminal state or after
/// horizon_cap steps. Identical (mdp, policy, seed) give identical episodes.
Episode rollout(const TabularMdp& mdp, const StochasticPolicy& policy, std::uint64_t seed,
                std::int64_t episode_id = 0);

void check_dimensions(const TabularMdp& mdp, const StochasticPolicy& policy);

} // namespace offrl
