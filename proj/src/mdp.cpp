#include "offrl/mdp.hpp"
#include "offrl/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace offrl {

namespace {

bool all_finite(const std::vector<double>& v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

void check_probability_row(std::span<const double> row, const std::string& what) {
    double sum = 0.0;
    for (double x : row) {
        if (!std::isfinite(x) || x < 0.0) throw ModelError(what + ": negative or non-finite probability");
        sum += x;
    }
    if (std::abs(sum - 1.0) > kProbabilityTolerance)
        throw ModelError(what + ": probabilities sum to " + std::to_string(sum));
}

std::string sa_label(StateIndex s, ActionIndex a) {
    return "(s=" + std::to_string(s) + ", a=" + std::to_string(a) + ")";
}

} // namespace

TabularMdp::TabularMdp(MdpData data) : d_(std::move(data)) {
    const std::size_t S = d_.n_states, A = d_.n_actions;
    if (S == 0 || A == 0) throw ModelError("TabularMdp: need at least one state and one action");
    if (d_.transition.size() != S * A * S || d_.reward.size() != S * A * S)
        throw DimensionError("TabularMdp: tensor sizes must be |S|*|A|*|S|");
    if (d_.initial_dist.size() != S) throw DimensionError("TabularMdp: initial_dist size must be |S|");
    if (!all_finite(d_.transition) || !all_finite(d_.reward) || !all_finite(d_.initial_dist))
        throw ModelError("TabularMdp: non-finite entries");
    if (!(d_.discount >= 0.0 && d_.discount < 1.0)) throw ModelError("TabularMdp: discount must lie in [0, 1)");
    if (!(d_.r_max >= 0.0) || !std::isfinite(d_.r_max)) throw ModelError("TabularMdp: r_max must be finite and >= 0");
    if (d_.horizon_cap == 0) throw ModelError("TabularMdp: horizon_cap must be positive");

    for (StateIndex s = 0; s < S; ++s) {
        for (ActionIndex a = 0; a < A; ++a) {
            check_probability_row(transition_row(s, a), "transition row " + sa_label(s, a));
            for (double r : reward_row(s, a))
                if (std::abs(r) > d_.r_max) throw ModelError("reward exceeds r_max at " + sa_label(s, a));
        }
    }
    check_probability_row(d_.initial_dist, "initial_dist");

    for (StateIndex t : d_.terminals) {
        if (t >= S) throw ModelError("terminal index out of range");
        for (ActionIndex a = 0; a < A; ++a) {
            if (std::abs(p(t, a, t) - 1.0) > kProbabilityTolerance) throw ModelError("terminal state must self-loop at " + sa_label(t, a));
            if (r(t, a, t) != 0.0) throw ModelError("terminal self-loop must have zero reward");
        }
    }
}

double TabularMdp::expected_reward(StateIndex s, ActionIndex a) const {
    auto P = transition_row(s, a);
    auto R = reward_row(s, a);
    double acc = 0.0;
    for (std::size_t k = 0; k < P.size(); ++k) acc += P[k] * R[k];
    return acc;
}

StochasticPolicy::StochasticPolicy(Matrix<double> probs) : probs_(std::move(probs)) {
    if (probs_.rows() == 0 || probs_.cols() == 0) throw ModelError("StochasticPolicy: empty matrix");
    for (StateIndex s = 0; s < probs_.rows(); ++s)
        check_probability_row(probs_.row(s), "policy row " + std::to_string(s));
}

StochasticPolicy StochasticPolicy::uniform(std::size_t n_states, std::size_t n_actions) {
    return StochasticPolicy(Matrix<double>(n_states, n_actions, 1.0 / static_cast<double>(n_actions)));
}

StochasticPolicy StochasticPolicy::deterministic(const std::vector<ActionIndex>& actions,
                                                 std::size_t n_actions) {
    Matrix<double> m(actions.size(), n_actions, 0.0);
    for (StateIndex s = 0; s < actions.size(); ++s) {
        if (actions[s] >= n_actions) throw DimensionError("deterministic policy: action out of range");
        m(s, actions[s]) = 1.0;
    }
    return StochasticPolicy(std::move(m));
}

ActionIndex argmax(std::span<const double> values) {
    ActionIndex best = 0;
    for (ActionIndex a = 1; a < values.size(); ++a)
        if (values[a] > values[best]) best = a;
    return best;
}

StochasticPolicy greedy_policy(const QTable& q, std::size_t n_states) {
    if (n_states > q.n_states()) throw DimensionError("greedy_policy: too many states requested");
    std::vector<ActionIndex> actions(n_states);
    for (StateIndex s = 0; s < n_states; ++s) actions[s] = argmax(q.values.row(s));
    return StochasticPolicy::deterministic(actions, q.n_actions());
}

StochasticPolicy pad_policy(const StochasticPolicy& policy, std::size_t n_states) {
    if (n_states < policy.n_states()) throw DimensionError("pad_policy: cannot shrink a policy");
    const std::size_t A = policy.n_actions();
    Matrix<double> m(n_states, A, 1.0 / static_cast<double>(A));
    for (StateIndex s = 0; s < policy.n_states(); ++s)
        std::copy(policy.row(s).begin(), policy.row(s).end(), m.row(s).begin());
    return StochasticPolicy(std::move(m));
}

void check_dimensions(const TabularMdp& mdp, const StochasticPolicy& policy) {
    if (mdp.n_states() != policy.n_states() || mdp.n_actions() != policy.n_actions())
        throw DimensionError("policy is " + std::to_string(policy.n_states()) + "x" +
                             std::to_string(policy.n_actions()) + " but mdp is " +
                             std::to_string(mdp.n_states()) + "x" + std::to_string(mdp.n_actions()));
}

namespace {

// One application of T^pi: (T Q)(s,a) = rbar(s,a) + gamma sum_s' p(s'|s,a) V(s').
void bellman_expectation(const TabularMdp& mdp, const Matrix<double>& rbar,
                         const std::vector<double>& v, Matrix<double>& out) {
    const std::size_t S = mdp.n_states(), A = mdp.n_actions();
    const double gamma = mdp.discount();
    for (StateIndex s = 0; s < S; ++s) {
        for (ActionIndex a = 0; a < A; ++a) {
            auto P = mdp.transition_row(s, a);
            double acc = 0.0;
            for (StateIndex s2 = 0; s2 < S; ++s2) acc += P[s2] * v[s2];
            out(s, a) = rbar(s, a) + gamma * acc;
        }
    }
}

Matrix<double> expected_rewards(const TabularMdp& mdp) {
    Matrix<double> rbar(mdp.n_states(), mdp.n_actions());
    for (StateIndex s = 0; s < mdp.n_states(); ++s)
        for (ActionIndex a = 0; a < mdp.n_actions(); ++a) rbar(s, a) = mdp.expected_reward(s, a);
    return rbar;
}

double sup_diff(const Matrix<double>& x, const Matrix<double>& y) {
    double d = 0.0;
    for (std::size_t i = 0; i < x.data().size(); ++i) d = std::max(d, std::abs(x.data()[i] - y.data()[i]));
    return d;
}

// Contraction guarantees convergence; this cap only guards against a
// pathological tol that floating point cannot reach.
constexpr std::size_t kMaxSweeps = 50'000'000;

} // namespace

std::vector<double> state_values(const QTable& q, const StochasticPolicy& policy) {
    std::vector<double> v(q.n_states(), 0.0);
    for (StateIndex s = 0; s < q.n_states(); ++s)
        for (ActionIndex a = 0; a < q.n_actions(); ++a) v[s] += policy(s, a) * q(s, a);
    return v;
}

QTable policy_evaluation(const TabularMdp& mdp, const StochasticPolicy& policy, double tol) {
    check_dimensions(mdp, policy);
    if (!(tol > 0.0)) throw std::invalid_argument("policy_evaluation: tol must be positive");
    const Matrix<double> rbar = expected_rewards(mdp);
    QTable q{Matrix<double>(mdp.n_states(), mdp.n_actions(), 0.0)};
    Matrix<double> next(mdp.n_states(), mdp.n_actions());
    for (std::size_t sweep = 0; sweep < kMaxSweeps; ++sweep) {
        bellman_expectation(mdp, rbar, state_values(q, policy), next);
        const double change = sup_diff(next, q.values);
        std::swap(q.values, next);
        if (change < tol) return q;
    }
    throw std::runtime_error("policy_evaluation: did not converge");
}

ValueIterationResult value_iteration(const TabularMdp& mdp, double tol) {
    if (!(tol > 0.0)) throw std::invalid_argument("value_iteration: tol must be positive");
    const std::size_t S = mdp.n_states(), A = mdp.n_actions();
    const double gamma = mdp.discount();
    // ||Q_k - Q*|| <= gamma/(1-gamma) ||Q_k - Q_{k-1}||, so this stop rule
    // leaves Q within tol of Q*.
    const double stop = gamma > 0.0 ? tol * (1.0 - gamma) / gamma : std::numeric_limits<double>::infinity();
    const Matrix<double> rbar = expected_rewards(mdp);
    QTable q{Matrix<double>(S, A, 0.0)};
    Matrix<double> next(S, A);
    std::vector<double> v(S);
    for (std::size_t sweep = 0; sweep < kMaxSweeps; ++sweep) {
        for (StateIndex s = 0; s < S; ++s) {
            auto row = q.values.row(s);
            v[s] = *std::max_element(row.begin(), row.end());
        }
        bellman_expectation(mdp, rbar, v, next);
        const double change = sup_diff(next, q.values);
        std::swap(q.values, next);
        if (change < stop) return {q, greedy_policy(q, S)};
    }
    throw std::runtime_error("value_iteration: did not converge");
}

double mean_return(const TabularMdp& mdp, const StochasticPolicy& policy, double tol) {
    const auto v = state_values(policy_evaluation(mdp, policy, tol), policy);
    return std::inner_product(v.begin(), v.end(), mdp.initial_dist().begin(), 0.0);
}

double expected_episode_return(const TabularMdp& mdp, const StochasticPolicy& policy) {
    check_dimensions(mdp, policy);
    const std::size_t S = mdp.n_states(), A = mdp.n_actions();
    // Backward induction over the remaining-steps horizon, gamma = 1.
    std::vector<double> v(S, 0.0), next(S, 0.0);
    for (std::size_t k = 0; k < mdp.horizon_cap(); ++k) {
        for (StateIndex s = 0; s < S; ++s) {
            if (mdp.is_terminal(s)) {
                next[s] = 0.0;
                continue;
            }
            double acc = 0.0;
            for (ActionIndex a = 0; a < A; ++a) {
                if (policy(s, a) == 0.0) continue;
                auto P = mdp.transition_row(s, a);
                double qa = mdp.expected_reward(s, a);
                for (StateIndex s2 = 0; s2 < S; ++s2) qa += P[s2] * v[s2];
                acc += policy(s, a) * qa;
            }
            next[s] = acc;
        }
        std::swap(v, next);
    }
    return std::inner_product(v.begin(), v.end(), mdp.initial_dist().begin(), 0.0);
}

double bellman_residual(const TabularMdp& mdp, const StochasticPolicy& policy, const QTable& q) {
    check_dimensions(mdp, policy);
    Matrix<double> next(mdp.n_states(), mdp.n_actions());
    bellman_expectation(mdp, expected_rewards(mdp), state_values(q, policy), next);
    return sup_diff(next, q.values);
}

Episode rollout(const TabularMdp& mdp, const StochasticPolicy& policy, std::uint64_t seed,
                std::int64_t episode_id) {
    check_dimensions(mdp, policy);
    Rng rng(seed);
    Episode ep;
    StateIndex s = rng.categorical(mdp.initial_dist());
    for (std::size_t step = 0; step < mdp.horizon_cap() && !mdp.is_terminal(s); ++step) {
        const ActionIndex a = rng.categorical(policy.row(s));
        const StateIndex s2 = rng.categorical(mdp.transition_row(s, a));
        const double r = mdp.r(s, a, s2);
        const bool done = mdp.is_terminal(s2) || step + 1 == mdp.horizon_cap();
        ep.transitions.push_back({episode_id, static_cast<std::int64_t>(step), s, a, r, s2, done, 0.0});
        ep.ret += r;
        s = s2;
    }
    for (auto& t : ep.transitions) t.g = ep.ret;
    return ep;
}

} // namespace offrl
