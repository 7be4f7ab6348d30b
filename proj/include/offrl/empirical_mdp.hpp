#pragma once

#include "offrl/dataset.hpp"
#include "offrl/mdp.hpp"

#include <string>
#include <vector>

namespace offrl {

/// Weighted edge tallies (s, a, s') with summed rewards. A plain dataset
/// contributes weight 1 per transition; bootstrap resamples use episode
/// multiplicities.
class EdgeCounts {
public:
    EdgeCounts(std::size_t n_states, std::size_t n_actions);

    void add(const Transition& t, double weight = 1.0);
    void add(const Dataset& dataset);

    std::size_t n_states() const noexcept { return S_; }
    std::size_t n_actions() const noexcept { return A_; }
    double n_sa(StateIndex s, ActionIndex a) const { return n_sa_[s * A_ + a]; }
    double n_edge(StateIndex s, ActionIndex a, StateIndex s2) const { return n_[(s * A_ + a) * S_ + s2]; }
    double reward_sum(StateIndex s, ActionIndex a, StateIndex s2) const {
        return r_sum_[(s * A_ + a) * S_ + s2];
    }

private:
    std::size_t S_, A_;
    std::vector<double> n_, r_sum_, n_sa_;
};

/// Structure shared between the true and the estimated model.
struct ModelTemplate {
    double discount = 0.9;
    double r_max = 1.0;
    std::vector<double> initial_dist;
    std::set<StateIndex> terminals;
    std::size_t horizon_cap = 1;

    static ModelTemplate from(const TabularMdp& mdp);
};

/**
 * Maximum-likelihood MDP with |S|+1 states. Visited (s,a) get count ratios
 * and per-edge mean rewards; unvisited (s,a) move deterministically to an
 * absorbing zero-reward sink at index |S|. Template terminals keep their
 * zero-reward self-loops. r_max is the larger of the template's and the
 * largest observed |r|.
 */
TabularMdp estimate(const EdgeCounts& edges, const ModelTemplate& tmpl);
TabularMdp estimate(const Dataset& dataset, std::size_t n_states, std::size_t n_actions,
                    const TabularMdp& template_mdp);

/// Index of the sink state appended by estimate().
inline StateIndex sink_state(std::size_t n_true_states) { return n_true_states; }

struct ExtrapolationTable {
    Matrix<double> eps;
    Matrix<std::uint8_t> visited; ///< 1 where N(s,a) > 0
};

/// eps(s,a) = Q^pi_true(s,a) - Q^pi_est(s,a). The estimate may carry one
/// extra sink state; the policy is padded there.
ExtrapolationTable extrapolation_error(const TabularMdp& true_mdp, const TabularMdp& est_mdp,
                                       const StochasticPolicy& policy, double tol);

/// Same, with visited flags taken from dataset counts.
ExtrapolationTable extrapolation_error(const TabularMdp& true_mdp, const TabularMdp& est_mdp,
                                       const StochasticPolicy& policy, double tol, const CountTable& counts);

/// Per-(s,a) ||p_true(.|s,a) - p_est(.|s,a)||_1 over the true states; mass
/// the estimate sends to its sink counts fully toward the deviation.
Matrix<double> l1_deviation(const TabularMdp& true_mdp, const TabularMdp& est_mdp);

/// CSV with header "s,a,eps,visited".
std::string extrapolation_to_csv(const ExtrapolationTable& table);

} // namespace offrl
