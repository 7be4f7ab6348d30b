#pragma once

#include "offrl/dataset.hpp"
#include "offrl/empirical_mdp.hpp"
#include "offrl/mdp.hpp"

#include <nlohmann/json.hpp>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace offrl {

/// Confidence and selection parameters shared by every bound.
struct BoundConfig {
    double delta = 0.05;          ///< confidence parameter of the L1 concentration radius
    double truncation_tol = 1e-8; ///< series tail tolerance, in bound units
    double tau = 0.3;             ///< batch-constraint threshold (also BAIL's selection fraction)
    double zeta = 0.6;            ///< retained fraction for top-return selection

    void validate() const;
};

nlohmann::json to_json(const BoundConfig& cfg);
BoundConfig bound_config_from_json(const nlohmann::json& doc);

/// Model quantities the closed-form bounds depend on.
struct ModelDims {
    std::size_t n_states = 1;
    std::size_t n_actions = 1;
    double discount = 0.0;
    double r_max = 1.0;

    static ModelDims of(const TabularMdp& mdp);
};

/// log(|S| |A| 2^|S| / delta), with the 2^|S| factor taken in log space.
double log_confidence_term(std::size_t n_states, std::size_t n_actions, double delta);

/// C = sqrt(2 log(|S||A|2^|S|/delta)) * R_max / (1 - gamma).
double bound_prefactor(const ModelDims& dims, double delta);

/// e(s,a) = sqrt(2/N(s,a) * log(|S||A|2^|S|/delta)). Throws std::domain_error
/// for n_sa = 0.
double concentration_radius(std::int64_t n_sa, std::size_t n_states, std::size_t n_actions, double delta);

/// A per-(s,a) series bound and the truncation depth that produced it.
/// Entries are +infinity where the series diverges (missing support).
struct SeriesBound {
    Matrix<double> values;
    std::size_t horizon = 0;
};

/**
 * Extrapolation-error bound for an unconstrained learner evaluating `pi`
 * from data collected by `pi_b`:
 *
 *   C * [ w(s,a) + sum_{k>=1} gamma^k E_{p, pi}[ sum_a' pi(a'|s_k) w(s_k,a') ] ]
 *
 * with w(s,a) = (N(s) pi_b(a|s))^{-1/2}, i.e. N(s,a) = N(s) pi_b(a|s) and
 * the per-state N(s) vector in place of a common N. Terminal states have
 * known dynamics and contribute zero. The series runs over the TRUE
 * transitions and is evaluated depth by depth over state vectors.
 * `horizon` overrides the automatic truncation depth.
 */
SeriesBound general_bound(const TabularMdp& true_mdp, const StochasticPolicy& pi, const StochasticPolicy& pi_b,
                          std::span<const std::int64_t> n_s, const BoundConfig& cfg,
                          std::optional<std::size_t> horizon = std::nullopt);

/// Expectation over a uniformly drawn evaluation policy of the per-state
/// general term: (1/|A|) sum_a pi_b(a)^{-1/2}. +infinity on a zero entry.
double expected_general_term(std::span<const double> pi_b_row);

/// C * N^{-1/2} * |A|^{1/2} / (1 - gamma): the general bound when pi_b is
/// uniform and N(s) = N everywhere.
double uniform_general_bound(std::int64_t n, const ModelDims& dims, double delta);

struct Theorem1Result {
    std::vector<double> minimizer;
    double min_value = 0.0;
    bool is_uniform = false;
    std::size_t grid_points = 0;
};

/// Exhaustive search of the full-support simplex grid {k/K : k >= 1} with
/// K = round(1/grid_step) for the minimizer of expected_general_term.
Theorem1Result theorem1_check(std::size_t n_actions, double grid_step);

/// C * (N tau)^{-1/2} / (1 - gamma). Throws std::domain_error when N tau < 1.
double bcq_bound(std::int64_t n, double tau, const ModelDims& dims, double delta);

/// Same closed form with a real-valued count (used for expected counts).
double bcq_bound_real(double n, double tau, const ModelDims& dims, double delta);

struct Theorem2Params {
    ModelDims dims;
    std::int64_t n = 100;
    double delta = 0.05;
};

struct Theorem2Result {
    double bcq = 0.0;
    double exploration_min = 0.0; ///< min over the pi_b grid of the exploration bound
    std::vector<double> argmin;
    bool strictly_less = false;
    bool boundary = false; ///< bounds equal to 1e-10 relative (tau = 1/|A|)
};

/// Compares the BCQ bound at threshold tau with the smallest exploration
/// bound over a simplex grid of behavior rows (the grid always contains the
/// uniform row). dims.n_actions is overridden by n_actions.
Theorem2Result theorem2_check(double tau, std::size_t n_actions, const Theorem2Params& params);

/**
 * Expected extrapolation-error bound for return-selection imitation with
 * selection fraction cfg.tau:
 *
 *   C (N(s) tau)^{-1/2} [ pi_b(a|s)^{-1/2}
 *       + sum_{k>=1} gamma^k E_{p, pi_b}[ sum_a' pi_b(a'|s_k)^{1/2} ] ]
 *
 * The leading term carries pi_b^{-1/2} while deeper terms carry pi_b^{+1/2};
 * this mixed form is kept as written. Propagation follows pi_b.
 */
SeriesBound bail_expected_bound(const TabularMdp& true_mdp, const StochasticPolicy& pi_b,
                                std::span<const std::int64_t> n_s, const BoundConfig& cfg,
                                std::optional<std::size_t> horizon = std::nullopt);

/// Closed-form optimum displayed for a uniform behavior policy:
/// C (N tau)^{-1/2} [ |A|^{-1/2} + gamma |A|^{1/2} / (1 - gamma) ].
double bail_uniform_optimum_display(std::int64_t n, double tau, const ModelDims& dims, double delta);

/// Deterministic-behavior optimum: C (N tau)^{-1/2} / (1 - gamma).
double bail_deterministic_optimum(std::int64_t n, double tau, const ModelDims& dims, double delta);

/// zeta^{-1/2}: the factor by which top-return selection of a zeta fraction
/// inflates the expected bound.
double trbcq_scaling(double zeta);

/// max_s |N(s) - mean N| / mean N over non-terminal states.
double assumption_deviation(const TabularMdp& mdp, std::span<const std::int64_t> n_s);

/// Side-by-side bounds and brute-force extrapolation error for one dataset.
struct BoundReport {
    ExtrapolationTable extrapolation;
    SeriesBound general;
    Matrix<double> bcq;
    SeriesBound bail;
    double assumption_deviation = 0.0;
    double mean_state_count = 0.0;
    Randomness behavior_randomness;
    BoundConfig config;
};

/// Estimates the dataset MDP, evaluates `pi` in both models and computes all
/// bounds with pi_b and N(s) taken from the dataset counts.
BoundReport build_bound_report(const TabularMdp& true_mdp, const Dataset& dataset, const StochasticPolicy& pi,
                               const BoundConfig& cfg, double eval_tol = 1e-10);

/// CSV "s,a,eps,general_bound,bcq_bound,bail_bound".
std::string bound_report_csv(const BoundReport& report);

/// Scalar summary: config echo, truncation horizons, assumption deviation,
/// dominance counts, and a note on the mixed-exponent leading term.
nlohmann::json bound_report_summary(const BoundReport& report);

} // namespace offrl
