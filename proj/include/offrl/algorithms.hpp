#pragma once

#include "offrl/dataset.hpp"
#include "offrl/mdp.hpp"
#include "offrl/rng.hpp"

#include <cstdint>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

namespace offrl {

enum class AlgoKind { OfflineQ, EnsembleQ, RemQ, Bcq, TrBcq, BailImitate, Spibb };

std::string to_string(AlgoKind kind);
AlgoKind algo_kind_from_string(const std::string& name);

/// Hyperparameters for one learner. Only the fields relevant to `kind` are
/// validated and echoed.
struct AlgoSpec {
    AlgoKind kind = AlgoKind::OfflineQ;
    std::size_t iterations = 1000; ///< T, synchronous sweeps
    double tau = 0.3;              ///< bcq, trbcq
    double zeta = 0.6;             ///< trbcq, bail_imitate
    std::size_t heads = 5;         ///< ensemble_q, rem_q
    std::int64_t n_threshold = 10; ///< spibb N_wedge
    double learning_rate = 1.0;    ///< rem_q head step size
    std::uint64_t seed = 0;
    bool bootstrap = true;         ///< ensemble_q episode-level resampling
    std::string name;              ///< optional display label

    void validate() const;
    /// Display label: `name` if set, otherwise the kind.
    std::string label() const;
    /// Compact "key=value;..." echo of the parameters that matter for `kind`.
    std::string hyperparameters() const;
};

nlohmann::json to_json(const AlgoSpec& spec);
/// Parses without range checks; train() validates.
AlgoSpec algo_spec_from_json(const nlohmann::json& doc);

struct TrainingDims {
    std::size_t n_states = 0;
    std::size_t n_actions = 0;
    double discount = 0.9;

    static TrainingDims of(const TabularMdp& mdp);
};

/// Synchronous Q-iteration for at most `iterations` sweeps (stops once the
/// sup-norm change is below 1e-12). When `allowed` is non-empty, the
/// bootstrap max at s' ranges over {a : allowed(s',a)} only.
QTable q_iteration(const TabularMdp& model, std::size_t iterations, const Matrix<std::uint8_t>& allowed = {});

/// Greedy over the allowed actions; lowest index on ties.
StochasticPolicy constrained_greedy(const QTable& q, const Matrix<std::uint8_t>& allowed, std::size_t n_states);

/// Empirical MDP used by every learner: |S|+1 states with the sink, uniform
/// start, no terminals beyond the sink.
TabularMdp training_model(const Dataset& dataset, const TrainingDims& dims);

/// Unconstrained Q-iteration on the empirical MDP, greedy output.
StochasticPolicy offline_q(const Dataset& dataset, const AlgoSpec& spec, const TrainingDims& dims);

/// Mean Q-table (true states only) of K heads, each fit on an episode-level
/// bootstrap resample (head k uses seed derive_seed(spec.seed, k)).
QTable ensemble_mean_q(const Dataset& dataset, const AlgoSpec& spec, const TrainingDims& dims);
StochasticPolicy ensemble_q(const Dataset& dataset, const AlgoSpec& spec, const TrainingDims& dims);

/// Random convex weights: normalized unit exponentials (Dirichlet(1)).
std::vector<double> draw_convex_weights(Rng& rng, std::size_t k);

/// K heads sharing one empirical MDP. Each sweep draws convex weights alpha,
/// forms Q_alpha = sum_k alpha_k Q_k, targets y = T Q_alpha and moves head k
/// by learning_rate * alpha_k * (y - Q_alpha). Output is greedy over the
/// equal-weight mean.
QTable rem_mean_q(const Dataset& dataset, const AlgoSpec& spec, const TrainingDims& dims);
StochasticPolicy rem_q(const Dataset& dataset, const AlgoSpec& spec, const TrainingDims& dims);

/// allowed(s,a) = pi_b(a|s) / max_a' pi_b(a'|s) > tau. Never empty per row.
Matrix<std::uint8_t> bcq_allowed(const StochasticPolicy& pi_b, double tau);

/// Batch-constrained Q-iteration: targets and the deployed argmax both range
/// over bcq_allowed(pi_b-hat, tau) with pi_b-hat the count ratio.
StochasticPolicy bcq(const Dataset& dataset, const AlgoSpec& spec, const TrainingDims& dims);

/// top_return_select(dataset, zeta) followed by bcq on the selected subset.
StochasticPolicy trbcq(const Dataset& dataset, const AlgoSpec& spec, const TrainingDims& dims);

/// Top-return selection followed by modal-action imitation; unvisited states
/// take action 0.
StochasticPolicy bail_imitate(const Dataset& dataset, const AlgoSpec& spec, const TrainingDims& dims);

/// Baseline-bootstrapped policy iteration. Actions with N(s,a) < N_wedge keep
/// their behavior probability; the rest of the row's mass goes to the best
/// sufficiently counted action under Q of the current policy.
StochasticPolicy spibb(const Dataset& dataset, const AlgoSpec& spec, const TrainingDims& dims);

/// Dispatches on spec.kind.
StochasticPolicy train(const Dataset& dataset, const AlgoSpec& spec, const TrainingDims& dims);

} // namespace offrl
