#pragma once

#include "offrl/algorithms.hpp"
#include "offrl/bounds.hpp"
#include "offrl/dataset.hpp"
#include "offrl/generators.hpp"
#include "offrl/mdp.hpp"

#include <cstdint>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace offrl {

/// Raised for malformed or inconsistent experiment configurations.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// An environment is either a generated gridworld or an MDP document on disk.
struct EnvSource {
    std::string id;
    std::optional<GridworldSpec> gridworld;
    std::string path;

    TabularMdp load() const;
};

enum class LadderMode { Epsilon, QLearning };

struct LadderLevel {
    std::string label;
    double value = 0.0; ///< epsilon (Epsilon mode) or budget fraction (QLearning mode)
};

/**
 * Behavior-policy ladder. Epsilon mode mixes the optimal greedy policy with
 * uniform: (1 - eps) pi* + eps uniform. QLearning mode trains tabular
 * Q-learning online for `budget` episodes and snapshots the Q-table after a
 * `value` fraction of them; the level's behavior is epsilon-greedy with
 * `behavior_epsilon` on the snapshot.
 */
struct LadderSpec {
    LadderMode mode = LadderMode::QLearning;
    std::vector<LadderLevel> levels{{"low", 0.1}, {"medium", 0.5}, {"high", 1.0}};
    std::size_t budget = 200;
    double learn_epsilon = 0.5;
    double learning_rate = 0.5;
    double behavior_epsilon = 0.05;
    std::size_t max_retries = 8;
    std::uint64_t seed = 0;

    void validate() const;
};

nlohmann::json to_json(const LadderSpec& spec);
LadderSpec ladder_spec_from_json(const nlohmann::json& doc);

struct BehaviorLevel {
    std::string label;
    StochasticPolicy policy;
    double mean_return = 0.0;
};

/// Builds the ladder and checks that exact mean returns strictly increase
/// along it. On failure the Q-learning mode retrains from a fresh stream and
/// the epsilon mode spreads the levels toward the endpoints. Throws
/// ConfigError once `max_retries` attempts are used up.
std::vector<BehaviorLevel> build_behavior_ladder(const TabularMdp& mdp, const LadderSpec& spec);

/// Tabular epsilon-greedy Q-learning on the true MDP. Returns the Q-table
/// after each requested episode count (sorted ascending, <= budget).
std::vector<QTable> q_learning_snapshots(const TabularMdp& mdp, const LadderSpec& spec,
                                         const std::vector<std::size_t>& checkpoints, std::uint64_t seed);

/// epsilon-greedy over q with lowest-index greedy ties.
StochasticPolicy epsilon_greedy(const QTable& q, std::size_t n_states, double epsilon);

enum class SplitMode { Ladder, Quantile };

struct ExperimentConfig {
    std::vector<EnvSource> envs;
    LadderSpec ladder;
    SplitMode split = SplitMode::Ladder;
    std::int64_t episodes = 1000;           ///< per quality level
    double quantile_low = 1.0 / 3.0;        ///< Quantile mode thresholds
    double quantile_high = 2.0 / 3.0;
    std::vector<AlgoSpec> algorithms;
    std::vector<std::uint64_t> seeds;
    BoundConfig bounds;
    bool compute_bounds = true;
    std::size_t workers = 1;
    std::string out_dir = "out";

    /// Structural checks only; algorithm hyperparameters are checked inside
    /// each cell so a bad spec yields error rows.
    void validate() const;
    std::vector<std::string> quality_labels() const;
};

nlohmann::json to_json(const ExperimentConfig& cfg);
/// Parses and validates; file-based environments are resolved relative to
/// `base_dir` and must exist.
ExperimentConfig experiment_config_from_json(const nlohmann::json& doc,
                                             const std::filesystem::path& base_dir = {});
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

/// Template written by `init`: three seeded gridworlds, the Q-learning
/// ladder, all seven learners and five seeds.
ExperimentConfig default_experiment_config();

struct ResultRow {
    std::string env;
    std::string quality;
    std::size_t quality_index = 0;
    std::string algorithm;
    std::size_t algorithm_index = 0;
    std::string kind;
    std::string hyperparameters;
    std::uint64_t seed = 0;
    std::string status = "ok";
    std::string error;
    std::int64_t n_transitions = 0;
    double mean_return = 0.0;      ///< exact discounted return of the learned policy
    double episode_return = 0.0;   ///< exact undiscounted return over the horizon cap
    double behavior_return = 0.0;  ///< exact discounted return of the level's behavior
    double randomness_q = 0.0;     ///< over visited states of the empirical behavior
    bool support_complete = false;
    double eps_max = 0.0;          ///< max |eps| over visited pairs
    double general_bound_max = 0.0;
    double bcq_bound_max = 0.0;
    double bail_bound_max = 0.0;
    double dominated_fraction = 0.0; ///< visited pairs with |eps| <= general bound
    double assumption_deviation = 0.0;

    friend bool operator==(const ResultRow&, const ResultRow&) = default;
};

/// Fixed column order; doubles at 17 significant digits.
const std::vector<std::string>& result_columns();
std::string results_to_csv(const std::vector<ResultRow>& rows);
std::vector<ResultRow> results_from_csv(const std::string& text);

/// Runs every (env x quality x algorithm x seed) cell on up to cfg.workers
/// threads. Cell failures become rows with status "error". Rows come back
/// sorted by (env, quality, algorithm, seed) in configuration order.
std::vector<ResultRow> run_sweep(const ExperimentConfig& cfg);

struct TrendEntry {
    std::string env;
    std::string algorithm;
    std::vector<double> medians; ///< per quality level, NaN when no ok rows
    std::string trend;           ///< increase, decrease, flat or mixed
};

struct TrendSummary {
    std::vector<std::string> levels;
    std::vector<std::string> algorithms;
    std::vector<std::string> envs;
    std::vector<TrendEntry> entries;
    /// best[env][level] = algorithm with the highest seed median.
    std::vector<std::vector<std::string>> best;

    const TrendEntry* find(const std::string& env, const std::string& algorithm) const;
    /// Fraction of environments in which `algorithm` has trend `trend`.
    double trend_share(const std::string& algorithm, const std::string& trend) const;
    /// Number of (env, level) cells where `algorithm` scores best.
    std::size_t best_count(const std::string& algorithm) const;
};

inline constexpr double kTrendDeadZone = 0.02;

/// Classifies a sequence of medians. Consecutive differences within
/// kTrendDeadZone of max(|m_i|, |m_i+1|) count as level.
std::string classify_trend(const std::vector<double>& medians, double dead_zone = kTrendDeadZone);

/// Throws std::invalid_argument when the rows span fewer than two levels.
TrendSummary trend_report(const std::vector<ResultRow>& rows);

nlohmann::json to_json(const TrendSummary& summary);
/// Two plain-text tables: trend shares per algorithm and best-score counts.
std::string trend_tables(const TrendSummary& summary);

/// Runs the sweep and writes results.csv, trend.json and trend.txt under
/// cfg.out_dir. Returns the rows.
std::vector<ResultRow> run_and_write(const ExperimentConfig& cfg);

} // namespace offrl
