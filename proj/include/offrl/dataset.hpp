#pragma once

#include "offrl/mdp.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace offrl {

struct DatasetMeta {
    std::string mdp_id = "unknown";
    std::string behavior = "unknown";
    std::uint64_t seed = 0;
    std::int64_t episodes = 0;

    friend bool operator==(const DatasetMeta&, const DatasetMeta&) = default;
};

/// Ordered transitions with contiguous episode ids and steps (both from 0).
struct Dataset {
    std::vector<Transition> transitions;
    DatasetMeta meta;

    bool empty() const noexcept { return transitions.empty(); }
    std::size_t size() const noexcept { return transitions.size(); }
    /// Number of distinct episodes (max id + 1).
    std::size_t episode_count() const;
    /// One return per episode, indexed by episode id.
    std::vector<double> episode_returns() const;

    friend bool operator==(const Dataset&, const Dataset&) = default;
};

/// Samples `episodes` rollouts of `behavior`. Episode k uses the stream seed
/// derive_seed(seed, k). Episodes that start in a terminal state contribute
/// no transitions and do not consume an episode id.
Dataset generate(const TabularMdp& mdp, const StochasticPolicy& behavior, std::int64_t episodes,
                 std::uint64_t seed, std::string mdp_id = "mdp", std::string behavior_id = "behavior");

/// Appends b after a, shifting b's episode ids.
Dataset concat(const Dataset& a, const Dataset& b);

/// Visitation counts N(s,a) and N(s) = sum_a N(s,a).
struct CountTable {
    Matrix<std::int64_t> n_sa;
    std::vector<std::int64_t> n_s;

    std::size_t n_states() const noexcept { return n_s.size(); }
    std::size_t n_actions() const noexcept { return n_sa.cols(); }
    bool visited(StateIndex s) const { return n_s[s] > 0; }
};

CountTable counts(const Dataset& dataset, std::size_t n_states, std::size_t n_actions);

/// pi_b(a|s) = N(s,a)/N(s); rows with N(s) = 0 are uniform.
StochasticPolicy empirical_behavior_policy(const CountTable& counts);

struct Randomness {
    double q = 0.0;
    bool support_complete = true;
};

/// q = (1/|S|) sum_s sum_{a: pi(a|s)>0} pi(a|s)^{-1/2}. support_complete is
/// false when some pi(a|s) is zero. When `states` is given, only those
/// states enter the average.
Randomness randomness(const StochasticPolicy& policy,
                      const std::optional<std::vector<StateIndex>>& states = std::nullopt);

struct QualitySplit {
    Dataset low, medium, high;
    bool any_empty() const { return low.empty() || medium.empty() || high.empty(); }
};

/// Whole-episode partition by return: g < low_hi -> low, low_hi <= g <
/// high_lo -> medium, g >= high_lo -> high. Episode ids are renumbered per
/// subset.
QualitySplit quality_split(const Dataset& dataset, double low_hi, double high_lo);

/// Return thresholds at the given quantiles of the episode-return
/// distribution (linear interpolation between order statistics).
std::pair<double, double> return_quantile_thresholds(const Dataset& dataset, double q_low, double q_high);

/// Keeps the ceil(zeta * n) transitions with the largest g. Ties are broken
/// by (episode_id, step) ascending. The result keeps the original order and
/// renumbers episode ids contiguously.
Dataset top_return_select(const Dataset& dataset, double zeta);

/// Text format: one header line
///   # offrl-dataset mdp=<id> behavior=<desc> seed=<n> episodes=<n>
/// followed by one record per line:
///   episode_id step s a r s_next done g
/// with floats printed at 17 significant digits.
std::string dataset_to_text(const Dataset& dataset);
Dataset dataset_from_text(const std::string& text);
void save_dataset(const std::filesystem::path& path, const Dataset& dataset);
Dataset load_dataset(const std::filesystem::path& path);

} // namespace offrl
