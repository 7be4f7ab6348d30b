#include "offrl/generators.hpp"
#include "offrl/rng.hpp"

#include <algorithm>
#include <array>
#include <deque>
#include <stdexcept>

namespace offrl {

namespace {

constexpr std::array<std::pair<int, int>, 4> kMoves{{{-1, 0}, {0, 1}, {1, 0}, {0, -1}}};

bool goal_reachable(std::size_t n, std::size_t start, std::size_t goal, const std::vector<bool>& pit) {
    std::vector<bool> seen(n * n, false);
    std::deque<std::size_t> queue{start};
    seen[start] = true;
    while (!queue.empty()) {
        const std::size_t c = queue.front();
        queue.pop_front();
        if (c == goal) return true;
        const int row = static_cast<int>(c / n), col = static_cast<int>(c % n);
        for (auto [dr, dc] : kMoves) {
            const int r2 = row + dr, c2 = col + dc;
            if (r2 < 0 || c2 < 0 || r2 >= static_cast<int>(n) || c2 >= static_cast<int>(n)) continue;
            const std::size_t next = static_cast<std::size_t>(r2) * n + static_cast<std::size_t>(c2);
            if (seen[next] || pit[next]) continue;
            seen[next] = true;
            queue.push_back(next);
        }
    }
    return false;
}

} // namespace

TabularMdp make_gridworld(const GridworldSpec& spec) {
    const std::size_t n = spec.size;
    if (n < 2) throw std::invalid_argument("gridworld: size must be at least 2");
    if (spec.slip < 0.0 || spec.slip > 1.0) throw std::invalid_argument("gridworld: slip must lie in [0, 1]");
    const std::size_t S = n * n, A = 4;
    Rng rng(derive_seed(spec.seed, 0x67726964));

    const std::size_t start = 0;
    const std::array<std::size_t, 3> corners{n - 1, (n - 1) * n, n * n - 1};
    const std::size_t goal = corners[rng.index(corners.size())];

    std::vector<bool> pit(S, false);
    std::size_t placed = 0;
    for (std::size_t attempt = 0; placed < spec.pits && attempt < 100 * (spec.pits + 1); ++attempt) {
        const std::size_t c = rng.index(S);
        if (c == start || c == goal || pit[c]) continue;
        pit[c] = true;
        if (!goal_reachable(n, start, goal, pit)) {
            pit[c] = false;
            continue;
        }
        ++placed;
    }

    MdpData d;
    d.n_states = S;
    d.n_actions = A;
    d.discount = spec.discount;
    d.horizon_cap = spec.horizon;
    d.transition.assign(S * A * S, 0.0);
    d.reward.assign(S * A * S, 0.0);
    d.initial_dist.assign(S, 0.0);
    d.initial_dist[start] = 1.0;
    d.terminals.insert(goal);
    for (std::size_t c = 0; c < S; ++c)
        if (pit[c]) d.terminals.insert(c);

    auto idx = [&](std::size_t s, std::size_t a, std::size_t s2) { return (s * A + a) * S + s2; };
    auto target = [&](std::size_t c, std::size_t dir) {
        const int r2 = static_cast<int>(c / n) + kMoves[dir].first;
        const int c2 = static_cast<int>(c % n) + kMoves[dir].second;
        if (r2 < 0 || c2 < 0 || r2 >= static_cast<int>(n) || c2 >= static_cast<int>(n)) return c;
        return static_cast<std::size_t>(r2) * n + static_cast<std::size_t>(c2);
    };

    double r_max = 0.0;
    for (std::size_t s = 0; s < S; ++s) {
        for (std::size_t a = 0; a < A; ++a) {
            if (d.terminals.contains(s)) {
                d.transition[idx(s, a, s)] = 1.0;
                continue;
            }
            d.transition[idx(s, a, target(s, a))] += 1.0 - spec.slip;
            for (std::size_t dir = 0; dir < A; ++dir) d.transition[idx(s, a, target(s, dir))] += spec.slip / A;
            for (std::size_t s2 = 0; s2 < S; ++s2) {
                if (d.transition[idx(s, a, s2)] == 0.0) continue;
                double r = spec.step_reward;
                if (s2 == goal) r += spec.goal_reward;
                else if (pit[s2]) r += spec.pit_reward;
                d.reward[idx(s, a, s2)] = r;
                r_max = std::max(r_max, std::abs(r));
            }
        }
    }
    d.r_max = r_max;
    return TabularMdp(std::move(d));
}

nlohmann::json to_json(const GridworldSpec& spec) {
    return {{"kind", "gridworld"},     {"size", spec.size},           {"slip", spec.slip},
            {"step_reward", spec.step_reward}, {"goal_reward", spec.goal_reward},
            {"pit_reward", spec.pit_reward},   {"pits", spec.pits},   {"discount", spec.discount},
            {"horizon", spec.horizon},         {"seed", spec.seed}};
}

GridworldSpec gridworld_spec_from_json(const nlohmann::json& doc) {
    GridworldSpec g;
    g.size = doc.value("size", g.size);
    g.slip = doc.value("slip", g.slip);
    g.step_reward = doc.value("step_reward", g.step_reward);
    g.goal_reward = doc.value("goal_reward", g.goal_reward);
    g.pit_reward = doc.value("pit_reward", g.pit_reward);
    g.pits = doc.value("pits", g.pits);
    g.discount = doc.value("discount", g.discount);
    g.horizon = doc.value("horizon", g.horizon);
    g.seed = doc.value("seed", g.seed);
    return g;
}

TabularMdp make_random_mdp(const RandomMdpSpec& spec) {
    const std::size_t S = spec.n_states, A = spec.n_actions;
    if (S == 0 || A == 0) throw std::invalid_argument("random mdp: empty dimensions");
    const std::size_t branching = std::clamp<std::size_t>(spec.branching, 1, S);
    Rng rng(derive_seed(spec.seed, 0x72616e64));
    MdpData d;
    d.n_states = S;
    d.n_actions = A;
    d.discount = spec.discount;
    d.r_max = spec.r_max;
    d.horizon_cap = spec.horizon;
    d.transition.assign(S * A * S, 0.0);
    d.reward.assign(S * A * S, 0.0);
    d.initial_dist.assign(S, 1.0 / static_cast<double>(S));
    std::vector<std::size_t> perm(S);
    for (std::size_t s = 0; s < S; ++s) {
        for (std::size_t a = 0; a < A; ++a) {
            const std::size_t base = (s * A + a) * S;
            for (std::size_t i = 0; i < S; ++i) perm[i] = i;
            // partial Fisher-Yates for the successor set
            for (std::size_t i = 0; i < branching; ++i) std::swap(perm[i], perm[i + rng.index(S - i)]);
            double total = 0.0;
            for (std::size_t i = 0; i < branching; ++i) {
                const double w = rng.exponential();
                d.transition[base + perm[i]] = w;
                total += w;
            }
            for (std::size_t i = 0; i < branching; ++i) d.transition[base + perm[i]] /= total;
            for (std::size_t s2 = 0; s2 < S; ++s2)
                d.reward[base + s2] = spec.r_max * (2.0 * rng.uniform() - 1.0);
        }
    }
    return TabularMdp(std::move(d));
}

StochasticPolicy make_random_policy(std::size_t n_states, std::size_t n_actions, std::uint64_t seed,
                                    double min_prob) {
    if (min_prob * static_cast<double>(n_actions) >= 1.0)
        throw std::invalid_argument("random policy: min_prob too large");
    Rng rng(derive_seed(seed, 0x706f6c));
    Matrix<double> m(n_states, n_actions);
    for (std::size_t s = 0; s < n_states; ++s) {
        double total = 0.0;
        for (std::size_t a = 0; a < n_actions; ++a) total += (m(s, a) = rng.exponential());
        // Mix toward uniform so that every entry is at least min_prob.
        const double keep = 1.0 - min_prob * static_cast<double>(n_actions);
        for (std::size_t a = 0; a < n_actions; ++a) m(s, a) = keep * m(s, a) / total + min_prob;
    }
    return StochasticPolicy(std::move(m));
}

StochasticPolicy epsilon_mixture(const StochasticPolicy& base, double epsilon) {
    if (epsilon < 0.0 || epsilon > 1.0) throw std::invalid_argument("epsilon must lie in [0, 1]");
    Matrix<double> m = base.probs();
    const double u = 1.0 / static_cast<double>(base.n_actions());
    for (double& x : m.data()) x = (1.0 - epsilon) * x + epsilon * u;
    return StochasticPolicy(std::move(m));
}

} // namespace offrl
