#include "offrl/algorithms.hpp"
#include "offrl/empirical_mdp.hpp"
#include "offrl/generators.hpp"
#include "offrl/io.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

using namespace offrl;

namespace {

// Three-state deterministic loop: action 0 advances, action 1 stays. Reward 1
// for wrapping from state 2 back to 0, 0.1 for staying.
TabularMdp cycle_mdp(double reward_shift = 0.0, double reward_scale = 1.0) {
    MdpData d;
    d.n_states = 3;
    d.n_actions = 2;
    d.transition.assign(18, 0.0);
    d.reward.assign(18, 0.0);
    for (std::size_t s = 0; s < 3; ++s) {
        d.transition[(s * 2 + 0) * 3 + (s + 1) % 3] = 1.0;
        d.transition[(s * 2 + 1) * 3 + s] = 1.0;
        d.reward[(s * 2 + 0) * 3 + (s + 1) % 3] = reward_scale * (s == 2 ? 1.0 : 0.0) + reward_shift;
        d.reward[(s * 2 + 1) * 3 + s] = reward_scale * 0.1 + reward_shift;
    }
    d.discount = 0.9;
    d.r_max = std::abs(reward_scale) + std::abs(reward_shift);
    d.initial_dist = {1, 0, 0};
    d.horizon_cap = 30;
    return TabularMdp(d);
}

Dataset shift_rewards(Dataset ds, double c) {
    for (auto& t : ds.transitions) t.r += c;
    return ds;
}

GridworldSpec grid_spec(std::uint64_t seed) {
    GridworldSpec g;
    g.seed = seed;
    g.slip = 0.2;
    g.step_reward = -0.2;
    g.pits = 3;
    return g;
}

StochasticPolicy optimal(const TabularMdp& m) { return value_iteration(m, 1e-10).greedy; }

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

AlgoSpec spec_of(AlgoKind kind) {
    AlgoSpec s;
    s.kind = kind;
    return s;
}

const AlgoKind kAllKinds[] = {AlgoKind::OfflineQ, AlgoKind::EnsembleQ, AlgoKind::RemQ,  AlgoKind::Bcq,
                              AlgoKind::TrBcq,    AlgoKind::BailImitate, AlgoKind::Spibb};

} // namespace

TEST(AlgoSpec, ValidationAndJson) {
    AlgoSpec s = spec_of(AlgoKind::Bcq);
    s.tau = 1.0;
    EXPECT_THROW(s.validate(), std::invalid_argument);
    s.tau = 0.0;
    EXPECT_THROW(s.validate(), std::invalid_argument);
    s = spec_of(AlgoKind::TrBcq);
    s.zeta = 0.0;
    EXPECT_THROW(s.validate(), std::invalid_argument);
    s = spec_of(AlgoKind::Spibb);
    s.n_threshold = 0;
    EXPECT_THROW(s.validate(), std::invalid_argument);
    s = spec_of(AlgoKind::EnsembleQ);
    s.heads = 0;
    EXPECT_THROW(s.validate(), std::invalid_argument);
    EXPECT_THROW(algo_kind_from_string("dqn"), std::invalid_argument);
    for (AlgoKind k : kAllKinds) {
        AlgoSpec a = spec_of(k);
        a.seed = 42;
        a.name = "x";
        const AlgoSpec b = algo_spec_from_json(to_json(a));
        EXPECT_EQ(to_json(b), to_json(a));
        EXPECT_EQ(algo_kind_from_string(to_string(k)), k);
    }
}

TEST(OfflineQ, FullCoverageRecoversOptimalPolicy) {
    const auto m = cycle_mdp();
    const Dataset ds = generate(m, StochasticPolicy::uniform(3, 2), 50, 1);
    const auto pi = offline_q(ds, spec_of(AlgoKind::OfflineQ), TrainingDims::of(m));
    EXPECT_EQ(pi.probs(), optimal(m).probs());
}

TEST(OfflineQ, UncoveredStateDefaultsToActionZero) {
    const auto m = cycle_mdp();
    Dataset ds;
    ds.transitions.push_back({0, 0, 0, 1, 0.1, 0, true, 0.1});
    const auto pi = offline_q(ds, spec_of(AlgoKind::OfflineQ), TrainingDims::of(m));
    EXPECT_EQ(pi(1, 0), 1.0);
    EXPECT_EQ(pi(2, 0), 1.0);
    EXPECT_EQ(pi(0, 1), 1.0); // the only action with a positive estimate
    EXPECT_THROW(offline_q(Dataset{}, spec_of(AlgoKind::OfflineQ), TrainingDims::of(m)), std::invalid_argument);
}

TEST(OfflineQ, BiasedLowQualityDataFallsShortOfOptimum) {
    const auto m = make_gridworld(grid_spec(1));
    const auto behavior = epsilon_mixture(optimal(m), 0.9);
    const Dataset ds = generate(m, behavior, 100, 3);
    const auto pi = offline_q(ds, spec_of(AlgoKind::OfflineQ), TrainingDims::of(m));
    EXPECT_LT(mean_return(m, pi), mean_return(m, optimal(m)));
}

TEST(EnsembleQ, NoResamplingEqualsOfflineQ) {
    const auto m = make_gridworld(grid_spec(2));
    const Dataset ds = generate(m, StochasticPolicy::uniform(25, 4), 300, 5);
    AlgoSpec s = spec_of(AlgoKind::EnsembleQ);
    s.bootstrap = false;
    s.heads = 4;
    const auto dims = TrainingDims::of(m);
    EXPECT_EQ(ensemble_q(ds, s, dims).probs(), offline_q(ds, spec_of(AlgoKind::OfflineQ), dims).probs());
}

TEST(EnsembleQ, MoreHeadsTrackTheFullDataQBetter) {
    const auto m = make_gridworld(grid_spec(3));
    const auto behavior = epsilon_mixture(optimal(m), 0.7);
    const auto dims = TrainingDims::of(m);
    std::vector<double> d2, d8;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const Dataset ds = generate(m, behavior, 60, seed);
        // Greedy-Q reference: Q-iteration on the full empirical model.
        const QTable ref = q_iteration(training_model(ds, dims), 1000);
        auto dist = [&](std::size_t heads) {
            AlgoSpec s = spec_of(AlgoKind::EnsembleQ);
            s.heads = heads;
            s.seed = seed;
            const QTable q = ensemble_mean_q(ds, s, dims);
            double worst = 0.0;
            for (StateIndex st = 0; st < dims.n_states; ++st)
                for (ActionIndex a = 0; a < dims.n_actions; ++a) worst = std::max(worst, std::abs(q(st, a) - ref(st, a)));
            return worst;
        };
        d2.push_back(dist(2));
        d8.push_back(dist(8));
    }
    EXPECT_LE(median(d8), median(d2));
}

TEST(RewardShift, GreedyPolicyIsInvariant) {
    const auto m = cycle_mdp();
    const Dataset ds = generate(m, StochasticPolicy::uniform(3, 2), 40, 2);
    const auto dims = TrainingDims::of(m);
    for (AlgoKind k : {AlgoKind::OfflineQ, AlgoKind::EnsembleQ, AlgoKind::Bcq, AlgoKind::TrBcq}) {
        AlgoSpec s = spec_of(k);
        s.zeta = 1.0;
        const auto base = train(ds, s, dims);
        for (double c : {-3.0, 0.5, 7.0}) EXPECT_EQ(train(shift_rewards(ds, c), s, dims).probs(), base.probs());
    }
    // Full-coverage estimates have no sink edges, so every Q entry moves by c/(1-gamma).
    const QTable q0 = q_iteration(training_model(ds, dims), 2000);
    const QTable q1 = q_iteration(training_model(shift_rewards(ds, 2.0), dims), 2000);
    for (StateIndex s = 0; s < 3; ++s)
        for (ActionIndex a = 0; a < 2; ++a) EXPECT_NEAR(q1(s, a) - q0(s, a), 2.0 / (1 - 0.9), 1e-8);
}

TEST(RemQ, SingleHeadEqualsOfflineQ) {
    const auto m = make_gridworld(grid_spec(1));
    const Dataset ds = generate(m, epsilon_mixture(optimal(m), 0.5), 200, 9);
    AlgoSpec s = spec_of(AlgoKind::RemQ);
    s.heads = 1;
    const auto dims = TrainingDims::of(m);
    EXPECT_EQ(rem_q(ds, s, dims).probs(), offline_q(ds, spec_of(AlgoKind::OfflineQ), dims).probs());
}

TEST(RemQ, ConvexWeightsLieOnSimplex) {
    Rng rng(11);
    for (int i = 0; i < 1000; ++i) {
        const auto w = draw_convex_weights(rng, 1 + i % 9);
        double sum = 0.0;
        for (double x : w) {
            EXPECT_GE(x, 0.0);
            sum += x;
        }
        EXPECT_NEAR(sum, 1.0, 1e-12);
    }
}

TEST(RemQ, FullCoverageRecoversOptimalPolicy) {
    const auto m = cycle_mdp();
    const Dataset ds = generate(m, StochasticPolicy::uniform(3, 2), 50, 4);
    AlgoSpec s = spec_of(AlgoKind::RemQ);
    s.heads = 4;
    EXPECT_EQ(rem_q(ds, s, TrainingDims::of(m)).probs(), optimal(m).probs());
}

TEST(Bcq, VanishingThresholdEqualsOfflineQ) {
    const auto m = make_gridworld(grid_spec(2));
    const Dataset ds = generate(m, StochasticPolicy::uniform(25, 4), 2000, 8);
    AlgoSpec s = spec_of(AlgoKind::Bcq);
    s.tau = 1e-9;
    const auto dims = TrainingDims::of(m);
    EXPECT_EQ(bcq(ds, s, dims).probs(), offline_q(ds, spec_of(AlgoKind::OfflineQ), dims).probs());
}

TEST(Bcq, DeterministicBehaviorIsImitatedNearUnitThreshold) {
    const auto m = make_gridworld(grid_spec(1));
    const std::vector<ActionIndex> acts{1, 2, 1, 2, 1, 2, 1, 2, 1, 2, 1, 2, 1, 2, 1, 2, 1, 2, 1, 2, 1, 2, 1, 2, 1};
    const auto behavior = StochasticPolicy::deterministic(acts, 4);
    const Dataset ds = generate(m, behavior, 100, 2);
    AlgoSpec s = spec_of(AlgoKind::Bcq);
    s.tau = 0.99;
    const auto pi = bcq(ds, s, TrainingDims::of(m));
    const CountTable c = counts(ds, 25, 4);
    for (StateIndex st = 0; st < 25; ++st)
        if (c.visited(st)) EXPECT_EQ(pi(st, acts[st]), 1.0);
}

TEST(Bcq, ConstraintSoundness) {
    const auto m = make_gridworld(grid_spec(3));
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const Dataset ds = generate(m, epsilon_mixture(optimal(m), 0.6), 80, seed);
        for (AlgoKind k : {AlgoKind::Bcq, AlgoKind::TrBcq}) {
            const AlgoSpec s = spec_of(k);
            const Dataset train_set = k == AlgoKind::TrBcq ? top_return_select(ds, s.zeta) : ds;
            const auto pi_b = empirical_behavior_policy(counts(train_set, 25, 4));
            const auto pi = train(ds, s, TrainingDims::of(m));
            for (StateIndex st = 0; st < 25; ++st) {
                const auto row = pi_b.row(st);
                const double mx = *std::max_element(row.begin(), row.end());
                for (ActionIndex a = 0; a < 4; ++a)
                    if (pi(st, a) > 0) EXPECT_GT(pi_b(st, a) / mx, s.tau) << "state " << st;
            }
        }
    }
}

TEST(Bcq, AllowedSetNeverEmpty) {
    Matrix<double> p(2, 3);
    p(0, 0) = 0.2;
    p(0, 1) = 0.2;
    p(0, 2) = 0.6;
    p(1, 0) = p(1, 1) = p(1, 2) = 1.0 / 3;
    const auto allowed = bcq_allowed(StochasticPolicy(p), 0.5);
    EXPECT_EQ(allowed(0, 0) + allowed(0, 1) + allowed(0, 2), 1);
    EXPECT_EQ(allowed(1, 0) + allowed(1, 1) + allowed(1, 2), 3);
}

TEST(Bcq, MediumQualityAtLeastOfflineQ) {
    std::vector<double> b, o;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto m = make_gridworld(grid_spec(1 + seed % 3));
        const Dataset ds = generate(m, epsilon_mixture(optimal(m), 0.5), 100, seed);
        const auto dims = TrainingDims::of(m);
        b.push_back(mean_return(m, bcq(ds, spec_of(AlgoKind::Bcq), dims)));
        o.push_back(mean_return(m, offline_q(ds, spec_of(AlgoKind::OfflineQ), dims)));
    }
    EXPECT_GE(median(b), median(o));
}

TEST(TrBcq, FullSelectionIsBcq) {
    const auto m = make_gridworld(grid_spec(2));
    const Dataset ds = generate(m, epsilon_mixture(optimal(m), 0.8), 150, 6);
    AlgoSpec s = spec_of(AlgoKind::TrBcq);
    s.zeta = 1.0;
    const auto dims = TrainingDims::of(m);
    EXPECT_EQ(policy_to_json(trbcq(ds, s, dims)).dump(), policy_to_json(bcq(ds, spec_of(AlgoKind::Bcq), dims)).dump());
}

TEST(TrBcq, EmptySelectionThrows) {
    const auto m = cycle_mdp();
    EXPECT_THROW(trbcq(Dataset{}, spec_of(AlgoKind::TrBcq), TrainingDims::of(m)), std::invalid_argument);
}

// Two non-terminal states; the episode starts in s1. From s1, a0 moves to s0
// and a1 stays. In s0, a0 stays and pays 1 while a1 returns to s1. Noise
// episodes take a1 with probability 0.9, so a0 at s1 fails the ratio test on
// the full data and the constrained learner never leaves s1.
TEST(TrBcq, TopHalfSelectionRecoversOptimumWhereBcqFails) {
    MdpData d;
    d.n_states = 2;
    d.n_actions = 2;
    d.transition = {1, 0, 0, 1, 1, 0, 0, 1};
    d.reward = {1, 0, 0, 0, 0, 0, 0, 0};
    d.discount = 0.9;
    d.r_max = 1;
    d.initial_dist = {0, 1};
    d.horizon_cap = 10;
    const TabularMdp m(d);
    const auto opt = StochasticPolicy::deterministic({0, 0}, 2);
    Matrix<double> noisy(2, 2);
    noisy(0, 0) = noisy(1, 0) = 0.1;
    noisy(0, 1) = noisy(1, 1) = 0.9;
    const Dataset ds = concat(generate(m, opt, 10, 1), generate(m, StochasticPolicy(noisy), 10, 2));
    AlgoSpec s = spec_of(AlgoKind::TrBcq);
    s.zeta = 0.5;
    s.tau = 0.3;
    const auto dims = TrainingDims::of(m);
    const auto tr = trbcq(ds, s, dims);
    const auto b = bcq(ds, spec_of(AlgoKind::Bcq), dims);
    EXPECT_EQ(tr.probs(), opt.probs());
    EXPECT_EQ(expected_episode_return(m, tr), 9.0);
    EXPECT_LT(expected_episode_return(m, b), expected_episode_return(m, tr));
}

TEST(TrBcq, BestZetaOnLowQualityAtLeastBcq) {
    std::vector<double> tr, b;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto m = make_gridworld(grid_spec(1 + seed % 3));
        const Dataset ds = generate(m, epsilon_mixture(optimal(m), 0.9), 300, seed);
        const auto dims = TrainingDims::of(m);
        double best = -INFINITY;
        for (double zeta : {0.3, 0.6}) {
            AlgoSpec s = spec_of(AlgoKind::TrBcq);
            s.zeta = zeta;
            best = std::max(best, mean_return(m, trbcq(ds, s, dims)));
        }
        tr.push_back(best);
        b.push_back(mean_return(m, bcq(ds, spec_of(AlgoKind::Bcq), dims)));
    }
    EXPECT_GE(median(tr), median(b));
}

TEST(BailImitate, SingleEpisodeIsReproduced) {
    const auto m = cycle_mdp();
    const auto behavior = StochasticPolicy::deterministic({0, 1, 0}, 2);
    const Dataset ds = generate(m, behavior, 1, 3);
    AlgoSpec s = spec_of(AlgoKind::BailImitate);
    s.zeta = 1.0;
    const auto pi = bail_imitate(ds, s, TrainingDims::of(m));
    for (const auto& t : ds.transitions) EXPECT_EQ(pi(t.s, t.a), 1.0);
    EXPECT_EQ(pi(2, 0), 1.0); // unvisited
}

TEST(BailImitate, SymmetricCountsPickLowestIndex) {
    Dataset ds;
    for (std::int64_t e = 0; e < 4; ++e) ds.transitions.push_back({e, 0, 0, static_cast<ActionIndex>(e % 2), 0.0, 1, true, 0.0});
    AlgoSpec s = spec_of(AlgoKind::BailImitate);
    s.zeta = 1.0;
    const auto pi = bail_imitate(ds, s, {3, 2, 0.9});
    EXPECT_EQ(pi(0, 0), 1.0);
}

TEST(BailImitate, HighQualityParityWithBcq) {
    std::vector<double> bail, b;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto m = make_gridworld(grid_spec(1 + seed % 3));
        const Dataset ds = generate(m, epsilon_mixture(optimal(m), 0.1), 200, seed);
        const auto dims = TrainingDims::of(m);
        bail.push_back(mean_return(m, bail_imitate(ds, spec_of(AlgoKind::BailImitate), dims)));
        b.push_back(mean_return(m, bcq(ds, spec_of(AlgoKind::Bcq), dims)));
    }
    EXPECT_LE(std::abs(median(bail) - median(b)), 0.05 * std::abs(median(b)));
}

TEST(Spibb, UnitThresholdWithFullCoverageIsGreedy) {
    const auto m = make_gridworld(grid_spec(2));
    const Dataset ds = generate(m, StochasticPolicy::uniform(25, 4), 2000, 8);
    AlgoSpec s = spec_of(AlgoKind::Spibb);
    s.n_threshold = 1;
    const auto dims = TrainingDims::of(m);
    const auto model = training_model(ds, dims);
    const auto sp = spibb(ds, s, dims), oq = offline_q(ds, spec_of(AlgoKind::OfflineQ), dims);
    EXPECT_NEAR(mean_return(model, pad_policy(sp, model.n_states())), mean_return(model, pad_policy(oq, model.n_states())),
                1e-8);
    // Rows agree wherever data exists; unvisited rows keep the uniform behavior.
    const CountTable c = counts(ds, 25, 4);
    for (StateIndex st = 0; st < 25; ++st) {
        if (!c.visited(st)) continue;
        for (ActionIndex a = 0; a < 4; ++a) EXPECT_EQ(sp(st, a), oq(st, a)) << "state " << st;
    }
}

TEST(Spibb, HugeThresholdReturnsBehavior) {
    const auto m = make_gridworld(grid_spec(1));
    const Dataset ds = generate(m, epsilon_mixture(optimal(m), 0.5), 50, 1);
    AlgoSpec s = spec_of(AlgoKind::Spibb);
    s.n_threshold = 1'000'000;
    EXPECT_EQ(spibb(ds, s, TrainingDims::of(m)).probs(),
              empirical_behavior_policy(counts(ds, 25, 4)).probs());
}

TEST(Spibb, MassConservation) {
    const auto m = make_gridworld(grid_spec(3));
    const Dataset ds = generate(m, epsilon_mixture(optimal(m), 0.7), 60, 4);
    AlgoSpec s = spec_of(AlgoKind::Spibb);
    s.n_threshold = 8;
    const auto pi = spibb(ds, s, TrainingDims::of(m));
    const CountTable c = counts(ds, 25, 4);
    const auto pi_b = empirical_behavior_policy(c);
    for (StateIndex st = 0; st < 25; ++st) {
        double sum = 0.0;
        for (ActionIndex a = 0; a < 4; ++a) {
            sum += pi(st, a);
            if (c.n_sa(st, a) < s.n_threshold) EXPECT_EQ(pi(st, a), pi_b(st, a));
        }
        EXPECT_NEAR(sum, 1.0, 1e-12);
    }
}

TEST(Spibb, SafetyOnLowQualityData) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto m = make_gridworld(grid_spec(1 + seed % 3));
        const Dataset ds = generate(m, epsilon_mixture(optimal(m), 0.9), 300, seed);
        AlgoSpec s = spec_of(AlgoKind::Spibb);
        s.n_threshold = 10;
        const auto pi_b = empirical_behavior_policy(counts(ds, 25, 4));
        EXPECT_GE(mean_return(m, spibb(ds, s, TrainingDims::of(m))), mean_return(m, pi_b) - 1e-6) << "seed " << seed;
    }
}

TEST(Algorithms, DeterministicAcrossRuns) {
    const auto m = make_gridworld(grid_spec(1));
    const Dataset ds = generate(m, epsilon_mixture(optimal(m), 0.5), 120, 7);
    for (AlgoKind k : kAllKinds) {
        AlgoSpec s = spec_of(k);
        s.seed = 13;
        const auto a = train(ds, s, TrainingDims::of(m)), b = train(ds, s, TrainingDims::of(m));
        EXPECT_EQ(a.probs(), b.probs()) << to_string(k);
    }
}

TEST(Algorithms, PolicyFileEchoesSpec) {
    AlgoSpec s = spec_of(AlgoKind::TrBcq);
    s.zeta = 0.3;
    const auto doc = policy_to_json(StochasticPolicy::uniform(2, 2), to_json(s));
    const auto back = policy_from_json(doc);
    EXPECT_EQ(back.probs(), StochasticPolicy::uniform(2, 2).probs());
    EXPECT_EQ(algo_spec_from_json(doc.at("algo")).zeta, 0.3);
}
