#include "offrl/harness.hpp"
#include "offrl/io.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

using namespace offrl;
namespace fs = std::filesystem;

namespace {

GridworldSpec grid_spec(std::uint64_t seed) {
    GridworldSpec g;
    g.seed = seed;
    g.slip = 0.2;
    g.step_reward = -0.2;
    g.pits = 3;
    return g;
}

LadderSpec epsilon_ladder(std::vector<LadderLevel> levels) {
    LadderSpec l;
    l.mode = LadderMode::Epsilon;
    l.levels = std::move(levels);
    return l;
}

ExperimentConfig tiny_config() {
    ExperimentConfig cfg;
    cfg.envs.push_back({"g", grid_spec(1), ""});
    cfg.ladder = epsilon_ladder({{"low", 0.9}, {"high", 0.1}});
    cfg.episodes = 50;
    AlgoSpec a;
    a.kind = AlgoKind::OfflineQ;
    AlgoSpec b;
    b.kind = AlgoKind::Bcq;
    cfg.algorithms = {a, b};
    cfg.seeds = {0, 1};
    cfg.workers = 2;
    return cfg;
}

ResultRow synthetic(const std::string& env, const std::string& q, std::size_t qi, const std::string& algo,
                    std::size_t ai, std::uint64_t seed, double ret) {
    ResultRow r;
    r.env = env;
    r.quality = q;
    r.quality_index = qi;
    r.algorithm = algo;
    r.algorithm_index = ai;
    r.kind = algo;
    r.seed = seed;
    r.mean_return = ret;
    return r;
}

} // namespace

TEST(Ladder, EpsilonEndpoints) {
    const auto m = make_gridworld(grid_spec(1));
    const auto uni = build_behavior_ladder(m, epsilon_ladder({{"u", 1.0}}));
    EXPECT_EQ(uni.at(0).policy, StochasticPolicy::uniform(25, 4));
    const auto opt = build_behavior_ladder(m, epsilon_ladder({{"o", 0.0}}));
    EXPECT_EQ(opt.at(0).policy, value_iteration(m, 1e-10).greedy);
}

TEST(Ladder, EpsilonLevelsStrictlyOrdered) {
    for (std::uint64_t seed : {1, 2, 3}) {
        const auto m = make_gridworld(grid_spec(seed));
        const auto ladder = build_behavior_ladder(m, epsilon_ladder({{"low", 0.9}, {"medium", 0.5}, {"high", 0.1}}));
        ASSERT_EQ(ladder.size(), 3u);
        EXPECT_LT(ladder[0].mean_return, ladder[1].mean_return);
        EXPECT_LT(ladder[1].mean_return, ladder[2].mean_return);
        for (const auto& level : ladder) EXPECT_NEAR(level.mean_return, mean_return(m, level.policy), 1e-9);
    }
}

TEST(Ladder, QLearningLevelsStrictlyOrdered) {
    const auto m = make_gridworld(grid_spec(2));
    const auto ladder = build_behavior_ladder(m, LadderSpec{});
    ASSERT_EQ(ladder.size(), 3u);
    EXPECT_LT(ladder[0].mean_return, ladder[1].mean_return);
    EXPECT_LT(ladder[1].mean_return, ladder[2].mean_return);
}

TEST(Ladder, UnorderableLadderIsConfigError) {
    // A single-state MDP gives every policy the same return.
    MdpData d;
    d.n_states = 1;
    d.n_actions = 2;
    d.transition = {1, 1};
    d.reward = {1, 1};
    d.discount = 0.5;
    d.r_max = 1;
    d.initial_dist = {1};
    d.horizon_cap = 5;
    LadderSpec l = epsilon_ladder({{"a", 0.9}, {"b", 0.1}});
    l.max_retries = 2;
    EXPECT_THROW(build_behavior_ladder(TabularMdp(d), l), ConfigError);
}

TEST(Ladder, EpsilonGreedyRows) {
    QTable q{Matrix<double>(2, 3, 0.0)};
    q.values(0, 2) = 1.0;
    const auto pi = epsilon_greedy(q, 2, 0.3);
    EXPECT_NEAR(pi(0, 2), 0.7 + 0.1, 1e-15);
    EXPECT_NEAR(pi(0, 0), 0.1, 1e-15);
    EXPECT_NEAR(pi(1, 0), 0.8, 1e-15); // lowest index on ties
}

TEST(Sweep, SingleCellGivesOneRow) {
    ExperimentConfig cfg = tiny_config();
    cfg.ladder = epsilon_ladder({{"only", 0.5}});
    cfg.algorithms.resize(1);
    cfg.seeds = {3};
    const auto rows = run_sweep(cfg);
    ASSERT_EQ(rows.size(), 1u);
    EXPECT_EQ(rows[0].status, "ok");
    EXPECT_EQ(rows[0].quality, "only");
    const double vmax = 1.0 / (1 - 0.95) * 1.2; // |r| <= goal + step
    EXPECT_LE(std::abs(rows[0].mean_return), vmax);
    EXPECT_LE(std::abs(rows[0].episode_return), 40 * 1.2);
}

TEST(Sweep, RowsAreCanonicalAndWorkerIndependent) {
    ExperimentConfig cfg = tiny_config();
    const auto a = run_sweep(cfg);
    cfg.workers = 1;
    const auto b = run_sweep(cfg);
    ASSERT_EQ(a.size(), 2u * 2u * 2u);
    EXPECT_EQ(results_to_csv(a), results_to_csv(b));
    for (std::size_t i = 1; i < a.size(); ++i) {
        const auto key = [](const ResultRow& r) { return std::tuple(r.quality_index, r.algorithm_index, r.seed); };
        EXPECT_LT(key(a[i - 1]), key(a[i]));
    }
    for (const auto& r : a) {
        EXPECT_EQ(r.status, "ok");
        EXPECT_GE(r.dominated_fraction, 0.0);
        EXPECT_LE(r.dominated_fraction, 1.0);
        EXPECT_GT(r.n_transitions, 0);
    }
}

TEST(Sweep, FailingSpecIsIsolated) {
    ExperimentConfig cfg = tiny_config();
    const auto clean = run_sweep(cfg);
    AlgoSpec bad;
    bad.kind = AlgoKind::TrBcq;
    bad.iterations = 0; // fails validation inside each cell
    bad.name = "bad";
    cfg.algorithms.push_back(bad);
    const auto rows = run_sweep(cfg);
    ASSERT_EQ(rows.size(), 2u * 3u * 2u);
    std::size_t errors = 0;
    std::vector<ResultRow> rest;
    for (const auto& r : rows) {
        if (r.algorithm == "bad") {
            EXPECT_EQ(r.status, "error");
            EXPECT_FALSE(r.error.empty());
            EXPECT_EQ(r.error.find(','), std::string::npos);
            ++errors;
        } else {
            rest.push_back(r);
        }
    }
    EXPECT_EQ(errors, 4u);
    EXPECT_EQ(rest, clean);
}

TEST(Sweep, QuantileModeUsesThreeLevels) {
    ExperimentConfig cfg = tiny_config();
    cfg.split = SplitMode::Quantile;
    cfg.ladder = epsilon_ladder({{"a", 0.9}, {"b", 0.5}, {"c", 0.1}});
    cfg.algorithms.resize(1);
    cfg.seeds = {0};
    cfg.compute_bounds = false;
    const auto rows = run_sweep(cfg);
    ASSERT_EQ(rows.size(), 3u);
    EXPECT_EQ(rows[0].quality, "low");
    EXPECT_EQ(rows[2].quality, "high");
}

TEST(Csv, RoundTripIsLossless) {
    ExperimentConfig cfg = tiny_config();
    const auto rows = run_sweep(cfg);
    const std::string csv = results_to_csv(rows);
    EXPECT_EQ(results_from_csv(csv), rows);
    EXPECT_EQ(results_to_csv(results_from_csv(csv)), csv);
    std::string header = csv.substr(0, csv.find('\n'));
    std::string joined;
    for (const auto& c : result_columns()) joined += (joined.empty() ? "" : ",") + c;
    EXPECT_EQ(header, joined);
    EXPECT_THROW(results_from_csv("bogus\n1\n"), std::runtime_error);
}

TEST(Trend, Classification) {
    EXPECT_EQ(classify_trend({1, 2, 3}), "increase");
    EXPECT_EQ(classify_trend({3, 2, 1}), "decrease");
    EXPECT_EQ(classify_trend({1, 1.001, 0.999}), "flat");
    EXPECT_EQ(classify_trend({1, 3, 2}), "mixed");
    EXPECT_EQ(classify_trend({-3, -2, -1}), "increase");
    EXPECT_EQ(classify_trend({1, 1.005, 2}), "increase");
}

TEST(Trend, ReportFromSyntheticRows) {
    std::vector<ResultRow> rows;
    const char* levels[] = {"low", "medium", "high"};
    for (std::size_t q = 0; q < 3; ++q)
        for (std::uint64_t seed = 0; seed < 3; ++seed) {
            rows.push_back(synthetic("e1", levels[q], q, "up", 0, seed, 1.0 + q + 0.01 * seed));
            rows.push_back(synthetic("e1", levels[q], q, "down", 1, seed, 3.0 - q));
        }
    const TrendSummary t = trend_report(rows);
    ASSERT_NE(t.find("e1", "up"), nullptr);
    EXPECT_EQ(t.find("e1", "up")->trend, "increase");
    EXPECT_EQ(t.find("e1", "down")->trend, "decrease");
    EXPECT_NEAR(t.find("e1", "up")->medians[1], 2.01, 1e-12);
    EXPECT_EQ(t.best[0][0], "down");
    EXPECT_EQ(t.best[0][2], "up");
    EXPECT_EQ(t.trend_share("up", "increase"), 1.0);
    EXPECT_EQ(t.best_count("up"), 2u); // medium: 2.01 vs 2
    const std::string tables = trend_tables(t);
    EXPECT_NE(tables.find("increase"), std::string::npos);
    EXPECT_TRUE(to_json(t).contains("entries"));
}

TEST(Trend, ErrorRowsAreIgnoredAndFewLevelsThrow) {
    std::vector<ResultRow> rows{synthetic("e", "low", 0, "a", 0, 0, 1.0)};
    EXPECT_THROW(trend_report(rows), std::invalid_argument);
    rows.push_back(synthetic("e", "high", 1, "a", 0, 0, 2.0));
    auto bad = synthetic("e", "high", 1, "a", 0, 1, -100.0);
    bad.status = "error";
    rows.push_back(bad);
    EXPECT_EQ(trend_report(rows).find("e", "a")->trend, "increase");
}

TEST(Config, JsonRoundTripAndDefaults) {
    const ExperimentConfig d = default_experiment_config();
    EXPECT_NO_THROW(d.validate());
    EXPECT_EQ(d.envs.size(), 3u);
    EXPECT_EQ(d.seeds.size(), 5u);
    EXPECT_EQ(d.episodes, 1000);
    const auto doc = to_json(d);
    EXPECT_EQ(to_json(experiment_config_from_json(doc)), doc);
    EXPECT_EQ(d.quality_labels(), (std::vector<std::string>{"low", "medium", "high"}));
}

TEST(Config, ValidationErrors) {
    auto doc = to_json(tiny_config());
    auto no_algos = doc;
    no_algos["algorithms"] = nlohmann::json::array();
    EXPECT_THROW(experiment_config_from_json(no_algos), ConfigError);
    auto no_seeds = doc;
    no_seeds["seeds"] = nlohmann::json::array();
    EXPECT_THROW(experiment_config_from_json(no_seeds), ConfigError);
    auto missing_file = doc;
    missing_file["envs"] = nlohmann::json::array({{{"id", "x"}, {"path", "does_not_exist.json"}}});
    EXPECT_THROW(experiment_config_from_json(missing_file, fs::temp_directory_path()), ConfigError);
    EXPECT_THROW(load_experiment_config("/nonexistent/config.json"), ConfigError);
}

TEST(Config, FileEnvironmentResolvesRelativeToBase) {
    const fs::path dir = fs::temp_directory_path() / "offrl_harness_test";
    fs::create_directories(dir);
    save_mdp(dir / "env.json", make_gridworld(grid_spec(1)));
    auto doc = to_json(tiny_config());
    doc["envs"] = nlohmann::json::array({{{"id", "file"}, {"path", "env.json"}}});
    const auto cfg = experiment_config_from_json(doc, dir);
    EXPECT_EQ(mdp_to_json(cfg.envs.at(0).load()), mdp_to_json(make_gridworld(grid_spec(1))));
    fs::remove_all(dir);
}

TEST(RunAndWrite, WritesArtifacts) {
    ExperimentConfig cfg = tiny_config();
    cfg.out_dir = (fs::temp_directory_path() / "offrl_run_and_write").string();
    fs::remove_all(cfg.out_dir);
    const auto rows = run_and_write(cfg);
    EXPECT_EQ(read_text_file(fs::path(cfg.out_dir) / "results.csv"), results_to_csv(rows));
    EXPECT_TRUE(fs::exists(fs::path(cfg.out_dir) / "trend.json"));
    EXPECT_TRUE(fs::exists(fs::path(cfg.out_dir) / "trend.txt"));
    fs::remove_all(cfg.out_dir);
}
