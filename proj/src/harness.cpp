#include "offrl/harness.hpp"
#include "offrl/empirical_mdp.hpp"
#include "offrl/io.hpp"
#include "offrl/rng.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <limits>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>
#include <tuple>
#include <cstdio>

namespace offrl {

namespace {

constexpr double kEvalTol = 1e-10;

void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& body) {
    workers = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(n, 1));
    if (workers == 1) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w)
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) body(i);
        });
    for (auto& t : pool) t.join();
}

std::string sanitize_field(std::string text) {
    for (char& c : text)
        if (c == ',' || c == '\n' || c == '\r') c = ';';
    return text;
}

bool is_plain_field(const std::string& text) {
    return text.find_first_of(",\n\r") == std::string::npos;
}

double median(std::vector<double> xs) {
    if (xs.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::sort(xs.begin(), xs.end());
    const std::size_t m = xs.size() / 2;
    return xs.size() % 2 ? xs[m] : 0.5 * (xs[m - 1] + xs[m]);
}

} // namespace

// ---------------------------------------------------------------- sources

TabularMdp EnvSource::load() const {
    if (gridworld) return make_gridworld(*gridworld);
    return load_mdp(path);
}

// ---------------------------------------------------------------- ladder

void LadderSpec::validate() const {
    if (levels.empty()) throw ConfigError("ladder: at least one level is required");
    for (const auto& l : levels) {
        if (l.label.empty() || !is_plain_field(l.label)) throw ConfigError("ladder: invalid level label");
        if (!(l.value >= 0.0 && l.value <= 1.0))
            throw ConfigError("ladder: level '" + l.label + "' value must lie in [0, 1]");
    }
    if (mode == LadderMode::QLearning) {
        if (budget == 0) throw ConfigError("ladder: budget must be positive");
        if (!(learn_epsilon >= 0.0 && learn_epsilon <= 1.0)) throw ConfigError("ladder: learn_epsilon out of range");
        if (!(learning_rate > 0.0 && learning_rate <= 1.0)) throw ConfigError("ladder: learning_rate out of range");
        if (!(behavior_epsilon >= 0.0 && behavior_epsilon <= 1.0))
            throw ConfigError("ladder: behavior_epsilon out of range");
    }
}

nlohmann::json to_json(const LadderSpec& spec) {
    nlohmann::json levels = nlohmann::json::array();
    for (const auto& l : spec.levels) levels.push_back({{"label", l.label}, {"value", l.value}});
    return {{"mode", spec.mode == LadderMode::QLearning ? "qlearning" : "epsilon"},
            {"levels", levels},
            {"budget", spec.budget},
            {"learn_epsilon", spec.learn_epsilon},
            {"learning_rate", spec.learning_rate},
            {"behavior_epsilon", spec.behavior_epsilon},
            {"max_retries", spec.max_retries},
            {"seed", spec.seed}};
}

LadderSpec ladder_spec_from_json(const nlohmann::json& doc) {
    LadderSpec s;
    const std::string mode = doc.value("mode", std::string("qlearning"));
    if (mode == "qlearning") s.mode = LadderMode::QLearning;
    else if (mode == "epsilon") s.mode = LadderMode::Epsilon;
    else throw ConfigError("ladder: unknown mode '" + mode + "'");
    if (doc.contains("levels")) {
        s.levels.clear();
        for (const auto& l : doc.at("levels"))
            s.levels.push_back({l.at("label").get<std::string>(), l.at("value").get<double>()});
    }
    s.budget = doc.value("budget", s.budget);
    s.learn_epsilon = doc.value("learn_epsilon", s.learn_epsilon);
    s.learning_rate = doc.value("learning_rate", s.learning_rate);
    s.behavior_epsilon = doc.value("behavior_epsilon", s.behavior_epsilon);
    s.max_retries = doc.value("max_retries", s.max_retries);
    s.seed = doc.value("seed", s.seed);
    s.validate();
    return s;
}

StochasticPolicy epsilon_greedy(const QTable& q, std::size_t n_states, double epsilon) {
    return epsilon_mixture(greedy_policy(q, n_states), epsilon);
}

std::vector<QTable> q_learning_snapshots(const TabularMdp& mdp, const LadderSpec& spec,
                                         const std::vector<std::size_t>& checkpoints, std::uint64_t seed) {
    const std::size_t S = mdp.n_states(), A = mdp.n_actions();
    const double gamma = mdp.discount();
    Rng rng(seed);
    QTable q{Matrix<double>(S, A, 0.0)};
    std::vector<QTable> out;
    std::vector<ActionIndex> ties;
    std::size_t next_checkpoint = 0;
    auto take_snapshots = [&](std::size_t done) {
        while (next_checkpoint < checkpoints.size() && checkpoints[next_checkpoint] <= done) {
            out.push_back(q);
            ++next_checkpoint;
        }
    };
    take_snapshots(0);
    for (std::size_t ep = 0; ep < spec.budget && next_checkpoint < checkpoints.size(); ++ep) {
        StateIndex s = rng.categorical(mdp.initial_dist());
        for (std::size_t step = 0; step < mdp.horizon_cap() && !mdp.is_terminal(s); ++step) {
            ActionIndex a;
            if (rng.uniform() < spec.learn_epsilon) {
                a = rng.index(A);
            } else {
                // Random tie-breaking keeps the untrained agent from locking onto action 0.
                auto row = q.values.row(s);
                const double top = *std::max_element(row.begin(), row.end());
                ties.clear();
                for (ActionIndex b = 0; b < A; ++b)
                    if (row[b] == top) ties.push_back(b);
                a = ties[rng.index(ties.size())];
            }
            const StateIndex s2 = rng.categorical(mdp.transition_row(s, a));
            const double r = mdp.r(s, a, s2);
            double target = r;
            if (!mdp.is_terminal(s2)) {
                auto row2 = q.values.row(s2);
                target += gamma * *std::max_element(row2.begin(), row2.end());
            }
            q.values(s, a) += spec.learning_rate * (target - q.values(s, a));
            s = s2;
        }
        take_snapshots(ep + 1);
    }
    while (out.size() < checkpoints.size()) out.push_back(q);
    return out;
}

namespace {

std::vector<BehaviorLevel> ladder_attempt(const TabularMdp& mdp, const LadderSpec& spec, std::size_t attempt,
                                          const StochasticPolicy& optimal) {
    std::vector<BehaviorLevel> out;
    if (spec.mode == LadderMode::Epsilon) {
        // Each retry doubles the spread of the levels around 1/2.
        const double stretch = std::ldexp(1.0, static_cast<int>(attempt));
        for (const auto& l : spec.levels) {
            const double eps = std::clamp(0.5 + (l.value - 0.5) * stretch, 0.0, 1.0);
            StochasticPolicy pi = epsilon_mixture(optimal, eps);
            out.push_back({l.label, pi, mean_return(mdp, pi, kEvalTol)});
        }
        return out;
    }
    std::vector<std::pair<std::size_t, std::size_t>> order; // (checkpoint, level)
    for (std::size_t i = 0; i < spec.levels.size(); ++i) {
        const auto ck = static_cast<std::size_t>(std::llround(spec.levels[i].value * static_cast<double>(spec.budget)));
        order.emplace_back(ck, i);
    }
    std::sort(order.begin(), order.end());
    std::vector<std::size_t> checkpoints;
    for (auto [ck, i] : order) checkpoints.push_back(ck);
    const auto snaps = q_learning_snapshots(mdp, spec, checkpoints, derive_seed(spec.seed, attempt));
    out.resize(spec.levels.size(), BehaviorLevel{"", optimal, 0.0});
    for (std::size_t k = 0; k < order.size(); ++k) {
        const std::size_t i = order[k].second;
        StochasticPolicy pi = epsilon_greedy(snaps[k], mdp.n_states(), spec.behavior_epsilon);
        out[i] = {spec.levels[i].label, pi, mean_return(mdp, pi, kEvalTol)};
    }
    return out;
}

} // namespace

std::vector<BehaviorLevel> build_behavior_ladder(const TabularMdp& mdp, const LadderSpec& spec) {
    spec.validate();
    const StochasticPolicy optimal = value_iteration(mdp, kEvalTol).greedy;
    for (std::size_t attempt = 0; attempt <= spec.max_retries; ++attempt) {
        auto levels = ladder_attempt(mdp, spec, attempt, optimal);
        bool increasing = true;
        for (std::size_t i = 1; i < levels.size(); ++i)
            increasing = increasing && levels[i].mean_return > levels[i - 1].mean_return;
        if (increasing) return levels;
    }
    throw ConfigError("behavior ladder is not strictly increasing in mean return after retries");
}

// ---------------------------------------------------------------- config

void ExperimentConfig::validate() const {
    if (envs.empty()) throw ConfigError("config: at least one environment is required");
    if (algorithms.empty()) throw ConfigError("config: at least one algorithm is required");
    if (seeds.empty()) throw ConfigError("config: at least one seed is required");
    if (episodes <= 0) throw ConfigError("config: episodes must be positive");
    if (workers == 0) throw ConfigError("config: workers must be positive");
    ladder.validate();
    try {
        bounds.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    if (split == SplitMode::Quantile && !(0.0 < quantile_low && quantile_low < quantile_high && quantile_high < 1.0))
        throw ConfigError("config: quantiles must satisfy 0 < low < high < 1");
    std::vector<std::string> ids;
    for (const auto& e : envs) {
        if (e.id.empty() || !is_plain_field(e.id)) throw ConfigError("config: invalid environment id");
        if (!e.gridworld && !std::filesystem::exists(e.path))
            throw ConfigError("config: environment file not found: " + e.path);
        ids.push_back(e.id);
    }
    std::sort(ids.begin(), ids.end());
    if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) throw ConfigError("config: duplicate environment id");
    for (const auto& a : algorithms)
        if (!is_plain_field(a.label())) throw ConfigError("config: invalid algorithm name");
}

std::vector<std::string> ExperimentConfig::quality_labels() const {
    if (split == SplitMode::Quantile) return {"low", "medium", "high"};
    std::vector<std::string> out;
    for (const auto& l : ladder.levels) out.push_back(l.label);
    return out;
}

nlohmann::json to_json(const ExperimentConfig& cfg) {
    nlohmann::json envs = nlohmann::json::array();
    for (const auto& e : cfg.envs) {
        nlohmann::json j{{"id", e.id}};
        if (e.gridworld) j["gridworld"] = to_json(*e.gridworld);
        else j["path"] = e.path;
        envs.push_back(j);
    }
    nlohmann::json algos = nlohmann::json::array();
    for (const auto& a : cfg.algorithms) algos.push_back(to_json(a));
    return {{"envs", envs},
            {"ladder", to_json(cfg.ladder)},
            {"split", {{"mode", cfg.split == SplitMode::Ladder ? "ladder" : "quantile"},
                       {"quantile_low", cfg.quantile_low},
                       {"quantile_high", cfg.quantile_high}}},
            {"episodes", cfg.episodes},
            {"algorithms", algos},
            {"seeds", cfg.seeds},
            {"bounds", to_json(cfg.bounds)},
            {"compute_bounds", cfg.compute_bounds},
            {"workers", cfg.workers},
            {"out_dir", cfg.out_dir}};
}

ExperimentConfig experiment_config_from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir) {
    ExperimentConfig cfg;
    try {
        for (const auto& e : doc.at("envs")) {
            EnvSource src;
            src.id = e.at("id").get<std::string>();
            if (e.contains("gridworld")) {
                src.gridworld = gridworld_spec_from_json(e.at("gridworld"));
            } else {
                std::filesystem::path p = e.at("path").get<std::string>();
                if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
                src.path = p.string();
            }
            cfg.envs.push_back(std::move(src));
        }
        if (doc.contains("ladder")) cfg.ladder = ladder_spec_from_json(doc.at("ladder"));
        if (doc.contains("split")) {
            const auto& s = doc.at("split");
            const std::string mode = s.value("mode", std::string("ladder"));
            if (mode == "ladder") cfg.split = SplitMode::Ladder;
            else if (mode == "quantile") cfg.split = SplitMode::Quantile;
            else throw ConfigError("config: unknown split mode '" + mode + "'");
            cfg.quantile_low = s.value("quantile_low", cfg.quantile_low);
            cfg.quantile_high = s.value("quantile_high", cfg.quantile_high);
        }
        cfg.episodes = doc.value("episodes", cfg.episodes);
        for (const auto& a : doc.at("algorithms")) cfg.algorithms.push_back(algo_spec_from_json(a));
        cfg.seeds = doc.at("seeds").get<std::vector<std::uint64_t>>();
        if (doc.contains("bounds")) cfg.bounds = bound_config_from_json(doc.at("bounds"));
        cfg.compute_bounds = doc.value("compute_bounds", cfg.compute_bounds);
        cfg.workers = doc.value("workers", cfg.workers);
        cfg.out_dir = doc.value("out_dir", cfg.out_dir);
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw ConfigError("config file not found: " + path.string());
    nlohmann::json doc;
    try {
        doc = read_json_file(path);
    } catch (const std::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    return experiment_config_from_json(doc, path.parent_path());
}

ExperimentConfig default_experiment_config() {
    ExperimentConfig cfg;
    for (std::uint64_t seed : {1, 2, 3}) {
        GridworldSpec g;
        g.slip = 0.2;
        g.step_reward = -0.2;
        g.pits = 3;
        g.seed = seed;
        cfg.envs.push_back({"grid" + std::to_string(seed), g, ""});
    }
    auto spec = [](AlgoKind kind, std::string name = {}) {
        AlgoSpec s;
        s.kind = kind;
        s.name = std::move(name);
        return s;
    };
    cfg.algorithms = {spec(AlgoKind::OfflineQ), spec(AlgoKind::EnsembleQ), spec(AlgoKind::RemQ),
                      spec(AlgoKind::Bcq)};
    AlgoSpec tr30 = spec(AlgoKind::TrBcq, "trbcq_z30");
    tr30.zeta = 0.3;
    AlgoSpec tr60 = spec(AlgoKind::TrBcq, "trbcq_z60");
    tr60.zeta = 0.6;
    cfg.algorithms.push_back(tr30);
    cfg.algorithms.push_back(tr60);
    cfg.algorithms.push_back(spec(AlgoKind::BailImitate));
    cfg.algorithms.push_back(spec(AlgoKind::Spibb));
    cfg.seeds = {0, 1, 2, 3, 4};
    cfg.workers = std::max(1u, std::thread::hardware_concurrency());
    return cfg;
}

// ---------------------------------------------------------------- rows

const std::vector<std::string>& result_columns() {
    static const std::vector<std::string> cols{
        "env", "quality", "quality_index", "algorithm", "algorithm_index", "kind", "hyperparameters", "seed",
        "status", "error", "n_transitions", "mean_return", "episode_return", "behavior_return", "randomness_q",
        "support_complete", "eps_max", "general_bound_max", "bcq_bound_max", "bail_bound_max",
        "dominated_fraction", "assumption_deviation"};
    return cols;
}

std::string results_to_csv(const std::vector<ResultRow>& rows) {
    std::ostringstream out;
    const auto& cols = result_columns();
    for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
    out << '\n';
    for (const auto& r : rows) {
        out << r.env << ',' << r.quality << ',' << r.quality_index << ',' << r.algorithm << ','
            << r.algorithm_index << ',' << r.kind << ',' << r.hyperparameters << ',' << r.seed << ',' << r.status
            << ',' << sanitize_field(r.error) << ',' << r.n_transitions << ',' << format_double(r.mean_return)
            << ',' << format_double(r.episode_return) << ',' << format_double(r.behavior_return) << ','
            << format_double(r.randomness_q) << ',' << (r.support_complete ? 1 : 0) << ','
            << format_double(r.eps_max) << ',' << format_double(r.general_bound_max) << ','
            << format_double(r.bcq_bound_max) << ',' << format_double(r.bail_bound_max) << ','
            << format_double(r.dominated_fraction) << ',' << format_double(r.assumption_deviation) << '\n';
    }
    return out.str();
}

std::vector<ResultRow> results_from_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("results csv: missing header");
    {
        std::ostringstream expected;
        const auto& cols = result_columns();
        for (std::size_t i = 0; i < cols.size(); ++i) expected << (i ? "," : "") << cols[i];
        if (line != expected.str()) throw std::runtime_error("results csv: unexpected header");
    }
    std::vector<ResultRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> f;
        std::size_t start = 0;
        for (;;) {
            const std::size_t comma = line.find(',', start);
            f.push_back(line.substr(start, comma - start));
            if (comma == std::string::npos) break;
            start = comma + 1;
        }
        if (f.size() != result_columns().size())
            throw std::runtime_error("results csv: wrong field count in line: " + line);
        auto num = [](const std::string& s) { return std::strtod(s.c_str(), nullptr); };
        auto u64 = [](const std::string& s) { return std::strtoull(s.c_str(), nullptr, 10); };
        ResultRow r;
        r.env = f[0];
        r.quality = f[1];
        r.quality_index = u64(f[2]);
        r.algorithm = f[3];
        r.algorithm_index = u64(f[4]);
        r.kind = f[5];
        r.hyperparameters = f[6];
        r.seed = u64(f[7]);
        r.status = f[8];
        r.error = f[9];
        r.n_transitions = std::strtoll(f[10].c_str(), nullptr, 10);
        r.mean_return = num(f[11]);
        r.episode_return = num(f[12]);
        r.behavior_return = num(f[13]);
        r.randomness_q = num(f[14]);
        r.support_complete = f[15] == "1";
        r.eps_max = num(f[16]);
        r.general_bound_max = num(f[17]);
        r.bcq_bound_max = num(f[18]);
        r.bail_bound_max = num(f[19]);
        r.dominated_fraction = num(f[20]);
        r.assumption_deviation = num(f[21]);
        rows.push_back(std::move(r));
    }
    return rows;
}

// ---------------------------------------------------------------- sweep

namespace {

struct LevelData {
    Dataset dataset;
    double behavior_return = 0.0;
};

void fill_bound_columns(ResultRow& row, const TabularMdp& mdp, const Dataset& data, const StochasticPolicy& pi,
                        const BoundConfig& cfg) {
    const BoundReport rep = build_bound_report(mdp, data, pi, cfg, kEvalTol);
    const auto& eps = rep.extrapolation;
    std::size_t visited = 0, dominated = 0;
    for (StateIndex s = 0; s < mdp.n_states(); ++s) {
        for (ActionIndex a = 0; a < mdp.n_actions(); ++a) {
            if (!eps.visited(s, a)) continue;
            ++visited;
            const double e = std::abs(eps.eps(s, a));
            row.eps_max = std::max(row.eps_max, e);
            row.general_bound_max = std::max(row.general_bound_max, rep.general.values(s, a));
            row.bcq_bound_max = std::max(row.bcq_bound_max, rep.bcq(s, a));
            row.bail_bound_max = std::max(row.bail_bound_max, rep.bail.values(s, a));
            if (e <= rep.general.values(s, a)) ++dominated;
        }
    }
    row.dominated_fraction = visited ? static_cast<double>(dominated) / static_cast<double>(visited) : 0.0;
    row.assumption_deviation = rep.assumption_deviation;
}

} // namespace

std::vector<ResultRow> run_sweep(const ExperimentConfig& cfg) {
    cfg.validate();
    const std::size_t E = cfg.envs.size(), Q = cfg.quality_labels().size(), A = cfg.algorithms.size(),
                      K = cfg.seeds.size();
    const auto labels = cfg.quality_labels();

    std::vector<TabularMdp> mdps;
    for (const auto& e : cfg.envs) mdps.push_back(e.load());

    std::vector<std::vector<BehaviorLevel>> ladders(E);
    std::vector<std::string> ladder_errors(E);
    parallel_for(E, cfg.workers, [&](std::size_t e) {
        LadderSpec spec = cfg.ladder;
        spec.seed = derive_seed(cfg.ladder.seed, e);
        try {
            ladders[e] = build_behavior_ladder(mdps[e], spec);
        } catch (const std::exception& ex) {
            ladder_errors[e] = std::string("ladder: ") + ex.what();
        }
    });

    // data[(e * K + k) * Q + q]
    std::vector<LevelData> data(E * K * Q);
    std::vector<std::string> data_errors(E * K * Q);
    parallel_for(E * K, cfg.workers, [&](std::size_t ek) {
        const std::size_t e = ek / K, k = ek % K;
        if (!ladder_errors[e].empty()) {
            for (std::size_t q = 0; q < Q; ++q) data_errors[ek * Q + q] = ladder_errors[e];
            return;
        }
        const std::uint64_t base = derive_seed(cfg.seeds[k], e);
        try {
            if (cfg.split == SplitMode::Ladder) {
                for (std::size_t q = 0; q < Q; ++q) {
                    const auto& lvl = ladders[e][q];
                    data[ek * Q + q] = {generate(mdps[e], lvl.policy, cfg.episodes, derive_seed(base, q),
                                                 cfg.envs[e].id, lvl.label),
                                        lvl.mean_return};
                }
            } else {
                Dataset mixed;
                for (std::size_t l = 0; l < ladders[e].size(); ++l)
                    mixed = concat(mixed, generate(mdps[e], ladders[e][l].policy, cfg.episodes, derive_seed(base, l),
                                                   cfg.envs[e].id, "mixed"));
                const auto [lo, hi] = return_quantile_thresholds(mixed, cfg.quantile_low, cfg.quantile_high);
                const QualitySplit split = quality_split(mixed, lo, hi);
                const Dataset* parts[3] = {&split.low, &split.medium, &split.high};
                for (std::size_t q = 0; q < 3; ++q) {
                    LevelData& d = data[ek * Q + q];
                    d.dataset = *parts[q];
                    d.dataset.meta.behavior = labels[q];
                    if (!d.dataset.empty()) {
                        const CountTable c = counts(d.dataset, mdps[e].n_states(), mdps[e].n_actions());
                        d.behavior_return = mean_return(mdps[e], empirical_behavior_policy(c), kEvalTol);
                    }
                }
            }
        } catch (const std::exception& ex) {
            for (std::size_t q = 0; q < Q; ++q) data_errors[ek * Q + q] = std::string("data: ") + ex.what();
        }
    });

    // Canonical order: env, quality, algorithm, seed.
    std::vector<ResultRow> rows(E * Q * A * K);
    parallel_for(rows.size(), cfg.workers, [&](std::size_t idx) {
        const std::size_t k = idx % K, a = (idx / K) % A, q = (idx / (K * A)) % Q, e = idx / (K * A * Q);
        const AlgoSpec& base_spec = cfg.algorithms[a];
        ResultRow& row = rows[idx];
        row.env = cfg.envs[e].id;
        row.quality = labels[q];
        row.quality_index = q;
        row.algorithm = base_spec.label();
        row.algorithm_index = a;
        row.kind = to_string(base_spec.kind);
        row.hyperparameters = base_spec.hyperparameters();
        row.seed = cfg.seeds[k];
        const std::size_t slot = (e * K + k) * Q + q;
        try {
            if (!data_errors[slot].empty()) throw std::runtime_error(data_errors[slot]);
            const TabularMdp& mdp = mdps[e];
            const LevelData& ld = data[slot];
            row.n_transitions = static_cast<std::int64_t>(ld.dataset.size());
            row.behavior_return = ld.behavior_return;
            AlgoSpec spec = base_spec;
            spec.seed = derive_seed(base_spec.seed, cfg.seeds[k]);
            const StochasticPolicy pi = train(ld.dataset, spec, TrainingDims::of(mdp));
            row.mean_return = mean_return(mdp, pi, kEvalTol);
            row.episode_return = expected_episode_return(mdp, pi);

            const CountTable c = counts(ld.dataset, mdp.n_states(), mdp.n_actions());
            std::vector<StateIndex> visited;
            for (StateIndex s = 0; s < mdp.n_states(); ++s)
                if (c.visited(s)) visited.push_back(s);
            const Randomness rnd = randomness(empirical_behavior_policy(c), visited);
            row.randomness_q = rnd.q;
            row.support_complete = rnd.support_complete;
            if (cfg.compute_bounds) fill_bound_columns(row, mdp, ld.dataset, pi, cfg.bounds);
        } catch (const std::exception& ex) {
            ResultRow failed;
            failed.env = row.env;
            failed.quality = row.quality;
            failed.quality_index = row.quality_index;
            failed.algorithm = row.algorithm;
            failed.algorithm_index = row.algorithm_index;
            failed.kind = row.kind;
            failed.hyperparameters = row.hyperparameters;
            failed.seed = row.seed;
            failed.status = "error";
            failed.error = sanitize_field(ex.what());
            row = std::move(failed);
        }
    });
    return rows;
}

// ---------------------------------------------------------------- trends

std::string classify_trend(const std::vector<double>& medians, double dead_zone) {
    int ups = 0, downs = 0;
    for (std::size_t i = 1; i < medians.size(); ++i) {
        const double a = medians[i - 1], b = medians[i];
        if (std::isnan(a) || std::isnan(b)) return "mixed";
        const double margin = dead_zone * std::max(std::abs(a), std::abs(b));
        if (b - a > margin) ++ups;
        else if (a - b > margin) ++downs;
    }
    if (ups && downs) return "mixed";
    if (ups) return "increase";
    if (downs) return "decrease";
    return "flat";
}

const TrendEntry* TrendSummary::find(const std::string& env, const std::string& algorithm) const {
    for (const auto& e : entries)
        if (e.env == env && e.algorithm == algorithm) return &e;
    return nullptr;
}

double TrendSummary::trend_share(const std::string& algorithm, const std::string& trend) const {
    if (envs.empty()) return 0.0;
    std::size_t hits = 0;
    for (const auto& e : entries)
        if (e.algorithm == algorithm && e.trend == trend) ++hits;
    return static_cast<double>(hits) / static_cast<double>(envs.size());
}

std::size_t TrendSummary::best_count(const std::string& algorithm) const {
    std::size_t n = 0;
    for (const auto& per_env : best)
        n += static_cast<std::size_t>(std::count(per_env.begin(), per_env.end(), algorithm));
    return n;
}

TrendSummary trend_report(const std::vector<ResultRow>& rows) {
    TrendSummary out;
    std::map<std::size_t, std::string> levels, algos;
    for (const auto& r : rows) {
        levels.emplace(r.quality_index, r.quality);
        algos.emplace(r.algorithm_index, r.algorithm);
        if (std::find(out.envs.begin(), out.envs.end(), r.env) == out.envs.end()) out.envs.push_back(r.env);
    }
    if (levels.size() < 2) throw std::invalid_argument("trend_report: rows span fewer than two quality levels");
    std::vector<std::size_t> level_keys, algo_keys;
    for (const auto& [k, v] : levels) {
        level_keys.push_back(k);
        out.levels.push_back(v);
    }
    for (const auto& [k, v] : algos) {
        algo_keys.push_back(k);
        out.algorithms.push_back(v);
    }

    std::map<std::tuple<std::string, std::size_t, std::size_t>, std::vector<double>> samples;
    for (const auto& r : rows)
        if (r.status == "ok") samples[{r.env, r.algorithm_index, r.quality_index}].push_back(r.mean_return);

    for (const auto& env : out.envs) {
        std::vector<std::string> best_row;
        std::vector<std::vector<double>> by_algo;
        for (std::size_t ai = 0; ai < algo_keys.size(); ++ai) {
            TrendEntry entry{env, out.algorithms[ai], {}, {}};
            for (std::size_t lk : level_keys) entry.medians.push_back(median(samples[{env, algo_keys[ai], lk}]));
            entry.trend = classify_trend(entry.medians);
            by_algo.push_back(entry.medians);
            out.entries.push_back(std::move(entry));
        }
        for (std::size_t li = 0; li < level_keys.size(); ++li) {
            std::string winner;
            double top = -std::numeric_limits<double>::infinity();
            for (std::size_t ai = 0; ai < algo_keys.size(); ++ai) {
                const double m = by_algo[ai][li];
                if (!std::isnan(m) && m > top) {
                    top = m;
                    winner = out.algorithms[ai];
                }
            }
            best_row.push_back(winner);
        }
        out.best.push_back(std::move(best_row));
    }
    return out;
}

nlohmann::json to_json(const TrendSummary& s) {
    nlohmann::json entries = nlohmann::json::array();
    for (const auto& e : s.entries) {
        nlohmann::json med = nlohmann::json::array();
        for (double m : e.medians) med.push_back(std::isnan(m) ? nlohmann::json(nullptr) : nlohmann::json(m));
        entries.push_back({{"env", e.env}, {"algorithm", e.algorithm}, {"medians", med}, {"trend", e.trend}});
    }
    nlohmann::json best = nlohmann::json::object();
    for (std::size_t i = 0; i < s.envs.size(); ++i) best[s.envs[i]] = s.best[i];
    nlohmann::json table = nlohmann::json::array();
    for (const auto& a : s.algorithms)
        table.push_back({{"algorithm", a},
                         {"increase", s.trend_share(a, "increase")},
                         {"decrease", s.trend_share(a, "decrease")},
                         {"flat", s.trend_share(a, "flat")},
                         {"mixed", s.trend_share(a, "mixed")},
                         {"best_scores", s.best_count(a)}});
    return {{"levels", s.levels}, {"envs", s.envs}, {"dead_zone", kTrendDeadZone},
            {"entries", entries}, {"best", best}, {"table", table}};
}

std::string trend_tables(const TrendSummary& s) {
    std::ostringstream out;
    char buf[160];
    out << "Trend of performance with dataset quality (share of environments)\n";
    std::snprintf(buf, sizeof buf, "%-16s %9s %9s %9s %9s\n", "algorithm", "increase", "decrease", "flat", "mixed");
    out << buf;
    for (const auto& a : s.algorithms) {
        std::snprintf(buf, sizeof buf, "%-16s %8.1f%% %8.1f%% %8.1f%% %8.1f%%\n", a.c_str(),
                      100 * s.trend_share(a, "increase"), 100 * s.trend_share(a, "decrease"),
                      100 * s.trend_share(a, "flat"), 100 * s.trend_share(a, "mixed"));
        out << buf;
    }
    out << "\nNumber of best scores\n";
    std::snprintf(buf, sizeof buf, "%-16s", "algorithm");
    out << buf;
    for (const auto& l : s.levels) {
        std::snprintf(buf, sizeof buf, " %9s", l.c_str());
        out << buf;
    }
    std::snprintf(buf, sizeof buf, " %9s\n", "total");
    out << buf;
    for (const auto& a : s.algorithms) {
        std::snprintf(buf, sizeof buf, "%-16s", a.c_str());
        out << buf;
        for (std::size_t li = 0; li < s.levels.size(); ++li) {
            std::size_t n = 0;
            for (const auto& per_env : s.best) n += per_env[li] == a;
            std::snprintf(buf, sizeof buf, " %9zu", n);
            out << buf;
        }
        std::snprintf(buf, sizeof buf, " %9zu\n", s.best_count(a));
        out << buf;
    }
    return out.str();
}

std::vector<ResultRow> run_and_write(const ExperimentConfig& cfg) {
    auto rows = run_sweep(cfg);
    const std::filesystem::path dir = cfg.out_dir;
    write_text_file(dir / "results.csv", results_to_csv(rows));
    if (cfg.quality_labels().size() >= 2) {
        const TrendSummary summary = trend_report(rows);
        write_json_file(dir / "trend.json", to_json(summary));
        write_text_file(dir / "trend.txt", trend_tables(summary));
    }
    return rows;
}

} // namespace offrl
