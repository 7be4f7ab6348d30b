// Command-line front end for the offline RL laboratory.

#include "offrl/algorithms.hpp"
#include "offrl/bounds.hpp"
#include "offrl/dataset.hpp"
#include "offrl/empirical_mdp.hpp"
#include "offrl/generators.hpp"
#include "offrl/harness.hpp"
#include "offrl/io.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

namespace fs = std::filesystem;
using namespace offrl;

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 1;
constexpr int kCellFailure = 2;

struct Common {
    std::string config;
    std::string out = "out";
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> workers;
    std::string format = "csv";
};

void add_common(CLI::App* cmd, Common& c, bool config_flag = true) {
    if (config_flag) cmd->add_option("--config", c.config, "Configuration document (JSON)");
    cmd->add_option("--out", c.out, "Output directory")->capture_default_str();
    cmd->add_option("--seed", c.seed, "Seed override");
    cmd->add_option("--workers", c.workers, "Worker threads")->check(CLI::PositiveNumber);
    cmd->add_option("--format", c.format, "Stdout format")->check(CLI::IsMember({"csv", "json"}))->capture_default_str();
}

void print_kv(const Common& c, const nlohmann::json& doc) {
    if (c.format == "json") {
        std::cout << doc.dump(2) << '\n';
        return;
    }
    std::string header, values;
    for (auto it = doc.begin(); it != doc.end(); ++it) {
        if (!header.empty()) {
            header += ',';
            values += ',';
        }
        header += it.key();
        values += it->is_number() ? format_double(it->get<double>()) : it->dump();
    }
    std::cout << header << '\n' << values << '\n';
}

StochasticPolicy truncate_to(const StochasticPolicy& pi, std::size_t n_states) {
    if (pi.n_states() == n_states) return pi;
    if (pi.n_states() < n_states) throw DimensionError("policy has fewer states than the MDP");
    Matrix<double> m(n_states, pi.n_actions());
    for (StateIndex s = 0; s < n_states; ++s)
        for (ActionIndex a = 0; a < pi.n_actions(); ++a) m(s, a) = pi(s, a);
    return StochasticPolicy(std::move(m));
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Tabular offline RL laboratory"};
    app.require_subcommand(1);

    // init
    Common init_opts;
    auto* init = app.add_subcommand("init", "Write a template experiment configuration");
    add_common(init, init_opts, false);

    // gen-mdp
    Common gm;
    std::string gm_kind = "gridworld";
    std::size_t gm_states = 5, gm_actions = 2;
    auto* gen_mdp = app.add_subcommand("gen-mdp", "Generate an MDP document");
    add_common(gen_mdp, gm);
    gen_mdp->add_option("--kind", gm_kind, "gridworld or random")->check(CLI::IsMember({"gridworld", "random"}));
    gen_mdp->add_option("--states", gm_states, "States (random kind)");
    gen_mdp->add_option("--actions", gm_actions, "Actions (random kind)");

    // gen-data
    Common gd;
    std::string gd_mdp, gd_policy;
    double gd_epsilon = 0.5;
    std::int64_t gd_episodes = 1000;
    auto* gen_data = app.add_subcommand("gen-data", "Sample a dataset from a behavior policy");
    add_common(gen_data, gd);
    gen_data->add_option("--mdp", gd_mdp, "MDP document")->required()->check(CLI::ExistingFile);
    gen_data->add_option("--policy", gd_policy, "Behavior policy document")->check(CLI::ExistingFile);
    gen_data->add_option("--epsilon", gd_epsilon, "Mix the optimal policy with uniform (no --policy)");
    gen_data->add_option("--episodes", gd_episodes, "Episodes")->check(CLI::PositiveNumber);

    // split
    Common sp;
    std::string sp_data;
    double sp_low = 1.0 / 3.0, sp_high = 2.0 / 3.0;
    std::optional<double> sp_zeta;
    auto* split = app.add_subcommand("split", "Split a dataset by return quantiles or select top returns");
    add_common(split, sp);
    split->add_option("--data", sp_data, "Dataset file")->required()->check(CLI::ExistingFile);
    split->add_option("--low", sp_low, "Low/medium quantile");
    split->add_option("--high", sp_high, "Medium/high quantile");
    split->add_option("--zeta", sp_zeta, "Keep the top zeta fraction instead");

    // analyze
    Common an;
    std::string an_mdp, an_data, an_policy;
    auto* analyze = app.add_subcommand("analyze", "Randomness, bounds and extrapolation error for a dataset");
    add_common(analyze, an);
    analyze->add_option("--mdp", an_mdp, "True MDP document")->required()->check(CLI::ExistingFile);
    analyze->add_option("--data", an_data, "Dataset file")->required()->check(CLI::ExistingFile);
    analyze->add_option("--policy", an_policy, "Evaluated policy (default: empirical behavior)")
        ->check(CLI::ExistingFile);

    // train
    Common tr;
    std::string tr_mdp, tr_data, tr_kind = "bcq";
    auto* train_cmd = app.add_subcommand("train", "Train one learner on a dataset");
    add_common(train_cmd, tr);
    train_cmd->add_option("--mdp", tr_mdp, "MDP document (dimensions and discount)")->required()
        ->check(CLI::ExistingFile);
    train_cmd->add_option("--data", tr_data, "Dataset file")->required()->check(CLI::ExistingFile);
    train_cmd->add_option("--kind", tr_kind, "Algorithm kind (ignored with --config)");

    // eval
    Common ev;
    std::string ev_mdp, ev_policy;
    auto* eval = app.add_subcommand("eval", "Exact evaluation of a policy");
    add_common(eval, ev);
    eval->add_option("--mdp", ev_mdp, "MDP document")->required()->check(CLI::ExistingFile);
    eval->add_option("--policy", ev_policy, "Policy document")->required()->check(CLI::ExistingFile);

    // sweep
    Common sw;
    auto* sweep = app.add_subcommand("sweep", "Run an experiment sweep");
    add_common(sweep, sw);

    // report
    Common rp;
    std::string rp_results;
    auto* report = app.add_subcommand("report", "Trend tables from a results CSV");
    add_common(report, rp);
    report->add_option("--results", rp_results, "results.csv")->required()->check(CLI::ExistingFile);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kOk : kConfigError;
    }

    try {
        if (*init) {
            ExperimentConfig cfg = default_experiment_config();
            cfg.out_dir = (fs::path(init_opts.out) / "sweep").string();
            if (init_opts.workers) cfg.workers = *init_opts.workers;
            if (init_opts.seed) cfg.ladder.seed = *init_opts.seed;
            const fs::path path = fs::path(init_opts.out) / "config.json";
            write_json_file(path, to_json(cfg));
            std::cout << path.string() << '\n';
        } else if (*gen_mdp) {
            const fs::path path = fs::path(gm.out) / "mdp.json";
            if (gm_kind == "gridworld") {
                GridworldSpec spec;
                if (!gm.config.empty()) spec = gridworld_spec_from_json(read_json_file(gm.config));
                if (gm.seed) spec.seed = *gm.seed;
                save_mdp(path, make_gridworld(spec));
            } else {
                RandomMdpSpec spec;
                spec.n_states = gm_states;
                spec.n_actions = gm_actions;
                if (gm.seed) spec.seed = *gm.seed;
                save_mdp(path, make_random_mdp(spec));
            }
            std::cout << path.string() << '\n';
        } else if (*gen_data) {
            const TabularMdp mdp = load_mdp(gd_mdp);
            StochasticPolicy behavior = gd_policy.empty()
                                            ? epsilon_mixture(value_iteration(mdp, 1e-10).greedy, gd_epsilon)
                                            : policy_from_json(read_json_file(gd_policy));
            const std::string label = gd_policy.empty() ? "eps=" + format_double(gd_epsilon)
                                                        : fs::path(gd_policy).filename().string();
            const Dataset ds = generate(mdp, behavior, gd_episodes, gd.seed.value_or(0),
                                        fs::path(gd_mdp).stem().string(), label);
            const fs::path path = fs::path(gd.out) / "dataset.txt";
            save_dataset(path, ds);
            std::cout << path.string() << '\n';
        } else if (*split) {
            const Dataset ds = load_dataset(sp_data);
            if (sp_zeta) {
                const fs::path path = fs::path(sp.out) / "selected.txt";
                save_dataset(path, top_return_select(ds, *sp_zeta));
                std::cout << path.string() << '\n';
            } else {
                const auto [lo, hi] = return_quantile_thresholds(ds, sp_low, sp_high);
                const QualitySplit parts = quality_split(ds, lo, hi);
                save_dataset(fs::path(sp.out) / "low.txt", parts.low);
                save_dataset(fs::path(sp.out) / "medium.txt", parts.medium);
                save_dataset(fs::path(sp.out) / "high.txt", parts.high);
                print_kv(sp, {{"low_threshold", lo}, {"high_threshold", hi},
                              {"low_transitions", parts.low.size()}, {"medium_transitions", parts.medium.size()},
                              {"high_transitions", parts.high.size()}});
            }
        } else if (*analyze) {
            const TabularMdp mdp = load_mdp(an_mdp);
            const Dataset ds = load_dataset(an_data);
            BoundConfig cfg;
            if (!an.config.empty()) cfg = bound_config_from_json(read_json_file(an.config));
            const CountTable c = counts(ds, mdp.n_states(), mdp.n_actions());
            const StochasticPolicy pi_b = empirical_behavior_policy(c);
            const StochasticPolicy pi =
                an_policy.empty() ? pi_b : truncate_to(policy_from_json(read_json_file(an_policy)), mdp.n_states());
            const BoundReport rep = build_bound_report(mdp, ds, pi, cfg);
            const fs::path dir = an.out;
            write_text_file(dir / "bounds.csv", bound_report_csv(rep));
            write_text_file(dir / "extrapolation.csv", extrapolation_to_csv(rep.extrapolation));
            nlohmann::json summary = bound_report_summary(rep);
            summary["randomness_q"] = rep.behavior_randomness.q;
            summary["support_complete"] = rep.behavior_randomness.support_complete;
            write_json_file(dir / "bounds.json", summary);
            if (an.format == "json") std::cout << summary.dump(2) << '\n';
            else std::cout << bound_report_csv(rep);
        } else if (*train_cmd) {
            const TabularMdp mdp = load_mdp(tr_mdp);
            const Dataset ds = load_dataset(tr_data);
            AlgoSpec spec;
            if (!tr.config.empty()) {
                spec = algo_spec_from_json(read_json_file(tr.config));
            } else {
                spec.kind = algo_kind_from_string(tr_kind);
                spec.validate();
            }
            if (tr.seed) spec.seed = *tr.seed;
            const StochasticPolicy pi = train(ds, spec, TrainingDims::of(mdp));
            const fs::path path = fs::path(tr.out) / ("policy_" + spec.label() + ".json");
            write_json_file(path, policy_to_json(pi, to_json(spec)));
            std::cout << path.string() << '\n';
        } else if (*eval) {
            const TabularMdp mdp = load_mdp(ev_mdp);
            const StochasticPolicy pi = truncate_to(policy_from_json(read_json_file(ev_policy)), mdp.n_states());
            print_kv(ev, {{"mean_return", mean_return(mdp, pi)},
                          {"episode_return", expected_episode_return(mdp, pi)},
                          {"optimal_mean_return", mean_return(mdp, value_iteration(mdp, 1e-10).greedy)}});
        } else if (*sweep) {
            if (sw.config.empty()) throw ConfigError("sweep: --config is required");
            ExperimentConfig cfg = load_experiment_config(sw.config);
            if (sweep->count("--out")) cfg.out_dir = sw.out;
            if (sw.workers) cfg.workers = *sw.workers;
            if (sw.seed) cfg.ladder.seed = *sw.seed;
            const auto rows = run_and_write(cfg);
            std::size_t failures = 0;
            for (const auto& r : rows) failures += r.status != "ok";
            std::cerr << rows.size() << " rows, " << failures << " failed, written to " << cfg.out_dir << '\n';
            if (sw.format == "json" && fs::exists(fs::path(cfg.out_dir) / "trend.json"))
                std::cout << read_json_file(fs::path(cfg.out_dir) / "trend.json").dump(2) << '\n';
            else if (fs::exists(fs::path(cfg.out_dir) / "trend.txt"))
                std::cout << read_text_file(fs::path(cfg.out_dir) / "trend.txt");
            return failures ? kCellFailure : kOk;
        } else if (*report) {
            const auto rows = results_from_csv(read_text_file(rp_results));
            const TrendSummary summary = trend_report(rows);
            write_json_file(fs::path(rp.out) / "trend.json", to_json(summary));
            write_text_file(fs::path(rp.out) / "trend.txt", trend_tables(summary));
            if (rp.format == "json") std::cout << to_json(summary).dump(2) << '\n';
            else std::cout << trend_tables(summary);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kConfigError;
    }
    return kOk;
}
