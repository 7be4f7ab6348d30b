#include "offrl/algorithms.hpp"
#include "offrl/empirical_mdp.hpp"
#include "offrl/io.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace offrl {

namespace {

constexpr std::array<std::pair<AlgoKind, const char*>, 7> kKindNames{{
    {AlgoKind::OfflineQ, "offline_q"},
    {AlgoKind::EnsembleQ, "ensemble_q"},
    {AlgoKind::RemQ, "rem_q"},
    {AlgoKind::Bcq, "bcq"},
    {AlgoKind::TrBcq, "trbcq"},
    {AlgoKind::BailImitate, "bail_imitate"},
    {AlgoKind::Spibb, "spibb"},
}};

constexpr double kConvergedChange = 1e-12;

void require_data(const Dataset& dataset, const char* who) {
    if (dataset.empty()) throw std::invalid_argument(std::string(who) + ": empty dataset");
}

} // namespace

std::string to_string(AlgoKind kind) {
    for (auto [k, name] : kKindNames)
        if (k == kind) return name;
    return "unknown";
}

AlgoKind algo_kind_from_string(const std::string& name) {
    for (auto [k, n] : kKindNames)
        if (name == n) return k;
    throw std::invalid_argument("unknown algorithm kind '" + name + "'");
}

void AlgoSpec::validate() const {
    if (iterations == 0) throw std::invalid_argument("AlgoSpec: iterations must be positive");
    switch (kind) {
    case AlgoKind::TrBcq:
        if (!(zeta > 0.0 && zeta <= 1.0)) throw std::invalid_argument("AlgoSpec: zeta must lie in (0, 1]");
        [[fallthrough]];
    case AlgoKind::Bcq:
        if (!(tau > 0.0 && tau < 1.0)) throw std::invalid_argument("AlgoSpec: tau must lie in (0, 1)");
        break;
    case AlgoKind::BailImitate:
        if (!(zeta > 0.0 && zeta <= 1.0)) throw std::invalid_argument("AlgoSpec: zeta must lie in (0, 1]");
        break;
    case AlgoKind::EnsembleQ:
    case AlgoKind::RemQ:
        // K = 1 is accepted as the degenerate single-head case.
        if (heads < 1) throw std::invalid_argument("AlgoSpec: heads must be positive");
        if (!(learning_rate > 0.0 && learning_rate <= 1.0))
            throw std::invalid_argument("AlgoSpec: learning_rate must lie in (0, 1]");
        break;
    case AlgoKind::Spibb:
        if (n_threshold < 1) throw std::invalid_argument("AlgoSpec: n_threshold must be >= 1");
        break;
    case AlgoKind::OfflineQ:
        break;
    }
}

std::string AlgoSpec::label() const { return name.empty() ? to_string(kind) : name; }

std::string AlgoSpec::hyperparameters() const {
    std::ostringstream out;
    out << "T=" << iterations;
    switch (kind) {
    case AlgoKind::Bcq: out << ";tau=" << tau; break;
    case AlgoKind::TrBcq: out << ";tau=" << tau << ";zeta=" << zeta; break;
    case AlgoKind::BailImitate: out << ";zeta=" << zeta; break;
    case AlgoKind::EnsembleQ: out << ";K=" << heads << ";bootstrap=" << (bootstrap ? 1 : 0); break;
    case AlgoKind::RemQ: out << ";K=" << heads << ";lr=" << learning_rate; break;
    case AlgoKind::Spibb: out << ";N_wedge=" << n_threshold; break;
    case AlgoKind::OfflineQ: break;
    }
    return out.str();
}

nlohmann::json to_json(const AlgoSpec& spec) {
    nlohmann::json doc{{"kind", to_string(spec.kind)}, {"iterations", spec.iterations}, {"tau", spec.tau},
                       {"zeta", spec.zeta}, {"heads", spec.heads}, {"n_threshold", spec.n_threshold},
                       {"learning_rate", spec.learning_rate}, {"seed", spec.seed}, {"bootstrap", spec.bootstrap}};
    if (!spec.name.empty()) doc["name"] = spec.name;
    return doc;
}

AlgoSpec algo_spec_from_json(const nlohmann::json& doc) {
    AlgoSpec s;
    s.kind = algo_kind_from_string(doc.at("kind").get<std::string>());
    s.iterations = doc.value("iterations", s.iterations);
    s.tau = doc.value("tau", s.tau);
    s.zeta = doc.value("zeta", s.zeta);
    s.heads = doc.value("heads", s.heads);
    s.n_threshold = doc.value("n_threshold", s.n_threshold);
    s.learning_rate = doc.value("learning_rate", s.learning_rate);
    s.seed = doc.value("seed", s.seed);
    s.bootstrap = doc.value("bootstrap", s.bootstrap);
    s.name = doc.value("name", std::string{});
    return s;
}

TrainingDims TrainingDims::of(const TabularMdp& mdp) {
    return {mdp.n_states(), mdp.n_actions(), mdp.discount()};
}

QTable q_iteration(const TabularMdp& model, std::size_t iterations, const Matrix<std::uint8_t>& allowed) {
    const std::size_t S = model.n_states(), A = model.n_actions();
    const double gamma = model.discount();
    const bool constrained = allowed.rows() > 0;
    if (constrained && (allowed.rows() != S || allowed.cols() != A))
        throw DimensionError("q_iteration: allowed mask dimensions");
    Matrix<double> rbar(S, A);
    for (StateIndex s = 0; s < S; ++s)
        for (ActionIndex a = 0; a < A; ++a) rbar(s, a) = model.expected_reward(s, a);

    QTable q{Matrix<double>(S, A, 0.0)};
    Matrix<double> next(S, A);
    std::vector<double> v(S);
    for (std::size_t t = 0; t < iterations; ++t) {
        for (StateIndex s = 0; s < S; ++s) {
            double best = -std::numeric_limits<double>::infinity();
            for (ActionIndex a = 0; a < A; ++a)
                if (!constrained || allowed(s, a)) best = std::max(best, q(s, a));
            v[s] = best;
        }
        double change = 0.0;
        for (StateIndex s = 0; s < S; ++s) {
            for (ActionIndex a = 0; a < A; ++a) {
                auto P = model.transition_row(s, a);
                double acc = 0.0;
                for (StateIndex s2 = 0; s2 < S; ++s2) acc += P[s2] * v[s2];
                next(s, a) = rbar(s, a) + gamma * acc;
                change = std::max(change, std::abs(next(s, a) - q(s, a)));
            }
        }
        std::swap(q.values, next);
        if (change < kConvergedChange) break;
    }
    return q;
}

StochasticPolicy constrained_greedy(const QTable& q, const Matrix<std::uint8_t>& allowed, std::size_t n_states) {
    std::vector<ActionIndex> actions(n_states, 0);
    for (StateIndex s = 0; s < n_states; ++s) {
        bool found = false;
        for (ActionIndex a = 0; a < q.n_actions(); ++a) {
            if (!allowed(s, a)) continue;
            if (!found || q(s, a) > q(s, actions[s])) actions[s] = a;
            found = true;
        }
    }
    return StochasticPolicy::deterministic(actions, q.n_actions());
}

namespace {

ModelTemplate training_template(const TrainingDims& dims) {
    ModelTemplate t;
    t.discount = dims.discount;
    t.r_max = 0.0;
    t.initial_dist.assign(dims.n_states, 1.0 / static_cast<double>(dims.n_states));
    t.horizon_cap = 1;
    return t;
}

} // namespace

TabularMdp training_model(const Dataset& dataset, const TrainingDims& dims) {
    EdgeCounts edges(dims.n_states, dims.n_actions);
    edges.add(dataset);
    return estimate(edges, training_template(dims));
}

StochasticPolicy offline_q(const Dataset& dataset, const AlgoSpec& spec, const TrainingDims& dims) {
    require_data(dataset, "offline_q");
    spec.validate();
    return greedy_policy(q_iteration(training_model(dataset, dims), spec.iterations), dims.n_states);
}

QTable ensemble_mean_q(const Dataset& dataset, const AlgoSpec& spec, const TrainingDims& dims) {
    require_data(dataset, "ensemble_q");
    spec.validate();
    const std::size_t S = dims.n_states, A = dims.n_actions;
    const std::size_t n_episodes = dataset.episode_count();

    // Transition ranges per episode, for multiplicity-weighted tallies.
    std::vector<std::pair<std::size_t, std::size_t>> ranges(n_episodes, {0, 0});
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        auto& r = ranges[static_cast<std::size_t>(dataset.transitions[i].episode_id)];
        if (r.second == 0) r.first = i;
        r.second = i + 1;
    }

    QTable mean{Matrix<double>(S, A, 0.0)};
    const ModelTemplate tmpl = training_template(dims);
    for (std::size_t k = 0; k < spec.heads; ++k) {
        std::vector<double> weight(n_episodes, 1.0);
        if (spec.bootstrap) {
            std::fill(weight.begin(), weight.end(), 0.0);
            Rng rng(derive_seed(spec.seed, k));
            for (std::size_t i = 0; i < n_episodes; ++i) weight[rng.index(n_episodes)] += 1.0;
        }
        EdgeCounts edges(S, A);
        for (std::size_t e = 0; e < n_episodes; ++e) {
            if (weight[e] == 0.0) continue;
            for (std::size_t i = ranges[e].first; i < ranges[e].second; ++i) edges.add(dataset.transitions[i], weight[e]);
        }
        const QTable head = q_iteration(estimate(edges, tmpl), spec.iterations);
        for (StateIndex s = 0; s < S; ++s)
            for (ActionIndex a = 0; a < A; ++a) mean.values(s, a) += head(s, a) / static_cast<double>(spec.heads);
    }
    return mean;
}

StochasticPolicy ensemble_q(const Dataset& dataset, const AlgoSpec& spec, const TrainingDims& dims) {
    return greedy_policy(ensemble_mean_q(dataset, spec, dims), dims.n_states);
}

std::vector<double> draw_convex_weights(Rng& rng, std::size_t k) {
    std::vector<double> w(k);
    double total = 0.0;
    for (double& x : w) total += (x = rng.exponential());
    // exponential() is strictly positive except when uniform() returns 0.
    if (total <= 0.0) {
        std::fill(w.begin(), w.end(), 1.0 / static_cast<double>(k));
        return w;
    }
    for (double& x : w) x /= total;
    return w;
}

QTable rem_mean_q(const Dataset& dataset, const AlgoSpec& spec, const TrainingDims& dims) {
    require_data(dataset, "rem_q");
    spec.validate();
    const TabularMdp model = training_model(dataset, dims);
    const std::size_t S = model.n_states(), A = model.n_actions(), K = spec.heads;
    const double gamma = model.discount();
    Matrix<double> rbar(S, A);
    for (StateIndex s = 0; s < S; ++s)
        for (ActionIndex a = 0; a < A; ++a) rbar(s, a) = model.expected_reward(s, a);

    std::vector<Matrix<double>> heads(K, Matrix<double>(S, A, 0.0));
    Matrix<double> mix(S, A), target(S, A);
    std::vector<double> v(S);
    Rng rng(derive_seed(spec.seed, 0x72656d));
    for (std::size_t t = 0; t < spec.iterations; ++t) {
        const std::vector<double> alpha = draw_convex_weights(rng, K);
        std::fill(mix.data().begin(), mix.data().end(), 0.0);
        for (std::size_t k = 0; k < K; ++k)
            for (std::size_t i = 0; i < mix.data().size(); ++i) mix.data()[i] += alpha[k] * heads[k].data()[i];
        for (StateIndex s = 0; s < S; ++s) {
            auto row = mix.row(s);
            v[s] = *std::max_element(row.begin(), row.end());
        }
        double change = 0.0;
        for (StateIndex s = 0; s < S; ++s) {
            for (ActionIndex a = 0; a < A; ++a) {
                auto P = model.transition_row(s, a);
                double acc = 0.0;
                for (StateIndex s2 = 0; s2 < S; ++s2) acc += P[s2] * v[s2];
                target(s, a) = rbar(s, a) + gamma * acc;
                change = std::max(change, std::abs(target(s, a) - mix(s, a)));
            }
        }
        for (std::size_t k = 0; k < K; ++k) {
            const double step = spec.learning_rate * alpha[k];
            for (std::size_t i = 0; i < mix.data().size(); ++i)
                heads[k].data()[i] += step * (target.data()[i] - mix.data()[i]);
        }
        if (change < kConvergedChange) break;
    }

    QTable mean{Matrix<double>(dims.n_states, A, 0.0)};
    for (std::size_t k = 0; k < K; ++k)
        for (StateIndex s = 0; s < dims.n_states; ++s)
            for (ActionIndex a = 0; a < A; ++a) mean.values(s, a) += heads[k](s, a) / static_cast<double>(K);
    return mean;
}

StochasticPolicy rem_q(const Dataset& dataset, const AlgoSpec& spec, const TrainingDims& dims) {
    return greedy_policy(rem_mean_q(dataset, spec, dims), dims.n_states);
}

Matrix<std::uint8_t> bcq_allowed(const StochasticPolicy& pi_b, double tau) {
    Matrix<std::uint8_t> allowed(pi_b.n_states(), pi_b.n_actions(), 0);
    for (StateIndex s = 0; s < pi_b.n_states(); ++s) {
        auto row = pi_b.row(s);
        const double top = *std::max_element(row.begin(), row.end());
        for (ActionIndex a = 0; a < row.size(); ++a) allowed(s, a) = row[a] / top > tau ? 1 : 0;
    }
    return allowed;
}

StochasticPolicy bcq(const Dataset& dataset, const AlgoSpec& spec, const TrainingDims& dims) {
    require_data(dataset, "bcq");
    spec.validate();
    const CountTable c = counts(dataset, dims.n_states, dims.n_actions);
    const Matrix<std::uint8_t> on_data = bcq_allowed(empirical_behavior_policy(c), spec.tau);
    const TabularMdp model = training_model(dataset, dims);
    // The sink row is unconstrained; its value is zero for every action.
    Matrix<std::uint8_t> allowed(model.n_states(), model.n_actions(), 1);
    for (StateIndex s = 0; s < dims.n_states; ++s)
        for (ActionIndex a = 0; a < dims.n_actions; ++a) allowed(s, a) = on_data(s, a);
    return constrained_greedy(q_iteration(model, spec.iterations, allowed), allowed, dims.n_states);
}

StochasticPolicy trbcq(const Dataset& dataset, const AlgoSpec& spec, const TrainingDims& dims) {
    require_data(dataset, "trbcq");
    spec.validate();
    const Dataset selected = top_return_select(dataset, spec.zeta);
    if (selected.empty()) throw std::invalid_argument("trbcq: selection is empty; zeta too small for this dataset");
    return bcq(selected, spec, dims);
}

StochasticPolicy bail_imitate(const Dataset& dataset, const AlgoSpec& spec, const TrainingDims& dims) {
    require_data(dataset, "bail_imitate");
    spec.validate();
    const Dataset selected = top_return_select(dataset, spec.zeta);
    if (selected.empty()) throw std::invalid_argument("bail_imitate: selection is empty");
    const CountTable c = counts(selected, dims.n_states, dims.n_actions);
    std::vector<ActionIndex> actions(dims.n_states, 0);
    for (StateIndex s = 0; s < dims.n_states; ++s) {
        auto row = c.n_sa.row(s);
        actions[s] = static_cast<ActionIndex>(std::max_element(row.begin(), row.end()) - row.begin());
    }
    return StochasticPolicy::deterministic(actions, dims.n_actions);
}

StochasticPolicy spibb(const Dataset& dataset, const AlgoSpec& spec, const TrainingDims& dims) {
    require_data(dataset, "spibb");
    spec.validate();
    const std::size_t S = dims.n_states, A = dims.n_actions;
    const CountTable c = counts(dataset, S, A);
    const StochasticPolicy pi_b = empirical_behavior_policy(c);
    const TabularMdp model = training_model(dataset, dims);

    Matrix<double> current = pi_b.probs();
    for (std::size_t iter = 0; iter < spec.iterations; ++iter) {
        const QTable q = policy_evaluation(model, pad_policy(StochasticPolicy(current), model.n_states()), 1e-10);
        Matrix<double> next(S, A, 0.0);
        for (StateIndex s = 0; s < S; ++s) {
            double free_mass = 1.0;
            std::optional<ActionIndex> best;
            for (ActionIndex a = 0; a < A; ++a) {
                if (c.n_sa(s, a) < spec.n_threshold) {
                    next(s, a) = pi_b(s, a);
                    free_mass -= pi_b(s, a);
                } else if (!best || q(s, a) > q(s, *best)) {
                    best = a;
                }
            }
            if (best) next(s, *best) += free_mass;
        }
        if (next == current) break;
        current = std::move(next);
    }
    return StochasticPolicy(std::move(current));
}

StochasticPolicy train(const Dataset& dataset, const AlgoSpec& spec, const TrainingDims& dims) {
    switch (spec.kind) {
    case AlgoKind::OfflineQ: return offline_q(dataset, spec, dims);
    case AlgoKind::EnsembleQ: return ensemble_q(dataset, spec, dims);
    case AlgoKind::RemQ: return rem_q(dataset, spec, dims);
    case AlgoKind::Bcq: return bcq(dataset, spec, dims);
    case AlgoKind::TrBcq: return trbcq(dataset, spec, dims);
    case AlgoKind::BailImitate: return bail_imitate(dataset, spec, dims);
    case AlgoKind::Spibb: return spibb(dataset, spec, dims);
    }
    throw std::logic_error("train: unhandled algorithm kind");
}

} // namespace offrl
