#include "offrl/bounds.hpp"
#include "offrl/io.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <functional>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace offrl {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void check_fraction(double x, const char* what, bool closed_above) {
    const bool ok = x > 0.0 && (closed_above ? x <= 1.0 : x < 1.0);
    if (!ok) throw std::invalid_argument(std::string(what) + (closed_above ? " must lie in (0, 1]" : " must lie in (0, 1)"));
}

} // namespace

void BoundConfig::validate() const {
    check_fraction(delta, "delta", false);
    check_fraction(tau, "tau", false);
    check_fraction(zeta, "zeta", true);
    if (!(truncation_tol > 0.0)) throw std::invalid_argument("truncation_tol must be positive");
}

nlohmann::json to_json(const BoundConfig& cfg) {
    return {{"delta", cfg.delta}, {"truncation_tol", cfg.truncation_tol}, {"tau", cfg.tau}, {"zeta", cfg.zeta}};
}

BoundConfig bound_config_from_json(const nlohmann::json& doc) {
    BoundConfig cfg;
    cfg.delta = doc.value("delta", cfg.delta);
    cfg.truncation_tol = doc.value("truncation_tol", cfg.truncation_tol);
    cfg.tau = doc.value("tau", cfg.tau);
    cfg.zeta = doc.value("zeta", cfg.zeta);
    cfg.validate();
    return cfg;
}

ModelDims ModelDims::of(const TabularMdp& mdp) {
    return {mdp.n_states(), mdp.n_actions(), mdp.discount(), mdp.r_max()};
}

double log_confidence_term(std::size_t n_states, std::size_t n_actions, double delta) {
    check_fraction(delta, "delta", false);
    const double S = static_cast<double>(n_states), A = static_cast<double>(n_actions);
    return std::log(S) + std::log(A) + S * std::log(2.0) - std::log(delta);
}

double bound_prefactor(const ModelDims& dims, double delta) {
    return std::sqrt(2.0 * log_confidence_term(dims.n_states, dims.n_actions, delta)) * dims.r_max /
           (1.0 - dims.discount);
}

double concentration_radius(std::int64_t n_sa, std::size_t n_states, std::size_t n_actions, double delta) {
    if (n_sa <= 0) throw std::domain_error("concentration_radius: undefined for N(s,a) = 0");
    return std::sqrt(2.0 / static_cast<double>(n_sa) * log_confidence_term(n_states, n_actions, delta));
}

namespace {

/// Shared series engine. `leading(s,a)` is the depth-0 term, `leaf(s)` the
/// per-state quantity propagated through p and `prop`. Both may be +inf.
SeriesBound evaluate_series(const TabularMdp& mdp, const StochasticPolicy& prop, const Matrix<double>& leading,
                            const std::vector<double>& leaf, double prefactor, double tol,
                            std::optional<std::size_t> horizon) {
    const std::size_t S = mdp.n_states(), A = mdp.n_actions();
    const double gamma = mdp.discount();

    std::vector<double> v(S);
    std::vector<bool> diverges(S);
    double max_leaf = 0.0;
    for (StateIndex s = 0; s < S; ++s) {
        diverges[s] = std::isinf(leaf[s]);
        v[s] = diverges[s] ? 0.0 : leaf[s];
        max_leaf = std::max(max_leaf, v[s]);
    }

    std::size_t depth = 0;
    if (horizon) {
        depth = *horizon;
    } else if (gamma > 0.0 && max_leaf > 0.0) {
        // Tail after depth n is at most C gamma^{n+1}/(1-gamma) max_leaf.
        double tail = prefactor * gamma / (1.0 - gamma) * max_leaf;
        while (tail >= tol) {
            tail *= gamma;
            ++depth;
        }
    }

    Matrix<double> sum = leading;
    for (double& x : sum.data())
        if (std::isinf(x)) x = 0.0;
    Matrix<double> w(S, A);
    double discount_k = 1.0;
    for (std::size_t k = 1; k <= depth; ++k) {
        discount_k *= gamma;
        for (StateIndex s = 0; s < S; ++s) {
            for (ActionIndex a = 0; a < A; ++a) {
                auto P = mdp.transition_row(s, a);
                double acc = 0.0;
                for (StateIndex s2 = 0; s2 < S; ++s2) acc += P[s2] * v[s2];
                w(s, a) = acc;
                sum(s, a) += discount_k * acc;
            }
        }
        for (StateIndex s = 0; s < S; ++s) {
            double acc = 0.0;
            for (ActionIndex a = 0; a < A; ++a) acc += prop(s, a) * w(s, a);
            v[s] = acc;
        }
    }

    // States from which a divergent leaf is reachable under (p, prop).
    std::vector<bool> reaches(diverges);
    if (gamma > 0.0) {
        bool changed = true;
        while (changed) {
            changed = false;
            for (StateIndex s = 0; s < S; ++s) {
                if (reaches[s]) continue;
                for (ActionIndex a = 0; a < A && !reaches[s]; ++a) {
                    if (prop(s, a) <= 0.0) continue;
                    auto P = mdp.transition_row(s, a);
                    for (StateIndex s2 = 0; s2 < S; ++s2)
                        if (P[s2] > 0.0 && reaches[s2]) {
                            reaches[s] = changed = true;
                            break;
                        }
                }
            }
        }
    }

    SeriesBound out{Matrix<double>(S, A), depth};
    for (StateIndex s = 0; s < S; ++s) {
        for (ActionIndex a = 0; a < A; ++a) {
            bool inf = std::isinf(leading(s, a));
            if (!inf && gamma > 0.0 && (horizon ? *horizon > 0 : true)) {
                auto P = mdp.transition_row(s, a);
                for (StateIndex s2 = 0; s2 < S && !inf; ++s2) inf = P[s2] > 0.0 && reaches[s2];
            }
            out.values(s, a) = inf ? kInf : prefactor * sum(s, a);
        }
    }
    return out;
}

double inv_sqrt_or_inf(double x) { return x > 0.0 ? 1.0 / std::sqrt(x) : kInf; }

void check_series_inputs(const TabularMdp& mdp, const StochasticPolicy& pi_b, std::span<const std::int64_t> n_s) {
    check_dimensions(mdp, pi_b);
    if (n_s.size() != mdp.n_states()) throw DimensionError("state-count vector must have |S| entries");
}

} // namespace

SeriesBound general_bound(const TabularMdp& true_mdp, const StochasticPolicy& pi, const StochasticPolicy& pi_b,
                          std::span<const std::int64_t> n_s, const BoundConfig& cfg,
                          std::optional<std::size_t> horizon) {
    cfg.validate();
    check_series_inputs(true_mdp, pi_b, n_s);
    check_dimensions(true_mdp, pi);
    const std::size_t S = true_mdp.n_states(), A = true_mdp.n_actions();
    Matrix<double> leading(S, A, 0.0);
    std::vector<double> leaf(S, 0.0);
    for (StateIndex s = 0; s < S; ++s) {
        if (true_mdp.is_terminal(s)) continue;
        const double n_factor = inv_sqrt_or_inf(static_cast<double>(n_s[s]));
        double acc = 0.0;
        for (ActionIndex a = 0; a < A; ++a) {
            const double w = n_factor * inv_sqrt_or_inf(pi_b(s, a));
            leading(s, a) = w;
            if (pi(s, a) > 0.0) acc += pi(s, a) * w;
        }
        leaf[s] = acc;
    }
    return evaluate_series(true_mdp, pi, leading, leaf, bound_prefactor(ModelDims::of(true_mdp), cfg.delta),
                           cfg.truncation_tol, horizon);
}

double expected_general_term(std::span<const double> pi_b_row) {
    if (pi_b_row.empty()) throw std::invalid_argument("expected_general_term: empty row");
    double acc = 0.0;
    for (double p : pi_b_row) acc += inv_sqrt_or_inf(p);
    return acc / static_cast<double>(pi_b_row.size());
}

double uniform_general_bound(std::int64_t n, const ModelDims& dims, double delta) {
    if (n <= 0) throw std::domain_error("uniform_general_bound: N must be positive");
    return bound_prefactor(dims, delta) * std::sqrt(static_cast<double>(dims.n_actions) / static_cast<double>(n)) /
           (1.0 - dims.discount);
}

namespace {

/// Calls fn(k) for every composition k of `total` into `parts` positive integers.
void for_each_composition(std::size_t parts, std::size_t total,
                          const std::function<void(const std::vector<std::size_t>&)>& fn) {
    if (parts == 0 || total < parts) return;
    std::vector<std::size_t> k(parts, 1);
    std::function<void(std::size_t, std::size_t)> rec = [&](std::size_t i, std::size_t remaining) {
        if (i + 1 == parts) {
            k[i] = remaining;
            fn(k);
            return;
        }
        const std::size_t slots_after = parts - i - 1;
        for (std::size_t x = 1; x + slots_after <= remaining; ++x) {
            k[i] = x;
            rec(i + 1, remaining - x);
        }
    };
    rec(0, total);
}

double binomial(std::size_t n, std::size_t k) {
    double r = 1.0;
    for (std::size_t i = 1; i <= k; ++i) r = r * static_cast<double>(n - k + i) / static_cast<double>(i);
    return r;
}

struct GridMin {
    std::vector<double> argmin;
    double value = kInf;
    std::size_t points = 0;
};

GridMin minimize_on_grid(std::size_t n_actions, std::size_t total) {
    GridMin best;
    std::vector<double> p(n_actions);
    for_each_composition(n_actions, total, [&](const std::vector<std::size_t>& k) {
        for (std::size_t i = 0; i < n_actions; ++i) p[i] = static_cast<double>(k[i]) / static_cast<double>(total);
        const double value = expected_general_term(p);
        ++best.points;
        if (value < best.value) {
            best.value = value;
            best.argmin = p;
        }
    });
    return best;
}

} // namespace

Theorem1Result theorem1_check(std::size_t n_actions, double grid_step) {
    if (n_actions < 2) throw std::invalid_argument("theorem1_check: need at least two actions");
    if (!(grid_step > 0.0 && grid_step <= 0.5)) throw std::invalid_argument("theorem1_check: bad grid step");
    const auto total = static_cast<std::size_t>(std::llround(1.0 / grid_step));
    if (binomial(total - 1, n_actions - 1) > 5e7) throw std::invalid_argument("theorem1_check: grid too large");
    const GridMin best = minimize_on_grid(n_actions, total);
    Theorem1Result out{best.argmin, best.value, true, best.points};
    const double u = 1.0 / static_cast<double>(n_actions);
    for (double p : best.argmin) out.is_uniform = out.is_uniform && std::abs(p - u) <= grid_step + 1e-12;
    return out;
}

double bcq_bound_real(double n, double tau, const ModelDims& dims, double delta) {
    check_fraction(tau, "tau", false);
    const double n_tau = n * tau;
    if (!(n_tau >= 1.0)) throw std::domain_error("bcq_bound: N*tau < 1, threshold too strict for the data");
    return bound_prefactor(dims, delta) / std::sqrt(n_tau) / (1.0 - dims.discount);
}

double bcq_bound(std::int64_t n, double tau, const ModelDims& dims, double delta) {
    return bcq_bound_real(static_cast<double>(n), tau, dims, delta);
}

Theorem2Result theorem2_check(double tau, std::size_t n_actions, const Theorem2Params& params) {
    check_fraction(tau, "tau", false);
    ModelDims dims = params.dims;
    dims.n_actions = n_actions;
    // Grid resolution 1/(m |A|) keeps the uniform row on the grid.
    std::size_t m = 1;
    while (m < 50 && binomial((m + 1) * n_actions - 1, n_actions - 1) <= 2e5) ++m;
    const GridMin best = minimize_on_grid(n_actions, m * n_actions);

    Theorem2Result out;
    out.bcq = bcq_bound(params.n, tau, dims, params.delta);
    out.exploration_min = bound_prefactor(dims, params.delta) / std::sqrt(static_cast<double>(params.n)) *
                          best.value / (1.0 - dims.discount);
    out.argmin = best.argmin;
    out.boundary = std::abs(out.bcq - out.exploration_min) <= 1e-10 * out.exploration_min;
    out.strictly_less = !out.boundary && out.bcq < out.exploration_min;
    return out;
}

SeriesBound bail_expected_bound(const TabularMdp& true_mdp, const StochasticPolicy& pi_b,
                                std::span<const std::int64_t> n_s, const BoundConfig& cfg,
                                std::optional<std::size_t> horizon) {
    cfg.validate();
    check_series_inputs(true_mdp, pi_b, n_s);
    const std::size_t S = true_mdp.n_states(), A = true_mdp.n_actions();
    Matrix<double> leading(S, A, 0.0);
    std::vector<double> leaf(S, 0.0);
    for (StateIndex s = 0; s < S; ++s) {
        if (true_mdp.is_terminal(s)) continue;
        const double n_factor = inv_sqrt_or_inf(static_cast<double>(n_s[s]) * cfg.tau);
        double acc = 0.0;
        for (ActionIndex a = 0; a < A; ++a) {
            leading(s, a) = n_factor * inv_sqrt_or_inf(pi_b(s, a));
            acc += std::sqrt(pi_b(s, a));
        }
        leaf[s] = n_factor * acc;
    }
    return evaluate_series(true_mdp, pi_b, leading, leaf, bound_prefactor(ModelDims::of(true_mdp), cfg.delta),
                           cfg.truncation_tol, horizon);
}

double bail_uniform_optimum_display(std::int64_t n, double tau, const ModelDims& dims, double delta) {
    const double A = static_cast<double>(dims.n_actions), g = dims.discount;
    return bound_prefactor(dims, delta) / std::sqrt(static_cast<double>(n) * tau) *
           (1.0 / std::sqrt(A) + g * std::sqrt(A) / (1.0 - g));
}

double bail_deterministic_optimum(std::int64_t n, double tau, const ModelDims& dims, double delta) {
    return bound_prefactor(dims, delta) / std::sqrt(static_cast<double>(n) * tau) / (1.0 - dims.discount);
}

double trbcq_scaling(double zeta) {
    check_fraction(zeta, "zeta", true);
    return 1.0 / std::sqrt(zeta);
}

double assumption_deviation(const TabularMdp& mdp, std::span<const std::int64_t> n_s) {
    if (n_s.size() != mdp.n_states()) throw DimensionError("assumption_deviation: count vector size");
    double sum = 0.0;
    std::size_t k = 0;
    for (StateIndex s = 0; s < n_s.size(); ++s) {
        if (mdp.is_terminal(s)) continue;
        sum += static_cast<double>(n_s[s]);
        ++k;
    }
    if (k == 0) return 0.0;
    const double mean = sum / static_cast<double>(k);
    if (mean == 0.0) return kInf;
    double dev = 0.0;
    for (StateIndex s = 0; s < n_s.size(); ++s)
        if (!mdp.is_terminal(s)) dev = std::max(dev, std::abs(static_cast<double>(n_s[s]) - mean) / mean);
    return dev;
}

BoundReport build_bound_report(const TabularMdp& true_mdp, const Dataset& dataset, const StochasticPolicy& pi,
                               const BoundConfig& cfg, double eval_tol) {
    cfg.validate();
    const std::size_t S = true_mdp.n_states(), A = true_mdp.n_actions();
    const CountTable c = counts(dataset, S, A);
    const StochasticPolicy pi_b = empirical_behavior_policy(c);
    const TabularMdp est = estimate(dataset, S, A, true_mdp);

    BoundReport rep;
    rep.config = cfg;
    rep.extrapolation = extrapolation_error(true_mdp, est, pi, eval_tol, c);
    rep.general = general_bound(true_mdp, pi, pi_b, c.n_s, cfg);
    rep.bail = bail_expected_bound(true_mdp, pi_b, c.n_s, cfg);
    rep.assumption_deviation = assumption_deviation(true_mdp, c.n_s);

    std::vector<StateIndex> visited;
    double total = 0.0;
    std::size_t non_terminal = 0;
    for (StateIndex s = 0; s < S; ++s) {
        if (c.visited(s)) visited.push_back(s);
        if (!true_mdp.is_terminal(s)) {
            total += static_cast<double>(c.n_s[s]);
            ++non_terminal;
        }
    }
    rep.mean_state_count = non_terminal ? total / static_cast<double>(non_terminal) : 0.0;
    rep.behavior_randomness = randomness(pi_b, visited);

    const ModelDims dims = ModelDims::of(true_mdp);
    rep.bcq = Matrix<double>(S, A, 0.0);
    for (StateIndex s = 0; s < S; ++s) {
        if (true_mdp.is_terminal(s)) continue;
        const double n_tau = static_cast<double>(c.n_s[s]) * cfg.tau;
        const double value = n_tau >= 1.0 ? bcq_bound_real(static_cast<double>(c.n_s[s]), cfg.tau, dims, cfg.delta) : kInf;
        for (ActionIndex a = 0; a < A; ++a) rep.bcq(s, a) = value;
    }
    return rep;
}

std::string bound_report_csv(const BoundReport& report) {
    std::ostringstream out;
    out << "s,a,eps,general_bound,bcq_bound,bail_bound\n";
    const auto& eps = report.extrapolation.eps;
    for (StateIndex s = 0; s < eps.rows(); ++s)
        for (ActionIndex a = 0; a < eps.cols(); ++a)
            out << s << ',' << a << ',' << format_double(eps(s, a)) << ',' << format_double(report.general.values(s, a))
                << ',' << format_double(report.bcq(s, a)) << ',' << format_double(report.bail.values(s, a)) << '\n';
    return out.str();
}

nlohmann::json bound_report_summary(const BoundReport& report) {
    const auto& eps = report.extrapolation.eps;
    std::size_t visited = 0, dominated = 0, infinite = 0;
    double max_abs_eps = 0.0;
    for (StateIndex s = 0; s < eps.rows(); ++s) {
        for (ActionIndex a = 0; a < eps.cols(); ++a) {
            if (!report.extrapolation.visited(s, a)) continue;
            ++visited;
            max_abs_eps = std::max(max_abs_eps, std::abs(eps(s, a)));
            if (std::abs(eps(s, a)) <= report.general.values(s, a)) ++dominated;
            if (std::isinf(report.general.values(s, a))) ++infinite;
        }
    }
    // JSON has no infinity; report it as a string.
    auto num = [](double x) -> nlohmann::json { return std::isfinite(x) ? nlohmann::json(x) : nlohmann::json("inf"); };
    return {
        {"config", to_json(report.config)},
        {"general_bound_horizon", report.general.horizon},
        {"bail_bound_horizon", report.bail.horizon},
        {"assumption_deviation", num(report.assumption_deviation)},
        {"mean_state_count", report.mean_state_count},
        {"randomness_q", report.behavior_randomness.q},
        {"randomness_support_complete", report.behavior_randomness.support_complete},
        {"visited_pairs", visited},
        {"visited_pairs_dominated_by_general_bound", dominated},
        {"visited_pairs_with_infinite_general_bound", infinite},
        {"max_abs_eps_visited", max_abs_eps},
        {"bail_leading_term_note",
         "bail_bound uses pi_b(a|s)^-1/2 in the leading term and pi_b^+1/2 at deeper terms; "
         "the displayed uniform optimum uses |A|^-1/2 for the leading term"},
    };
}

} // namespace offrl
