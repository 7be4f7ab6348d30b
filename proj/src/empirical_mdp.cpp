#include "offrl/empirical_mdp.hpp"
#include "offrl/io.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace offrl {

EdgeCounts::EdgeCounts(std::size_t n_states, std::size_t n_actions)
    : S_(n_states), A_(n_actions), n_(n_states * n_actions * n_states, 0.0),
      r_sum_(n_states * n_actions * n_states, 0.0), n_sa_(n_states * n_actions, 0.0) {}

void EdgeCounts::add(const Transition& t, double weight) {
    if (t.s >= S_ || t.s_next >= S_ || t.a >= A_) throw std::out_of_range("EdgeCounts: index out of range");
    const std::size_t e = (t.s * A_ + t.a) * S_ + t.s_next;
    n_[e] += weight;
    r_sum_[e] += weight * t.r;
    n_sa_[t.s * A_ + t.a] += weight;
}

void EdgeCounts::add(const Dataset& dataset) {
    for (const auto& t : dataset.transitions) add(t);
}

ModelTemplate ModelTemplate::from(const TabularMdp& mdp) {
    return {mdp.discount(), mdp.r_max(), mdp.initial_dist(), mdp.terminals(), mdp.horizon_cap()};
}

TabularMdp estimate(const EdgeCounts& edges, const ModelTemplate& tmpl) {
    const std::size_t S = edges.n_states(), A = edges.n_actions(), S1 = S + 1;
    const StateIndex sink = sink_state(S);
    MdpData d;
    d.n_states = S1;
    d.n_actions = A;
    d.discount = tmpl.discount;
    d.horizon_cap = tmpl.horizon_cap;
    d.transition.assign(S1 * A * S1, 0.0);
    d.reward.assign(S1 * A * S1, 0.0);
    d.initial_dist.assign(S1, 0.0);
    if (!tmpl.initial_dist.empty()) {
        if (tmpl.initial_dist.size() != S) throw DimensionError("estimate: template initial_dist size");
        std::copy(tmpl.initial_dist.begin(), tmpl.initial_dist.end(), d.initial_dist.begin());
    } else {
        std::fill_n(d.initial_dist.begin(), S, 1.0 / static_cast<double>(S));
    }
    d.terminals = tmpl.terminals;
    d.terminals.insert(sink);

    double r_max = tmpl.r_max;
    auto idx = [&](std::size_t s, std::size_t a, std::size_t s2) { return (s * A + a) * S1 + s2; };
    for (StateIndex s = 0; s < S1; ++s) {
        for (ActionIndex a = 0; a < A; ++a) {
            if (d.terminals.contains(s)) {
                d.transition[idx(s, a, s)] = 1.0;
                continue;
            }
            const double n = edges.n_sa(s, a);
            if (n <= 0.0) {
                d.transition[idx(s, a, sink)] = 1.0;
                continue;
            }
            for (StateIndex s2 = 0; s2 < S; ++s2) {
                const double k = edges.n_edge(s, a, s2);
                if (k <= 0.0) continue;
                d.transition[idx(s, a, s2)] = k / n;
                const double r = edges.reward_sum(s, a, s2) / k;
                d.reward[idx(s, a, s2)] = r;
                r_max = std::max(r_max, std::abs(r));
            }
        }
    }
    d.r_max = r_max;
    return TabularMdp(std::move(d));
}

TabularMdp estimate(const Dataset& dataset, std::size_t n_states, std::size_t n_actions,
                    const TabularMdp& template_mdp) {
    if (template_mdp.n_states() != n_states || template_mdp.n_actions() != n_actions)
        throw DimensionError("estimate: template dimensions differ from the requested ones");
    EdgeCounts edges(n_states, n_actions);
    edges.add(dataset);
    return estimate(edges, ModelTemplate::from(template_mdp));
}

ExtrapolationTable extrapolation_error(const TabularMdp& true_mdp, const TabularMdp& est_mdp,
                                       const StochasticPolicy& policy, double tol) {
    const std::size_t S = true_mdp.n_states(), A = true_mdp.n_actions();
    if (est_mdp.n_actions() != A || est_mdp.n_states() < S || est_mdp.n_states() > S + 1)
        throw DimensionError("extrapolation_error: estimate is not aligned with the true model");
    const QTable q_true = policy_evaluation(true_mdp, policy, tol);
    const QTable q_est = policy_evaluation(est_mdp, pad_policy(policy, est_mdp.n_states()), tol);
    ExtrapolationTable out{Matrix<double>(S, A), Matrix<std::uint8_t>(S, A, 1)};
    for (StateIndex s = 0; s < S; ++s)
        for (ActionIndex a = 0; a < A; ++a) out.eps(s, a) = q_true(s, a) - q_est(s, a);
    return out;
}

ExtrapolationTable extrapolation_error(const TabularMdp& true_mdp, const TabularMdp& est_mdp,
                                       const StochasticPolicy& policy, double tol, const CountTable& counts) {
    ExtrapolationTable out = extrapolation_error(true_mdp, est_mdp, policy, tol);
    if (counts.n_states() != true_mdp.n_states() || counts.n_actions() != true_mdp.n_actions())
        throw DimensionError("extrapolation_error: counts dimensions");
    for (StateIndex s = 0; s < counts.n_states(); ++s)
        for (ActionIndex a = 0; a < counts.n_actions(); ++a) out.visited(s, a) = counts.n_sa(s, a) > 0;
    return out;
}

Matrix<double> l1_deviation(const TabularMdp& true_mdp, const TabularMdp& est_mdp) {
    const std::size_t S = true_mdp.n_states(), A = true_mdp.n_actions();
    if (est_mdp.n_actions() != A || est_mdp.n_states() < S || est_mdp.n_states() > S + 1)
        throw DimensionError("l1_deviation: estimate is not aligned with the true model");
    Matrix<double> out(S, A, 0.0);
    for (StateIndex s = 0; s < S; ++s) {
        for (ActionIndex a = 0; a < A; ++a) {
            auto p1 = true_mdp.transition_row(s, a);
            auto p2 = est_mdp.transition_row(s, a);
            double d = 0.0;
            for (StateIndex s2 = 0; s2 < S; ++s2) d += std::abs(p1[s2] - p2[s2]);
            if (est_mdp.n_states() == S + 1) d += p2[S];
            out(s, a) = d;
        }
    }
    return out;
}

std::string extrapolation_to_csv(const ExtrapolationTable& table) {
    std::ostringstream out;
    out << "s,a,eps,visited\n";
    for (StateIndex s = 0; s < table.eps.rows(); ++s)
        for (ActionIndex a = 0; a < table.eps.cols(); ++a)
            out << s << ',' << a << ',' << format_double(table.eps(s, a)) << ',' << (table.visited(s, a) ? 1 : 0)
                << '\n';
    return out.str();
}

} // namespace offrl
