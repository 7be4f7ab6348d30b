#include "offrl/dataset.hpp"
#include "offrl/io.hpp"
#include "offrl/rng.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace offrl {

std::size_t Dataset::episode_count() const {
    std::int64_t max_id = -1;
    for (const auto& t : transitions) max_id = std::max(max_id, t.episode_id);
    return static_cast<std::size_t>(max_id + 1);
}

std::vector<double> Dataset::episode_returns() const {
    std::vector<double> g(episode_count(), 0.0);
    for (const auto& t : transitions) g[static_cast<std::size_t>(t.episode_id)] = t.g;
    return g;
}

Dataset generate(const TabularMdp& mdp, const StochasticPolicy& behavior, std::int64_t episodes,
                 std::uint64_t seed, std::string mdp_id, std::string behavior_id) {
    if (episodes <= 0) throw std::invalid_argument("generate: episodes must be positive");
    check_dimensions(mdp, behavior);
    Dataset ds;
    ds.meta = {std::move(mdp_id), std::move(behavior_id), seed, episodes};
    std::int64_t next_id = 0;
    for (std::int64_t k = 0; k < episodes; ++k) {
        Episode ep = rollout(mdp, behavior, derive_seed(seed, static_cast<std::uint64_t>(k)), next_id);
        if (ep.transitions.empty()) continue;
        ds.transitions.insert(ds.transitions.end(), ep.transitions.begin(), ep.transitions.end());
        ++next_id;
    }
    return ds;
}

Dataset concat(const Dataset& a, const Dataset& b) {
    Dataset out = a;
    const auto offset = static_cast<std::int64_t>(a.episode_count());
    for (Transition t : b.transitions) {
        t.episode_id += offset;
        out.transitions.push_back(t);
    }
    out.meta.episodes = a.meta.episodes + b.meta.episodes;
    if (a.meta.behavior != b.meta.behavior) out.meta.behavior = a.meta.behavior + "+" + b.meta.behavior;
    return out;
}

CountTable counts(const Dataset& dataset, std::size_t n_states, std::size_t n_actions) {
    CountTable c{Matrix<std::int64_t>(n_states, n_actions, 0), std::vector<std::int64_t>(n_states, 0)};
    for (const auto& t : dataset.transitions) {
        if (t.s >= n_states || t.a >= n_actions || t.s_next >= n_states)
            throw std::out_of_range("counts: transition index out of range");
        ++c.n_sa(t.s, t.a);
        ++c.n_s[t.s];
    }
    return c;
}

StochasticPolicy empirical_behavior_policy(const CountTable& counts) {
    const std::size_t S = counts.n_states(), A = counts.n_actions();
    Matrix<double> m(S, A, 1.0 / static_cast<double>(A));
    for (StateIndex s = 0; s < S; ++s) {
        if (counts.n_s[s] == 0) continue;
        for (ActionIndex a = 0; a < A; ++a)
            m(s, a) = static_cast<double>(counts.n_sa(s, a)) / static_cast<double>(counts.n_s[s]);
    }
    return StochasticPolicy(std::move(m));
}

Randomness randomness(const StochasticPolicy& policy, const std::optional<std::vector<StateIndex>>& states) {
    std::vector<StateIndex> all;
    if (!states) {
        all.resize(policy.n_states());
        std::iota(all.begin(), all.end(), StateIndex{0});
    }
    const auto& idx = states ? *states : all;
    Randomness out;
    if (idx.empty()) return out;
    double total = 0.0;
    for (StateIndex s : idx) {
        for (double p : policy.row(s)) {
            if (p > 0.0) total += 1.0 / std::sqrt(p);
            else out.support_complete = false;
        }
    }
    out.q = total / static_cast<double>(idx.size());
    return out;
}

namespace {

Dataset filter_episodes(const Dataset& in, const std::vector<bool>& keep_episode, const std::string& tag) {
    Dataset out;
    out.meta = in.meta;
    out.meta.behavior = in.meta.behavior + ":" + tag;
    std::map<std::int64_t, std::int64_t> renumber;
    for (const auto& t : in.transitions) {
        if (!keep_episode[static_cast<std::size_t>(t.episode_id)]) continue;
        auto [it, inserted] = renumber.try_emplace(t.episode_id, static_cast<std::int64_t>(renumber.size()));
        Transition copy = t;
        copy.episode_id = it->second;
        out.transitions.push_back(copy);
    }
    out.meta.episodes = static_cast<std::int64_t>(renumber.size());
    return out;
}

} // namespace

QualitySplit quality_split(const Dataset& dataset, double low_hi, double high_lo) {
    if (!(low_hi <= high_lo)) throw std::invalid_argument("quality_split: need low_hi <= high_lo");
    const auto g = dataset.episode_returns();
    std::vector<bool> low(g.size()), medium(g.size()), high(g.size());
    for (std::size_t e = 0; e < g.size(); ++e) {
        if (g[e] < low_hi) low[e] = true;
        else if (g[e] < high_lo) medium[e] = true;
        else high[e] = true;
    }
    return {filter_episodes(dataset, low, "low"), filter_episodes(dataset, medium, "medium"),
            filter_episodes(dataset, high, "high")};
}

std::pair<double, double> return_quantile_thresholds(const Dataset& dataset, double q_low, double q_high) {
    auto g = dataset.episode_returns();
    if (g.empty()) throw std::invalid_argument("return_quantile_thresholds: empty dataset");
    if (!(0.0 <= q_low && q_low <= q_high && q_high <= 1.0))
        throw std::invalid_argument("return_quantile_thresholds: need 0 <= q_low <= q_high <= 1");
    std::sort(g.begin(), g.end());
    auto quantile = [&](double q) {
        const double pos = q * static_cast<double>(g.size() - 1);
        const auto lo = static_cast<std::size_t>(std::floor(pos));
        const std::size_t hi = std::min(lo + 1, g.size() - 1);
        return g[lo] + (pos - static_cast<double>(lo)) * (g[hi] - g[lo]);
    };
    return {quantile(q_low), quantile(q_high)};
}

Dataset top_return_select(const Dataset& dataset, double zeta) {
    if (!(zeta > 0.0 && zeta <= 1.0)) throw std::invalid_argument("top_return_select: zeta must lie in (0, 1]");
    const std::size_t n = dataset.size();
    const auto keep_n = static_cast<std::size_t>(std::ceil(zeta * static_cast<double>(n) - 1e-9));
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    const auto& tr = dataset.transitions;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
        if (tr[i].g != tr[j].g) return tr[i].g > tr[j].g;
        if (tr[i].episode_id != tr[j].episode_id) return tr[i].episode_id < tr[j].episode_id;
        return tr[i].step < tr[j].step;
    });
    std::vector<bool> keep(n, false);
    for (std::size_t k = 0; k < keep_n; ++k) keep[order[k]] = true;

    Dataset out;
    out.meta = dataset.meta;
    std::map<std::int64_t, std::int64_t> renumber;
    for (std::size_t i = 0; i < n; ++i) {
        if (!keep[i]) continue;
        auto [it, inserted] = renumber.try_emplace(tr[i].episode_id, static_cast<std::int64_t>(renumber.size()));
        Transition t = tr[i];
        t.episode_id = it->second;
        out.transitions.push_back(t);
    }
    out.meta.episodes = static_cast<std::int64_t>(renumber.size());
    return out;
}

namespace {

std::string sanitize_token(const std::string& s) {
    std::string out = s.empty() ? "-" : s;
    for (char& c : out)
        if (std::isspace(static_cast<unsigned char>(c))) c = '_';
    return out;
}

constexpr const char* kDatasetMagic = "# offrl-dataset";

} // namespace

std::string dataset_to_text(const Dataset& dataset) {
    std::ostringstream out;
    out << kDatasetMagic << " mdp=" << sanitize_token(dataset.meta.mdp_id)
        << " behavior=" << sanitize_token(dataset.meta.behavior) << " seed=" << dataset.meta.seed
        << " episodes=" << dataset.meta.episodes << '\n';
    for (const auto& t : dataset.transitions) {
        out << t.episode_id << ' ' << t.step << ' ' << t.s << ' ' << t.a << ' ' << format_double(t.r) << ' '
            << t.s_next << ' ' << (t.done ? 1 : 0) << ' ' << format_double(t.g) << '\n';
    }
    return out.str();
}

Dataset dataset_from_text(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line.rfind(kDatasetMagic, 0) != 0)
        throw std::runtime_error("dataset: missing '# offrl-dataset' header");
    Dataset ds;
    std::istringstream header(line.substr(std::string(kDatasetMagic).size()));
    std::string field;
    while (header >> field) {
        const auto eq = field.find('=');
        if (eq == std::string::npos) throw std::runtime_error("dataset: malformed header field '" + field + "'");
        const std::string key = field.substr(0, eq), value = field.substr(eq + 1);
        if (key == "mdp") ds.meta.mdp_id = value;
        else if (key == "behavior") ds.meta.behavior = value;
        else if (key == "seed") ds.meta.seed = std::stoull(value);
        else if (key == "episodes") ds.meta.episodes = std::stoll(value);
        else throw std::runtime_error("dataset: unknown header key '" + key + "'");
    }
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream rec(line);
        Transition t;
        std::string r, g;
        int done = 0;
        if (!(rec >> t.episode_id >> t.step >> t.s >> t.a >> r >> t.s_next >> done >> g))
            throw std::runtime_error("dataset: malformed record on line " + std::to_string(lineno));
        t.r = std::stod(r);
        t.g = std::stod(g);
        t.done = done != 0;
        ds.transitions.push_back(t);
    }
    return ds;
}

void save_dataset(const std::filesystem::path& path, const Dataset& dataset) {
    write_text_file(path, dataset_to_text(dataset));
}

Dataset load_dataset(const std::filesystem::path& path) { return dataset_from_text(read_text_file(path)); }

} // namespace offrl
