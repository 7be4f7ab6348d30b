#include "offrl/io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace offrl {

using nlohmann::json;

json mdp_to_json(const TabularMdp& mdp) {
    const MdpData& d = mdp.data();
    json doc;
    doc["n_states"] = d.n_states;
    doc["n_actions"] = d.n_actions;
    doc["discount"] = d.discount;
    doc["r_max"] = d.r_max;
    doc["transition"] = d.transition;
    doc["reward"] = d.reward;
    doc["initial_dist"] = d.initial_dist;
    doc["terminals"] = std::vector<StateIndex>(d.terminals.begin(), d.terminals.end());
    doc["horizon_cap"] = d.horizon_cap;
    return doc;
}

TabularMdp mdp_from_json(const json& doc) {
    MdpData d;
    try {
        d.n_states = doc.at("n_states").get<std::size_t>();
        d.n_actions = doc.at("n_actions").get<std::size_t>();
        d.discount = doc.at("discount").get<double>();
        d.r_max = doc.at("r_max").get<double>();
        d.transition = doc.at("transition").get<std::vector<double>>();
        d.reward = doc.at("reward").get<std::vector<double>>();
        d.initial_dist = doc.at("initial_dist").get<std::vector<double>>();
        for (auto t : doc.at("terminals").get<std::vector<StateIndex>>()) d.terminals.insert(t);
        d.horizon_cap = doc.at("horizon_cap").get<std::size_t>();
    } catch (const json::exception& e) {
        throw ModelError(std::string("malformed MDP document: ") + e.what());
    }
    return TabularMdp(std::move(d));
}

json policy_to_json(const StochasticPolicy& policy, const json& header) {
    json doc;
    if (!header.is_null()) doc["algo"] = header;
    doc["n_states"] = policy.n_states();
    doc["n_actions"] = policy.n_actions();
    doc["probs"] = policy.probs().data();
    return doc;
}

StochasticPolicy policy_from_json(const json& doc) {
    try {
        const auto S = doc.at("n_states").get<std::size_t>();
        const auto A = doc.at("n_actions").get<std::size_t>();
        return StochasticPolicy(Matrix<double>(S, A, doc.at("probs").get<std::vector<double>>()));
    } catch (const json::exception& e) {
        throw ModelError(std::string("malformed policy document: ") + e.what());
    }
}

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
}

json read_json_file(const std::filesystem::path& path) {
    try {
        return json::parse(read_text_file(path));
    } catch (const json::parse_error& e) {
        throw std::runtime_error(path.string() + ": " + e.what());
    }
}

void write_json_file(const std::filesystem::path& path, const json& doc) {
    write_text_file(path, doc.dump(2) + "\n");
}

void save_mdp(const std::filesystem::path& path, const TabularMdp& mdp) {
    write_json_file(path, mdp_to_json(mdp));
}

TabularMdp load_mdp(const std::filesystem::path& path) { return mdp_from_json(read_json_file(path)); }

std::string format_double(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

} // namespace offrl
