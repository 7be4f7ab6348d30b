#pragma once

#include "offrl/mdp.hpp"

#include <filesystem>
#include <nlohmann/json.hpp>
#include <string>

namespace offrl {

/// MDP document: keys n_states, n_actions, discount, r_max, transition,
/// reward (flattened row-major s,a,s'), initial_dist, terminals, horizon_cap.
/// Doubles are written in shortest round-trip form, so save/load is lossless.
nlohmann::json mdp_to_json(const TabularMdp& mdp);
TabularMdp mdp_from_json(const nlohmann::json& doc);

/// Policy document: n_states, n_actions, probs (row-major), and an optional
/// free-form "algo" header echoing how the policy was produced.
nlohmann::json policy_to_json(const StochasticPolicy& policy, const nlohmann::json& header = {});
StochasticPolicy policy_from_json(const nlohmann::json& doc);

nlohmann::json read_json_file(const std::filesystem::path& path);
void write_json_file(const std::filesystem::path& path, const nlohmann::json& doc);
void write_text_file(const std::filesystem::path& path, const std::string& text);
std::string read_text_file(const std::filesystem::path& path);

void save_mdp(const std::filesystem::path& path, const TabularMdp& mdp);
TabularMdp load_mdp(const std::filesystem::path& path);

/// %.17g formatting used by every text export.
std::string format_double(double x);

} // namespace offrl
