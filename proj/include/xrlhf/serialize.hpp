#pragma once

#include <filesystem>
#include <iosfwd>
#include <vector>

#include <json.hpp>

#include "xrlhf/explainer.hpp"
#include "xrlhf/oracle.hpp"
#include "xrlhf/policy.hpp"
#include "xrlhf/reward.hpp"
#include "xrlhf/unlearner.hpp"

namespace xrlhf {

// {"theta": [...]}
void to_json(nlohmann::json& j, const RewardParams& p);
void from_json(const nlohmann::json& j, RewardParams& p);

// {"query_id", "selected_ids", "weights", "projection_distance", "objective", "iterations"}
void to_json(nlohmann::json& j, const Explanation& e);
void from_json(const nlohmann::json& j, Explanation& e);

// {"kind": "parametric", "w": [...]} or {"kind": "tabular", "probs": {"<item id>": [...]}}
void to_json(nlohmann::json& j, const CandidatePolicy& p);
void from_json(const nlohmann::json& j, CandidatePolicy& p);

void to_json(nlohmann::json& j, const WinRateReport& r);
void from_json(const nlohmann::json& j, WinRateReport& r);

void to_json(nlohmann::json& j, const UnlearnStep& s);
void to_json(nlohmann::json& j, const oracle::OracleResult& r);

RewardParams load_reward(const std::filesystem::path& path);
void save_reward(const std::filesystem::path& path, const RewardParams& params);

CandidatePolicy load_policy(const std::filesystem::path& path);
void save_policy(const std::filesystem::path& path, const CandidatePolicy& policy);

std::vector<Explanation> load_explanations(const std::filesystem::path& path);
void save_explanations(const std::filesystem::path& path, const std::vector<Explanation>& explanations);

/// Step records, one per line.
void save_unlearn_trace(const std::filesystem::path& path, const UnlearnTrace& trace);

/// Single-record JSON file, written with a trailing newline.
void save_json(const std::filesystem::path& path, const nlohmann::json& j);
nlohmann::json load_json(const std::filesystem::path& path);

}  // namespace xrlhf
