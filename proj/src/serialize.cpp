#include "xrlhf/serialize.hpp"

#include <fstream>
#include <sstream>
#include <string>

#include "xrlhf/dataset_io.hpp"
#include "xrlhf/errors.hpp"

namespace xrlhf {

using nlohmann::json;

void to_json(json& j, const RewardParams& p) { j = json{{"theta", p.theta}}; }

void from_json(const json& j, RewardParams& p) {
  if (!j.contains("theta")) throw Error("reward record has no \"theta\"");
  p.theta = j.at("theta").get<FeatureVector>();
  check_finite(p.theta, "theta");
}

void to_json(json& j, const Explanation& e) {
  j = json{{"query_id", e.query_id},
           {"selected_ids", e.selected_ids},
           {"weights", e.weights.omega},
           {"projection_distance", e.projection_distance},
           {"objective", e.objective},
           {"iterations", e.iterations}};
}

void from_json(const json& j, Explanation& e) {
  e.query_id = j.at("query_id").get<std::size_t>();
  e.selected_ids = j.at("selected_ids").get<std::vector<ExampleId>>();
  e.weights.omega = j.at("weights").get<std::vector<double>>();
  e.projection_distance = j.at("projection_distance").get<double>();
  e.objective = j.at("objective").get<double>();
  e.iterations = j.at("iterations").get<std::size_t>();
  if (e.weights.omega.size() != e.selected_ids.size())
    throw Error("explanation record: weights and selected_ids differ in length");
}

void to_json(json& j, const CandidatePolicy& p) {
  if (p.kind == CandidatePolicy::Kind::Parametric) {
    j = json{{"kind", "parametric"}, {"w", p.w}};
    return;
  }
  json probs = json::object();
  for (const auto& [id, row] : p.probs) probs[std::to_string(id)] = row;
  j = json{{"kind", "tabular"}, {"probs", probs}};
}

void from_json(const json& j, CandidatePolicy& p) {
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "parametric") {
    p = CandidatePolicy::parametric(j.at("w").get<FeatureVector>());
  } else if (kind == "tabular") {
    std::map<std::size_t, std::vector<double>> probs;
    for (const auto& [key, row] : j.at("probs").items()) probs[std::stoull(key)] = row.get<std::vector<double>>();
    p = CandidatePolicy::tabular(std::move(probs));
  } else {
    throw Error("policy kind must be \"parametric\" or \"tabular\"");
  }
}

void to_json(json& j, const WinRateReport& r) {
  j = json{{"wins_a", r.wins_a}, {"wins_b", r.wins_b}, {"ties", r.ties}, {"win_rate_a", r.win_rate_a}};
}

void from_json(const json& j, WinRateReport& r) {
  r.wins_a = j.at("wins_a").get<std::size_t>();
  r.wins_b = j.at("wins_b").get<std::size_t>();
  r.ties = j.at("ties").get<std::size_t>();
  r.win_rate_a = j.at("win_rate_a").get<double>();
}

void to_json(json& j, const UnlearnStep& s) {
  j = json{{"step", s.step},
           {"unlearn_log_likelihood", s.unlearn_log_likelihood},
           {"retained_log_likelihood", s.retained_log_likelihood ? json(*s.retained_log_likelihood) : json(nullptr)}};
}

namespace oracle {
void to_json(json& j, const OracleResult& r) {
  j = json{{"optimal_subset", r.optimal_subset},
           {"optimal_objective", r.optimal_objective},
           {"feasible_count", r.feasible_count},
           {"exhaustive", r.exhaustive}};
}
}  // namespace oracle

void to_json(json& j, const oracle::OracleResult& r) { oracle::to_json(j, r); }

void save_json(const std::filesystem::path& path, const json& j) { write_text_file(path, j.dump(2) + "\n"); }

json load_json(const std::filesystem::path& path) {
  try {
    return json::parse(read_text_file(path));
  } catch (const json::parse_error& e) {
    throw Error(path.string() + ": " + e.what());
  }
}

RewardParams load_reward(const std::filesystem::path& path) { return load_json(path).get<RewardParams>(); }
void save_reward(const std::filesystem::path& path, const RewardParams& params) { save_json(path, json(params)); }

CandidatePolicy load_policy(const std::filesystem::path& path) { return load_json(path).get<CandidatePolicy>(); }
void save_policy(const std::filesystem::path& path, const CandidatePolicy& policy) { save_json(path, json(policy)); }

std::vector<Explanation> load_explanations(const std::filesystem::path& path) {
  std::istringstream in(read_text_file(path));
  std::vector<Explanation> out;
  for (const auto& [line, record] : read_json_lines(in)) {
    try {
      out.push_back(record.get<Explanation>());
    } catch (const json::exception& e) {
      throw ParseError(line, e.what());
    }
  }
  return out;
}

void save_explanations(const std::filesystem::path& path, const std::vector<Explanation>& explanations) {
  std::ostringstream out;
  for (const auto& e : explanations) out << json(e).dump() << '\n';
  write_text_file(path, out.str());
}

void save_unlearn_trace(const std::filesystem::path& path, const UnlearnTrace& trace) {
  std::ostringstream out;
  for (const auto& s : trace.steps) out << json(s).dump() << '\n';
  write_text_file(path, out.str());
}

}  // namespace xrlhf
