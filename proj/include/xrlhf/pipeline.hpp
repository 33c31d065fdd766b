#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "xrlhf/errors.hpp"
#include "xrlhf/explainer.hpp"
#include "xrlhf/policy.hpp"
#include "xrlhf/reward.hpp"
#include "xrlhf/synthetic.hpp"
#include "xrlhf/unlearner.hpp"

namespace xrlhf {

/// File inputs. Validation items keep their generated_index; missing scores
/// are filled by the judge.
struct DataPaths {
  std::filesystem::path preferences;
  std::filesystem::path validation;
  std::optional<std::filesystem::path> holdout;
  /// Reward used for scoring and win rates; the trained model when absent.
  std::optional<std::filesystem::path> judge;
};

/// Targets checked by `run --check`.
struct CheckThresholds {
  double min_unsatisfactory_win_rate = 0.60;
  double max_satisfactory_loss_rate = 0.60;
};

struct PipelineConfig {
  std::optional<WorldConfig> synthetic;
  std::optional<DataPaths> data;
  TrainConfig train;
  /// Draw the reward initialization from the "init" stream instead of zeros.
  bool seeded_init = false;
  ExplainerConfig explainer;
  UnlearnConfig unlearn;
  FinetuneConfig finetune;  ///< beta_bar comes from the top level
  double beta = 1.0;
  double beta_bar = 3.0;
  double threshold = 0.0;
  std::uint64_t seed = 0;
  std::filesystem::path output_dir = "xrlhf_out";
  CheckThresholds check;
};

/// Parses a config object. Unknown keys are errors (ConfigError).
PipelineConfig parse_config(const nlohmann::json& j);
nlohmann::json config_to_json(const PipelineConfig& config);
PipelineConfig load_config(const std::filesystem::path& path);
/// Applies "a.b.c=value" overrides to a config object before parsing. The
/// value is read as JSON when it parses, else as a string.
void apply_override(nlohmann::json& j, const std::string& assignment);
void validate(const PipelineConfig& config);

struct TrainSummary {
  double log_likelihood = 0.0;
  double objective = 0.0;
  std::size_t steps = 0;
  bool converged = false;
};

struct ExplanationSummary {
  std::size_t query_id = 0;
  std::size_t subset_size = 0;
  std::size_t iterations = 0;
  double projection_distance = 0.0;
  double objective = 0.0;
  /// |theta_0 . projected - sum omega_i theta_0 . delta_phi_i|
  double reward_identity_error = 0.0;
  /// 1e-8 * (1 + ||theta_0|| * max ||delta_phi||)
  double reward_identity_tolerance = 0.0;
};

struct UnlearnSummary {
  std::size_t union_size = 0;
  std::size_t steps = 0;
  double learning_rate = 0.0;
  double initial_log_likelihood = 0.0;
  double final_log_likelihood = 0.0;
  std::optional<double> retained_initial;
  std::optional<double> retained_final;
  std::string stop;
  /// Synthetic only: share of the union that was planted as misleading.
  std::optional<double> planted_precision;
  /// Cosine between theta_u and the reward retrained without the union.
  double retrain_cosine = 0.0;
};

struct FinetuneSummary {
  std::size_t steps = 0;
  bool converged = false;
  double initial_objective = 0.0;
  double final_objective = 0.0;
  double mean_kl_satisfactory = 0.0;
  double beta_bar = 0.0;
};

/// Fine-tuned policy (a) against pi_0 (b), judged per item.
struct WinRates {
  WinRateReport unsatisfactory;
  WinRateReport satisfactory;
  WinRateReport overall;
  std::optional<WinRateReport> holdout;
};

struct PipelineReport {
  std::string mode;  ///< "synthetic" or "files"
  std::uint64_t seed = 0;
  double threshold = 0.0;
  TrainSummary train;
  std::size_t validation_size = 0;  ///< M
  std::size_t unsatisfactory_count = 0;  ///< m
  bool short_circuited = false;
  std::string note;
  std::vector<ExplanationSummary> explanations;
  std::optional<UnlearnSummary> unlearn;
  std::optional<FinetuneSummary> finetune;
  std::optional<WinRates> win_rates;
  /// Wall milliseconds per stage. Kept out of report.json so reports stay
  /// byte-identical; written to timings.json instead.
  std::map<std::string, double> timings_ms;
};

nlohmann::json report_to_json(const PipelineReport& report);
PipelineReport report_from_json(const nlohmann::json& j);
std::string summary_text(const PipelineReport& report);

/// Writes report.json, summary.txt and timings.json into `dir`, creating it.
void emit_report(const PipelineReport& report, const std::filesystem::path& dir);

/// Sets each item's generated response to pi_0's most probable candidate.
void generate_responses(ValidationSet& items, const CandidatePolicy& pi0);
/// Scores generated responses with the judge; only NaN scores unless `overwrite`.
void score_items(ValidationSet& items, const RewardParams& judge, bool overwrite);

/// Thrown when a stage fails; `stage` names it. Partial state is already on
/// disk under the output directory.
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& what)
      : Error("stage " + stage + ": " + what), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

/// train -> rlhf policy -> score and partition -> explain -> unlearn ->
/// fine-tune -> win rates. Every artifact lands in config.output_dir.
PipelineReport run_pipeline(const PipelineConfig& config);

/// Lines of check failures; empty when the report meets the thresholds.
std::vector<std::string> check_report(const PipelineReport& report, const CheckThresholds& thresholds);

struct ScalingRow {
  std::size_t n = 0;
  double median_seconds = 0.0;
  std::size_t queries = 0;
  std::size_t max_iterations = 0;
  double mean_iterations = 0.0;
  double mean_subset = 0.0;
};

struct ScalingTable {
  std::vector<ScalingRow> rows;
  double slope = 0.0;  ///< least-squares slope of log time against log N
  bool iterations_within_n = true;
};

/// Explains `queries` generated responses of a synthetic world at each size.
/// Wall time is the median of `repetitions` runs.
ScalingTable bench_scaling(const std::vector<std::size_t>& sizes, std::size_t dim, std::uint64_t seed,
                           std::size_t queries = 8, std::size_t repetitions = 3);
nlohmann::json scaling_to_json(const ScalingTable& table);

}  // namespace xrlhf
