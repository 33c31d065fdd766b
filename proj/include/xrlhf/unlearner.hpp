#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <string_view>
#include <vector>

#include "xrlhf/reward.hpp"
#include "xrlhf/types.hpp"

namespace xrlhf {

struct UnlearnConfig {
  /// Step size alpha; empty selects stable_unlearn_rate() of the subset.
  std::optional<double> learning_rate;
  std::size_t max_steps = 500;
  /// Stop once the subset's mean log-likelihood is at or below this value.
  double target_likelihood = std::log(0.5);
  /// Stop (keeping the last admissible parameters) if the retained-set
  /// likelihood would fall below this value.
  std::optional<double> guard_set_floor;
};

void validate(const UnlearnConfig& config);

struct UnlearnStep {
  std::size_t step = 0;
  double unlearn_log_likelihood = 0.0;
  std::optional<double> retained_log_likelihood;
};

enum class UnlearnStop { TargetReached, MaxSteps, GuardTripped };
std::string_view stop_name(UnlearnStop stop);

struct UnlearnTrace {
  std::vector<UnlearnStep> steps;  ///< steps[0] is the starting point
  RewardParams final_params;
  UnlearnStop stop = UnlearnStop::MaxSteps;
  double learning_rate = 0.0;
};

/// 4 / lambda, lambda the row-sum bound on the largest eigenvalue of the
/// subset's mean Gram matrix. At or below this rate each negative-gradient
/// step strictly lowers the subset likelihood.
double stable_unlearn_rate(const PreferenceDataset& subset);

/// Negative-gradient unlearning: theta <- theta - alpha * grad L(theta, subset).
UnlearnTrace unlearn_reward(const RewardParams& theta0, const PreferenceDataset& unlearn_subset,
                            const UnlearnConfig& config, const PreferenceDataset* retained = nullptr);

}  // namespace xrlhf
