#include "xrlhf/unlearner.hpp"

#include <string>

#include "xrlhf/errors.hpp"

namespace xrlhf {

void validate(const UnlearnConfig& config) {
  if (config.learning_rate && !(*config.learning_rate >= 0.0 && std::isfinite(*config.learning_rate)))
    throw ConfigError("unlearn.learning_rate must be finite and >= 0");
  if (config.max_steps == 0) throw ConfigError("unlearn.max_steps must be >= 1");
}

std::string_view stop_name(UnlearnStop stop) {
  switch (stop) {
    case UnlearnStop::TargetReached: return "target_reached";
    case UnlearnStop::MaxSteps: return "max_steps";
    case UnlearnStop::GuardTripped: return "guard_tripped";
  }
  return "unknown";
}

double stable_unlearn_rate(const PreferenceDataset& subset) {
  const double bound = BtLikelihood(subset).mean_gram_bound();
  return bound > 0.0 ? 4.0 / bound : 1.0;
}

UnlearnTrace unlearn_reward(const RewardParams& theta0, const PreferenceDataset& unlearn_subset,
                            const UnlearnConfig& config, const PreferenceDataset* retained) {
  validate(config);
  if (unlearn_subset.empty()) throw Error("unlearn_reward: empty unlearn subset");
  check_dataset(unlearn_subset);
  if (theta0.theta.size() != unlearn_subset.dim)
    throw DimensionError("unlearn_reward: theta dimension does not match the subset");

  const BtLikelihood forget(unlearn_subset);
  std::optional<BtLikelihood> keep;
  if (retained && !retained->empty()) keep.emplace(*retained);

  UnlearnTrace trace;
  trace.learning_rate = config.learning_rate.value_or(stable_unlearn_rate(unlearn_subset));
  const double alpha = trace.learning_rate;

  auto theta = theta0.theta;
  const auto record = [&](std::size_t step, std::span<const double> th) {
    UnlearnStep s;
    s.step = step;
    s.unlearn_log_likelihood = forget.mean_log_likelihood(th);
    if (keep) s.retained_log_likelihood = keep->mean_log_likelihood(th);
    trace.steps.push_back(s);
    return s;
  };

  auto current = record(0, theta);
  trace.stop = UnlearnStop::MaxSteps;
  if (current.unlearn_log_likelihood <= config.target_likelihood) {
    trace.stop = UnlearnStop::TargetReached;
  } else {
    for (std::size_t step = 1; step <= config.max_steps; ++step) {
      const auto g = forget.gradient(theta);
      auto next = theta;
      for (std::size_t j = 0; j < next.size(); ++j) next[j] -= alpha * g[j];
      for (double x : next)
        if (!std::isfinite(x)) throw SolverError("unlearn_reward: non-finite parameters; lower alpha");
      UnlearnStep s;
      s.step = step;
      s.unlearn_log_likelihood = forget.mean_log_likelihood(next);
      if (keep) s.retained_log_likelihood = keep->mean_log_likelihood(next);
      if (config.guard_set_floor && s.retained_log_likelihood &&
          *s.retained_log_likelihood < *config.guard_set_floor) {
        trace.stop = UnlearnStop::GuardTripped;
        break;
      }
      theta = std::move(next);
      trace.steps.push_back(s);
      if (s.unlearn_log_likelihood <= config.target_likelihood) {
        trace.stop = UnlearnStop::TargetReached;
        break;
      }
    }
  }
  trace.final_params.theta = std::move(theta);
  return trace;
}

}  // namespace xrlhf
