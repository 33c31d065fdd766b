#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "xrlhf/kernels.hpp"
#include "xrlhf/types.hpp"

namespace xrlhf {

/// Linear reward r(x, y) = theta . phi(x, y).
struct RewardParams {
  FeatureVector theta;
};

struct ScoredComparison {
  ExampleId example_id = 0;
  double margin = 0.0;       ///< u = theta . delta_phi
  double probability = 0.5;  ///< sigma(u)
};

struct TrainConfig {
  double learning_rate = 1.0;
  std::size_t max_steps = 2000;
  double l2_coeff = 1e-4;
  double grad_tolerance = 1e-6;
  /// Zero initialization when empty; otherwise small Gaussian values from this seed.
  std::optional<std::uint64_t> init_seed;
};

void validate(const TrainConfig& config);

double sigmoid(double u);
/// log sigma(u), stable for any finite u.
double log_sigmoid(double u);

double reward(const RewardParams& params, std::span<const double> phi);
ScoredComparison bt_probability(const RewardParams& params, const PreferenceExample& example);

/// Mean log-likelihood (1/N) sum log sigma(theta . delta_phi_i).
double log_likelihood(const RewardParams& params, const PreferenceDataset& data);
/// Same quantity written as (1/N) sum [u_i - log(e^{u_i} + 1)].
double reformulated_log_likelihood(const RewardParams& params, const PreferenceDataset& data);
/// Gradient of the mean log-likelihood, minus 2 * l2_coeff * theta.
FeatureVector log_likelihood_gradient(const RewardParams& params, const PreferenceDataset& data,
                                      double l2_coeff = 0.0);

/// Bradley-Terry likelihood over a fixed set of comparisons. Caches the
/// comparison matrix so repeated evaluations skip the subtraction.
class BtLikelihood {
 public:
  explicit BtLikelihood(const PreferenceDataset& data);
  explicit BtLikelihood(RowMatrix comparisons);

  std::size_t size() const { return comparisons_.rows; }
  std::size_t dim() const { return comparisons_.cols; }
  const RowMatrix& comparisons() const { return comparisons_; }

  std::vector<double> margins(std::span<const double> theta) const;
  double mean_log_likelihood(std::span<const double> theta) const;
  double mean_reformulated(std::span<const double> theta) const;
  FeatureVector gradient(std::span<const double> theta) const;
  /// Row-sum bound on the largest eigenvalue of the mean Gram matrix.
  double mean_gram_bound() const;

 private:
  RowMatrix comparisons_;
};

struct TrainOutcome {
  RewardParams params;
  std::vector<double> objective_history;  ///< regularized objective after each accepted step
  std::size_t steps = 0;
  bool converged = false;  ///< gradient norm reached grad_tolerance
};

/// Full-batch gradient ascent on the L2-regularized mean log-likelihood with
/// step halving whenever a step would lower the objective.
TrainOutcome train_reward_traced(const PreferenceDataset& data, const TrainConfig& config);
RewardParams train_reward(const PreferenceDataset& data, const TrainConfig& config);

}  // namespace xrlhf
