#pragma once

// Independent checks for small instances: exhaustive subset search for the
// explanation problem, exact hull projection by vertex-subset enumeration,
// planar hull distance, and central finite differences.

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "xrlhf/hull.hpp"
#include "xrlhf/reward.hpp"
#include "xrlhf/types.hpp"

namespace xrlhf::oracle {

inline constexpr std::size_t kMaxBruteForceSize = 20;

struct OracleResult {
  std::vector<ExampleId> optimal_subset;  ///< ascending ids
  double optimal_objective = 0.0;
  std::size_t feasible_count = 0;
  std::size_t infeasible_count = 0;
  bool exhaustive = false;
};

/// Minimum of sum_{i in S} ||delta_phi_i - phi_hat|| over every nonempty S
/// whose hull contains phi_hat (hull_membership with relative radius `eps`,
/// scaled by the dataset's median comparison norm). Ties go to the
/// lexicographically smallest id list. When no subset is feasible the subset
/// is empty and the objective infinite.
OracleResult brute_force_min_subset(std::span<const double> phi_hat, const PreferenceDataset& data,
                                    double eps = 1e-6);

/// Central differences (f(x + h e_i) - f(x - h e_i)) / 2h.
std::vector<double> finite_difference_gradient(const std::function<double(std::span<const double>)>& f,
                                               std::span<const double> at, double h = 1e-6);

/// Retrains the reward model from scratch without the listed examples.
RewardParams retrain_oracle(const PreferenceDataset& data, std::span<const ExampleId> remove_ids,
                            const TrainConfig& config);

/// Exact distance from `target` to the hull of `points`: the minimum over all
/// affinely independent subsets of at most d + 1 points of the affine
/// projection whose barycentric coordinates are nonnegative. Exponential;
/// intended for d <= 3 and a dozen points.
double enumerated_hull_distance(std::span<const double> target, const RowMatrix& points);

/// Exact distance to the hull of points in one or two dimensions, from the
/// interval or the monotone-chain convex polygon.
double planar_hull_distance(std::span<const double> target, const RowMatrix& points);

}  // namespace xrlhf::oracle
