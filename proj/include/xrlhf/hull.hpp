#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "xrlhf/kernels.hpp"
#include "xrlhf/types.hpp"

namespace xrlhf {

/// Convex-combination coefficients: omega >= 0, sum omega = 1.
struct SimplexWeights {
  std::vector<double> omega;
};

/// Project `target` onto the convex hull of the rows of `comparisons`.
struct HullProblem {
  RowMatrix comparisons;
  FeatureVector target;
  /// Length scale for the feasibility tolerance. Defaults to the median
  /// comparison norm of this problem.
  std::optional<double> norm_scale;

  HullProblem() = default;
  HullProblem(RowMatrix c, FeatureVector t) : comparisons(std::move(c)), target(std::move(t)) {}
  HullProblem(std::span<const FeatureVector> c, FeatureVector t);
};

struct SolverConfig {
  /// 0 selects max(50 * n * d, 10000).
  std::size_t max_iterations = 0;
  /// Bound on the certified squared-distance suboptimality, relative to scale^2.
  double stationarity_tolerance = 1e-10;
  /// Feasibility radius relative to the median comparison norm.
  double feasibility_epsilon = 1e-6;
  /// Keep the objective value after every iteration in ProjectionResult::trace.
  bool record_trace = false;
};

struct ProjectionResult {
  FeatureVector projected;
  SimplexWeights weights;
  double distance = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
  /// Frank-Wolfe duality gap at exit; upper-bounds squared-distance suboptimality.
  double gap = 0.0;
  std::vector<double> trace;
};

/// Euclidean projection of `v` onto the probability simplex (sort and threshold).
SimplexWeights simplex_projection(std::span<const double> v);

double median_norm(const RowMatrix& rows);
/// Absolute feasibility radius: feasibility_epsilon times the scale.
double feasibility_radius(const SolverConfig& config, const RowMatrix& comparisons,
                          std::optional<double> norm_scale = std::nullopt);
std::size_t iteration_budget(const SolverConfig& config, std::size_t n, std::size_t d);

/// Minimizes ||sum omega_i c_i - target||^2 over the simplex by accelerated
/// projected gradient with step 1/L, L from Gram row sums. Returns
/// converged = false rather than throwing when the budget runs out.
ProjectionResult project_onto_hull(const HullProblem& problem, const SolverConfig& config);

/// Weights placing `target` in the hull (within the feasibility radius), or
/// nothing when it lies outside. Throws SolverError if the solver cannot decide.
std::optional<SimplexWeights> hull_membership(const HullProblem& problem, const SolverConfig& config);
std::optional<SimplexWeights> hull_membership(std::span<const double> target,
                                              std::span<const FeatureVector> comparisons,
                                              const SolverConfig& config);

/// Among feasible decompositions, one minimizing sum_i omega_i ||c_i - target||^2.
/// Throws if the target is not in the hull.
SimplexWeights closest_decomposition(const HullProblem& problem, const SolverConfig& config);
SimplexWeights closest_decomposition(std::span<const double> target,
                                     std::span<const FeatureVector> comparisons,
                                     const SolverConfig& config);

/// sum_i omega_i * row_i
FeatureVector reconstruct(const RowMatrix& comparisons, std::span<const double> omega);

namespace detail {

enum class Decision { Undecided, Feasible, Infeasible };

/// Low-level simplex QP: minimize ||A w - t||^2 + c.w. Exposed for the
/// explainer, which maintains its own Gram row sums incrementally.
struct QpRequest {
  const RowMatrix* matrix = nullptr;
  std::span<const double> target;
  std::span<const double> linear;  ///< empty means c = 0
  double lipschitz = 0.0;          ///< bound on the gradient Lipschitz constant
  std::span<const double> warm_start;
  std::size_t max_iterations = 10000;
  double gap_tolerance = 0.0;
  /// When set, stop as soon as feasibility (||A w - t||^2 <= value) is decided.
  std::optional<double> membership_sq_radius;
  bool record_trace = false;
};

struct QpOutcome {
  std::vector<double> omega;
  std::vector<double> residual;  ///< A w - t
  double sq_distance = 0.0;
  double gap = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
  Decision decision = Decision::Undecided;
  std::vector<double> trace;
};

QpOutcome solve_simplex_qp(const QpRequest& request);

struct MinNormPoint {
  std::vector<double> omega;  ///< weights over the rows, on the simplex
  double sq_distance = 0.0;
  bool converged = false;
};

/// Wolfe's finite active-set method for the point of conv(rows) nearest to
/// `target`. Used to settle membership when the gradient solver runs out of
/// budget with the target on the hull boundary.
MinNormPoint min_norm_point(const RowMatrix& rows, std::span<const double> target);

/// 2 * max_i sum_j |Q_ij|, from a row-major Gram matrix.
double lipschitz_from_gram(std::span<const double> gram, std::size_t n);
double gap_tolerance(const SolverConfig& config, double scale);

/// Clamps round-off negatives, renormalizes, and moves the weight of duplicate
/// rows onto the lowest index.
void canonicalize(std::vector<double>& omega, const RowMatrix& comparisons);

/// Closest decomposition with an explicit feasibility radius and Lipschitz
/// bound. `fallback` must be a feasible weight vector.
std::vector<double> closest_weights(const RowMatrix& comparisons, std::span<const double> target,
                                    double lipschitz, double radius, double scale,
                                    const SolverConfig& config, std::span<const double> fallback);

}  // namespace detail
}  // namespace xrlhf
