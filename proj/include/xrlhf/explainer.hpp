#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "xrlhf/hull.hpp"
#include "xrlhf/types.hpp"

namespace xrlhf {

/// Training examples whose feature comparisons convexly decompose the
/// projected feature of one response.
struct Explanation {
  std::size_t query_id = 0;
  std::vector<ExampleId> selected_ids;  ///< insertion order
  SimplexWeights weights;               ///< aligned with selected_ids
  /// sum_i omega_i delta_phi_i over the selected examples.
  FeatureVector projected;
  /// Projection of the query onto the hull of the whole dataset.
  FeatureVector hull_point;
  double projection_distance = 0.0;  ///< ||hull_point - query||
  double objective = 0.0;            ///< sum_i ||delta_phi_i - hull_point||
  std::size_t iterations = 0;        ///< greedy passes
};

struct ExplainerConfig {
  SolverConfig solver;
  /// 0 means the dataset size.
  std::size_t max_subset = 0;
  /// Drop members whose final weight is below 1e-9.
  bool pruning = true;
};

/// Example ids by ascending ||delta_phi_i - phi_hat||, ties by id.
std::vector<ExampleId> rank_by_distance(std::span<const double> phi_hat, const PreferenceDataset& data);
std::vector<ExampleId> rank_by_distance(std::span<const double> phi_hat, const RowMatrix& comparisons);

/// Greedy explainer over a fixed dataset. The comparison matrix, its Lipschitz
/// bound and the norm scale are computed once and shared by all queries.
class Explainer {
 public:
  Explainer(const PreferenceDataset& data, ExplainerConfig config);

  Explanation explain(std::span<const double> query, std::size_t query_id = 0) const;

  const RowMatrix& comparisons() const { return comparisons_; }
  double feasibility_radius() const { return radius_; }
  double norm_scale() const { return scale_; }
  const ExplainerConfig& config() const { return config_; }

 private:
  ExplainerConfig config_;
  RowMatrix comparisons_;
  double scale_ = 1.0;
  double radius_ = 0.0;
  double lipschitz_ = 0.0;
};

Explanation explain(std::span<const double> query, const PreferenceDataset& data,
                    const ExplainerConfig& config);

struct BatchExplanation {
  std::vector<Explanation> explanations;  ///< one per unsatisfactory item, item order
  std::vector<ExampleId> union_ids;       ///< sorted, deduplicated
};

/// Explains the generated response of every Unsatisfactory item.
BatchExplanation explain_batch(const ValidationSet& unsat, const PreferenceDataset& data,
                               const ExplainerConfig& config);

/// Objective sum_i ||delta_phi_i - phi_hat|| of a subset.
double subset_objective(const RowMatrix& comparisons, std::span<const ExampleId> ids,
                        std::span<const double> phi_hat);

}  // namespace xrlhf
