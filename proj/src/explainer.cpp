#include "xrlhf/explainer.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <numeric>
#include <string>

#include "xrlhf/errors.hpp"

namespace xrlhf {

std::vector<ExampleId> rank_by_distance(std::span<const double> phi_hat, const RowMatrix& comparisons) {
  if (phi_hat.size() != comparisons.cols) throw DimensionError("rank_by_distance: dimension mismatch");
  std::vector<double> sq(comparisons.rows);
  kernels::squared_distances(comparisons, phi_hat, sq);
  std::vector<ExampleId> order(comparisons.rows);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](ExampleId a, ExampleId b) { return sq[a] < sq[b]; });
  return order;
}

std::vector<ExampleId> rank_by_distance(std::span<const double> phi_hat, const PreferenceDataset& data) {
  return rank_by_distance(phi_hat, comparison_matrix(data));
}

double subset_objective(const RowMatrix& comparisons, std::span<const ExampleId> ids,
                        std::span<const double> phi_hat) {
  std::vector<double> terms;
  terms.reserve(ids.size());
  for (ExampleId id : ids) {
    const auto r = comparisons.row(id);
    double sq = 0.0;
    for (std::size_t j = 0; j < r.size(); ++j) sq += (r[j] - phi_hat[j]) * (r[j] - phi_hat[j]);
    terms.push_back(std::sqrt(sq));
  }
  return kernels::pairwise_sum(terms);
}

Explainer::Explainer(const PreferenceDataset& data, ExplainerConfig config)
    : config_(std::move(config)), comparisons_(comparison_matrix(data)) {
  check_dataset(data);
  scale_ = median_norm(comparisons_);
  if (!(scale_ > 0.0)) scale_ = 1.0;
  radius_ = config_.solver.feasibility_epsilon * scale_;
  std::vector<double> sums(comparisons_.rows);
  kernels::gram_abs_row_sums(comparisons_, sums);
  lipschitz_ = 2.0 * *std::max_element(sums.begin(), sums.end());
}

Explanation Explainer::explain(std::span<const double> query, std::size_t query_id) const {
  const auto& all = comparisons_;
  if (query.size() != all.cols)
    throw DimensionError("explain: query dimension " + std::to_string(query.size()) +
                         " does not match dataset dimension " + std::to_string(all.cols));
  check_finite(query, "explain query");
  const auto& solver = config_.solver;
  const double gap_tol = detail::gap_tolerance(solver, scale_);

  Explanation ex;
  ex.query_id = query_id;

  // Project the query onto the hull of every comparison.
  detail::QpRequest full;
  full.matrix = &all;
  full.target = query;
  full.lipschitz = lipschitz_;
  full.max_iterations = iteration_budget(solver, all.rows, all.cols);
  full.gap_tolerance = gap_tol;
  auto projected = detail::solve_simplex_qp(full);
  if (!projected.converged)
    throw SolverError("explain: projection did not converge in " + std::to_string(projected.iterations) +
                      " iterations");
  detail::canonicalize(projected.omega, all);
  ex.hull_point = reconstruct(all, projected.omega);
  double sq = 0.0;
  for (std::size_t j = 0; j < all.cols; ++j) sq += (ex.hull_point[j] - query[j]) * (ex.hull_point[j] - query[j]);
  ex.projection_distance = std::sqrt(sq);

  const auto ranking = rank_by_distance(ex.hull_point, all);
  const std::size_t limit = config_.max_subset == 0 ? all.rows : std::min(config_.max_subset, all.rows);

  // Grow S along the ranking; Gram row sums of S are extended one row per pass.
  RowMatrix members(0, all.cols);
  std::vector<double> row_sums;
  std::vector<double> warm;
  std::vector<double> feasible;
  for (std::size_t pass = 0; pass < limit; ++pass) {
    const ExampleId next = ranking[pass];
    const auto incoming = all.row(next);
    double own = 0.0;
    for (std::size_t i = 0; i < members.rows; ++i) {
      const double q = std::abs(kernels::dot(members.row(i), incoming));
      row_sums[i] += q;
      own += q;
    }
    own += kernels::squared_norm(incoming);
    row_sums.push_back(own);
    members.append_row(incoming);
    ex.selected_ids.push_back(next);
    warm.push_back(0.0);

    detail::QpRequest req;
    req.matrix = &members;
    req.target = ex.hull_point;
    req.lipschitz = 2.0 * *std::max_element(row_sums.begin(), row_sums.end());
    req.warm_start = warm;
    req.max_iterations = iteration_budget(solver, members.rows, members.cols);
    req.gap_tolerance = gap_tol;
    req.membership_sq_radius = radius_ * radius_;
    auto out = detail::solve_simplex_qp(req);
    ex.iterations = pass + 1;
    if (out.decision == detail::Decision::Feasible) {
      feasible = std::move(out.omega);
      break;
    }
    // Out of budget with the target on the boundary of conv(S): settle it exactly.
    if (out.decision == detail::Decision::Undecided) {
      auto exact = detail::min_norm_point(members, ex.hull_point);
      if (exact.converged && exact.sq_distance <= radius_ * radius_) {
        feasible = std::move(exact.omega);
        break;
      }
    }
    warm = std::move(out.omega);
  }
  if (feasible.empty())
    throw SolverError("explain: max_subset " + std::to_string(limit) + " reached before the projected feature " +
                "entered the hull");

  const double lip = 2.0 * *std::max_element(row_sums.begin(), row_sums.end());
  auto omega = detail::closest_weights(members, ex.hull_point, lip, radius_, scale_, solver, feasible);

  if (config_.pruning) {
    std::vector<ExampleId> kept_ids;
    std::vector<double> kept_w;
    RowMatrix kept(0, all.cols);
    for (std::size_t i = 0; i < omega.size(); ++i) {
      if (omega[i] < 1e-9) continue;
      kept_ids.push_back(ex.selected_ids[i]);
      kept_w.push_back(omega[i]);
      kept.append_row(members.row(i));
    }
    const double total = std::accumulate(kept_w.begin(), kept_w.end(), 0.0);
    for (double& w : kept_w) w /= total;
    const auto point = reconstruct(kept, kept_w);
    double miss = 0.0;
    for (std::size_t j = 0; j < point.size(); ++j) miss += (point[j] - ex.hull_point[j]) * (point[j] - ex.hull_point[j]);
    if (std::sqrt(miss) <= radius_) {
      ex.selected_ids = std::move(kept_ids);
      omega = std::move(kept_w);
      members = std::move(kept);
    }
  }

  ex.weights.omega = std::move(omega);
  ex.projected = reconstruct(members, ex.weights.omega);
  ex.objective = subset_objective(all, ex.selected_ids, ex.hull_point);
  return ex;
}

Explanation explain(std::span<const double> query, const PreferenceDataset& data,
                    const ExplainerConfig& config) {
  return Explainer(data, config).explain(query);
}

BatchExplanation explain_batch(const ValidationSet& unsat, const PreferenceDataset& data,
                               const ExplainerConfig& config) {
  BatchExplanation batch;
  std::vector<const ValidationItem*> queries;
  for (const auto& item : unsat.items)
    if (item.label == Label::Unsatisfactory) queries.push_back(&item);
  if (queries.empty()) return batch;

  const Explainer explainer(data, config);
  batch.explanations.resize(queries.size());
  std::vector<std::exception_ptr> failures(queries.size());
  const auto count = static_cast<long long>(queries.size());
#pragma omp parallel for schedule(dynamic)
  for (long long k = 0; k < count; ++k) {
    try {
      batch.explanations[k] = explainer.explain(queries[k]->generated(), queries[k]->id);
    } catch (...) {
      failures[k] = std::current_exception();
    }
  }
  for (const auto& f : failures)
    if (f) std::rethrow_exception(f);

  for (const auto& ex : batch.explanations)
    batch.union_ids.insert(batch.union_ids.end(), ex.selected_ids.begin(), ex.selected_ids.end());
  std::sort(batch.union_ids.begin(), batch.union_ids.end());
  batch.union_ids.erase(std::unique(batch.union_ids.begin(), batch.union_ids.end()), batch.union_ids.end());
  return batch;
}

}  // namespace xrlhf
