#include "xrlhf/hull.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "xrlhf/errors.hpp"

namespace xrlhf {

HullProblem::HullProblem(std::span<const FeatureVector> c, FeatureVector t)
    : comparisons(to_matrix(c, t.size())), target(std::move(t)) {}

SimplexWeights simplex_projection(std::span<const double> v) {
  SimplexWeights out;
  if (v.empty()) return out;
  std::vector<double> sorted(v.begin(), v.end());
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  double cumulative = 0.0;
  double tau = 0.0;
  for (std::size_t j = 0; j < sorted.size(); ++j) {
    cumulative += sorted[j];
    const double candidate = (cumulative - 1.0) / static_cast<double>(j + 1);
    if (sorted[j] - candidate > 0.0) tau = candidate;
  }
  out.omega.resize(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out.omega[i] = std::max(v[i] - tau, 0.0);
  return out;
}

double median_norm(const RowMatrix& rows) {
  if (rows.rows == 0) return 0.0;
  std::vector<double> norms(rows.rows);
  for (std::size_t i = 0; i < rows.rows; ++i) norms[i] = std::sqrt(kernels::squared_norm(rows.row(i)));
  const std::size_t mid = norms.size() / 2;
  std::nth_element(norms.begin(), norms.begin() + mid, norms.end());
  if (norms.size() % 2 == 1) return norms[mid];
  const double upper = norms[mid];
  const double lower = *std::max_element(norms.begin(), norms.begin() + mid);
  return 0.5 * (lower + upper);
}

namespace {

double max_row_norm(const RowMatrix& rows) {
  double best = 0.0;
  for (std::size_t i = 0; i < rows.rows; ++i) best = std::max(best, kernels::squared_norm(rows.row(i)));
  return std::sqrt(best);
}

double resolve_scale(const RowMatrix& comparisons, std::optional<double> norm_scale) {
  double scale = norm_scale.value_or(median_norm(comparisons));
  if (!(scale > 0.0)) scale = max_row_norm(comparisons);
  if (!(scale > 0.0)) scale = 1.0;
  return scale;
}

void check_problem(const HullProblem& problem) {
  if (problem.comparisons.rows == 0) throw Error("hull problem has no comparisons");
  if (problem.comparisons.cols != problem.target.size())
    throw DimensionError("hull problem: target dimension " + std::to_string(problem.target.size()) +
                         " does not match comparisons (" + std::to_string(problem.comparisons.cols) + ")");
  check_finite(problem.target, "hull target");
}

double lipschitz_of(const RowMatrix& m) {
  std::vector<double> sums(m.rows);
  kernels::gram_abs_row_sums(m, sums);
  return 2.0 * *std::max_element(sums.begin(), sums.end());
}

}  // namespace

double feasibility_radius(const SolverConfig& config, const RowMatrix& comparisons,
                          std::optional<double> norm_scale) {
  return config.feasibility_epsilon * resolve_scale(comparisons, norm_scale);
}

std::size_t iteration_budget(const SolverConfig& config, std::size_t n, std::size_t d) {
  if (config.max_iterations > 0) return config.max_iterations;
  return std::max<std::size_t>(50 * n * d, 10000);
}

FeatureVector reconstruct(const RowMatrix& comparisons, std::span<const double> omega) {
  FeatureVector out(comparisons.cols);
  kernels::weighted_row_sum(comparisons, omega, out);
  return out;
}

namespace detail {

double lipschitz_from_gram(std::span<const double> gram, std::size_t n) {
  double best = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < n; ++j) row += std::abs(gram[i * n + j]);
    best = std::max(best, row);
  }
  return 2.0 * best;
}

double gap_tolerance(const SolverConfig& config, double scale) {
  const double eps = config.feasibility_epsilon;
  return std::min(config.stationarity_tolerance, 0.25 * eps * eps) * scale * scale;
}

void canonicalize(std::vector<double>& omega, const RowMatrix& comparisons) {
  for (double& w : omega)
    if (w < 0.0) w = 0.0;
  const double total = std::accumulate(omega.begin(), omega.end(), 0.0);
  if (total > 0.0)
    for (double& w : omega) w /= total;

  std::vector<std::size_t> order(omega.size());
  std::iota(order.begin(), order.end(), 0);
  const auto row_less = [&](std::size_t a, std::size_t b) {
    const auto ra = comparisons.row(a);
    const auto rb = comparisons.row(b);
    if (std::lexicographical_compare(ra.begin(), ra.end(), rb.begin(), rb.end())) return true;
    if (std::lexicographical_compare(rb.begin(), rb.end(), ra.begin(), ra.end())) return false;
    return a < b;
  };
  std::sort(order.begin(), order.end(), row_less);
  std::size_t head = 0;
  for (std::size_t k = 1; k < order.size(); ++k) {
    const auto lead = comparisons.row(order[head]);
    const auto cur = comparisons.row(order[k]);
    if (!std::equal(lead.begin(), lead.end(), cur.begin())) {
      head = k;
      continue;
    }
    omega[order[head]] += omega[order[k]];
    omega[order[k]] = 0.0;
  }
}

QpOutcome solve_simplex_qp(const QpRequest& req) {
  const RowMatrix& a = *req.matrix;
  const std::size_t n = a.rows;
  const std::size_t d = a.cols;
  const bool has_linear = !req.linear.empty();
  const double lipschitz = req.lipschitz > 0.0 ? req.lipschitz : 1.0;
  const double step = 1.0 / lipschitz;
  const double noise_scale = 1e-12 * std::sqrt(lipschitz / 2.0);

  std::vector<double> x;
  if (req.warm_start.size() == n) x = simplex_projection(req.warm_start).omega;
  else x.assign(n, 1.0 / static_cast<double>(n));

  const auto residual = [&](std::span<const double> w, std::span<double> r) {
    kernels::weighted_row_sum(a, w, r);
    for (std::size_t j = 0; j < d; ++j) r[j] -= req.target[j];
  };
  const auto value = [&](std::span<const double> w, std::span<const double> r) {
    double f = kernels::squared_norm(r);
    if (has_linear) f += kernels::dot(req.linear, w);
    return f;
  };
  const auto gradient = [&](std::span<const double> r, std::span<double> g) {
    kernels::row_dots(a, r, g);
    for (std::size_t i = 0; i < n; ++i) g[i] = 2.0 * g[i] + (has_linear ? req.linear[i] : 0.0);
  };
  const auto duality_gap = [&](std::span<const double> w, std::span<const double> g) {
    return kernels::dot(g, w) - *std::min_element(g.begin(), g.end());
  };

  std::vector<double> rx(d), gx(n), y = x, ry(d), gy(n), z(n), rz(d), trial(n);
  residual(x, rx);
  double fx = value(x, rx);
  gradient(rx, gx);
  bool y_is_x = true;
  double momentum = 1.0;

  QpOutcome out;
  std::size_t it = 0;
  for (;; ++it) {
    const double gap = duality_gap(x, gx);
    const double sq = kernels::squared_norm(rx);
    out.gap = gap;
    if (req.membership_sq_radius) {
      if (sq <= *req.membership_sq_radius) {
        out.decision = Decision::Feasible;
        out.converged = true;
        break;
      }
      // The residual direction separates the target from every row by at
      // least `margin`, which lower-bounds the distance to the hull.
      if (!has_linear && sq > 0.0) {
        const double gmin = *std::min_element(gx.begin(), gx.end());
        const double margin = (0.5 * gmin - kernels::dot(req.target, rx)) / std::sqrt(sq);
        if (margin > 0.0 && margin * margin > *req.membership_sq_radius) {
          out.decision = Decision::Infeasible;
          out.converged = true;
          break;
        }
      }
    }
    const double tol = std::max(req.gap_tolerance, noise_scale * std::sqrt(sq));
    if (gap <= tol) {
      out.converged = true;
      break;
    }
    if (it >= req.max_iterations) break;

    if (!y_is_x) {
      residual(y, ry);
      gradient(ry, gy);
    }
    const auto& ybase = y_is_x ? x : y;
    const auto& gbase = y_is_x ? gx : gy;
    for (std::size_t i = 0; i < n; ++i) trial[i] = ybase[i] - step * gbase[i];
    z = simplex_projection(trial).omega;
    residual(z, rz);
    double fz = value(z, rz);

    if (fz <= fx) {
      const double next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * momentum * momentum));
      const double beta = (momentum - 1.0) / next;
      for (std::size_t i = 0; i < n; ++i) y[i] = z[i] + beta * (z[i] - x[i]);
      y_is_x = beta == 0.0;
      momentum = next;
    } else {
      // Momentum overshot: restart with a plain projected-gradient step from x.
      momentum = 1.0;
      for (std::size_t i = 0; i < n; ++i) trial[i] = x[i] - step * gx[i];
      z = simplex_projection(trial).omega;
      residual(z, rz);
      fz = value(z, rz);
      if (fz > fx) {
        // Round-off floor: a 1/L step cannot increase a convex quadratic.
        out.converged = true;
        break;
      }
      y_is_x = true;
    }
    x.swap(z);
    rx.swap(rz);
    fx = fz;
    gradient(rx, gx);
    if (y_is_x) y = x;
    if (req.record_trace) out.trace.push_back(fx);
  }

  out.iterations = it;
  out.sq_distance = kernels::squared_norm(rx);
  if (req.membership_sq_radius && out.decision == Decision::Undecided && out.converged)
    out.decision = out.sq_distance <= *req.membership_sq_radius ? Decision::Feasible : Decision::Infeasible;
  out.omega = std::move(x);
  out.residual = std::move(rx);
  return out;
}

std::vector<double> closest_weights(const RowMatrix& comparisons, std::span<const double> target,
                                    double lipschitz, double radius, double scale,
                                    const SolverConfig& config, std::span<const double> fallback) {
  std::vector<double> sq_dist(comparisons.rows);
  kernels::squared_distances(comparisons, target, sq_dist);
  std::vector<double> linear(comparisons.rows);
  std::vector<double> warm(fallback.begin(), fallback.end());
  std::vector<double> best;

  double mu = 1.0;
  for (int k = 0; k <= 12; ++k, mu *= 0.1) {
    for (std::size_t i = 0; i < linear.size(); ++i) linear[i] = mu * sq_dist[i];
    QpRequest req;
    req.matrix = &comparisons;
    req.target = target;
    req.linear = linear;
    req.lipschitz = lipschitz;
    req.warm_start = warm;
    req.max_iterations = iteration_budget(config, comparisons.rows, comparisons.cols);
    req.gap_tolerance = gap_tolerance(config, scale);
    auto out = solve_simplex_qp(req);
    if (out.sq_distance <= radius * radius) {
      best = std::move(out.omega);
      break;
    }
    warm = std::move(out.omega);
  }
  if (best.empty()) best.assign(fallback.begin(), fallback.end());
  canonicalize(best, comparisons);
  return best;
}

namespace {

// Solves the affine minimum-norm problem over the points in `active`:
// minimize ||sum a_k p_k|| subject to sum a_k = 1. Returns false when the
// points are (numerically) affinely dependent.
bool affine_min_norm(const RowMatrix& p, const std::vector<std::size_t>& active, std::vector<double>& alpha) {
  const std::size_t k = active.size();
  const std::size_t n = k + 1;
  // KKT system [G 1; 1' 0] [a; mu] = [0; 1].
  std::vector<double> m(n * (n + 1), 0.0);
  double diag = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < k; ++j) m[i * (n + 1) + j] = kernels::dot(p.row(active[i]), p.row(active[j]));
    diag = std::max(diag, m[i * (n + 1) + i]);
    m[i * (n + 1) + k] = 1.0;
    m[k * (n + 1) + i] = 1.0;
  }
  m[k * (n + 1) + n] = 1.0;
  const double tiny = 1e-13 * std::max(diag, 1.0);
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < n; ++r)
      if (std::abs(m[r * (n + 1) + col]) > std::abs(m[piv * (n + 1) + col])) piv = r;
    if (std::abs(m[piv * (n + 1) + col]) <= tiny) return false;
    if (piv != col)
      for (std::size_t c = 0; c <= n; ++c) std::swap(m[piv * (n + 1) + c], m[col * (n + 1) + c]);
    for (std::size_t r = 0; r < n; ++r) {
      if (r == col) continue;
      const double f = m[r * (n + 1) + col] / m[col * (n + 1) + col];
      if (f == 0.0) continue;
      for (std::size_t c = col; c <= n; ++c) m[r * (n + 1) + c] -= f * m[col * (n + 1) + c];
    }
  }
  alpha.resize(k);
  for (std::size_t i = 0; i < k; ++i) alpha[i] = m[i * (n + 1) + n] / m[i * (n + 1) + i];
  return true;
}

}  // namespace

MinNormPoint min_norm_point(const RowMatrix& rows, std::span<const double> target) {
  const std::size_t n = rows.rows, d = rows.cols;
  RowMatrix p(n, d);
  double max_sq = 0.0;
  std::size_t start = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) p(i, j) = rows(i, j) - target[j];
    const double sq = kernels::squared_norm(p.row(i));
    if (sq > max_sq) max_sq = sq;
    if (sq < kernels::squared_norm(p.row(start))) start = i;
  }
  MinNormPoint out;
  out.omega.assign(n, 0.0);
  if (n == 0) return out;

  std::vector<std::size_t> active{start};
  std::vector<double> lambda{1.0};
  std::vector<double> x(p.row(start).begin(), p.row(start).end());
  std::vector<double> alpha, dots(n);
  const double tol = 1e-12 * std::max(max_sq, 1e-300);

  for (std::size_t major = 0; major < 10 * (n + d) + 100; ++major) {
    kernels::row_dots(p, x, dots);
    const std::size_t j = static_cast<std::size_t>(std::min_element(dots.begin(), dots.end()) - dots.begin());
    const double xx = kernels::squared_norm(x);
    if (xx - dots[j] <= tol || std::find(active.begin(), active.end(), j) != active.end()) {
      out.converged = true;
      break;
    }
    active.push_back(j);
    lambda.push_back(0.0);
    for (;;) {
      if (!affine_min_norm(p, active, alpha)) {
        // Affinely dependent: drop the newcomer and stop here.
        active.pop_back();
        lambda.pop_back();
        out.converged = true;
        break;
      }
      if (*std::min_element(alpha.begin(), alpha.end()) > 1e-15) {
        lambda = alpha;
        break;
      }
      double theta = 1.0;
      for (std::size_t i = 0; i < alpha.size(); ++i)
        if (alpha[i] <= 1e-15) theta = std::min(theta, lambda[i] / (lambda[i] - alpha[i]));
      std::vector<std::size_t> keep_idx;
      std::vector<double> keep_l;
      for (std::size_t i = 0; i < alpha.size(); ++i) {
        const double l = theta * alpha[i] + (1.0 - theta) * lambda[i];
        if (l > 1e-15) {
          keep_idx.push_back(active[i]);
          keep_l.push_back(l);
        }
      }
      active = std::move(keep_idx);
      lambda = std::move(keep_l);
      if (active.size() == 1) {
        lambda = {1.0};
        break;
      }
    }
    std::fill(x.begin(), x.end(), 0.0);
    for (std::size_t i = 0; i < active.size(); ++i)
      for (std::size_t c = 0; c < d; ++c) x[c] += lambda[i] * p(active[i], c);
    if (out.converged) break;
  }
  const double total = std::accumulate(lambda.begin(), lambda.end(), 0.0);
  for (std::size_t i = 0; i < active.size(); ++i) out.omega[active[i]] = lambda[i] / total;
  std::fill(x.begin(), x.end(), 0.0);
  for (std::size_t i = 0; i < n; ++i)
    if (out.omega[i] > 0.0)
      for (std::size_t c = 0; c < d; ++c) x[c] += out.omega[i] * p(i, c);
  out.sq_distance = kernels::squared_norm(x);
  return out;
}

}  // namespace detail

ProjectionResult project_onto_hull(const HullProblem& problem, const SolverConfig& config) {
  check_problem(problem);
  const auto& a = problem.comparisons;
  const double scale = resolve_scale(a, problem.norm_scale);

  detail::QpRequest req;
  req.matrix = &a;
  req.target = problem.target;
  req.lipschitz = lipschitz_of(a);
  req.max_iterations = iteration_budget(config, a.rows, a.cols);
  req.gap_tolerance = detail::gap_tolerance(config, scale);
  req.record_trace = config.record_trace;
  auto out = detail::solve_simplex_qp(req);

  ProjectionResult result;
  result.iterations = out.iterations;
  result.converged = out.converged;
  result.gap = out.gap;
  result.trace = std::move(out.trace);
  detail::canonicalize(out.omega, a);
  result.projected = reconstruct(a, out.omega);
  result.weights.omega = std::move(out.omega);
  double sq = 0.0;
  for (std::size_t j = 0; j < a.cols; ++j) {
    const double t = result.projected[j] - problem.target[j];
    sq += t * t;
  }
  result.distance = std::sqrt(sq);
  return result;
}

std::optional<SimplexWeights> hull_membership(const HullProblem& problem, const SolverConfig& config) {
  check_problem(problem);
  const auto& a = problem.comparisons;
  const double scale = resolve_scale(a, problem.norm_scale);
  const double radius = config.feasibility_epsilon * scale;

  detail::QpRequest req;
  req.matrix = &a;
  req.target = problem.target;
  req.lipschitz = lipschitz_of(a);
  req.max_iterations = iteration_budget(config, a.rows, a.cols);
  req.gap_tolerance = detail::gap_tolerance(config, scale);
  req.membership_sq_radius = radius * radius;
  auto out = detail::solve_simplex_qp(req);
  switch (out.decision) {
    case detail::Decision::Feasible:
      detail::canonicalize(out.omega, a);
      return SimplexWeights{std::move(out.omega)};
    case detail::Decision::Infeasible:
      return std::nullopt;
    case detail::Decision::Undecided:
      break;
  }
  if (const auto exact = detail::min_norm_point(a, problem.target); exact.converged) {
    if (exact.sq_distance > radius * radius) return std::nullopt;
    auto omega = exact.omega;
    detail::canonicalize(omega, a);
    return SimplexWeights{std::move(omega)};
  }
  throw SolverError("hull_membership: undecided after " + std::to_string(out.iterations) +
                    " iterations (distance^2 " + std::to_string(out.sq_distance) + ", gap " +
                    std::to_string(out.gap) + ")");
}

std::optional<SimplexWeights> hull_membership(std::span<const double> target,
                                              std::span<const FeatureVector> comparisons,
                                              const SolverConfig& config) {
  return hull_membership(HullProblem(comparisons, FeatureVector(target.begin(), target.end())), config);
}

SimplexWeights closest_decomposition(const HullProblem& problem, const SolverConfig& config) {
  auto feasible = hull_membership(problem, config);
  if (!feasible) throw Error("closest_decomposition: target is not in the convex hull");
  const auto& a = problem.comparisons;
  const double scale = resolve_scale(a, problem.norm_scale);
  return SimplexWeights{detail::closest_weights(a, problem.target, lipschitz_of(a),
                                                config.feasibility_epsilon * scale, scale, config,
                                                feasible->omega)};
}

SimplexWeights closest_decomposition(std::span<const double> target,
                                     std::span<const FeatureVector> comparisons,
                                     const SolverConfig& config) {
  return closest_decomposition(HullProblem(comparisons, FeatureVector(target.begin(), target.end())),
                               config);
}

}  // namespace xrlhf
