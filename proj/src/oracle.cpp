#include "xrlhf/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <string>

#include <omp.h>

#include "xrlhf/errors.hpp"

namespace xrlhf::oracle {

namespace {

struct Best {
  double objective = std::numeric_limits<double>::infinity();
  std::vector<ExampleId> ids;
  std::size_t feasible = 0;
  std::size_t infeasible = 0;

  void offer(double obj, std::vector<ExampleId> cand) {
    if (obj < objective || (obj == objective && cand < ids)) {
      objective = obj;
      ids = std::move(cand);
    }
  }
};

}  // namespace

OracleResult brute_force_min_subset(std::span<const double> phi_hat, const PreferenceDataset& data, double eps) {
  check_dataset(data);
  const std::size_t n = data.size();
  if (n > kMaxBruteForceSize)
    throw Error("brute_force_min_subset: N = " + std::to_string(n) + " exceeds the cap of " +
                std::to_string(kMaxBruteForceSize));
  if (phi_hat.size() != data.dim) throw DimensionError("brute_force_min_subset: dimension mismatch");

  const RowMatrix all = comparison_matrix(data);
  const double scale = median_norm(all);
  std::vector<double> dist(n);
  for (std::size_t i = 0; i < n; ++i) {
    double sq = 0.0;
    for (std::size_t j = 0; j < data.dim; ++j) sq += (all(i, j) - phi_hat[j]) * (all(i, j) - phi_hat[j]);
    dist[i] = std::sqrt(sq);
  }
  SolverConfig solver;
  solver.feasibility_epsilon = eps;

  const auto masks = static_cast<long long>((std::size_t{1} << n) - 1);
  int threads = 1;
#pragma omp parallel
  {
#pragma omp single
    threads = omp_get_num_threads();
  }
  std::vector<Best> per_thread(static_cast<std::size_t>(threads));
  std::vector<std::exception_ptr> failures(static_cast<std::size_t>(threads));

#pragma omp parallel
  {
    const auto tid = static_cast<std::size_t>(omp_get_thread_num());
    Best& best = per_thread[tid];
#pragma omp for schedule(dynamic, 64)
    for (long long mask = 1; mask <= masks; ++mask) {
      try {
        std::vector<ExampleId> ids;
        for (std::size_t i = 0; i < n; ++i)
          if (mask & (1LL << i)) ids.push_back(i);
        HullProblem problem;
        problem.comparisons = RowMatrix(0, data.dim);
        for (ExampleId id : ids) problem.comparisons.append_row(all.row(id));
        problem.target.assign(phi_hat.begin(), phi_hat.end());
        problem.norm_scale = scale;
        if (!hull_membership(problem, solver)) {
          ++best.infeasible;
          continue;
        }
        ++best.feasible;
        std::vector<double> terms;
        for (ExampleId id : ids) terms.push_back(dist[id]);
        best.offer(kernels::pairwise_sum(terms), std::move(ids));
      } catch (...) {
        failures[tid] = std::current_exception();
      }
    }
  }
  for (const auto& f : failures)
    if (f) std::rethrow_exception(f);

  Best merged;
  for (auto& b : per_thread) {
    merged.feasible += b.feasible;
    merged.infeasible += b.infeasible;
    if (!b.ids.empty()) merged.offer(b.objective, std::move(b.ids));
  }
  OracleResult out;
  out.optimal_subset = std::move(merged.ids);
  out.optimal_objective = merged.objective;
  out.feasible_count = merged.feasible;
  out.infeasible_count = merged.infeasible;
  out.exhaustive = merged.feasible + merged.infeasible == static_cast<std::size_t>(masks);
  return out;
}

std::vector<double> finite_difference_gradient(const std::function<double(std::span<const double>)>& f,
                                               std::span<const double> at, double h) {
  if (!(h > 0.0)) throw Error("finite_difference_gradient: step must be > 0");
  std::vector<double> x(at.begin(), at.end());
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = x[i];
    x[i] = orig + h;
    const double up = f(x);
    x[i] = orig - h;
    const double down = f(x);
    x[i] = orig;
    if (!std::isfinite(up) || !std::isfinite(down)) throw Error("finite_difference_gradient: non-finite evaluation");
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

RewardParams retrain_oracle(const PreferenceDataset& data, std::span<const ExampleId> remove,
                            const TrainConfig& config) {
  auto rest = remove_ids(data, remove);
  if (rest.empty()) throw Error("retrain_oracle: removing every example leaves nothing to train on");
  return train_reward(rest, config);
}

namespace {

// Solves the k x k system g x = b in place by Gaussian elimination with partial
// pivoting; false when a pivot falls below `tiny`.
bool solve_small(std::vector<double>& g, std::vector<double>& b, std::size_t k, double tiny) {
  for (std::size_t c = 0; c < k; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < k; ++r)
      if (std::abs(g[r * k + c]) > std::abs(g[piv * k + c])) piv = r;
    if (std::abs(g[piv * k + c]) <= tiny) return false;
    if (piv != c) {
      for (std::size_t j = 0; j < k; ++j) std::swap(g[c * k + j], g[piv * k + j]);
      std::swap(b[c], b[piv]);
    }
    for (std::size_t r = c + 1; r < k; ++r) {
      const double f = g[r * k + c] / g[c * k + c];
      for (std::size_t j = c; j < k; ++j) g[r * k + j] -= f * g[c * k + j];
      b[r] -= f * b[c];
    }
  }
  for (std::size_t c = k; c-- > 0;) {
    double s = b[c];
    for (std::size_t j = c + 1; j < k; ++j) s -= g[c * k + j] * b[j];
    b[c] = s / g[c * k + c];
  }
  return true;
}

void for_each_subset(std::size_t n, std::size_t k, std::vector<std::size_t>& pick, std::size_t from,
                     const std::function<void(const std::vector<std::size_t>&)>& visit) {
  if (pick.size() == k) {
    visit(pick);
    return;
  }
  for (std::size_t i = from; i < n; ++i) {
    pick.push_back(i);
    for_each_subset(n, k, pick, i + 1, visit);
    pick.pop_back();
  }
}

}  // namespace

double enumerated_hull_distance(std::span<const double> target, const RowMatrix& points) {
  const std::size_t n = points.rows;
  const std::size_t d = points.cols;
  if (n == 0 || target.size() != d) throw Error("enumerated_hull_distance: bad input");
  double scale = 0.0;
  for (std::size_t i = 0; i < n; ++i) scale = std::max(scale, kernels::squared_norm(points.row(i)));
  const double tiny = 1e-12 * std::max(scale, 1e-300);

  double best = std::numeric_limits<double>::infinity();
  std::vector<std::size_t> pick;
  for (std::size_t k = 1; k <= std::min(n, d + 1); ++k) {
    for_each_subset(n, k, pick, 0, [&](const std::vector<std::size_t>& s) {
      const auto p0 = points.row(s[0]);
      const std::size_t m = k - 1;
      std::vector<double> mu(m);
      if (m > 0) {
        std::vector<double> g(m * m);
        for (std::size_t a = 0; a < m; ++a) {
          const auto pa = points.row(s[a + 1]);
          for (std::size_t b = 0; b < m; ++b) {
            const auto pb = points.row(s[b + 1]);
            double q = 0.0;
            for (std::size_t j = 0; j < d; ++j) q += (pa[j] - p0[j]) * (pb[j] - p0[j]);
            g[a * m + b] = q;
          }
          double rhs = 0.0;
          for (std::size_t j = 0; j < d; ++j) rhs += (pa[j] - p0[j]) * (target[j] - p0[j]);
          mu[a] = rhs;
        }
        if (!solve_small(g, mu, m, tiny)) return;
      }
      double lambda0 = 1.0;
      for (double x : mu) {
        if (x < -1e-12) return;
        lambda0 -= x;
      }
      if (lambda0 < -1e-12) return;
      double sq = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        double v = p0[j];
        for (std::size_t a = 0; a < m; ++a) v += mu[a] * (points(s[a + 1], j) - p0[j]);
        sq += (v - target[j]) * (v - target[j]);
      }
      best = std::min(best, std::sqrt(sq));
    });
  }
  return best;
}

namespace {

double cross(std::span<const double> o, std::span<const double> a, std::span<const double> b) {
  return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
}

double segment_distance(std::span<const double> p, std::span<const double> a, std::span<const double> b) {
  const double dx = b[0] - a[0], dy = b[1] - a[1];
  const double len2 = dx * dx + dy * dy;
  double t = len2 > 0.0 ? ((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double ex = a[0] + t * dx - p[0], ey = a[1] + t * dy - p[1];
  return std::sqrt(ex * ex + ey * ey);
}

}  // namespace

double planar_hull_distance(std::span<const double> target, const RowMatrix& points) {
  if (points.rows == 0 || target.size() != points.cols) throw Error("planar_hull_distance: bad input");
  if (points.cols == 1) {
    double lo = points(0, 0), hi = points(0, 0);
    for (std::size_t i = 1; i < points.rows; ++i) {
      lo = std::min(lo, points(i, 0));
      hi = std::max(hi, points(i, 0));
    }
    if (target[0] < lo) return lo - target[0];
    if (target[0] > hi) return target[0] - hi;
    return 0.0;
  }
  if (points.cols != 2) throw Error("planar_hull_distance: only one or two dimensions");

  std::vector<std::size_t> idx(points.rows);
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return points(a, 0) < points(b, 0) || (points(a, 0) == points(b, 0) && points(a, 1) < points(b, 1));
  });
  std::vector<std::size_t> hull;
  for (int pass = 0; pass < 2; ++pass) {
    const std::size_t base = hull.size();
    for (std::size_t k = 0; k < idx.size(); ++k) {
      const std::size_t i = pass == 0 ? idx[k] : idx[idx.size() - 1 - k];
      while (hull.size() >= base + 2 &&
             cross(points.row(hull[hull.size() - 2]), points.row(hull.back()), points.row(i)) <= 0.0)
        hull.pop_back();
      hull.push_back(i);
    }
    hull.pop_back();
  }
  if (hull.empty()) hull.push_back(idx.front());

  double best = std::numeric_limits<double>::infinity();
  bool inside = hull.size() >= 3;
  for (std::size_t k = 0; k < hull.size(); ++k) {
    const auto a = points.row(hull[k]);
    const auto b = points.row(hull[(k + 1) % hull.size()]);
    best = std::min(best, segment_distance(target, a, b));
    if (hull.size() >= 3 && cross(a, b, target) < 0.0) inside = false;
  }
  return inside ? 0.0 : best;
}

}  // namespace xrlhf::oracle
