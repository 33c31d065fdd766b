// Acceptance checks. One PASS/FAIL line per criterion; exit status is the
// number of failures. Thresholds are fixed here and are not configurable.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "xrlhf/dataset_io.hpp"
#include "xrlhf/explainer.hpp"
#include "xrlhf/hull.hpp"
#include "xrlhf/kernels.hpp"
#include "xrlhf/oracle.hpp"
#include "xrlhf/pipeline.hpp"
#include "xrlhf/policy.hpp"
#include "xrlhf/reward.hpp"
#include "xrlhf/rng.hpp"
#include "xrlhf/synthetic.hpp"
#include "xrlhf/unlearner.hpp"

using namespace xrlhf;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

int failures = 0;

void report(int number, const char* name, bool ok, const std::string& detail) {
  std::printf("[%s] criterion %d %s: %s\n", ok ? "PASS" : "FAIL", number, name, detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double median(std::vector<double> v) {
  if (v.empty()) return std::nan("");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

PreferenceDataset random_dataset(std::mt19937_64& gen, std::size_t n, std::size_t d, double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  PreferenceDataset data;
  data.dim = d;
  for (std::size_t i = 0; i < n; ++i) {
    PreferenceExample e{i, FeatureVector(d), FeatureVector(d)};
    for (double& x : e.phi_w) x = normal(gen);
    for (double& x : e.phi_l) x = normal(gen);
    data.examples.push_back(std::move(e));
  }
  return data;
}

FeatureVector random_vector(std::mt19937_64& gen, std::size_t d, double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  FeatureVector v(d);
  for (double& x : v) x = normal(gen);
  return v;
}

double relative_error(std::span<const double> a, std::span<const double> b) {
  double diff = 0.0, norm = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff = std::max(diff, std::abs(a[i] - b[i]));
    norm = std::max(norm, std::abs(b[i]));
  }
  return diff / std::max(norm, 1e-8);
}

// Worst ratio of reward-identity error to its tolerance seen so far.
struct IdentityLedger {
  std::size_t count = 0;
  double worst_ratio = 0.0;

  void add(double error, double tolerance) {
    ++count;
    worst_ratio = std::max(worst_ratio, error / tolerance);
  }

  void add(const Explanation& e, const RowMatrix& comparisons, const FeatureVector& theta) {
    double lhs = kernels::dot(theta, e.projected), rhs = 0.0, max_norm = 0.0;
    for (std::size_t i = 0; i < e.selected_ids.size(); ++i)
      rhs += e.weights.omega[i] * kernels::dot(theta, comparisons.row(e.selected_ids[i]));
    for (std::size_t i = 0; i < comparisons.rows; ++i)
      max_norm = std::max(max_norm, std::sqrt(kernels::squared_norm(comparisons.row(i))));
    add(std::abs(lhs - rhs), 1e-8 * (1.0 + std::sqrt(kernels::squared_norm(theta)) * max_norm));
  }

  void add(const PipelineReport& r) {
    for (const auto& e : r.explanations) add(e.reward_identity_error, e.reward_identity_tolerance);
  }
};

IdentityLedger identity;

void likelihood_identity() {
  const auto start = Clock::now();
  std::mt19937_64 gen(101);
  double worst = 0.0;
  for (int k = 0; k < 100; ++k) {
    const std::size_t d = 1 + gen() % 16, n = 1 + gen() % 200;
    const auto data = random_dataset(gen, n, d);
    const RewardParams theta{random_vector(gen, d, 2.0)};
    worst = std::max(worst, std::abs(log_likelihood(theta, data) - reformulated_log_likelihood(theta, data)));
  }
  const double t = seconds_since(start);
  report(1, "likelihood identity", worst <= 1e-10 && t < 1.0,
         fmt("100 pairs, max |difference| %.3e (limit 1e-10), %.3f s (limit 1 s)", worst, t));
}

ValidationSet random_items(std::mt19937_64& gen, std::size_t count, std::size_t d) {
  ValidationSet v;
  for (std::size_t i = 0; i < count; ++i) {
    ValidationItem it;
    it.id = i;
    const std::size_t k = 2 + gen() % 4;
    for (std::size_t c = 0; c < k; ++c) it.candidate_features.push_back(random_vector(gen, d));
    it.label = gen() % 2 ? Label::Unsatisfactory : Label::Satisfactory;
    v.items.push_back(std::move(it));
  }
  v.items[0].label = Label::Unsatisfactory;
  v.items[1].label = Label::Satisfactory;
  v.recount();
  return v;
}

void gradient_oracles() {
  const auto start = Clock::now();
  std::mt19937_64 gen(202);
  double worst_bt = 0.0, worst_ft = 0.0;
  for (int k = 0; k < 20; ++k) {
    const std::size_t d = 1 + gen() % 10;
    const auto data = random_dataset(gen, 5 + gen() % 60, d);
    const FeatureVector theta = random_vector(gen, d);
    const auto g = log_likelihood_gradient({theta}, data);
    const auto fd = oracle::finite_difference_gradient(
        [&](std::span<const double> x) { return log_likelihood({FeatureVector(x.begin(), x.end())}, data); }, theta);
    worst_bt = std::max(worst_bt, relative_error(g, fd));
  }
  for (int k = 0; k < 20; ++k) {
    const std::size_t d = 1 + gen() % 6;
    const auto items = random_items(gen, 4 + gen() % 12, d);
    const RewardParams theta0{random_vector(gen, d)}, theta_u{random_vector(gen, d)};
    const auto pi0 = rlhf_policy(theta0, sft_policy(items), 1.0, items);
    FinetuneConfig cfg;
    cfg.beta_bar = std::uniform_real_distribution<double>(0.0, 5.0)(gen);
    const FeatureVector w = random_vector(gen, d);
    const auto g = finetune_gradient(w, items, theta_u, pi0, cfg);
    const auto fd = oracle::finite_difference_gradient(
        [&](std::span<const double> x) { return finetune_objective(x, items, theta_u, pi0, cfg); }, w);
    worst_ft = std::max(worst_ft, relative_error(g, fd));
  }
  const double t = seconds_since(start);
  report(2, "gradient oracles", worst_bt <= 1e-5 && worst_ft <= 1e-5 && t < 10.0,
         fmt("20+20 points, worst relative error BT %.2e, fine-tune %.2e (limit 1e-5), %.2f s (limit 10 s)", worst_bt,
             worst_ft, t));
}

void projection_correctness() {
  const auto start = Clock::now();
  std::mt19937_64 gen(303);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::exponential_distribution<double> expo(1.0);
  double worst_sum = 0.0, min_weight = 0.0, worst_beat = -1e300, worst_oracle = 0.0;
  std::size_t small_cases = 0;
  for (int k = 0; k < 200; ++k) {
    // Every other problem is small enough for the exact oracle.
    const bool small = k % 2 == 0;
    const std::size_t d = small ? 1 + gen() % 3 : 1 + gen() % 8;
    const std::size_t n = small ? 1 + gen() % 12 : 1 + gen() % 50;
    RowMatrix m(n, d);
    for (double& x : m.data) x = unit(gen);
    FeatureVector t(d);
    for (double& x : t) x = 1.5 * unit(gen);
    const auto r = project_onto_hull(HullProblem(m, t), SolverConfig{});

    double sum = 0.0;
    for (double w : r.weights.omega) {
      sum += w;
      min_weight = std::min(min_weight, w);
    }
    worst_sum = std::max(worst_sum, std::abs(sum - 1.0));

    // Dirichlet(1) samples, plus a vertex or an edge every few draws.
    FeatureVector p(d), w(n);
    for (int s = 0; s < 1000; ++s) {
      std::fill(w.begin(), w.end(), 0.0);
      if (s % 4 == 0) {
        w[gen() % n] += 0.5;
        w[gen() % n] += 0.5;
      } else {
        double total = 0.0;
        for (double& x : w) total += (x = expo(gen));
        for (double& x : w) x /= total;
      }
      std::fill(p.begin(), p.end(), 0.0);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) p[j] += w[i] * m(i, j);
      double sq = 0.0;
      for (std::size_t j = 0; j < d; ++j) sq += (p[j] - t[j]) * (p[j] - t[j]);
      worst_beat = std::max(worst_beat, r.distance - std::sqrt(sq));
    }

    if (small) {
      ++small_cases;
      double exact = oracle::enumerated_hull_distance(t, m);
      if (d <= 2) worst_oracle = std::max(worst_oracle, std::abs(exact - oracle::planar_hull_distance(t, m)));
      worst_oracle = std::max(worst_oracle, std::abs(r.distance - exact));
    }
  }
  const double t = seconds_since(start);
  const bool ok = worst_sum <= 1e-9 && min_weight >= -1e-12 && worst_beat <= 1e-6 && worst_oracle <= 1e-4 && t < 30.0;
  report(3, "projection correctness", ok,
         fmt("200 problems, max |sum-1| %.1e, min weight %.1e, best sample beats solver by %.2e (limit 1e-6), "
             "%zu small cases off the exact oracle by at most %.2e (limit 1e-4), %.2f s (limit 30 s)",
             worst_sum, min_weight, worst_beat, small_cases, worst_oracle, t));
}

void greedy_vs_oracle() {
  const auto start = Clock::now();
  std::size_t within = 0, feasible = 0, zero_gap = 0, compared = 0;
  double worst_gap = 0.0, total_gap = 0.0;
  for (std::uint64_t k = 0; k < 200; ++k) {
    auto gen = make_stream(500 + k, "acceptance");
    const std::size_t n = 1 + gen() % 12, d = 1 + gen() % 3;
    PreferenceDataset data;
    data.dim = d;
    std::normal_distribution<double> normal(0.0, 1.0);
    for (std::size_t i = 0; i < n; ++i) {
      PreferenceExample e{i, FeatureVector(d), FeatureVector(d, 0.0)};
      for (double& x : e.phi_w) x = normal(gen);
      data.examples.push_back(std::move(e));
    }
    const FeatureVector query = random_vector(gen, d);
    const Explainer ex(data, ExplainerConfig{});
    const auto e = ex.explain(query, k);
    identity.add(e, ex.comparisons(), random_vector(gen, d));
    if (e.iterations <= n) ++within;

    RowMatrix members(e.selected_ids.size(), d);
    for (std::size_t r = 0; r < e.selected_ids.size(); ++r) {
      const auto row = ex.comparisons().row(e.selected_ids[r]);
      std::copy(row.begin(), row.end(), members.row(r).begin());
    }
    if (!e.selected_ids.empty() && oracle::enumerated_hull_distance(e.hull_point, members) <= ex.feasibility_radius())
      ++feasible;

    const auto best = oracle::brute_force_min_subset(e.hull_point, data);
    if (best.optimal_subset.empty()) continue;
    ++compared;
    const double gap = e.objective - best.optimal_objective;
    worst_gap = std::max(worst_gap, gap);
    total_gap += gap;
    if (gap <= 1e-9 * (1.0 + best.optimal_objective)) ++zero_gap;
  }
  const double t = seconds_since(start);
  report(5, "greedy explainer against the exhaustive oracle", within == 200 && feasible == 200 && t < 60.0,
         fmt("200 instances, passes <= N in %zu, oracle-feasible %zu; gap over %zu: zero in %zu, mean %.4f, "
             "worst %.4f; %.2f s (limit 60 s)",
             within, feasible, compared, zero_gap, total_gap / std::max<std::size_t>(compared, 1), worst_gap, t));
}

void unlearning_monotone() {
  const auto start = Clock::now();
  std::size_t monotone = 0, total_steps = 0;
  WorldConfig wc;
  wc.num_train = 200;
  wc.num_validation = 10;
  wc.num_holdout = 0;
  for (std::uint64_t s = 1; s <= 20; ++s) {
    const auto world = generate_synthetic_world(wc, 600 + s);
    const auto theta = train_reward(world.dataset, TrainConfig{});
    auto gen = make_stream(s, "acceptance-subset");
    std::vector<ExampleId> ids;
    for (const auto& ex : world.dataset.examples)
      if (gen() % 8 == 0) ids.push_back(ex.id);
    if (ids.empty()) ids.push_back(0);
    UnlearnConfig c;
    c.max_steps = 50;
    c.target_likelihood = -1e9;
    const auto tr = unlearn_reward(theta, subset_by_ids(world.dataset, ids), c);
    bool ok = tr.steps.size() == 51;
    for (std::size_t i = 1; i < tr.steps.size(); ++i) {
      const double prev = tr.steps[i - 1].unlearn_log_likelihood, cur = tr.steps[i].unlearn_log_likelihood;
      // Saturation: the step no longer moves the value in floating point.
      const bool saturated = cur == prev && std::abs(cur) > 30.0;
      if (!(cur < prev || saturated)) ok = false;
    }
    total_steps += tr.steps.size() - 1;
    if (ok) ++monotone;
  }

  PreferenceDataset one;
  one.dim = 1;
  one.examples.push_back({0, {1.0}, {0.0}});
  UnlearnConfig hand;
  hand.learning_rate = 1.0;
  hand.max_steps = 1;
  hand.target_likelihood = -1e9;
  const double theta1 = unlearn_reward({{0.0}}, one, hand).final_params.theta[0];
  const double t = seconds_since(start);
  report(6, "unlearning monotonicity", monotone == 20 && theta1 == -0.5,
         fmt("%zu/20 subsets strictly decreasing over %zu steps total; hand example theta_1 = %.17g (expected -0.5); "
             "%.2f s",
             monotone, total_steps, theta1, t));
}

fs::path scratch_root() {
  const auto p = fs::temp_directory_path() / "xrlhf_acceptance";
  fs::remove_all(p);
  return p;
}

PipelineReport run_default(std::uint64_t seed, std::optional<double> beta_bar, const fs::path& dir) {
  json j{{"synthetic", json::object()}, {"seed", seed}, {"output_dir", dir.string()}};
  if (beta_bar) j["beta_bar"] = *beta_bar;
  return run_pipeline(parse_config(j));
}

void end_to_end_and_ablation(const fs::path& root) {
  std::vector<double> unsat_default, sat_default, unsat_zero, sat_zero;
  double default_seconds = 0.0;
  bool complete = true;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto t0 = Clock::now();
    const auto r = run_default(seed, std::nullopt, root / fmt("default_%llu", (unsigned long long)seed));
    default_seconds += seconds_since(t0);
    const auto z = run_default(seed, 0.0, root / fmt("beta_bar0_%llu", (unsigned long long)seed));
    identity.add(r);
    identity.add(z);
    if (!r.win_rates || !z.win_rates) {
      complete = false;
      continue;
    }
    unsat_default.push_back(r.win_rates->unsatisfactory.win_rate_a);
    sat_default.push_back(r.win_rates->satisfactory.win_rate_a);
    unsat_zero.push_back(z.win_rates->unsatisfactory.win_rate_a);
    sat_zero.push_back(z.win_rates->satisfactory.win_rate_a);
    std::printf("  seed %2llu: default unsat %.4f sat %.4f | beta_bar=0 unsat %.4f sat %.4f\n",
                (unsigned long long)seed, unsat_default.back(), sat_default.back(), unsat_zero.back(),
                sat_zero.back());
  }
  const double mu = median(unsat_default), ms = median(sat_default);
  const double mu0 = median(unsat_zero), ms0 = median(sat_zero);
  // pi_0 over the tuned policy is the complement of the tuned policy's win rate.
  const double degradation = 1.0 - ms;
  report(7, "end-to-end synthetic improvement", complete && mu >= 0.60 && degradation <= 0.60 && default_seconds < 300.0,
         fmt("10 seeds, median unsat win rate %.4f (limit >= 0.60), median pi_0 over tuned on satisfactory %.4f "
             "(limit <= 0.60), %.1f s (limit 300 s)",
             mu, degradation, default_seconds));
  report(8, "ablation direction", complete && mu0 > mu && ms0 < ms,
         fmt("median unsat win rate %.4f at beta_bar=0 vs %.4f at default; median satisfactory retention %.4f at "
             "beta_bar=0 vs %.4f at default",
             mu0, mu, ms0, ms));
}

void scaling() {
  const auto start = Clock::now();
  const auto table = bench_scaling({100, 200, 400, 800, 1600}, 8, 1);
  const double t = seconds_since(start);
  std::string rows;
  for (const auto& r : table.rows) rows += fmt(" N=%zu max_pass=%zu %.2fs;", r.n, r.max_iterations, r.median_seconds);
  report(9, "scaling", table.iterations_within_n && table.slope <= 5.0 && t < 600.0,
         fmt("passes <= N %s, log-log slope %.3f (limit 5.0), %.1f s (limit 600 s);%s",
             table.iterations_within_n ? "yes" : "no", table.slope, t, rows.c_str()));
}

void determinism(const fs::path& root) {
  // Seed 1 at defaults already ran once for criterion 7.
  const auto first = root / "default_1";
  const auto second = root / "determinism";
  const auto r = run_default(1, std::nullopt, second);
  identity.add(r);
  const auto a = read_text_file(first / "report.json");
  const auto b = read_text_file(second / "report.json");
  report(10, "determinism", !a.empty() && a == b,
         fmt("report.json %zu bytes vs %zu bytes, %s", a.size(), b.size(), a == b ? "identical" : "different"));
}

}  // namespace

int main() {
  const auto root = scratch_root();
  likelihood_identity();
  gradient_oracles();
  projection_correctness();
  greedy_vs_oracle();
  unlearning_monotone();
  end_to_end_and_ablation(root);
  scaling();
  determinism(root);
  report(4, "reward identity", identity.count > 0 && identity.worst_ratio <= 1.0,
         fmt("%zu explanations from criteria 5, 7, 8 and 10, worst error/tolerance %.3e", identity.count,
             identity.worst_ratio));
  fs::remove_all(root);
  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
