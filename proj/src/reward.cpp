#include "xrlhf/reward.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "xrlhf/ascent.hpp"
#include "xrlhf/errors.hpp"
#include "xrlhf/rng.hpp"

namespace xrlhf {

void validate(const TrainConfig& config) {
  if (!(config.learning_rate > 0.0)) throw ConfigError("train.learning_rate must be > 0");
  if (config.max_steps == 0) throw ConfigError("train.max_steps must be > 0");
  if (!(config.l2_coeff >= 0.0)) throw ConfigError("train.l2_coeff must be >= 0");
  if (!(config.grad_tolerance > 0.0)) throw ConfigError("train.grad_tolerance must be > 0");
}

double sigmoid(double u) {
  if (u >= 0.0) return 1.0 / (1.0 + std::exp(-u));
  const double e = std::exp(u);
  return e / (1.0 + e);
}

double log_sigmoid(double u) {
  if (u >= 0.0) return -std::log1p(std::exp(-u));
  return u - std::log1p(std::exp(u));
}

namespace {

// log(e^u + 1)
double softplus(double u) {
  if (u > 35.0) return u + std::log1p(std::exp(-u));
  return std::log1p(std::exp(u));
}

void check_dim(std::size_t expected, std::size_t got, const char* what) {
  if (expected != got)
    throw DimensionError(std::string(what) + ": expected dimension " + std::to_string(expected) +
                         ", got " + std::to_string(got));
}

}  // namespace

double reward(const RewardParams& params, std::span<const double> phi) {
  check_dim(params.theta.size(), phi.size(), "reward");
  return kernels::dot(params.theta, phi);
}

ScoredComparison bt_probability(const RewardParams& params, const PreferenceExample& example) {
  check_dim(params.theta.size(), example.phi_w.size(), "bt_probability");
  const auto delta = feature_comparison(example);
  const double u = kernels::dot(params.theta, delta);
  return {example.id, u, sigmoid(u)};
}

BtLikelihood::BtLikelihood(const PreferenceDataset& data) : comparisons_(comparison_matrix(data)) {
  if (data.empty()) throw Error("log-likelihood of an empty dataset");
}

BtLikelihood::BtLikelihood(RowMatrix comparisons) : comparisons_(std::move(comparisons)) {
  if (comparisons_.rows == 0) throw Error("log-likelihood of an empty dataset");
}

std::vector<double> BtLikelihood::margins(std::span<const double> theta) const {
  check_dim(dim(), theta.size(), "margins");
  std::vector<double> u(size());
  kernels::row_dots(comparisons_, theta, u);
  return u;
}

double BtLikelihood::mean_log_likelihood(std::span<const double> theta) const {
  auto terms = margins(theta);
  for (double& t : terms) t = log_sigmoid(t);
  return kernels::pairwise_sum(terms) / static_cast<double>(size());
}

double BtLikelihood::mean_reformulated(std::span<const double> theta) const {
  auto terms = margins(theta);
  for (double& t : terms) t = t - softplus(t);
  return kernels::pairwise_sum(terms) / static_cast<double>(size());
}

FeatureVector BtLikelihood::gradient(std::span<const double> theta) const {
  auto weights = margins(theta);
  for (double& w : weights) w = sigmoid(-w);  // 1 - sigma(u)
  FeatureVector g(dim());
  kernels::weighted_row_sum(comparisons_, weights, g);
  const double inv_n = 1.0 / static_cast<double>(size());
  for (double& x : g) x *= inv_n;
  return g;
}

double BtLikelihood::mean_gram_bound() const {
  std::vector<double> sums(size());
  kernels::gram_abs_row_sums(comparisons_, sums);
  return *std::max_element(sums.begin(), sums.end()) / static_cast<double>(size());
}

double log_likelihood(const RewardParams& params, const PreferenceDataset& data) {
  return BtLikelihood(data).mean_log_likelihood(params.theta);
}

double reformulated_log_likelihood(const RewardParams& params, const PreferenceDataset& data) {
  return BtLikelihood(data).mean_reformulated(params.theta);
}

FeatureVector log_likelihood_gradient(const RewardParams& params, const PreferenceDataset& data,
                                      double l2_coeff) {
  auto g = BtLikelihood(data).gradient(params.theta);
  for (std::size_t j = 0; j < g.size(); ++j) g[j] -= 2.0 * l2_coeff * params.theta[j];
  return g;
}

TrainOutcome train_reward_traced(const PreferenceDataset& data, const TrainConfig& config) {
  validate(config);
  check_dataset(data);
  const BtLikelihood bt(data);

  FeatureVector theta(data.dim, 0.0);
  if (config.init_seed) {
    std::mt19937_64 gen(*config.init_seed);
    std::normal_distribution<double> normal(0.0, 0.01);
    for (double& t : theta) t = normal(gen);
  }

  const auto objective = [&](std::span<const double> th) -> double {
    return bt.mean_log_likelihood(th) - config.l2_coeff * kernels::squared_norm(th);
  };
  const auto gradient = [&](std::span<const double> th) -> std::vector<double> {
    auto g = bt.gradient(th);
    for (std::size_t j = 0; j < g.size(); ++j) g[j] -= 2.0 * config.l2_coeff * th[j];
    return g;
  };

  AscentOptions options;
  options.learning_rate = config.learning_rate;
  options.max_steps = config.max_steps;
  options.grad_tolerance = config.grad_tolerance;
  auto result = gradient_ascent(objective, gradient, std::move(theta), options);
  check_finite(result.x, "train_reward");

  TrainOutcome out;
  out.params.theta = std::move(result.x);
  out.objective_history = std::move(result.history);
  out.steps = result.steps;
  out.converged = result.converged;
  return out;
}

RewardParams train_reward(const PreferenceDataset& data, const TrainConfig& config) {
  return train_reward_traced(data, config).params;
}

}  // namespace xrlhf
