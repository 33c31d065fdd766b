#include <doctest.h>

#include <cmath>
#include <random>

#include "xrlhf/errors.hpp"
#include "xrlhf/oracle.hpp"
#include "xrlhf/unlearner.hpp"

using namespace xrlhf;

namespace {

PreferenceDataset random_dataset(std::size_t n, std::size_t dim, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  PreferenceDataset d;
  d.dim = dim;
  for (std::size_t i = 0; i < n; ++i) {
    PreferenceExample ex{i, FeatureVector(dim), FeatureVector(dim, 0.0)};
    for (double& x : ex.phi_w) x = normal(gen) + 0.5;
    d.examples.push_back(std::move(ex));
  }
  return d;
}

}  // namespace

TEST_CASE("one step by hand") {
  PreferenceDataset d;
  d.dim = 1;
  d.examples.push_back({0, {1.0}, {0.0}});
  UnlearnConfig c;
  c.learning_rate = 1.0;
  c.max_steps = 1;
  c.target_likelihood = -1e9;
  const auto t = unlearn_reward({{0.0}}, d, c);
  CHECK(t.final_params.theta[0] == -0.5);
  REQUIRE(t.steps.size() == 2);
  CHECK(t.steps[0].unlearn_log_likelihood == doctest::Approx(-std::log(2.0)));
  CHECK(t.stop == UnlearnStop::MaxSteps);
}

TEST_CASE("zero step size leaves the reward unchanged") {
  const auto d = random_dataset(10, 3, 1);
  UnlearnConfig c;
  c.learning_rate = 0.0;
  c.max_steps = 5;
  const RewardParams theta{{0.3, -0.2, 1.0}};
  CHECK(unlearn_reward(theta, d, c).final_params.theta == theta.theta);
}

TEST_CASE("stable rate strictly lowers the subset likelihood") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto d = random_dataset(20, 4, seed);
    const auto theta = train_reward(d, TrainConfig{});
    UnlearnConfig c;
    c.max_steps = 50;
    c.target_likelihood = -1e9;
    const auto t = unlearn_reward(theta, d, c);
    CHECK(t.learning_rate == doctest::Approx(stable_unlearn_rate(d)));
    for (std::size_t i = 1; i < t.steps.size(); ++i)
      CHECK(t.steps[i].unlearn_log_likelihood < t.steps[i - 1].unlearn_log_likelihood);
  }
}

TEST_CASE("stopping at the target likelihood") {
  const auto d = random_dataset(15, 3, 9);
  const auto theta = train_reward(d, TrainConfig{});
  const auto t = unlearn_reward(theta, d, UnlearnConfig{});
  CHECK(t.stop == UnlearnStop::TargetReached);
  CHECK(t.steps.back().unlearn_log_likelihood <= std::log(0.5));
  // Geometric-mean BT probability of the subset is at most one half.
  double mean_log = 0.0;
  for (const auto& ex : d.examples) mean_log += std::log(bt_probability(t.final_params, ex).probability);
  CHECK(std::exp(mean_log / d.size()) <= 0.5 + 1e-12);
}

TEST_CASE("guard floor keeps the last admissible parameters") {
  const auto all = random_dataset(40, 3, 2);
  std::vector<ExampleId> forget{0, 1, 2, 3, 4};
  const auto subset = subset_by_ids(all, forget);
  const auto retained = remove_ids(all, forget);
  const auto theta = train_reward(all, TrainConfig{});
  UnlearnConfig c;
  c.target_likelihood = -1e9;
  c.max_steps = 500;
  const double start = log_likelihood(theta, retained);
  c.guard_set_floor = start - 0.05;
  const auto t = unlearn_reward(theta, subset, c, &retained);
  CHECK(t.stop == UnlearnStop::GuardTripped);
  CHECK(log_likelihood(t.final_params, retained) >= *c.guard_set_floor);
  for (const auto& s : t.steps) CHECK(s.retained_log_likelihood.has_value());
}

TEST_CASE("unlearning errors") {
  CHECK_THROWS_AS(unlearn_reward({{0.0}}, PreferenceDataset{}, UnlearnConfig{}), Error);
  const auto d = random_dataset(3, 2, 1);
  CHECK_THROWS_AS(unlearn_reward({{0.0}}, d, UnlearnConfig{}), DimensionError);
  UnlearnConfig bad;
  bad.learning_rate = -1.0;
  CHECK_THROWS_AS(validate(bad), ConfigError);
}

TEST_CASE("retraining oracle") {
  const auto d = random_dataset(30, 3, 4);
  const TrainConfig c;
  CHECK(oracle::retrain_oracle(d, {}, c).theta == train_reward(d, c).theta);
  const std::vector<ExampleId> drop{3, 7};
  CHECK(oracle::retrain_oracle(d, drop, c).theta == train_reward(remove_ids(d, drop), c).theta);
}
