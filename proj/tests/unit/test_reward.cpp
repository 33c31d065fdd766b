#include <doctest.h>

#include <cmath>
#include <random>

#include "xrlhf/errors.hpp"
#include "xrlhf/oracle.hpp"
#include "xrlhf/reward.hpp"
#include "xrlhf/synthetic.hpp"

using namespace xrlhf;

namespace {

PreferenceDataset one_example(FeatureVector delta) {
  PreferenceDataset d;
  d.dim = delta.size();
  d.examples.push_back({0, delta, FeatureVector(delta.size(), 0.0)});
  return d;
}

PreferenceDataset random_dataset(std::size_t n, std::size_t dim, std::mt19937_64& gen) {
  std::normal_distribution<double> normal(0.0, 1.0);
  PreferenceDataset d;
  d.dim = dim;
  for (std::size_t i = 0; i < n; ++i) {
    PreferenceExample ex{i, FeatureVector(dim), FeatureVector(dim)};
    for (std::size_t j = 0; j < dim; ++j) {
      ex.phi_w[j] = normal(gen);
      ex.phi_l[j] = normal(gen);
    }
    d.examples.push_back(std::move(ex));
  }
  return d;
}

}  // namespace

TEST_CASE("reward is a dot product") {
  CHECK(reward({{0, 0}}, FeatureVector{5, -3}) == 0.0);
  CHECK(reward({{1, 2}}, FeatureVector{3, -1}) == 1.0);
  CHECK_THROWS_AS(reward({{1, 2}}, FeatureVector{3}), DimensionError);
}

TEST_CASE("Bradley-Terry probability") {
  CHECK(bt_probability({{1.0}}, {0, {2.0}, {0.0}}).probability == doctest::Approx(0.8807970779778823).epsilon(1e-12));
  CHECK(bt_probability({{1.0, 1.0}}, {0, {1.0, 0.0}, {0.0, 1.0}}).probability == 0.5);
  double prev = 0.0;
  for (double m : {-5.0, 0.0, 5.0, 40.0}) {
    const double p = bt_probability({{1.0}}, {0, {m}, {0.0}}).probability;
    CHECK(p >= prev);
    prev = p;
  }
  CHECK(prev == doctest::Approx(1.0));
}

TEST_CASE("log-sigmoid is stable") {
  CHECK(log_sigmoid(2.0) == doctest::Approx(-0.12692801104297263).epsilon(1e-12));
  CHECK(log_sigmoid(-50.0) == doctest::Approx(-50.0).epsilon(1e-12));
  CHECK(std::isfinite(log_sigmoid(-1e6)));
  CHECK(log_sigmoid(1e6) == 0.0);
}

TEST_CASE("log-likelihood values") {
  const auto d = one_example({2.0});
  CHECK(log_likelihood({{0.0}}, d) == doctest::Approx(-std::log(2.0)));
  CHECK(log_likelihood({{1.0}}, d) == doctest::Approx(-0.12692801104297263).epsilon(1e-12));
  CHECK(reformulated_log_likelihood({{0.0}}, d) == doctest::Approx(-std::log(2.0)));
  CHECK(std::isfinite(log_likelihood({{-25.0}}, d)));
  CHECK(log_likelihood({{-25.0}}, d) == doctest::Approx(-50.0).epsilon(1e-12));
}

TEST_CASE("likelihood and its reformulation agree") {
  std::mt19937_64 gen(11);
  std::normal_distribution<double> normal(0.0, 3.0);
  for (int k = 0; k < 20; ++k) {
    const auto d = random_dataset(50, 5, gen);
    RewardParams p{FeatureVector(5)};
    for (double& x : p.theta) x = normal(gen);
    CHECK(std::abs(log_likelihood(p, d) - reformulated_log_likelihood(p, d)) <= 1e-10);
  }
}

TEST_CASE("gradient values") {
  const auto d = one_example({1.0, 0.0});
  const auto g = log_likelihood_gradient({{0.0, 0.0}}, d);
  CHECK(g[0] == doctest::Approx(0.5));
  CHECK(g[1] == 0.0);

  const auto saturated = log_likelihood_gradient({{100.0, 0.0}}, d);
  CHECK(std::abs(saturated[0]) < 1e-40);
}

TEST_CASE("gradient matches finite differences") {
  std::mt19937_64 gen(5);
  std::normal_distribution<double> normal(0.0, 1.0);
  const auto d = random_dataset(40, 4, gen);
  for (int k = 0; k < 5; ++k) {
    FeatureVector theta(4);
    for (double& x : theta) x = normal(gen);
    const auto g = log_likelihood_gradient({theta}, d, 0.01);
    const auto fd = oracle::finite_difference_gradient(
        [&](std::span<const double> t) {
          const FeatureVector v(t.begin(), t.end());
          return log_likelihood({v}, d) - 0.01 * kernels::squared_norm(v);
        },
        theta);
    for (std::size_t j = 0; j < 4; ++j) CHECK(g[j] == doctest::Approx(fd[j]).epsilon(1e-5));
  }
}

TEST_CASE("training on identical comparisons reaches the first-order point") {
  PreferenceDataset d;
  d.dim = 2;
  for (std::size_t i = 0; i < 6; ++i) d.examples.push_back({i, {1.0, 0.0}, {0.0, 0.0}});
  TrainConfig c;
  c.l2_coeff = 0.01;
  const auto out = train_reward_traced(d, c);
  CHECK(out.converged);
  // Root of sigma(c) - 1 + 0.02 c = 0, found by bisection.
  CHECK(out.params.theta[0] == doctest::Approx(2.8179891359486393).epsilon(1e-5));
  CHECK(out.params.theta[1] == 0.0);
}

TEST_CASE("training without regularization on separable data runs to max_steps") {
  const auto d = one_example({1.0});
  TrainConfig c;
  c.l2_coeff = 0.0;
  c.max_steps = 200;
  const auto out = train_reward_traced(d, c);
  CHECK(out.steps == 200);
  CHECK_FALSE(out.converged);
  for (std::size_t i = 1; i < out.objective_history.size(); ++i)
    CHECK(out.objective_history[i] > out.objective_history[i - 1]);
}

TEST_CASE("training is deterministic and respects init_seed") {
  WorldConfig w;
  w.num_train = 100;
  const auto world = generate_synthetic_world(w, 3);
  TrainConfig c;
  c.max_steps = 50;
  CHECK(train_reward(world.dataset, c).theta == train_reward(world.dataset, c).theta);
  c.init_seed = 9;
  const auto seeded = train_reward_traced(world.dataset, c);
  CHECK(seeded.params.theta == train_reward(world.dataset, c).theta);
}

TEST_CASE("trained reward agrees in sign with the true reward on a clean world") {
  WorldConfig w;
  w.misleading_fraction = 0.0;
  const auto world = generate_synthetic_world(w, 1);
  const auto theta = train_reward(world.dataset, TrainConfig{});
  std::size_t agree = 0;
  for (const auto& ex : world.dataset.examples)
    if (kernels::dot(theta.theta, feature_comparison(ex)) > 0.0) ++agree;
  CHECK(static_cast<double>(agree) >= 0.9 * world.dataset.size());
}

TEST_CASE("training config validation") {
  TrainConfig c;
  c.learning_rate = 0.0;
  CHECK_THROWS_AS(validate(c), ConfigError);
  CHECK_THROWS_AS(train_reward(PreferenceDataset{}, TrainConfig{}), Error);
}
