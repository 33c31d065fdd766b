#include <doctest.h>

#include <cmath>
#include <sstream>

#include "xrlhf/dataset_io.hpp"
#include "xrlhf/errors.hpp"
#include "xrlhf/kernels.hpp"
#include "xrlhf/reward.hpp"
#include "xrlhf/synthetic.hpp"
#include "xrlhf/types.hpp"

using namespace xrlhf;

TEST_CASE("preference dataset loads ids and dimension") {
  std::istringstream in(
      "{\"phi_w\":[1,2,3,4],\"phi_l\":[0,0,0,0]}\n"
      "\n"
      "{\"phi_w\":[1,1,1,1],\"phi_l\":[2,2,2,2]}\n"
      "{\"phi_w\":[0,0,0,1],\"phi_l\":[0,0,1,0]}\n");
  const auto d = read_preference_dataset(in);
  CHECK(d.size() == 3);
  CHECK(d.dim == 4);
  CHECK(d.examples[2].id == 2);
}

TEST_CASE("preference dataset errors") {
  SUBCASE("dimension mismatch names the line") {
    std::istringstream in("{\"phi_w\":[1,2,3,4],\"phi_l\":[0,0,0,0]}\n{\"phi_w\":[1,2,3],\"phi_l\":[0,0,0]}\n");
    try {
      read_preference_dataset(in);
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(e.line() == 2);
    }
  }
  SUBCASE("empty file") {
    std::istringstream in("");
    CHECK_THROWS_AS(read_preference_dataset(in), ParseError);
  }
  SUBCASE("malformed json") {
    std::istringstream in("{\"phi_w\":[1],\"phi_l\":[0]}\n{oops\n");
    try {
      read_preference_dataset(in);
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(e.line() == 2);
    }
  }
  SUBCASE("non-finite feature") {
    std::istringstream in("{\"phi_w\":[1e999],\"phi_l\":[0]}\n");
    CHECK_THROWS_AS(read_preference_dataset(in), ParseError);
  }
}

TEST_CASE("preference dataset round trip") {
  PreferenceDataset d;
  d.dim = 2;
  d.examples.push_back({0, {0.1, -2.5}, {3.0, 1e-12}});
  std::stringstream io;
  write_preference_dataset(io, d);
  const auto back = read_preference_dataset(io);
  CHECK(back.examples[0].phi_w == d.examples[0].phi_w);
  CHECK(back.examples[0].phi_l == d.examples[0].phi_l);
}

TEST_CASE("validation set parsing") {
  std::istringstream in(
      "{\"candidates\":[[1,0],[0,1]],\"generated_index\":0,\"score\":0.5,\"label\":\"sat\"}\n"
      "{\"candidates\":[[1,0],[0,1],[1,1]],\"generated_index\":2,\"score\":-1,\"label\":\"unsat\"}\n");
  const auto v = read_validation_set(in);
  CHECK(v.size() == 2);
  CHECK(v.unsatisfactory_count == 1);
  CHECK(v.items[1].num_candidates() == 3);

  std::istringstream bad("{\"candidates\":[[1,0]],\"generated_index\":3}\n");
  CHECK_THROWS_AS(read_validation_set(bad), ParseError);
}

TEST_CASE("feature comparison") {
  CHECK(feature_comparison({0, {1, 2}, {1, 2}}) == FeatureVector{0, 0});
  CHECK(feature_comparison({0, {3, 0}, {1, 1}}) == FeatureVector{2, -1});
}

TEST_CASE("partition by threshold") {
  ValidationSet v;
  for (double s : {-0.5, 0.1, 0.4}) {
    ValidationItem it;
    it.id = v.items.size();
    it.candidate_features = {{0.0}};
    it.score = s;
    v.items.push_back(it);
  }
  auto p = partition_by_threshold(v, -0.30);
  CHECK(p.items[0].label == Label::Unsatisfactory);
  CHECK(p.items[1].label == Label::Satisfactory);
  CHECK(p.items[2].label == Label::Satisfactory);
  CHECK(p.unsatisfactory_count == 1);

  CHECK(partition_by_threshold(v, -1.0).unsatisfactory_count == 0);
  // Equal to the threshold stays satisfactory.
  CHECK(partition_by_threshold(v, 0.1).items[1].label == Label::Satisfactory);

  v.items[1].score = std::nan("");
  CHECK_THROWS_AS(partition_by_threshold(v, 0.0), Error);
}

TEST_CASE("subset and removal by id") {
  PreferenceDataset d;
  d.dim = 1;
  for (std::size_t i = 0; i < 5; ++i) d.examples.push_back({i, {double(i)}, {0.0}});
  const std::vector<ExampleId> ids{1, 3};
  const auto sub = subset_by_ids(d, ids);
  REQUIRE(sub.size() == 2);
  CHECK(sub.examples[1].id == 3);
  const auto rest = remove_ids(d, ids);
  REQUIRE(rest.size() == 3);
  CHECK(rest.examples[1].phi_w[0] == 2.0);
  CHECK(rest.examples[1].id == 1);
}

TEST_CASE("synthetic world is deterministic") {
  WorldConfig c;
  c.num_train = 60;
  c.num_validation = 10;
  c.num_holdout = 5;
  const auto a = generate_synthetic_world(c, 42);
  const auto b = generate_synthetic_world(c, 42);
  REQUIRE(a.dataset.size() == b.dataset.size());
  for (std::size_t i = 0; i < a.dataset.size(); ++i) {
    CHECK(a.dataset.examples[i].phi_w == b.dataset.examples[i].phi_w);
    CHECK(a.dataset.examples[i].phi_l == b.dataset.examples[i].phi_l);
  }
  CHECK(a.validation.items[3].candidate_features == b.validation.items[3].candidate_features);
  const auto other = generate_synthetic_world(c, 43);
  CHECK(other.dataset.examples[0].phi_w != a.dataset.examples[0].phi_w);
}

TEST_CASE("synthetic misleading examples") {
  WorldConfig c;
  c.num_train = 200;
  c.misleading_fraction = 0.0;
  CHECK(generate_synthetic_world(c, 1).planted_misleading_ids.empty());

  c.misleading_fraction = 0.1;
  const auto w = generate_synthetic_world(c, 1);
  REQUIRE(w.planted_misleading_ids.size() == 20);
  for (auto id : w.planted_misleading_ids)
    CHECK(kernels::dot(feature_comparison(w.dataset.examples[id]), w.true_reward.theta) < 0.0);
  // Clean examples all agree with the true reward.
  std::size_t clean_positive = 0;
  for (const auto& ex : w.dataset.examples)
    if (kernels::dot(feature_comparison(ex), w.true_reward.theta) > 0.0) ++clean_positive;
  CHECK(clean_positive == 180);
}

TEST_CASE("synthetic config validation") {
  WorldConfig c;
  c.misleading_fraction = 1.0;
  CHECK_THROWS_AS(validate(c), ConfigError);
  c = WorldConfig{};
  c.dim = 2;
  CHECK_THROWS_AS(validate(c), ConfigError);
}
