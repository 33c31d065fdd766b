#include <doctest.h>

#include <filesystem>

#include "xrlhf/dataset_io.hpp"
#include "xrlhf/errors.hpp"
#include "xrlhf/pipeline.hpp"
#include "xrlhf/serialize.hpp"

using namespace xrlhf;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("xrlhf_test_pipeline_" + name);
  fs::remove_all(p);
  return p;
}

json small_world(const fs::path& out) {
  return json{{"synthetic", {{"num_train", 80}, {"num_validation", 20}, {"num_holdout", 10}}},
              {"seed", 5},
              {"output_dir", out.string()}};
}

}  // namespace

TEST_CASE("config parsing and defaults") {
  const auto c = parse_config(json{{"synthetic", json::object()}});
  REQUIRE(c.synthetic);
  CHECK(c.synthetic->dim == 8);
  CHECK(c.synthetic->num_train == 500);
  CHECK(c.synthetic->num_validation == 100);
  CHECK(c.synthetic->candidates == 4);
  CHECK(c.synthetic->misleading_fraction == 0.15);
  CHECK(c.seed == 0);

  // Round trip through JSON.
  const auto again = parse_config(config_to_json(c));
  CHECK(config_to_json(again) == config_to_json(c));
}

TEST_CASE("config errors") {
  CHECK_THROWS_AS(parse_config(json{{"synthetic", json::object()}, {"bogus", 1}}), ConfigError);
  CHECK_THROWS_AS(parse_config(json{{"synthetic", {{"dimm", 3}}}}), ConfigError);
  CHECK_THROWS_AS(parse_config(json::object()), ConfigError);
  CHECK_THROWS_AS(parse_config(json{{"synthetic", json::object()}, {"beta", -1.0}}), ConfigError);
  CHECK_THROWS_AS(parse_config(json{{"synthetic", json::object()}, {"beta", "x"}}), ConfigError);
}

TEST_CASE("overrides") {
  json j{{"synthetic", json::object()}};
  apply_override(j, "synthetic.num_train=42");
  apply_override(j, "beta_bar=0");
  apply_override(j, "output_dir=some/where");
  const auto c = parse_config(j);
  CHECK(c.synthetic->num_train == 42);
  CHECK(c.beta_bar == 0.0);
  CHECK(c.output_dir == fs::path("some/where"));
  CHECK_THROWS_AS(apply_override(j, "no_equals_sign"), ConfigError);
}

TEST_CASE("short circuit when nothing is unsatisfactory") {
  const auto out = scratch("short");
  auto j = small_world(out);
  j["threshold"] = -1e9;
  const auto r = run_pipeline(parse_config(j));
  CHECK(r.short_circuited);
  CHECK(r.unsatisfactory_count == 0);
  CHECK_FALSE(r.win_rates.has_value());
  CHECK(fs::exists(out / "report.json"));
  CHECK_FALSE(check_report(r, CheckThresholds{}).empty());
  fs::remove_all(out);
}

TEST_CASE("full run writes every artifact and is reproducible") {
  const auto a = scratch("a");
  const auto b = scratch("b");
  auto ja = small_world(a / "nested" / "dir");
  auto jb = small_world(b);
  ja["threshold"] = 1.0;
  jb["threshold"] = 1.0;
  const auto ra = run_pipeline(parse_config(ja));
  const auto rb = run_pipeline(parse_config(jb));
  const auto da = a / "nested" / "dir";
  CHECK(ra.unsatisfactory_count > 0);
  for (const char* f : {"config.json", "report.json", "summary.txt", "timings.json", "reward_theta0.json", "pi0.json",
                        "validation_scored.jsonl", "explanations.jsonl", "explanation_union.json",
                        "unlearn_trace.jsonl", "reward_theta_u.json", "policy_tuned.json", "win_rates.json",
                        "world/preferences.jsonl"})
    CHECK_MESSAGE(fs::exists(da / f), f);
  CHECK(read_text_file(da / "report.json") == read_text_file(b / "report.json"));

  // The report round-trips through JSON.
  const auto parsed = report_from_json(load_json(da / "report.json"));
  CHECK(report_to_json(parsed) == report_to_json(ra));
  CHECK(parsed.explanations.size() == ra.unsatisfactory_count);
  for (const auto& e : parsed.explanations) CHECK(e.reward_identity_error <= e.reward_identity_tolerance);

  // Stages read back from disk reproduce the in-memory pipeline.
  const auto theta0 = load_reward(da / "reward_theta0.json");
  const auto data = load_preference_dataset(da / "world" / "preferences.jsonl");
  CHECK(theta0.theta == train_reward(data, TrainConfig{}).theta);
  const auto explanations = load_explanations(da / "explanations.jsonl");
  CHECK(explanations.size() == ra.unsatisfactory_count);

  const auto text = summary_text(ra);
  CHECK(text.find("pi_0 over fine-tuned on satisfactory") != std::string::npos);
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("files mode runs from saved inputs") {
  const auto world = scratch("world");
  auto j = small_world(world);
  j["threshold"] = 1.0;
  run_pipeline(parse_config(j));

  const auto out = scratch("files");
  json f{{"data",
          {{"preferences", (world / "world" / "preferences.jsonl").string()},
           {"validation", (world / "validation_scored.jsonl").string()},
           {"judge", (world / "world" / "true_reward.json").string()}}},
         {"threshold", 1.0},
         {"output_dir", out.string()}};
  const auto r = run_pipeline(parse_config(f));
  CHECK(r.mode == "files");
  CHECK(r.validation_size == 20);
  fs::remove_all(world);
  fs::remove_all(out);
}

TEST_CASE("a failing stage names itself") {
  const auto out = scratch("fail");
  json f{{"data", {{"preferences", (out / "missing.jsonl").string()}, {"validation", (out / "missing.jsonl").string()}}},
         {"output_dir", out.string()}};
  try {
    run_pipeline(parse_config(f));
    FAIL("expected StageError");
  } catch (const StageError& e) {
    CHECK(e.stage() == "load");
  }
  CHECK(fs::exists(out / "report_partial.json"));
  fs::remove_all(out);
}

TEST_CASE("scaling benchmark table") {
  const auto t = bench_scaling({40, 80}, 4, 1, 2, 1);
  REQUIRE(t.rows.size() == 2);
  CHECK(t.iterations_within_n);
  for (const auto& r : t.rows) CHECK(r.max_iterations <= r.n);
  CHECK(scaling_to_json(t).contains("slope"));
}
