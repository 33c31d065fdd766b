// Command-line front end. Each stage reads and writes the same artifacts that
// `run` leaves in its output directory, so stages can be rerun one at a time.

#include <algorithm>
#include <cstdio>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "xrlhf/dataset_io.hpp"
#include "xrlhf/errors.hpp"
#include "xrlhf/explainer.hpp"
#include "xrlhf/oracle.hpp"
#include "xrlhf/pipeline.hpp"
#include "xrlhf/rng.hpp"
#include "xrlhf/serialize.hpp"
#include "xrlhf/synthetic.hpp"

using namespace xrlhf;
using nlohmann::json;

namespace {

constexpr int kExitConfig = 1;
constexpr int kExitStage = 2;
constexpr int kExitCheck = 3;

struct CommonOptions {
  std::string config_path;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, CommonOptions& opts) {
  cmd->add_option("-c,--config", opts.config_path, "JSON config file");
  cmd->add_option("--set", opts.overrides, "Override a config key, e.g. --set finetune.max_steps=100");
}

// Stage commands accept configs without an input section; the synthetic
// defaults stand in so validation passes.
PipelineConfig resolve_config(const CommonOptions& opts, bool require_inputs) {
  json j = json::object();
  if (!opts.config_path.empty()) {
    try {
      j = json::parse(read_text_file(opts.config_path));
    } catch (const json::parse_error& e) {
      throw ConfigError(opts.config_path + ": " + e.what());
    } catch (const Error& e) {
      throw ConfigError(e.what());
    }
  }
  for (const auto& o : opts.overrides) apply_override(j, o);
  if (!require_inputs && j.is_object() && !j.contains("synthetic") && !j.contains("data"))
    j["synthetic"] = json::object();
  return parse_config(j);
}

std::vector<ExampleId> union_of(const std::vector<Explanation>& explanations) {
  std::vector<ExampleId> ids;
  for (const auto& e : explanations) ids.insert(ids.end(), e.selected_ids.begin(), e.selected_ids.end());
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  return ids;
}

Label parse_label(const std::string& s) {
  if (s == "sat") return Label::Satisfactory;
  if (s == "unsat") return Label::Unsatisfactory;
  throw ConfigError("label must be sat, unsat or all");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Explainable RLHF post-training on feature-space preference data"};
  app.require_subcommand(1);
  std::function<int()> action;

  // generate
  CommonOptions gen_opts;
  std::string gen_out;
  auto* gen = app.add_subcommand("generate", "Write a synthetic world to a directory");
  add_common(gen, gen_opts);
  gen->add_option("-o,--out", gen_out, "Output directory")->required();
  gen->callback([&] {
    action = [&] {
      const auto config = resolve_config(gen_opts, false);
      if (!config.synthetic) throw ConfigError("generate needs a synthetic config");
      const auto world = generate_synthetic_world(*config.synthetic, config.seed);
      const std::filesystem::path dir = gen_out;
      save_preference_dataset(dir / "preferences.jsonl", world.dataset);
      save_validation_set(dir / "validation.jsonl", world.validation);
      save_validation_set(dir / "holdout.jsonl", world.holdout);
      save_reward(dir / "true_reward.json", world.true_reward);
      save_json(dir / "planted_ids.json", json(world.planted_misleading_ids));
      return 0;
    };
  });

  // train-reward
  CommonOptions train_opts;
  std::string train_data, train_out;
  auto* train = app.add_subcommand("train-reward", "Fit the Bradley-Terry reward theta_0");
  add_common(train, train_opts);
  train->add_option("-d,--data", train_data, "Preference JSONL")->required();
  train->add_option("-o,--out", train_out, "Reward JSON")->required();
  train->callback([&] {
    action = [&] {
      const auto config = resolve_config(train_opts, false);
      TrainConfig tc = config.train;
      if (config.seeded_init) tc.init_seed = substream_seed(config.seed, "init");
      const auto data = load_preference_dataset(train_data);
      save_reward(train_out, train_reward(data, tc));
      return 0;
    };
  });

  // rlhf-policy
  CommonOptions pol_opts;
  std::string pol_reward, pol_validation, pol_out, pol_sft_out;
  auto* pol = app.add_subcommand("rlhf-policy", "Closed-form KL-regularized policy pi_0");
  add_common(pol, pol_opts);
  pol->add_option("-r,--reward", pol_reward, "Reward JSON")->required();
  pol->add_option("-v,--validation", pol_validation, "Validation JSONL")->required();
  pol->add_option("-o,--out", pol_out, "Policy JSON")->required();
  pol->add_option("--sft-out", pol_sft_out, "Also write pi_SFT here");
  pol->callback([&] {
    action = [&] {
      const auto config = resolve_config(pol_opts, false);
      const auto items = load_validation_set(pol_validation);
      const auto sft = sft_policy(items);
      save_policy(pol_out, rlhf_policy(load_reward(pol_reward), sft, config.beta, items));
      if (!pol_sft_out.empty()) save_policy(pol_sft_out, sft);
      return 0;
    };
  });

  // partition
  CommonOptions part_opts;
  std::string part_validation, part_policy, part_judge, part_out;
  bool part_rescore = false;
  auto* part = app.add_subcommand("partition", "Score generated responses and label them by threshold");
  add_common(part, part_opts);
  part->add_option("-v,--validation", part_validation, "Validation JSONL")->required();
  part->add_option("-p,--policy", part_policy, "Regenerate responses as this policy's argmax");
  part->add_option("-j,--judge", part_judge, "Reward JSON scoring unscored responses");
  part->add_flag("--rescore", part_rescore, "Score every response with the judge, not only missing ones");
  part->add_option("-o,--out", part_out, "Labeled validation JSONL")->required();
  part->callback([&] {
    action = [&] {
      const auto config = resolve_config(part_opts, false);
      auto items = load_validation_set(part_validation);
      if (!part_policy.empty()) generate_responses(items, load_policy(part_policy));
      if (!part_judge.empty()) score_items(items, load_reward(part_judge), part_rescore);
      const auto labeled = partition_by_threshold(std::move(items), config.threshold);
      save_validation_set(part_out, labeled);
      std::cout << "M = " << labeled.items.size() << ", m = " << labeled.unsatisfactory_count << "\n";
      return 0;
    };
  });

  // explain
  CommonOptions ex_opts;
  std::string ex_data, ex_validation, ex_out, ex_union;
  auto* ex = app.add_subcommand("explain", "Explain every unsatisfactory generated response");
  add_common(ex, ex_opts);
  ex->add_option("-d,--data", ex_data, "Preference JSONL")->required();
  ex->add_option("-v,--validation", ex_validation, "Labeled validation JSONL")->required();
  ex->add_option("-o,--out", ex_out, "Explanation JSONL")->required();
  ex->add_option("--union-out", ex_union, "Write the union of selected ids here");
  ex->callback([&] {
    action = [&] {
      const auto config = resolve_config(ex_opts, false);
      const auto batch =
          explain_batch(load_validation_set(ex_validation), load_preference_dataset(ex_data), config.explainer);
      save_explanations(ex_out, batch.explanations);
      if (!ex_union.empty()) save_json(ex_union, json(batch.union_ids));
      return 0;
    };
  });

  // unlearn
  CommonOptions un_opts;
  std::string un_data, un_reward, un_explanations, un_out, un_trace;
  auto* un = app.add_subcommand("unlearn", "Negative-gradient unlearning of the explanation union");
  add_common(un, un_opts);
  un->add_option("-d,--data", un_data, "Preference JSONL")->required();
  un->add_option("-r,--reward", un_reward, "Reward JSON (theta_0)")->required();
  un->add_option("-e,--explanations", un_explanations, "Explanation JSONL")->required();
  un->add_option("-o,--out", un_out, "Unlearned reward JSON")->required();
  un->add_option("--trace-out", un_trace, "Per-step likelihood JSONL");
  un->callback([&] {
    action = [&] {
      const auto config = resolve_config(un_opts, false);
      const auto data = load_preference_dataset(un_data);
      const auto ids = union_of(load_explanations(un_explanations));
      if (ids.empty()) throw Error("explanations select no training examples");
      const auto subset = subset_by_ids(data, ids);
      std::optional<PreferenceDataset> retained;
      if (ids.size() < data.examples.size()) retained = remove_ids(data, ids);
      const auto trace = unlearn_reward(load_reward(un_reward), subset, config.unlearn,
                                        retained ? &*retained : nullptr);
      save_reward(un_out, trace.final_params);
      if (!un_trace.empty()) save_unlearn_trace(un_trace, trace);
      std::cout << "stop: " << stop_name(trace.stop) << " after " << trace.steps.size() - 1 << " steps\n";
      return 0;
    };
  });

  // finetune
  CommonOptions ft_opts;
  std::string ft_validation, ft_reward, ft_policy, ft_out;
  auto* ft = app.add_subcommand("finetune", "Fine-tune a shared softmax policy under the unlearned reward");
  add_common(ft, ft_opts);
  ft->add_option("-v,--validation", ft_validation, "Labeled validation JSONL")->required();
  ft->add_option("-r,--reward", ft_reward, "Unlearned reward JSON")->required();
  ft->add_option("-p,--policy", ft_policy, "pi_0 policy JSON")->required();
  ft->add_option("-o,--out", ft_out, "Tuned policy JSON")->required();
  ft->callback([&] {
    action = [&] {
      const auto config = resolve_config(ft_opts, false);
      FinetuneConfig fc = config.finetune;
      fc.beta_bar = config.beta_bar;
      save_policy(ft_out, finetune_policy(load_validation_set(ft_validation), load_reward(ft_reward),
                                          load_policy(ft_policy), fc));
      return 0;
    };
  });

  // evaluate
  std::string ev_validation, ev_a, ev_b, ev_judge, ev_out, ev_label = "all";
  auto* ev = app.add_subcommand("evaluate", "Win rate of policy A over policy B under a judge reward");
  ev->add_option("-v,--validation", ev_validation, "Validation JSONL")->required();
  ev->add_option("-a,--policy-a", ev_a, "Policy A JSON")->required();
  ev->add_option("-b,--policy-b", ev_b, "Policy B JSON")->required();
  ev->add_option("-j,--judge", ev_judge, "Judge reward JSON")->required();
  ev->add_option("-l,--label", ev_label, "sat, unsat or all");
  ev->add_option("-o,--out", ev_out, "WinRateReport JSON");
  ev->callback([&] {
    action = [&] {
      auto items = load_validation_set(ev_validation);
      if (ev_label != "all") items = select_label(items, parse_label(ev_label));
      const auto rep = evaluate_win_rate(load_policy(ev_a), load_policy(ev_b), items, load_reward(ev_judge));
      if (!ev_out.empty()) save_json(ev_out, json(rep));
      std::cout << json(rep).dump() << "\n";
      return 0;
    };
  });

  // run
  CommonOptions run_opts;
  bool run_check = false;
  auto* run = app.add_subcommand("run", "Full pipeline; artifacts go to output_dir");
  add_common(run, run_opts);
  run->add_flag("--check", run_check, "Exit 3 unless the win-rate targets and reward identity hold");
  run->callback([&] {
    action = [&] {
      const auto config = resolve_config(run_opts, true);
      const auto report = run_pipeline(config);
      std::cout << summary_text(report);
      if (!run_check) return 0;
      const auto failures = check_report(report, config.check);
      for (const auto& f : failures) std::cout << "CHECK FAILED: " << f << "\n";
      if (!failures.empty()) return kExitCheck;
      std::cout << "checks passed\n";
      return 0;
    };
  });

  // bench
  std::vector<std::size_t> bench_sizes{100, 200, 400, 800, 1600};
  std::size_t bench_dim = 8, bench_queries = 8, bench_reps = 3;
  std::uint64_t bench_seed = 1;
  std::string bench_out;
  bool bench_check = false;
  auto* bench = app.add_subcommand("bench", "Explainer scaling benchmark");
  bench->add_option("--sizes", bench_sizes, "Dataset sizes, ascending")->delimiter(',');
  bench->add_option("--dim", bench_dim, "Feature dimension");
  bench->add_option("--seed", bench_seed, "World seed");
  bench->add_option("--queries", bench_queries, "Queries per size");
  bench->add_option("--repetitions", bench_reps, "Timed repetitions; the median is kept");
  bench->add_option("-o,--out", bench_out, "Scaling table JSON");
  bench->add_flag("--check", bench_check, "Exit 3 if passes exceed N or the slope exceeds 5");
  bench->callback([&] {
    action = [&] {
      const auto table = bench_scaling(bench_sizes, bench_dim, bench_seed, bench_queries, bench_reps);
      std::printf("%8s %12s %10s %10s %10s\n", "N", "median_s", "max_pass", "mean_pass", "mean_|S|");
      for (const auto& r : table.rows)
        std::printf("%8zu %12.5f %10zu %10.2f %10.2f\n", r.n, r.median_seconds, r.max_iterations,
                    r.mean_iterations, r.mean_subset);
      std::printf("log-log slope %.3f\n", table.slope);
      if (!bench_out.empty()) save_json(bench_out, scaling_to_json(table));
      if (bench_check && (!table.iterations_within_n || table.slope > 5.0)) return kExitCheck;
      return 0;
    };
  });

  // oracle-check
  std::size_t oc_instances = 200, oc_max_n = 12, oc_dim = 3;
  std::uint64_t oc_seed = 1;
  auto* oc = app.add_subcommand("oracle-check", "Greedy explainer against exhaustive search on small instances");
  oc->add_option("--instances", oc_instances, "Number of random instances");
  oc->add_option("--max-n", oc_max_n, "Largest dataset size (at most 20)");
  oc->add_option("--dim", oc_dim, "Feature dimension");
  oc->add_option("--seed", oc_seed, "Root seed");
  oc->callback([&] {
    action = [&] {
      if (oc_max_n < 1 || oc_max_n > oracle::kMaxBruteForceSize) throw ConfigError("--max-n must be in [1, 20]");
      std::size_t feasible = 0, within = 0, zero_gap = 0;
      double worst_gap = 0.0, total_gap = 0.0;
      for (std::size_t k = 0; k < oc_instances; ++k) {
        auto gen = make_stream(oc_seed + k, "eval");
        std::normal_distribution<double> normal(0.0, 1.0);
        const std::size_t n = 1 + gen() % oc_max_n;
        PreferenceDataset data;
        data.dim = oc_dim;
        for (std::size_t i = 0; i < n; ++i) {
          PreferenceExample e;
          e.id = i;
          e.phi_w.resize(oc_dim);
          e.phi_l.assign(oc_dim, 0.0);
          for (auto& x : e.phi_w) x = normal(gen);
          data.examples.push_back(std::move(e));
        }
        FeatureVector query(oc_dim);
        for (auto& x : query) x = normal(gen);
        const auto e = explain(query, data, ExplainerConfig{});
        if (e.iterations <= n) ++within;
        const RowMatrix c = comparison_matrix(data);
        RowMatrix members(e.selected_ids.size(), oc_dim);
        for (std::size_t r = 0; r < e.selected_ids.size(); ++r) {
          const auto row = c.row(e.selected_ids[r]);
          std::copy(row.begin(), row.end(), members.row(r).begin());
        }
        // Exact distance, independent of the iterative solver.
        const double radius = feasibility_radius(SolverConfig{}, c);
        if (oracle::enumerated_hull_distance(e.hull_point, members) <= radius) ++feasible;
        const auto best = oracle::brute_force_min_subset(e.hull_point, data);
        if (best.optimal_subset.empty()) continue;
        const double gap = e.objective - best.optimal_objective;
        worst_gap = std::max(worst_gap, gap);
        total_gap += gap;
        if (gap <= 1e-9 * (1.0 + best.optimal_objective)) ++zero_gap;
      }
      std::cout << "instances " << oc_instances << ", passes <= N: " << within << ", oracle-feasible: " << feasible
                << ", zero gap: " << zero_gap << ", mean gap " << total_gap / static_cast<double>(oc_instances)
                << ", worst gap " << worst_gap << "\n";
      return (within == oc_instances && feasible == oc_instances) ? 0 : kExitCheck;
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    return action();
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitStage;
  }
}
