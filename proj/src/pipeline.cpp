#include "xrlhf/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <iomanip>
#include <limits>
#include <set>
#include <sstream>

#include "xrlhf/dataset_io.hpp"
#include "xrlhf/kernels.hpp"
#include "xrlhf/oracle.hpp"
#include "xrlhf/rng.hpp"
#include "xrlhf/serialize.hpp"

namespace xrlhf {

using nlohmann::json;

namespace {

// Strict reader over one config object: every key must be consumed.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + " must be an object");
  }

  template <class T>
  void get(const char* key, T& out) {
    if (!j_.contains(key)) return;
    seen_.insert(key);
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError(where(key) + " has the wrong type");
    }
  }

  template <class T>
  void get_optional(const char* key, std::optional<T>& out) {
    if (!j_.contains(key)) return;
    seen_.insert(key);
    if (j_.at(key).is_null()) {
      out.reset();
      return;
    }
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError(where(key) + " has the wrong type");
    }
  }

  std::optional<Section> child(const char* key) {
    if (!j_.contains(key)) return std::nullopt;
    seen_.insert(key);
    return Section(j_.at(key), where(key));
  }

  void finish() const {
    for (const auto& [key, value] : j_.items())
      if (!seen_.count(key)) throw ConfigError("unknown config key " + where(key));
  }

 private:
  std::string where(const std::string& key = "") const {
    if (key.empty()) return path_.empty() ? std::string("config") : path_;
    return path_.empty() ? key : path_ + "." + key;
  }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

std::optional<std::filesystem::path> optional_path(const std::optional<std::string>& s) {
  if (!s) return std::nullopt;
  return std::filesystem::path(*s);
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> optional_double(const json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

double cosine(std::span<const double> a, std::span<const double> b) {
  const double na = std::sqrt(kernels::squared_norm(a));
  const double nb = std::sqrt(kernels::squared_norm(b));
  if (na == 0.0 || nb == 0.0) return 0.0;
  return kernels::dot(a, b) / (na * nb);
}

class StageTimer {
 public:
  explicit StageTimer(std::map<std::string, double>& sink) : sink_(sink) {}

  template <class F>
  auto run(const std::string& stage, F&& f) -> decltype(f()) {
    const auto start = std::chrono::steady_clock::now();
    struct Record {
      StageTimer& t;
      const std::string& stage;
      std::chrono::steady_clock::time_point start;
      ~Record() {
        t.sink_[stage] =
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
      }
    } record{*this, stage, start};
    try {
      return f();
    } catch (const StageError&) {
      throw;
    } catch (const std::exception& e) {
      throw StageError(stage, e.what());
    }
  }

 private:
  std::map<std::string, double>& sink_;
};

}  // namespace

PipelineConfig parse_config(const json& j) {
  PipelineConfig c;
  Section root(j, "");

  if (auto s = root.child("synthetic")) {
    WorldConfig w;
    s->get("dim", w.dim);
    s->get("num_train", w.num_train);
    s->get("num_validation", w.num_validation);
    s->get("num_holdout", w.num_holdout);
    s->get("candidates", w.candidates);
    s->get("misleading_fraction", w.misleading_fraction);
    s->get("noise_scale", w.noise_scale);
    s->get("harm_weight", w.harm_weight);
    s->get("good_helpfulness", w.good_helpfulness);
    s->get("tempting_helpfulness", w.tempting_helpfulness);
    s->get("tempting_harm", w.tempting_harm);
    s->get("bold_share", w.bold_share);
    s->get("bold_harm", w.bold_harm);
    s->get("cautious_helpfulness", w.cautious_helpfulness);
    s->get("caution_level", w.caution_level);
    s->get("refusal_share", w.refusal_share);
    s->get("refusal_helpfulness", w.refusal_helpfulness);
    s->get("refusal_caution", w.refusal_caution);
    s->get("train_tempting_share", w.train_tempting_share);
    s->get("train_good_share", w.train_good_share);
    s->get("risky_prompt_share", w.risky_prompt_share);
    s->finish();
    c.synthetic = w;
  }
  if (auto s = root.child("data")) {
    DataPaths d;
    std::string prefs, val;
    std::optional<std::string> holdout, judge;
    s->get("preferences", prefs);
    s->get("validation", val);
    s->get_optional("holdout", holdout);
    s->get_optional("judge", judge);
    s->finish();
    d.preferences = prefs;
    d.validation = val;
    d.holdout = optional_path(holdout);
    d.judge = optional_path(judge);
    c.data = d;
  }
  if (auto s = root.child("train")) {
    s->get("learning_rate", c.train.learning_rate);
    s->get("max_steps", c.train.max_steps);
    s->get("l2_coeff", c.train.l2_coeff);
    s->get("grad_tolerance", c.train.grad_tolerance);
    std::string init = c.seeded_init ? "seeded" : "zeros";
    s->get("init", init);
    if (init != "zeros" && init != "seeded") throw ConfigError("train.init must be \"zeros\" or \"seeded\"");
    c.seeded_init = init == "seeded";
    s->finish();
  }
  if (auto s = root.child("explainer")) {
    s->get("max_subset", c.explainer.max_subset);
    s->get("pruning", c.explainer.pruning);
    if (auto solver = s->child("solver")) {
      solver->get("max_iterations", c.explainer.solver.max_iterations);
      solver->get("stationarity_tolerance", c.explainer.solver.stationarity_tolerance);
      solver->get("feasibility_epsilon", c.explainer.solver.feasibility_epsilon);
      solver->finish();
    }
    s->finish();
  }
  if (auto s = root.child("unlearn")) {
    s->get_optional("learning_rate", c.unlearn.learning_rate);
    s->get("max_steps", c.unlearn.max_steps);
    s->get("target_likelihood", c.unlearn.target_likelihood);
    s->get_optional("guard_set_floor", c.unlearn.guard_set_floor);
    s->finish();
  }
  if (auto s = root.child("finetune")) {
    s->get("learning_rate", c.finetune.learning_rate);
    s->get("max_steps", c.finetune.max_steps);
    s->get("grad_tolerance", c.finetune.grad_tolerance);
    s->get("fit_max_steps", c.finetune.fit_max_steps);
    s->get("fit_grad_tolerance", c.finetune.fit_grad_tolerance);
    s->finish();
  }
  if (auto s = root.child("check")) {
    s->get("min_unsatisfactory_win_rate", c.check.min_unsatisfactory_win_rate);
    s->get("max_satisfactory_loss_rate", c.check.max_satisfactory_loss_rate);
    s->finish();
  }
  root.get("beta", c.beta);
  root.get("beta_bar", c.beta_bar);
  root.get("threshold", c.threshold);
  root.get("seed", c.seed);
  std::string out = c.output_dir.string();
  root.get("output_dir", out);
  c.output_dir = out;
  root.finish();

  c.finetune.beta_bar = c.beta_bar;
  validate(c);
  return c;
}

json config_to_json(const PipelineConfig& c) {
  json j;
  if (c.synthetic) {
    const auto& w = *c.synthetic;
    j["synthetic"] = {{"dim", w.dim},
                      {"num_train", w.num_train},
                      {"num_validation", w.num_validation},
                      {"num_holdout", w.num_holdout},
                      {"candidates", w.candidates},
                      {"misleading_fraction", w.misleading_fraction},
                      {"noise_scale", w.noise_scale},
                      {"harm_weight", w.harm_weight},
                      {"good_helpfulness", w.good_helpfulness},
                      {"tempting_helpfulness", w.tempting_helpfulness},
                      {"tempting_harm", w.tempting_harm},
                      {"bold_share", w.bold_share},
                      {"bold_harm", w.bold_harm},
                      {"cautious_helpfulness", w.cautious_helpfulness},
                      {"caution_level", w.caution_level},
                      {"refusal_share", w.refusal_share},
                      {"refusal_helpfulness", w.refusal_helpfulness},
                      {"refusal_caution", w.refusal_caution},
                      {"train_tempting_share", w.train_tempting_share},
                      {"train_good_share", w.train_good_share},
                      {"risky_prompt_share", w.risky_prompt_share}};
  }
  if (c.data) {
    const auto& d = *c.data;
    j["data"] = {{"preferences", d.preferences.string()},
                 {"validation", d.validation.string()},
                 {"holdout", d.holdout ? json(d.holdout->string()) : json(nullptr)},
                 {"judge", d.judge ? json(d.judge->string()) : json(nullptr)}};
  }
  j["train"] = {{"learning_rate", c.train.learning_rate},
                {"max_steps", c.train.max_steps},
                {"l2_coeff", c.train.l2_coeff},
                {"grad_tolerance", c.train.grad_tolerance},
                {"init", c.seeded_init ? "seeded" : "zeros"}};
  j["explainer"] = {{"max_subset", c.explainer.max_subset},
                    {"pruning", c.explainer.pruning},
                    {"solver",
                     {{"max_iterations", c.explainer.solver.max_iterations},
                      {"stationarity_tolerance", c.explainer.solver.stationarity_tolerance},
                      {"feasibility_epsilon", c.explainer.solver.feasibility_epsilon}}}};
  j["unlearn"] = {{"learning_rate", optional_json(c.unlearn.learning_rate)},
                  {"max_steps", c.unlearn.max_steps},
                  {"target_likelihood", c.unlearn.target_likelihood},
                  {"guard_set_floor", optional_json(c.unlearn.guard_set_floor)}};
  j["finetune"] = {{"learning_rate", c.finetune.learning_rate},
                   {"max_steps", c.finetune.max_steps},
                   {"grad_tolerance", c.finetune.grad_tolerance},
                   {"fit_max_steps", c.finetune.fit_max_steps},
                   {"fit_grad_tolerance", c.finetune.fit_grad_tolerance}};
  j["check"] = {{"min_unsatisfactory_win_rate", c.check.min_unsatisfactory_win_rate},
                {"max_satisfactory_loss_rate", c.check.max_satisfactory_loss_rate}};
  j["beta"] = c.beta;
  j["beta_bar"] = c.beta_bar;
  j["threshold"] = c.threshold;
  j["seed"] = c.seed;
  j["output_dir"] = c.output_dir.string();
  return j;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(read_text_file(path));
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  return parse_config(j);
}

void apply_override(json& j, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override must look like key.path=value: " + assignment);
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(text);
  } catch (const json::parse_error&) {
    value = text;
  }
  json* node = &j;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ConfigError("empty segment in override key " + key);
    if (!node->is_object()) {
      if (!node->is_null()) throw ConfigError("override " + key + " descends into a non-object");
      *node = json::object();
    }
    if (dot == std::string::npos) {
      (*node)[part] = value;
      return;
    }
    node = &(*node)[part];
    start = dot + 1;
  }
}

void validate(const PipelineConfig& c) {
  if (c.synthetic.has_value() == c.data.has_value())
    throw ConfigError("config needs exactly one of \"synthetic\" and \"data\"");
  try {
    if (c.synthetic) validate(*c.synthetic);
    validate(c.train);
    validate(c.unlearn);
    FinetuneConfig f = c.finetune;
    f.beta_bar = c.beta_bar;
    validate(f);
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  if (c.data && (c.data->preferences.empty() || c.data->validation.empty()))
    throw ConfigError("data.preferences and data.validation are required");
  if (!(c.beta > 0.0) || !std::isfinite(c.beta)) throw ConfigError("beta must be positive");
  if (!std::isfinite(c.threshold)) throw ConfigError("threshold must be finite");
  const auto& s = c.explainer.solver;
  if (!(s.stationarity_tolerance > 0.0) || !(s.feasibility_epsilon > 0.0))
    throw ConfigError("explainer.solver tolerances must be positive");
  if (c.output_dir.empty()) throw ConfigError("output_dir must not be empty");
}

// ---------------------------------------------------------------- report codec

json report_to_json(const PipelineReport& r) {
  json j;
  j["mode"] = r.mode;
  j["seed"] = r.seed;
  j["threshold"] = r.threshold;
  j["train"] = {{"log_likelihood", r.train.log_likelihood},
                {"objective", r.train.objective},
                {"steps", r.train.steps},
                {"converged", r.train.converged}};
  j["partition"] = {{"M", r.validation_size}, {"m", r.unsatisfactory_count}};
  j["short_circuited"] = r.short_circuited;
  j["note"] = r.note;
  json ex = json::array();
  for (const auto& e : r.explanations)
    ex.push_back({{"query_id", e.query_id},
                  {"subset_size", e.subset_size},
                  {"iterations", e.iterations},
                  {"projection_distance", e.projection_distance},
                  {"objective", e.objective},
                  {"reward_identity_error", e.reward_identity_error},
                  {"reward_identity_tolerance", e.reward_identity_tolerance}});
  j["explanations"] = ex;
  if (r.unlearn) {
    const auto& u = *r.unlearn;
    j["unlearn"] = {{"union_size", u.union_size},
                    {"steps", u.steps},
                    {"learning_rate", u.learning_rate},
                    {"initial_log_likelihood", u.initial_log_likelihood},
                    {"final_log_likelihood", u.final_log_likelihood},
                    {"retained_initial", optional_json(u.retained_initial)},
                    {"retained_final", optional_json(u.retained_final)},
                    {"stop", u.stop},
                    {"planted_precision", optional_json(u.planted_precision)},
                    {"retrain_cosine", u.retrain_cosine}};
  } else {
    j["unlearn"] = nullptr;
  }
  if (r.finetune) {
    const auto& f = *r.finetune;
    j["finetune"] = {{"steps", f.steps},
                     {"converged", f.converged},
                     {"initial_objective", f.initial_objective},
                     {"final_objective", f.final_objective},
                     {"mean_kl_satisfactory", f.mean_kl_satisfactory},
                     {"beta_bar", f.beta_bar}};
  } else {
    j["finetune"] = nullptr;
  }
  if (r.win_rates) {
    const auto& w = *r.win_rates;
    j["win_rates"] = {{"unsatisfactory", w.unsatisfactory},
                      {"satisfactory", w.satisfactory},
                      {"overall", w.overall},
                      {"holdout", w.holdout ? json(*w.holdout) : json(nullptr)}};
  } else {
    j["win_rates"] = nullptr;
  }
  return j;
}

PipelineReport report_from_json(const json& j) {
  PipelineReport r;
  try {
    r.mode = j.at("mode").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.threshold = j.at("threshold").get<double>();
    const auto& t = j.at("train");
    r.train.log_likelihood = t.at("log_likelihood").get<double>();
    r.train.objective = t.at("objective").get<double>();
    r.train.steps = t.at("steps").get<std::size_t>();
    r.train.converged = t.at("converged").get<bool>();
    r.validation_size = j.at("partition").at("M").get<std::size_t>();
    r.unsatisfactory_count = j.at("partition").at("m").get<std::size_t>();
    r.short_circuited = j.at("short_circuited").get<bool>();
    r.note = j.at("note").get<std::string>();
    for (const auto& e : j.at("explanations")) {
      ExplanationSummary s;
      s.query_id = e.at("query_id").get<std::size_t>();
      s.subset_size = e.at("subset_size").get<std::size_t>();
      s.iterations = e.at("iterations").get<std::size_t>();
      s.projection_distance = e.at("projection_distance").get<double>();
      s.objective = e.at("objective").get<double>();
      s.reward_identity_error = e.at("reward_identity_error").get<double>();
      s.reward_identity_tolerance = e.at("reward_identity_tolerance").get<double>();
      r.explanations.push_back(s);
    }
    if (const auto& u = j.at("unlearn"); !u.is_null()) {
      UnlearnSummary s;
      s.union_size = u.at("union_size").get<std::size_t>();
      s.steps = u.at("steps").get<std::size_t>();
      s.learning_rate = u.at("learning_rate").get<double>();
      s.initial_log_likelihood = u.at("initial_log_likelihood").get<double>();
      s.final_log_likelihood = u.at("final_log_likelihood").get<double>();
      s.retained_initial = optional_double(u.at("retained_initial"));
      s.retained_final = optional_double(u.at("retained_final"));
      s.stop = u.at("stop").get<std::string>();
      s.planted_precision = optional_double(u.at("planted_precision"));
      s.retrain_cosine = u.at("retrain_cosine").get<double>();
      r.unlearn = s;
    }
    if (const auto& f = j.at("finetune"); !f.is_null()) {
      FinetuneSummary s;
      s.steps = f.at("steps").get<std::size_t>();
      s.converged = f.at("converged").get<bool>();
      s.initial_objective = f.at("initial_objective").get<double>();
      s.final_objective = f.at("final_objective").get<double>();
      s.mean_kl_satisfactory = f.at("mean_kl_satisfactory").get<double>();
      s.beta_bar = f.at("beta_bar").get<double>();
      r.finetune = s;
    }
    if (const auto& w = j.at("win_rates"); !w.is_null()) {
      WinRates s;
      s.unsatisfactory = w.at("unsatisfactory").get<WinRateReport>();
      s.satisfactory = w.at("satisfactory").get<WinRateReport>();
      s.overall = w.at("overall").get<WinRateReport>();
      if (!w.at("holdout").is_null()) s.holdout = w.at("holdout").get<WinRateReport>();
      r.win_rates = s;
    }
  } catch (const json::exception& e) {
    throw Error(std::string("malformed report: ") + e.what());
  }
  return r;
}

std::string summary_text(const PipelineReport& r) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(4);
  out << "mode " << r.mode << ", seed " << r.seed << ", threshold " << r.threshold << "\n";
  out << "reward: log-likelihood " << r.train.log_likelihood << " after " << r.train.steps << " steps"
      << (r.train.converged ? " (converged)" : "") << "\n";
  out << "partition: M = " << r.validation_size << ", m = " << r.unsatisfactory_count << "\n";
  if (r.short_circuited) {
    out << "stopped after partition: " << r.note << "\n";
    return out.str();
  }
  if (!r.explanations.empty()) {
    std::vector<std::size_t> sizes;
    std::size_t max_iter = 0;
    for (const auto& e : r.explanations) {
      sizes.push_back(e.subset_size);
      max_iter = std::max(max_iter, e.iterations);
    }
    std::sort(sizes.begin(), sizes.end());
    out << "explanations: " << r.explanations.size() << ", median |S| " << sizes[sizes.size() / 2]
        << ", max |S| " << sizes.back() << ", max passes " << max_iter << "\n";
  }
  if (r.unlearn) {
    const auto& u = *r.unlearn;
    out << "unlearn: |union| = " << u.union_size << ", " << u.steps << " steps at alpha " << u.learning_rate
        << ", subset log-likelihood " << u.initial_log_likelihood << " -> " << u.final_log_likelihood << " ("
        << u.stop << ")\n";
    if (u.retained_initial && u.retained_final)
      out << "  retained log-likelihood " << *u.retained_initial << " -> " << *u.retained_final << "\n";
    if (u.planted_precision) out << "  planted share of union " << *u.planted_precision << "\n";
    out << "  cosine(theta_u, retrained) " << u.retrain_cosine << "\n";
  }
  if (r.finetune) {
    const auto& f = *r.finetune;
    out << "fine-tune: beta_bar " << f.beta_bar << ", " << f.steps << " steps, objective " << f.initial_objective
        << " -> " << f.final_objective << ", mean KL on satisfactory " << f.mean_kl_satisfactory << "\n";
  }
  if (r.win_rates) {
    const auto& w = *r.win_rates;
    auto line = [&](const char* name, const WinRateReport& rep) {
      out << "  " << name << ": " << rep.win_rate_a << " (" << rep.wins_a << " wins, " << rep.wins_b
          << " losses, " << rep.ties << " ties)\n";
    };
    out << "win rate, fine-tuned over pi_0:\n";
    line("unsatisfactory", w.unsatisfactory);
    line("satisfactory", w.satisfactory);
    line("all validation", w.overall);
    if (w.holdout)
      line("holdout", *w.holdout);
    else
      out << "  holdout: n/a\n";
    out << "pi_0 over fine-tuned on satisfactory: " << 1.0 - w.satisfactory.win_rate_a << "\n";
  }
  return out.str();
}

void emit_report(const PipelineReport& report, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  save_json(dir / "report.json", report_to_json(report));
  write_text_file(dir / "summary.txt", summary_text(report));
  save_json(dir / "timings.json", json(report.timings_ms));
}

// ---------------------------------------------------------------- stages

void generate_responses(ValidationSet& items, const CandidatePolicy& pi0) {
  for (auto& item : items.items) item.generated_index = selected_candidate(pi0, item);
}

void score_items(ValidationSet& items, const RewardParams& judge, bool overwrite) {
  for (auto& item : items.items)
    if (overwrite || std::isnan(item.score)) item.score = reward(judge, item.generated());
}

namespace {

struct Inputs {
  PreferenceDataset data;
  ValidationSet validation;
  std::optional<ValidationSet> holdout;
  std::optional<RewardParams> judge;
  std::vector<ExampleId> planted;
  bool synthetic = false;
};

Inputs load_inputs(const PipelineConfig& config, const std::filesystem::path& out) {
  Inputs in;
  if (config.synthetic) {
    auto world = generate_synthetic_world(*config.synthetic, config.seed);
    in.synthetic = true;
    in.data = std::move(world.dataset);
    in.validation = std::move(world.validation);
    in.holdout = std::move(world.holdout);
    in.judge = world.true_reward;
    in.planted = world.planted_misleading_ids;
    save_preference_dataset(out / "world" / "preferences.jsonl", in.data);
    save_validation_set(out / "world" / "validation.jsonl", in.validation);
    save_validation_set(out / "world" / "holdout.jsonl", *in.holdout);
    save_reward(out / "world" / "true_reward.json", *in.judge);
    save_json(out / "world" / "planted_ids.json", json(in.planted));
    return in;
  }
  const auto& d = *config.data;
  in.data = load_preference_dataset(d.preferences);
  in.validation = load_validation_set(d.validation);
  if (d.holdout) in.holdout = load_validation_set(*d.holdout);
  if (d.judge) in.judge = load_reward(*d.judge);
  return in;
}

ExplanationSummary summarize(const Explanation& e, const RewardParams& theta0, const RowMatrix& comparisons,
                             double max_norm) {
  ExplanationSummary s;
  s.query_id = e.query_id;
  s.subset_size = e.selected_ids.size();
  s.iterations = e.iterations;
  s.projection_distance = e.projection_distance;
  s.objective = e.objective;
  std::vector<double> terms(e.selected_ids.size());
  for (std::size_t k = 0; k < terms.size(); ++k)
    terms[k] = e.weights.omega[k] * kernels::dot(theta0.theta, comparisons.row(e.selected_ids[k]));
  s.reward_identity_error = std::abs(reward(theta0, e.projected) - kernels::pairwise_sum(terms));
  s.reward_identity_tolerance = 1e-8 * (1.0 + std::sqrt(kernels::squared_norm(theta0.theta)) * max_norm);
  return s;
}

WinRates win_rates(const CandidatePolicy& tuned, const CandidatePolicy& pi0, const ValidationSet& labeled,
                   const RewardParams& judge) {
  WinRates w;
  w.unsatisfactory = evaluate_win_rate(tuned, pi0, select_label(labeled, Label::Unsatisfactory), judge);
  w.satisfactory = evaluate_win_rate(tuned, pi0, select_label(labeled, Label::Satisfactory), judge);
  w.overall = evaluate_win_rate(tuned, pi0, labeled, judge);
  return w;
}

}  // namespace

PipelineReport run_pipeline(const PipelineConfig& config) {
  validate(config);
  const auto& out = config.output_dir;
  std::filesystem::create_directories(out);
  save_json(out / "config.json", config_to_json(config));

  PipelineReport report;
  report.mode = config.synthetic ? "synthetic" : "files";
  report.seed = config.seed;
  report.threshold = config.threshold;
  StageTimer timer(report.timings_ms);

  auto fail = [&](const StageError& e) {
    report.note = e.what();
    save_json(out / "report_partial.json", report_to_json(report));
    save_json(out / "timings.json", json(report.timings_ms));
    throw e;
  };

  try {
    Inputs in = timer.run("load", [&] { return load_inputs(config, out); });

    TrainConfig train_cfg = config.train;
    if (config.seeded_init) train_cfg.init_seed = substream_seed(config.seed, "init");

    const TrainOutcome trained = timer.run("train", [&] {
      auto t = train_reward_traced(in.data, train_cfg);
      save_reward(out / "reward_theta0.json", t.params);
      return t;
    });
    const RewardParams& theta0 = trained.params;
    report.train.log_likelihood = log_likelihood(theta0, in.data);
    report.train.objective = trained.objective_history.empty() ? 0.0 : trained.objective_history.back();
    report.train.steps = trained.steps;
    report.train.converged = trained.converged;
    const RewardParams judge = in.judge.value_or(theta0);

    const CandidatePolicy pi0 = timer.run("rlhf-policy", [&] {
      const auto sft = sft_policy(in.validation);
      auto p = rlhf_policy(theta0, sft, config.beta, in.validation);
      save_policy(out / "pi_sft.json", sft);
      save_policy(out / "pi0.json", p);
      return p;
    });

    const ValidationSet labeled = timer.run("partition", [&] {
      ValidationSet items = in.validation;
      if (in.synthetic) generate_responses(items, pi0);
      score_items(items, judge, in.synthetic);
      auto l = partition_by_threshold(std::move(items), config.threshold);
      save_validation_set(out / "validation_scored.jsonl", l);
      return l;
    });
    report.validation_size = labeled.items.size();
    report.unsatisfactory_count = labeled.unsatisfactory_count;

    if (labeled.unsatisfactory_count == 0) {
      report.short_circuited = true;
      report.note = "nothing to explain: no validation item scored below the threshold";
      emit_report(report, out);
      return report;
    }

    const BatchExplanation batch = timer.run("explain", [&] {
      auto b = explain_batch(labeled, in.data, config.explainer);
      save_explanations(out / "explanations.jsonl", b.explanations);
      save_json(out / "explanation_union.json", json(b.union_ids));
      return b;
    });
    {
      const RowMatrix comparisons = comparison_matrix(in.data);
      double max_norm = 0.0;
      for (std::size_t i = 0; i < comparisons.rows; ++i)
        max_norm = std::max(max_norm, std::sqrt(kernels::squared_norm(comparisons.row(i))));
      for (const auto& e : batch.explanations) report.explanations.push_back(summarize(e, theta0, comparisons, max_norm));
    }

    const UnlearnTrace trace = timer.run("unlearn", [&] {
      const auto subset = subset_by_ids(in.data, batch.union_ids);
      std::optional<PreferenceDataset> retained;
      if (batch.union_ids.size() < in.data.examples.size()) retained = remove_ids(in.data, batch.union_ids);
      auto t = unlearn_reward(theta0, subset, config.unlearn, retained ? &*retained : nullptr);
      save_unlearn_trace(out / "unlearn_trace.jsonl", t);
      save_reward(out / "reward_theta_u.json", t.final_params);
      return t;
    });
    UnlearnSummary us;
    us.union_size = batch.union_ids.size();
    us.steps = trace.steps.size() - 1;
    us.learning_rate = trace.learning_rate;
    us.initial_log_likelihood = trace.steps.front().unlearn_log_likelihood;
    us.final_log_likelihood = trace.steps.back().unlearn_log_likelihood;
    us.retained_initial = trace.steps.front().retained_log_likelihood;
    us.retained_final = trace.steps.back().retained_log_likelihood;
    us.stop = std::string(stop_name(trace.stop));
    if (in.synthetic) {
      std::vector<ExampleId> hit;
      std::set_intersection(batch.union_ids.begin(), batch.union_ids.end(), in.planted.begin(), in.planted.end(),
                            std::back_inserter(hit));
      us.planted_precision = static_cast<double>(hit.size()) / static_cast<double>(batch.union_ids.size());
    }
    if (batch.union_ids.size() < in.data.examples.size()) {
      us.retrain_cosine = timer.run("retrain-oracle", [&] {
        const auto retrained = oracle::retrain_oracle(in.data, batch.union_ids, train_cfg);
        save_reward(out / "reward_retrained.json", retrained);
        return cosine(retrained.theta, trace.final_params.theta);
      });
    }
    report.unlearn = us;

    FinetuneConfig ft_cfg = config.finetune;
    ft_cfg.beta_bar = config.beta_bar;
    const FinetuneOutcome tuned = timer.run("finetune", [&] {
      auto f = finetune_policy_traced(labeled, trace.final_params, pi0, ft_cfg);
      save_policy(out / "policy_tuned.json", f.policy);
      save_policy(out / "policy_initial.json", CandidatePolicy::parametric(f.initial_w));
      return f;
    });
    FinetuneSummary fs;
    fs.steps = tuned.steps;
    fs.converged = tuned.converged;
    fs.initial_objective = tuned.objective_history.empty() ? 0.0 : tuned.objective_history.front();
    fs.final_objective = tuned.objective_history.empty() ? 0.0 : tuned.objective_history.back();
    fs.mean_kl_satisfactory = mean_kl(tuned.policy, pi0, labeled, Label::Satisfactory);
    fs.beta_bar = ft_cfg.beta_bar;
    report.finetune = fs;

    report.win_rates = timer.run("evaluate", [&] {
      WinRates w = win_rates(tuned.policy, pi0, labeled, judge);
      if (in.holdout) {
        const auto sft = sft_policy(*in.holdout);
        const auto pi0_holdout = rlhf_policy(theta0, sft, config.beta, *in.holdout);
        w.holdout = evaluate_win_rate(tuned.policy, pi0_holdout, *in.holdout, judge);
      }
      json j = {{"unsatisfactory", w.unsatisfactory},
                {"satisfactory", w.satisfactory},
                {"overall", w.overall},
                {"holdout", w.holdout ? json(*w.holdout) : json(nullptr)}};
      save_json(out / "win_rates.json", j);
      return w;
    });
  } catch (const StageError& e) {
    fail(e);
  }

  emit_report(report, out);
  return report;
}

std::vector<std::string> check_report(const PipelineReport& report, const CheckThresholds& t) {
  std::vector<std::string> failures;
  if (report.short_circuited || !report.win_rates) {
    failures.push_back("no unsatisfactory items; win-rate targets were not evaluated");
    return failures;
  }
  const auto& w = *report.win_rates;
  if (w.unsatisfactory.win_rate_a < t.min_unsatisfactory_win_rate) {
    std::ostringstream s;
    s << "win rate on unsatisfactory items " << w.unsatisfactory.win_rate_a << " < "
      << t.min_unsatisfactory_win_rate;
    failures.push_back(s.str());
  }
  const double loss = 1.0 - w.satisfactory.win_rate_a;
  if (loss > t.max_satisfactory_loss_rate) {
    std::ostringstream s;
    s << "pi_0 beats the fine-tuned policy on satisfactory items at " << loss << " > "
      << t.max_satisfactory_loss_rate;
    failures.push_back(s.str());
  }
  for (const auto& e : report.explanations) {
    if (e.iterations > 0 && e.reward_identity_error > e.reward_identity_tolerance) {
      std::ostringstream s;
      s << "reward identity off by " << e.reward_identity_error << " for item " << e.query_id;
      failures.push_back(s.str());
    }
  }
  return failures;
}

// ---------------------------------------------------------------- scaling

ScalingTable bench_scaling(const std::vector<std::size_t>& sizes, std::size_t dim, std::uint64_t seed,
                           std::size_t queries, std::size_t repetitions) {
  if (repetitions == 0) throw ConfigError("bench needs at least one repetition");
  for (std::size_t k = 0; k < sizes.size(); ++k) {
    if (sizes[k] < 10) throw ConfigError("bench sizes must be at least 10");
    if (k > 0 && sizes[k] <= sizes[k - 1]) throw ConfigError("bench sizes must be ascending");
  }
  ScalingTable table;
  for (const auto n : sizes) {
    WorldConfig wc;
    wc.dim = dim;
    wc.num_train = n;
    wc.num_validation = queries;
    wc.num_holdout = 0;
    const auto world = generate_synthetic_world(wc, seed);
    // Query each prompt's highest true-reward candidate, as pi_0 would under a good reward.
    std::vector<FeatureVector> targets;
    for (const auto& item : world.validation.items) {
      std::size_t best = 0;
      for (std::size_t c = 1; c < item.candidate_features.size(); ++c)
        if (reward(world.true_reward, item.candidate_features[c]) >
            reward(world.true_reward, item.candidate_features[best]))
          best = c;
      targets.push_back(item.candidate_features[best]);
    }

    ScalingRow row;
    row.n = n;
    row.queries = targets.size();
    std::vector<double> seconds;
    for (std::size_t rep = 0; rep < repetitions; ++rep) {
      std::vector<Explanation> results(targets.size());
      const auto start = std::chrono::steady_clock::now();
      const Explainer explainer(world.dataset, ExplainerConfig{});
      for (std::size_t q = 0; q < targets.size(); ++q) results[q] = explainer.explain(targets[q], q);
      seconds.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
      if (rep == 0) {
        double iters = 0.0, subset = 0.0;
        for (const auto& e : results) {
          row.max_iterations = std::max(row.max_iterations, e.iterations);
          iters += static_cast<double>(e.iterations);
          subset += static_cast<double>(e.selected_ids.size());
        }
        row.mean_iterations = iters / static_cast<double>(results.size());
        row.mean_subset = subset / static_cast<double>(results.size());
      }
    }
    std::sort(seconds.begin(), seconds.end());
    row.median_seconds = seconds[seconds.size() / 2];
    if (row.max_iterations > n) table.iterations_within_n = false;
    table.rows.push_back(row);
  }

  if (table.rows.size() >= 2) {
    double mx = 0.0, my = 0.0;
    for (const auto& r : table.rows) {
      mx += std::log(static_cast<double>(r.n));
      my += std::log(std::max(r.median_seconds, 1e-9));
    }
    mx /= static_cast<double>(table.rows.size());
    my /= static_cast<double>(table.rows.size());
    double sxy = 0.0, sxx = 0.0;
    for (const auto& r : table.rows) {
      const double dx = std::log(static_cast<double>(r.n)) - mx;
      sxy += dx * (std::log(std::max(r.median_seconds, 1e-9)) - my);
      sxx += dx * dx;
    }
    table.slope = sxy / sxx;
  }
  return table;
}

json scaling_to_json(const ScalingTable& table) {
  json rows = json::array();
  for (const auto& r : table.rows)
    rows.push_back({{"n", r.n},
                    {"median_seconds", r.median_seconds},
                    {"queries", r.queries},
                    {"max_iterations", r.max_iterations},
                    {"mean_iterations", r.mean_iterations},
                    {"mean_subset", r.mean_subset}});
  return json{{"rows", rows}, {"slope", table.slope}, {"iterations_within_n", table.iterations_within_n}};
}

}  // namespace xrlhf
