#include "xrlhf/policy.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <string>

#include "xrlhf/ascent.hpp"
#include "xrlhf/errors.hpp"
#include "xrlhf/kernels.hpp"

namespace xrlhf {

CandidatePolicy CandidatePolicy::tabular(std::map<std::size_t, std::vector<double>> probs) {
  CandidatePolicy p;
  p.kind = Kind::Tabular;
  p.probs = std::move(probs);
  return p;
}

CandidatePolicy CandidatePolicy::parametric(FeatureVector w) {
  CandidatePolicy p;
  p.kind = Kind::Parametric;
  p.w = std::move(w);
  return p;
}

void validate(const FinetuneConfig& config) {
  if (!(config.beta_bar >= 0.0)) throw ConfigError("finetune.beta_bar must be >= 0");
  if (!(config.learning_rate > 0.0)) throw ConfigError("finetune.learning_rate must be > 0");
  if (config.max_steps == 0) throw ConfigError("finetune.max_steps must be > 0");
  if (!(config.grad_tolerance > 0.0)) throw ConfigError("finetune.grad_tolerance must be > 0");
}

std::vector<double> log_softmax(std::span<const double> logits) {
  const double top = *std::max_element(logits.begin(), logits.end());
  std::vector<double> out(logits.size());
  if (!std::isfinite(top)) throw Error("softmax: no finite logit");
  double total = 0.0;
  for (double l : logits) total += std::exp(l - top);
  const double lse = top + std::log(total);
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - lse;
  return out;
}

std::vector<double> softmax(std::span<const double> logits) {
  auto out = log_softmax(logits);
  for (double& x : out) x = std::exp(x);
  return out;
}

namespace {

std::vector<double> logits_of(std::span<const double> w, const ValidationItem& item) {
  std::vector<double> logits(item.num_candidates());
  for (std::size_t y = 0; y < logits.size(); ++y) {
    if (item.candidate_features[y].size() != w.size())
      throw DimensionError("policy weights do not match candidate dimension");
    logits[y] = kernels::dot(w, item.candidate_features[y]);
  }
  return logits;
}

const std::vector<double>& tabular_row(const CandidatePolicy& policy, const ValidationItem& item) {
  auto it = policy.probs.find(item.id);
  if (it == policy.probs.end())
    throw Error("tabular policy has no distribution for item " + std::to_string(item.id));
  if (it->second.size() != item.num_candidates())
    throw Error("tabular policy size does not match item " + std::to_string(item.id));
  return it->second;
}

std::vector<double> log_probs_of(const CandidatePolicy& policy, const ValidationItem& item) {
  if (policy.kind == CandidatePolicy::Kind::Parametric) return log_softmax(logits_of(policy.w, item));
  auto out = tabular_row(policy, item);
  for (double& p : out) p = std::log(p);
  return out;
}

// Column-wise pairwise sum of per-item d-vectors.
FeatureVector sum_rows(const std::vector<double>& rows, std::size_t count, std::size_t d) {
  FeatureVector out(d, 0.0);
  std::vector<double> column(count);
  for (std::size_t j = 0; j < d; ++j) {
    for (std::size_t k = 0; k < count; ++k) column[k] = rows[k * d + j];
    out[j] = kernels::pairwise_sum(column);
  }
  return out;
}

struct Split {
  std::vector<const ValidationItem*> unsat;
  std::vector<const ValidationItem*> sat;
};

Split split_items(const ValidationSet& items) {
  Split s;
  for (const auto& item : items.items) {
    if (!item.label) throw Error("finetune: item " + std::to_string(item.id) + " has no label");
    (*item.label == Label::Unsatisfactory ? s.unsat : s.sat).push_back(&item);
  }
  return s;
}

}  // namespace

std::vector<double> policy_probs(const CandidatePolicy& policy, const ValidationItem& item) {
  if (policy.kind == CandidatePolicy::Kind::Parametric) return softmax(logits_of(policy.w, item));
  return tabular_row(policy, item);
}

std::size_t selected_candidate(const CandidatePolicy& policy, const ValidationItem& item) {
  const auto p = policy.kind == CandidatePolicy::Kind::Parametric ? logits_of(policy.w, item)
                                                                  : tabular_row(policy, item);
  return static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
}

double kl_divergence(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw DimensionError("kl_divergence: length mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] <= 0.0) continue;
    if (q[i] <= 0.0) throw Error("kl_divergence: p has mass where q has none");
    total += p[i] * (std::log(p[i]) - std::log(q[i]));
  }
  return total;
}

CandidatePolicy sft_policy(const ValidationSet& items) {
  std::map<std::size_t, std::vector<double>> probs;
  for (const auto& item : items.items) {
    if (item.sft_probs) probs[item.id] = *item.sft_probs;
    else probs[item.id].assign(item.num_candidates(), 1.0 / static_cast<double>(item.num_candidates()));
  }
  return CandidatePolicy::tabular(std::move(probs));
}

CandidatePolicy rlhf_policy(const RewardParams& theta0, const CandidatePolicy& sft, double beta,
                            const ValidationSet& items) {
  if (!(beta > 0.0)) throw ConfigError("rlhf_policy: beta must be > 0");
  std::map<std::size_t, std::vector<double>> probs;
  for (const auto& item : items.items) {
    const auto base = log_probs_of(sft, item);
    std::vector<double> logits(item.num_candidates());
    for (std::size_t y = 0; y < logits.size(); ++y)
      logits[y] = base[y] + reward(theta0, item.candidate_features[y]) / beta;
    probs[item.id] = softmax(logits);
  }
  return CandidatePolicy::tabular(std::move(probs));
}

namespace {

// Per-item value and gradient of the two objective terms.
struct ItemTerms {
  double value = 0.0;
  std::vector<double> grad;
};

ItemTerms reward_term(std::span<const double> w, const ValidationItem& item, const RewardParams& theta_u) {
  const std::size_t d = w.size();
  const auto pi = softmax(logits_of(w, item));
  std::vector<double> r(pi.size());
  double mean_r = 0.0;
  for (std::size_t y = 0; y < pi.size(); ++y) {
    r[y] = reward(theta_u, item.candidate_features[y]);
    mean_r += pi[y] * r[y];
  }
  ItemTerms t{mean_r, std::vector<double>(d, 0.0)};
  for (std::size_t y = 0; y < pi.size(); ++y) {
    const double c = pi[y] * (r[y] - mean_r);
    for (std::size_t j = 0; j < d; ++j) t.grad[j] += c * item.candidate_features[y][j];
  }
  return t;
}

ItemTerms kl_term(std::span<const double> w, const ValidationItem& item, const CandidatePolicy& pi0) {
  const std::size_t d = w.size();
  const auto log_pi = log_softmax(logits_of(w, item));
  const auto ref = policy_probs(pi0, item);
  std::vector<double> g(log_pi.size());
  double kl = 0.0;
  for (std::size_t y = 0; y < g.size(); ++y) {
    if (ref[y] <= 0.0) throw Error("finetune: pi_0 has zero mass on a candidate of item " + std::to_string(item.id));
    g[y] = log_pi[y] - std::log(ref[y]);
    kl += std::exp(log_pi[y]) * g[y];
  }
  ItemTerms t{kl, std::vector<double>(d, 0.0)};
  for (std::size_t y = 0; y < g.size(); ++y) {
    const double c = std::exp(log_pi[y]) * (g[y] - kl);
    for (std::size_t j = 0; j < d; ++j) t.grad[j] += c * item.candidate_features[y][j];
  }
  return t;
}

struct Evaluated {
  double value = 0.0;
  FeatureVector grad;
};

Evaluated evaluate_objective(std::span<const double> w, const ValidationSet& items, const RewardParams& theta_u,
                             const CandidatePolicy& pi0, const FinetuneConfig& config, bool want_grad) {
  const auto split = split_items(items);
  const std::size_t d = w.size();
  Evaluated out;
  out.grad.assign(d, 0.0);

  const auto accumulate = [&](const std::vector<const ValidationItem*>& group, bool is_reward, double coeff) {
    if (group.empty() || coeff == 0.0) return;
    const std::size_t n = group.size();
    std::vector<double> values(n);
    std::vector<double> grads(n * d);
    const auto count = static_cast<long long>(n);
    std::vector<std::exception_ptr> failures(n);
#pragma omp parallel for schedule(static) if (n >= 256)
    for (long long k = 0; k < count; ++k) {
      try {
        auto t = is_reward ? reward_term(w, *group[k], theta_u) : kl_term(w, *group[k], pi0);
        values[k] = t.value;
        std::copy(t.grad.begin(), t.grad.end(), grads.begin() + k * d);
      } catch (...) {
        failures[k] = std::current_exception();
      }
    }
    for (const auto& f : failures)
      if (f) std::rethrow_exception(f);
    const double scale = coeff / static_cast<double>(n);
    out.value += scale * kernels::pairwise_sum(values);
    if (want_grad) {
      const auto g = sum_rows(grads, n, d);
      for (std::size_t j = 0; j < d; ++j) out.grad[j] += scale * g[j];
    }
  };
  accumulate(split.unsat, true, 1.0);
  accumulate(split.sat, false, -config.beta_bar);
  return out;
}

}  // namespace

double finetune_objective(std::span<const double> w, const ValidationSet& items, const RewardParams& theta_u,
                          const CandidatePolicy& pi0, const FinetuneConfig& config) {
  return evaluate_objective(w, items, theta_u, pi0, config, false).value;
}

FeatureVector finetune_gradient(std::span<const double> w, const ValidationSet& items,
                                const RewardParams& theta_u, const CandidatePolicy& pi0,
                                const FinetuneConfig& config) {
  return evaluate_objective(w, items, theta_u, pi0, config, true).grad;
}

CandidatePolicy fit_parametric(const CandidatePolicy& pi0, const ValidationSet& items,
                               const FinetuneConfig& config) {
  if (items.items.empty()) throw Error("fit_parametric: no items");
  const std::size_t d = items.items.front().candidate_features.front().size();
  const std::size_t n = items.size();

  // Negated mean KL(pi_0 || pi_w), maximized; its gradient is E_pi0[phi] - E_piw[phi].
  const auto value = [&](std::span<const double> w) -> double {
    std::vector<double> terms(n);
    for (std::size_t k = 0; k < n; ++k) {
      const auto& item = items.items[k];
      const auto p = policy_probs(pi0, item);
      const auto log_q = log_softmax(logits_of(w, item));
      double kl = 0.0;
      for (std::size_t y = 0; y < p.size(); ++y)
        if (p[y] > 0.0) kl += p[y] * (std::log(p[y]) - log_q[y]);
      terms[k] = kl;
    }
    return -kernels::pairwise_sum(terms) / static_cast<double>(n);
  };
  const auto grad = [&](std::span<const double> w) -> std::vector<double> {
    std::vector<double> rows(n * d, 0.0);
    for (std::size_t k = 0; k < n; ++k) {
      const auto& item = items.items[k];
      const auto p = policy_probs(pi0, item);
      const auto q = softmax(logits_of(w, item));
      for (std::size_t y = 0; y < p.size(); ++y)
        for (std::size_t j = 0; j < d; ++j) rows[k * d + j] += (p[y] - q[y]) * item.candidate_features[y][j];
    }
    auto g = sum_rows(rows, n, d);
    for (double& x : g) x /= static_cast<double>(n);
    return g;
  };

  AscentOptions options;
  options.learning_rate = config.learning_rate;
  options.max_steps = config.fit_max_steps;
  options.grad_tolerance = config.fit_grad_tolerance;
  auto result = gradient_ascent(value, grad, std::vector<double>(d, 0.0), options);
  return CandidatePolicy::parametric(std::move(result.x));
}

double mean_kl(const CandidatePolicy& pi, const CandidatePolicy& pi0, const ValidationSet& items, Label label) {
  std::vector<double> terms;
  for (const auto& item : items.items)
    if (item.label == label) terms.push_back(kl_divergence(policy_probs(pi, item), policy_probs(pi0, item)));
  if (terms.empty()) return 0.0;
  return kernels::pairwise_sum(terms) / static_cast<double>(terms.size());
}

FinetuneOutcome finetune_policy_traced(const ValidationSet& items, const RewardParams& theta_u,
                                       const CandidatePolicy& pi0, const FinetuneConfig& config) {
  validate(config);
  FinetuneOutcome out;
  out.unsatisfactory_empty = std::none_of(items.items.begin(), items.items.end(), [](const ValidationItem& it) {
    return it.label == Label::Unsatisfactory;
  });
  const auto start = fit_parametric(pi0, items, config);
  out.initial_w = start.w;

  const auto value = [&](std::span<const double> w) -> double {
    return finetune_objective(w, items, theta_u, pi0, config);
  };
  const auto grad = [&](std::span<const double> w) -> std::vector<double> {
    return finetune_gradient(w, items, theta_u, pi0, config);
  };
  AscentOptions options;
  options.learning_rate = config.learning_rate;
  options.max_steps = config.max_steps;
  options.grad_tolerance = config.grad_tolerance;
  auto result = gradient_ascent(value, grad, start.w, options);
  out.policy = CandidatePolicy::parametric(std::move(result.x));
  out.objective_history = std::move(result.history);
  out.steps = result.steps;
  out.converged = result.converged;
  return out;
}

CandidatePolicy finetune_policy(const ValidationSet& items, const RewardParams& theta_u,
                                const CandidatePolicy& pi0, const FinetuneConfig& config) {
  return finetune_policy_traced(items, theta_u, pi0, config).policy;
}

WinRateReport evaluate_win_rate(const CandidatePolicy& a, const CandidatePolicy& b, const ValidationSet& items,
                                const RewardParams& judge) {
  WinRateReport report;
  for (const auto& item : items.items) {
    const double sa = reward(judge, item.candidate_features[selected_candidate(a, item)]);
    const double sb = reward(judge, item.candidate_features[selected_candidate(b, item)]);
    if (sa > sb) ++report.wins_a;
    else if (sb > sa) ++report.wins_b;
    else ++report.ties;
  }
  if (report.total() > 0)
    report.win_rate_a = (static_cast<double>(report.wins_a) + 0.5 * static_cast<double>(report.ties)) /
                        static_cast<double>(report.total());
  return report;
}

}  // namespace xrlhf
