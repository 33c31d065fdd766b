#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <vector>

#include "xrlhf/reward.hpp"
#include "xrlhf/types.hpp"

namespace xrlhf {

/// A policy over each prompt's finite candidate set. Tabular policies store a
/// distribution per item id; parametric ones are pi_w(y|x) ∝ exp(w . phi(x, y))
/// with one weight vector shared by every prompt.
struct CandidatePolicy {
  enum class Kind { Tabular, Parametric };

  Kind kind = Kind::Tabular;
  std::map<std::size_t, std::vector<double>> probs;  ///< Tabular
  FeatureVector w;                                   ///< Parametric

  static CandidatePolicy tabular(std::map<std::size_t, std::vector<double>> probs);
  static CandidatePolicy parametric(FeatureVector w);
};

struct FinetuneConfig {
  double beta_bar = 3.0;
  double learning_rate = 0.5;
  std::size_t max_steps = 300;
  double grad_tolerance = 1e-6;
  /// Steps for fitting the parametric start to pi_0.
  std::size_t fit_max_steps = 5000;
  double fit_grad_tolerance = 1e-8;
};

void validate(const FinetuneConfig& config);

struct WinRateReport {
  std::size_t wins_a = 0;
  std::size_t wins_b = 0;
  std::size_t ties = 0;
  double win_rate_a = 0.5;  ///< ties count half; 0.5 when nothing was evaluated

  std::size_t total() const { return wins_a + wins_b + ties; }
};

/// Max-shifted softmax.
std::vector<double> softmax(std::span<const double> logits);
std::vector<double> log_softmax(std::span<const double> logits);

std::vector<double> policy_probs(const CandidatePolicy& policy, const ValidationItem& item);
/// Index of the most probable candidate, lowest index on ties.
std::size_t selected_candidate(const CandidatePolicy& policy, const ValidationItem& item);

/// sum_i p_i log(p_i / q_i) with 0 log 0 = 0.
double kl_divergence(std::span<const double> p, std::span<const double> q);

/// The SFT baseline: each item's `sft` distribution, or uniform.
CandidatePolicy sft_policy(const ValidationSet& items);

/// Exact maximizer of E[r] - beta * KL(pi || pi_SFT) per item:
/// pi_0(y|x) ∝ pi_SFT(y|x) exp(r(x, y) / beta).
CandidatePolicy rlhf_policy(const RewardParams& theta0, const CandidatePolicy& sft, double beta,
                            const ValidationSet& items);

/// Mean expected unlearned reward over Unsatisfactory items minus beta_bar
/// times the mean KL(pi_w || pi_0) over Satisfactory items. Exact, no sampling.
double finetune_objective(std::span<const double> w, const ValidationSet& items, const RewardParams& theta_u,
                          const CandidatePolicy& pi0, const FinetuneConfig& config);
FeatureVector finetune_gradient(std::span<const double> w, const ValidationSet& items,
                                const RewardParams& theta_u, const CandidatePolicy& pi0,
                                const FinetuneConfig& config);

/// Parametric policy minimizing mean KL(pi_0 || pi_w) over all items.
CandidatePolicy fit_parametric(const CandidatePolicy& pi0, const ValidationSet& items,
                               const FinetuneConfig& config);

/// Mean KL(pi || pi_0) over items carrying `label`.
double mean_kl(const CandidatePolicy& pi, const CandidatePolicy& pi0, const ValidationSet& items, Label label);

struct FinetuneOutcome {
  CandidatePolicy policy;
  FeatureVector initial_w;
  std::vector<double> objective_history;
  std::size_t steps = 0;
  bool converged = false;
  bool unsatisfactory_empty = false;
};

/// Gradient ascent on finetune_objective from the parametric fit of pi_0.
FinetuneOutcome finetune_policy_traced(const ValidationSet& items, const RewardParams& theta_u,
                                       const CandidatePolicy& pi0, const FinetuneConfig& config);
CandidatePolicy finetune_policy(const ValidationSet& items, const RewardParams& theta_u,
                                const CandidatePolicy& pi0, const FinetuneConfig& config);

/// Each policy answers with its most probable candidate; the judge scores both.
WinRateReport evaluate_win_rate(const CandidatePolicy& a, const CandidatePolicy& b, const ValidationSet& items,
                                const RewardParams& judge);

}  // namespace xrlhf
