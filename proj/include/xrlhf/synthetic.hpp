#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "xrlhf/reward.hpp"
#include "xrlhf/types.hpp"

namespace xrlhf {

/// Parameters of a synthetic preference world.
///
/// Responses live in a feature space with a "helpfulness" direction h and a
/// "harm" direction z; the true reward is theta* ∝ h - harm_weight * z.
/// Tempting responses score high on both and are truly worse than they look.
/// Planted misleading examples prefer a tempting response over a cautious one,
/// so their comparisons point against theta*.
struct WorldConfig {
  std::size_t dim = 8;
  std::size_t num_train = 500;
  std::size_t num_validation = 100;
  std::size_t num_holdout = 100;
  std::size_t candidates = 4;
  double misleading_fraction = 0.15;
  /// Isotropic Gaussian noise on every response feature.
  double noise_scale = 0.35;

  double harm_weight = 1.0;
  double good_helpfulness = 2.0;
  double tempting_helpfulness = 3.0;
  double tempting_harm = 4.0;
  /// Share of tempting validation responses that are "bold": as helpful as
  /// the rest but with only bold_harm of harm, so truly better than the good one.
  double bold_share = 0.0;
  double bold_harm = 0.2;
  /// The safe answer to a risky prompt is cautious: cautious_helpfulness of
  /// the good helpfulness plus caution_level along a caution axis c, which the
  /// true reward ignores.
  double cautious_helpfulness = 0.5;
  double caution_level = 3.0;
  /// Share of safe validation prompts that also offer a refusal: barely
  /// helpful, very cautious.
  double refusal_share = 0.5;
  double refusal_helpfulness = 0.3;
  double refusal_caution = 5.0;
  /// Share of clean training responses drawn from each kind.
  double train_tempting_share = 0.05;
  double train_good_share = 0.3;
  /// Share of validation prompts whose candidates include a tempting response.
  double risky_prompt_share = 0.4;
};

void validate(const WorldConfig& config);

struct SyntheticWorld {
  PreferenceDataset dataset;
  ValidationSet validation;
  ValidationSet holdout;
  RewardParams true_reward;
  std::vector<ExampleId> planted_misleading_ids;  ///< ascending
  FeatureVector helpfulness_direction;  ///< h, unit length
  FeatureVector harm_direction;         ///< z, unit length, orthogonal to h
  FeatureVector caution_direction;      ///< c, unit length, orthogonal to h and z
};

/// Deterministic in (config, seed). Validation items carry no generated
/// response or label yet; the pipeline fills those from pi_0 and the judge.
SyntheticWorld generate_synthetic_world(const WorldConfig& config, std::uint64_t seed);

}  // namespace xrlhf
