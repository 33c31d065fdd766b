#include "xrlhf/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "xrlhf/errors.hpp"
#include "xrlhf/kernels.hpp"
#include "xrlhf/rng.hpp"

namespace xrlhf {

void validate(const WorldConfig& c) {
  if (c.dim < 3) throw ConfigError("synthetic.dim must be >= 3");
  if (c.num_train == 0) throw ConfigError("synthetic.num_train must be >= 1");
  if (c.candidates < 2) throw ConfigError("synthetic.candidates must be >= 2");
  if (!(c.misleading_fraction >= 0.0 && c.misleading_fraction < 1.0))
    throw ConfigError("synthetic.misleading_fraction must lie in [0, 1)");
  if (!(c.noise_scale >= 0.0)) throw ConfigError("synthetic.noise_scale must be >= 0");
  if (!(c.train_tempting_share >= 0.0 && c.train_good_share >= 0.0 &&
        c.train_tempting_share + c.train_good_share <= 1.0))
    throw ConfigError("synthetic train shares must be >= 0 and sum to at most 1");
  if (!(c.bold_share >= 0.0 && c.bold_share <= 1.0)) throw ConfigError("synthetic.bold_share must lie in [0, 1]");
  if (!(c.bold_harm >= 0.0)) throw ConfigError("synthetic.bold_harm must be >= 0");
  if (!(c.cautious_helpfulness >= 0.0 && c.caution_level >= 0.0 && c.refusal_helpfulness >= 0.0 &&
        c.refusal_caution >= 0.0))
    throw ConfigError("synthetic caution and refusal levels must be >= 0");
  if (!(c.refusal_share >= 0.0 && c.refusal_share <= 1.0))
    throw ConfigError("synthetic.refusal_share must lie in [0, 1]");
  if (!(c.risky_prompt_share >= 0.0 && c.risky_prompt_share <= 1.0))
    throw ConfigError("synthetic.risky_prompt_share must lie in [0, 1]");
}

namespace {

enum class Kind { Neutral, Good, Cautious, Refusal, Tempting, Bold };

class WorldSampler {
 public:
  WorldSampler(const WorldConfig& config, std::mt19937_64& gen) : c_(config), gen_(gen) {
    // Random orthonormal frame: h, z, c.
    std::normal_distribution<double> normal(0.0, 1.0);
    for (std::size_t k = 0; k < 3; ++k) {
      FeatureVector v(c_.dim);
      for (double& x : v) x = normal(gen_);
      for (const auto& u : frame_) {
        const double p = kernels::dot(v, u);
        for (std::size_t j = 0; j < v.size(); ++j) v[j] -= p * u[j];
      }
      const double norm = std::sqrt(kernels::squared_norm(v));
      for (double& x : v) x /= norm;
      frame_.push_back(std::move(v));
    }
    theta_.resize(c_.dim);
    const double norm = std::sqrt(1.0 + c_.harm_weight * c_.harm_weight);
    for (std::size_t j = 0; j < c_.dim; ++j) theta_[j] = (help()[j] - c_.harm_weight * harm()[j]) / norm;
  }

  const FeatureVector& help() const { return frame_[0]; }
  const FeatureVector& harm() const { return frame_[1]; }
  const FeatureVector& caution() const { return frame_[2]; }
  const FeatureVector& theta() const { return theta_; }

  FeatureVector response(Kind kind) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> noise(0.0, c_.noise_scale);
    double a_help = 0.0;
    double a_harm = 0.0;
    double a_caution = 0.0;
    switch (kind) {
      case Kind::Neutral: a_help = unit(gen_); break;
      case Kind::Good: a_help = c_.good_helpfulness * (0.85 + 0.3 * unit(gen_)); break;
      case Kind::Cautious:
        a_help = c_.cautious_helpfulness * c_.good_helpfulness * (0.85 + 0.3 * unit(gen_));
        a_caution = c_.caution_level * (0.85 + 0.3 * unit(gen_));
        break;
      case Kind::Refusal:
        a_help = c_.refusal_helpfulness * (0.85 + 0.3 * unit(gen_));
        a_caution = c_.refusal_caution * (0.85 + 0.3 * unit(gen_));
        break;
      case Kind::Tempting:
        a_help = c_.tempting_helpfulness * (0.85 + 0.3 * unit(gen_));
        a_harm = c_.tempting_harm * (0.85 + 0.3 * unit(gen_));
        break;
      case Kind::Bold:
        a_help = c_.tempting_helpfulness * (0.85 + 0.3 * unit(gen_));
        a_harm = c_.bold_harm * (0.85 + 0.3 * unit(gen_));
        break;
    }
    // Noise stays off the harm axis: harm is either present by design or absent.
    FeatureVector eps(c_.dim);
    for (double& x : eps) x = noise(gen_);
    const double off = kernels::dot(eps, harm());
    FeatureVector phi(c_.dim);
    for (std::size_t j = 0; j < c_.dim; ++j)
      phi[j] = a_help * help()[j] + (a_harm - off) * harm()[j] + a_caution * caution()[j] + eps[j];
    return phi;
  }

  Kind tempting_kind() {
    std::bernoulli_distribution bold(c_.bold_share);
    return bold(gen_) ? Kind::Bold : Kind::Tempting;
  }

  Kind train_kind() {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double u = unit(gen_);
    if (u < c_.train_tempting_share) return tempting_kind();
    if (u < c_.train_tempting_share + 0.5 * c_.train_good_share) return Kind::Good;
    if (u < c_.train_tempting_share + c_.train_good_share) return Kind::Cautious;
    return Kind::Neutral;
  }

  double true_reward(const FeatureVector& phi) const { return kernels::dot(theta_, phi); }

  PreferenceExample clean_pair() {
    for (;;) {
      auto a = response(train_kind());
      auto b = response(train_kind());
      const double margin = true_reward(a) - true_reward(b);
      if (std::abs(margin) < 1e-3) continue;
      if (margin < 0.0) std::swap(a, b);
      return {0, std::move(a), std::move(b)};
    }
  }

  PreferenceExample misleading_pair() {
    for (;;) {
      auto w = response(Kind::Tempting);
      auto l = response(Kind::Cautious);
      if (true_reward(w) - true_reward(l) < -1e-3) return {0, std::move(w), std::move(l)};
    }
  }

  ValidationItem item(bool risky) {
    std::bernoulli_distribution refusal(c_.refusal_share);
    std::vector<FeatureVector> cands;
    if (risky) {
      cands.push_back(response(Kind::Cautious));
      cands.push_back(response(tempting_kind()));
    } else {
      cands.push_back(response(Kind::Good));
      if (refusal(gen_)) cands.push_back(response(Kind::Refusal));
    }
    while (cands.size() < c_.candidates) cands.push_back(response(Kind::Neutral));
    std::shuffle(cands.begin(), cands.end(), gen_);
    ValidationItem it;
    it.candidate_features = std::move(cands);
    it.score = std::nan("");
    return it;
  }

 private:
  const WorldConfig& c_;
  std::mt19937_64& gen_;
  std::vector<FeatureVector> frame_;
  FeatureVector theta_;
};

ValidationSet make_items(WorldSampler& sampler, std::size_t count, double risky_share, std::mt19937_64& gen) {
  std::bernoulli_distribution risky(risky_share);
  ValidationSet set;
  for (std::size_t k = 0; k < count; ++k) {
    auto it = sampler.item(risky(gen));
    it.id = k;
    set.items.push_back(std::move(it));
  }
  set.recount();
  return set;
}

}  // namespace

SyntheticWorld generate_synthetic_world(const WorldConfig& config, std::uint64_t seed) {
  validate(config);
  auto gen = make_stream(seed, "data");
  WorldSampler sampler(config, gen);

  SyntheticWorld world;
  world.true_reward.theta = sampler.theta();
  world.helpfulness_direction = sampler.help();
  world.harm_direction = sampler.harm();
  world.caution_direction = sampler.caution();

  const auto misleading = static_cast<std::size_t>(std::llround(config.misleading_fraction * config.num_train));
  std::vector<bool> planted(config.num_train, false);
  std::fill(planted.begin(), planted.begin() + misleading, true);
  std::shuffle(planted.begin(), planted.end(), gen);

  world.dataset.dim = config.dim;
  for (std::size_t i = 0; i < config.num_train; ++i) {
    auto ex = planted[i] ? sampler.misleading_pair() : sampler.clean_pair();
    ex.id = i;
    world.dataset.examples.push_back(std::move(ex));
    if (planted[i]) world.planted_misleading_ids.push_back(i);
  }

  world.validation = make_items(sampler, config.num_validation, config.risky_prompt_share, gen);
  world.holdout = make_items(sampler, config.num_holdout, config.risky_prompt_share, gen);
  return world;
}

}  // namespace xrlhf
