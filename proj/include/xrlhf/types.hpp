#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace xrlhf {

using FeatureVector = std::vector<double>;
using ExampleId = std::size_t;

/// One preference triple (x, y_w, y_l), held as the features of the preferred
/// and rejected responses.
struct PreferenceExample {
  ExampleId id = 0;
  FeatureVector phi_w;
  FeatureVector phi_l;
};

struct PreferenceDataset {
  std::vector<PreferenceExample> examples;
  std::size_t dim = 0;

  std::size_t size() const { return examples.size(); }
  bool empty() const { return examples.empty(); }
};

enum class Label { Satisfactory, Unsatisfactory };

std::string_view label_name(Label label);

/// A validation prompt with its enumerated candidate responses.
struct ValidationItem {
  std::size_t id = 0;
  std::vector<FeatureVector> candidate_features;
  std::size_t generated_index = 0;
  double score = 0.0;
  std::optional<Label> label;
  /// Optional SFT distribution over the candidates; uniform when absent.
  std::optional<std::vector<double>> sft_probs;

  std::size_t num_candidates() const { return candidate_features.size(); }
  const FeatureVector& generated() const { return candidate_features[generated_index]; }
};

struct ValidationSet {
  std::vector<ValidationItem> items;
  std::size_t unsatisfactory_count = 0;

  std::size_t size() const { return items.size(); }
  void recount();
};

/// Δφ = φ(x, y_w) − φ(x, y_l).
FeatureVector feature_comparison(const PreferenceExample& example);
std::vector<FeatureVector> feature_comparisons(const PreferenceDataset& data);

/// Labels items with score strictly below `threshold` as Unsatisfactory.
ValidationSet partition_by_threshold(ValidationSet items, double threshold);

/// Items carrying the given label, in their original order.
ValidationSet select_label(const ValidationSet& items, Label label);

/// Subset of `data` with the listed ids, ids preserved.
PreferenceDataset subset_by_ids(const PreferenceDataset& data, std::span<const ExampleId> ids);
/// Complement of `subset_by_ids`; ids are reassigned in load order.
PreferenceDataset remove_ids(const PreferenceDataset& data, std::span<const ExampleId> ids);

void check_dataset(const PreferenceDataset& data);
void check_finite(std::span<const double> v, std::string_view what);

}  // namespace xrlhf
