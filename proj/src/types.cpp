#include "xrlhf/types.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "xrlhf/errors.hpp"

namespace xrlhf {

std::string_view label_name(Label label) {
  return label == Label::Unsatisfactory ? "unsat" : "sat";
}

void ValidationSet::recount() {
  unsatisfactory_count = static_cast<std::size_t>(
      std::count_if(items.begin(), items.end(),
                    [](const ValidationItem& it) { return it.label == Label::Unsatisfactory; }));
}

FeatureVector feature_comparison(const PreferenceExample& example) {
  if (example.phi_w.size() != example.phi_l.size())
    throw DimensionError("feature_comparison: phi_w and phi_l differ in dimension");
  FeatureVector delta(example.phi_w.size());
  for (std::size_t j = 0; j < delta.size(); ++j) delta[j] = example.phi_w[j] - example.phi_l[j];
  return delta;
}

std::vector<FeatureVector> feature_comparisons(const PreferenceDataset& data) {
  std::vector<FeatureVector> out;
  out.reserve(data.size());
  for (const auto& ex : data.examples) out.push_back(feature_comparison(ex));
  return out;
}

ValidationSet partition_by_threshold(ValidationSet items, double threshold) {
  for (auto& item : items.items) {
    if (!std::isfinite(item.score))
      throw Error("partition_by_threshold: item " + std::to_string(item.id) +
                  " has a non-finite score");
    item.label = item.score < threshold ? Label::Unsatisfactory : Label::Satisfactory;
  }
  items.recount();
  return items;
}

ValidationSet select_label(const ValidationSet& items, Label label) {
  ValidationSet out;
  for (const auto& item : items.items)
    if (item.label == label) out.items.push_back(item);
  out.recount();
  return out;
}

PreferenceDataset subset_by_ids(const PreferenceDataset& data, std::span<const ExampleId> ids) {
  PreferenceDataset out;
  out.dim = data.dim;
  out.examples.reserve(ids.size());
  for (ExampleId id : ids) {
    if (id >= data.size()) throw Error("subset_by_ids: id " + std::to_string(id) + " out of range");
    out.examples.push_back(data.examples[id]);
  }
  return out;
}

PreferenceDataset remove_ids(const PreferenceDataset& data, std::span<const ExampleId> ids) {
  std::vector<bool> drop(data.size(), false);
  for (ExampleId id : ids) {
    if (id >= data.size()) throw Error("remove_ids: id " + std::to_string(id) + " out of range");
    drop[id] = true;
  }
  PreferenceDataset out;
  out.dim = data.dim;
  for (const auto& ex : data.examples) {
    if (drop[ex.id]) continue;
    auto copy = ex;
    copy.id = out.examples.size();
    out.examples.push_back(std::move(copy));
  }
  return out;
}

void check_finite(std::span<const double> v, std::string_view what) {
  for (double x : v)
    if (!std::isfinite(x)) throw Error(std::string(what) + ": non-finite value");
}

void check_dataset(const PreferenceDataset& data) {
  if (data.empty()) throw Error("preference dataset is empty");
  for (const auto& ex : data.examples)
    if (ex.phi_w.size() != data.dim || ex.phi_l.size() != data.dim)
      throw DimensionError("example " + std::to_string(ex.id) + " does not match dimension " +
                           std::to_string(data.dim));
}

}  // namespace xrlhf
