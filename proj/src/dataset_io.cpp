#include "xrlhf/dataset_io.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "xrlhf/errors.hpp"

namespace xrlhf {

using nlohmann::json;

namespace {

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  return in;
}

std::ofstream open_output(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  return out;
}

FeatureVector parse_vector(const json& j, std::size_t line, const char* field) {
  if (!j.is_array()) throw ParseError(line, std::string(field) + " is not an array");
  FeatureVector v;
  v.reserve(j.size());
  for (const auto& x : j) {
    if (!x.is_number()) throw ParseError(line, std::string(field) + " has a non-numeric entry");
    const double d = x.get<double>();
    if (!std::isfinite(d)) throw ParseError(line, std::string(field) + " has a non-finite entry");
    v.push_back(d);
  }
  if (v.empty()) throw ParseError(line, std::string(field) + " is empty");
  return v;
}

const json& field(const json& record, const char* name, std::size_t line) {
  auto it = record.find(name);
  if (it == record.end()) throw ParseError(line, std::string("missing field \"") + name + "\"");
  return *it;
}

}  // namespace

std::vector<std::pair<std::size_t, json>> read_json_lines(std::istream& in) {
  std::vector<std::pair<std::size_t, json>> out;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.emplace_back(line, json::parse(text));
    } catch (const json::exception& e) {
      throw ParseError(line, std::string("malformed record: ") + e.what());
    }
    if (!out.back().second.is_object()) throw ParseError(line, "record is not an object");
  }
  return out;
}

PreferenceDataset read_preference_dataset(std::istream& in) {
  PreferenceDataset data;
  for (const auto& [line, record] : read_json_lines(in)) {
    PreferenceExample ex;
    ex.id = data.examples.size();
    ex.phi_w = parse_vector(field(record, "phi_w", line), line, "phi_w");
    ex.phi_l = parse_vector(field(record, "phi_l", line), line, "phi_l");
    if (data.examples.empty()) data.dim = ex.phi_w.size();
    if (ex.phi_w.size() != data.dim || ex.phi_l.size() != data.dim)
      throw ParseError(line, "dimension mismatch: expected " + std::to_string(data.dim));
    data.examples.push_back(std::move(ex));
  }
  if (data.empty()) throw ParseError(0, "empty preference dataset");
  return data;
}

PreferenceDataset load_preference_dataset(const std::filesystem::path& path) {
  auto in = open_input(path);
  return read_preference_dataset(in);
}

void write_preference_dataset(std::ostream& out, const PreferenceDataset& data) {
  for (const auto& ex : data.examples) out << json{{"phi_w", ex.phi_w}, {"phi_l", ex.phi_l}}.dump() << '\n';
}

void save_preference_dataset(const std::filesystem::path& path, const PreferenceDataset& data) {
  auto out = open_output(path);
  write_preference_dataset(out, data);
}

ValidationSet read_validation_set(std::istream& in) {
  ValidationSet set;
  std::size_t dim = 0;
  for (const auto& [line, record] : read_json_lines(in)) {
    ValidationItem item;
    item.id = set.items.size();
    const auto& cands = field(record, "candidates", line);
    if (!cands.is_array() || cands.empty()) throw ParseError(line, "candidates must be a non-empty array");
    for (const auto& c : cands) {
      item.candidate_features.push_back(parse_vector(c, line, "candidates"));
      if (dim == 0) dim = item.candidate_features.back().size();
      if (item.candidate_features.back().size() != dim)
        throw ParseError(line, "dimension mismatch: expected " + std::to_string(dim));
    }
    const auto& gi = field(record, "generated_index", line);
    if (!gi.is_number_integer()) throw ParseError(line, "generated_index is not an integer");
    const auto k = gi.get<long long>();
    if (k < 0 || static_cast<std::size_t>(k) >= item.candidate_features.size())
      throw ParseError(line, "generated_index " + std::to_string(k) + " out of range");
    item.generated_index = static_cast<std::size_t>(k);

    item.score = std::nan("");
    if (auto it = record.find("score"); it != record.end() && !it->is_null()) {
      if (!it->is_number()) throw ParseError(line, "score is not a number");
      item.score = it->get<double>();
    }
    if (auto it = record.find("label"); it != record.end() && !it->is_null()) {
      const auto s = it->is_string() ? it->get<std::string>() : std::string();
      if (s == "sat") item.label = Label::Satisfactory;
      else if (s == "unsat") item.label = Label::Unsatisfactory;
      else throw ParseError(line, "label must be \"sat\", \"unsat\" or null");
    }
    if (auto it = record.find("sft"); it != record.end() && !it->is_null()) {
      auto probs = parse_vector(*it, line, "sft");
      if (probs.size() != item.candidate_features.size())
        throw ParseError(line, "sft length does not match candidate count");
      item.sft_probs = std::move(probs);
    }
    set.items.push_back(std::move(item));
  }
  set.recount();
  return set;
}

ValidationSet load_validation_set(const std::filesystem::path& path) {
  auto in = open_input(path);
  return read_validation_set(in);
}

void write_validation_set(std::ostream& out, const ValidationSet& items) {
  for (const auto& item : items.items) {
    json j;
    j["candidates"] = item.candidate_features;
    j["generated_index"] = item.generated_index;
    j["score"] = std::isfinite(item.score) ? json(item.score) : json(nullptr);
    j["label"] = item.label ? json(std::string(label_name(*item.label))) : json(nullptr);
    if (item.sft_probs) j["sft"] = *item.sft_probs;
    out << j.dump() << '\n';
  }
}

void save_validation_set(const std::filesystem::path& path, const ValidationSet& items) {
  auto out = open_output(path);
  write_validation_set(out, items);
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  auto out = open_output(path);
  out << text;
}

std::string read_text_file(const std::filesystem::path& path) {
  auto in = open_input(path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace xrlhf
