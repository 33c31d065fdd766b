#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "xrlhf/types.hpp"

namespace xrlhf {

/// Reads `{"phi_w": [...], "phi_l": [...]}` records, one per line. Ids follow
/// file order and the dimension comes from the first record.
PreferenceDataset load_preference_dataset(const std::filesystem::path& path);
PreferenceDataset read_preference_dataset(std::istream& in);
void write_preference_dataset(std::ostream& out, const PreferenceDataset& data);
void save_preference_dataset(const std::filesystem::path& path, const PreferenceDataset& data);

/// Reads `{"candidates": [[...]], "generated_index": k, "score": s, "label": ...}`
/// records. Candidate counts may differ between items; dimensions may not.
ValidationSet load_validation_set(const std::filesystem::path& path);
ValidationSet read_validation_set(std::istream& in);
void write_validation_set(std::ostream& out, const ValidationSet& items);
void save_validation_set(const std::filesystem::path& path, const ValidationSet& items);

/// Non-blank lines of a line-delimited JSON file, each paired with its line number.
std::vector<std::pair<std::size_t, nlohmann::json>> read_json_lines(std::istream& in);

void write_text_file(const std::filesystem::path& path, const std::string& text);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace xrlhf
