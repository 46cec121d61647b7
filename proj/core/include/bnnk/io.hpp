#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

namespace bnnk::io {

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  /// Index of a named column; throws std::out_of_range if absent.
  std::size_t column(const std::string& name) const;
  std::vector<double> column_values(const std::string& name) const;
};

/// Parses a numeric CSV with a header line. Empty fields, non-numeric fields
/// and ragged rows raise std::runtime_error naming the line.
CsvTable read_csv(const std::filesystem::path& path);
void write_csv(const std::filesystem::path& path, const CsvTable& table);
std::string format_csv(const CsvTable& table);

/// Writes via a temporary sibling and rename, so readers never see partial files.
void write_text_atomic(const std::filesystem::path& path, const std::string& text);

nlohmann::json read_json(const std::filesystem::path& path);
void write_json(const std::filesystem::path& path, const nlohmann::json& j);

/// 64-bit FNV-1a.
std::uint64_t fnv1a(const std::string& bytes);
/// Hex digest of the canonical (sorted-key, compact) dump of j.
std::string config_hash(const nlohmann::json& j);

/// Shortest round-trip decimal representation.
std::string format_double(double x);

}  // namespace bnnk::io
