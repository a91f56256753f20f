#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace safegp {

/// Named numeric table; one CSV file per record.
struct RunRecord {
  std::string name;
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;

  RunRecord() = default;
  RunRecord(std::string name, std::vector<std::string> columns)
      : name(std::move(name)), columns(std::move(columns)) {}

  void add(std::vector<double> row);
  std::size_t column(const std::string& name) const;
  std::vector<double> column_values(const std::string& name) const;
};

/// Shortest round-trip decimal form; identical input gives identical text.
std::string format_number(double value);
std::string to_csv(const RunRecord& record);

/// SHA-1 of "blob <size>\0<content>", as git computes for a file holding `content`.
std::string git_blob_hash(const std::string& content);

void write_text(const std::filesystem::path& path, const std::string& text);

/// Writes <dir>/<name>.csv for each record and <dir>/manifest.json holding the config echo,
/// the seed, the config hash, the column order of every CSV and `summary`.
void emit(const std::vector<const RunRecord*>& records, const nlohmann::json& config,
          std::uint64_t seed, const nlohmann::json& summary, const std::filesystem::path& dir);

}  // namespace safegp
