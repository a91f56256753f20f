#include "safegp/emit.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "safegp/errors.hpp"

namespace safegp {

void RunRecord::add(std::vector<double> row) {
  if (row.size() != columns.size()) {
    throw UsageError("RunRecord '" + name + "': row width does not match the columns");
  }
  rows.push_back(std::move(row));
}

std::size_t RunRecord::column(const std::string& col) const {
  for (std::size_t i = 0; i < columns.size(); ++i) {
    if (columns[i] == col) return i;
  }
  throw UsageError("RunRecord '" + name + "': no column '" + col + "'");
}

std::vector<double> RunRecord::column_values(const std::string& col) const {
  const std::size_t c = column(col);
  std::vector<double> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(r[c]);
  return out;
}

std::string format_number(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  if (value == 0.0) return "0";  // folds -0
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

std::string to_csv(const RunRecord& record) {
  std::string out;
  for (std::size_t i = 0; i < record.columns.size(); ++i) {
    if (i) out += ',';
    out += record.columns[i];
  }
  out += '\n';
  for (const auto& row : record.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) out += ',';
      out += format_number(row[i]);
    }
    out += '\n';
  }
  return out;
}

std::string git_blob_hash(const std::string& content) {
  std::string blob = "blob " + std::to_string(content.size());
  blob += '\0';
  blob += content;
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(blob.data(), blob.size(), digest, &len, EVP_sha1(), nullptr) != 1) {
    throw IoError("SHA-1 digest failed");
  }
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    const unsigned char b = digest[i];
    out += hex[b >> 4];
    out += hex[b & 0xf];
  }
  return out;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  out.close();
  if (!out) throw IoError("failed writing " + path.string());
}

void emit(const std::vector<const RunRecord*>& records, const nlohmann::json& config,
          std::uint64_t seed, const nlohmann::json& summary, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());

  nlohmann::json files = nlohmann::json::object();
  for (const RunRecord* r : records) {
    const std::string file = r->name + ".csv";
    write_text(dir / file, to_csv(*r));
    files[file] = {{"columns", r->columns}, {"rows", r->rows.size()}};
  }
  const std::string config_text = config.dump(2);
  nlohmann::json manifest;
  manifest["config"] = config;
  manifest["config_hash"] = git_blob_hash(config_text);
  manifest["seed"] = seed;
  manifest["files"] = files;
  manifest["summary"] = summary;
  write_text(dir / "manifest.json", manifest.dump(2) + "\n");
}

}  // namespace safegp
