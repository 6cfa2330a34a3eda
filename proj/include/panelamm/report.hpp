#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "panelamm/errors.hpp"

namespace panelamm {

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  void add_row(std::vector<std::string> row);
  std::string to_csv() const;
};

std::string sha256_hex(const std::string& bytes);
std::string sha256_file(const std::filesystem::path& path);

// In-memory output tree. Nothing touches the disk until write(), so a run
// that fails half-way leaves no partial files unless asked to.
class ReportBundle {
 public:
  void add_file(const std::string& relative_path, std::string contents);
  void add_json(const std::string& relative_path, const nlohmann::json& j);
  void add_table(const std::string& relative_path, const Table& table);

  bool contains(const std::string& relative_path) const { return files_.count(relative_path) > 0; }
  const std::string& contents(const std::string& relative_path) const;
  std::size_t size() const { return files_.size(); }
  std::vector<std::string> paths() const;

  // Manifest listing every file (sorted by path) with SHA-256 and byte size,
  // merged into `metadata` under "outputs".
  nlohmann::json manifest(nlohmann::json metadata = nlohmann::json::object()) const;

  // Writes all files plus manifest.json under dir. IoError if unwritable.
  void write(const std::filesystem::path& dir,
             nlohmann::json metadata = nlohmann::json::object()) const;

 private:
  std::map<std::string, std::string> files_;
};

// File-name-safe form of a term or label.
std::string slug(const std::string& name);

std::string dump_json(const nlohmann::json& j);

}  // namespace panelamm
