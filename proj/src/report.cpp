#include "panelamm/report.hpp"

#include <openssl/evp.h>

#include <fstream>
#include <iomanip>
#include <memory>
#include <sstream>

namespace panelamm {

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

void Table::add_row(std::vector<std::string> row) {
  if (row.size() != header.size())
    throw DimensionError("table row has " + std::to_string(row.size()) + " fields, header has " +
                         std::to_string(header.size()));
  rows.push_back(std::move(row));
}

std::string Table::to_csv() const {
  std::ostringstream os;
  auto line = [&](const std::vector<std::string>& r) {
    for (std::size_t i = 0; i < r.size(); ++i) os << (i ? "," : "") << csv_field(r[i]);
    os << '\n';
  };
  line(header);
  for (const auto& r : rows) line(r);
  return os.str();
}

std::string sha256_hex(const std::string& bytes) {
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) != 1 ||
      EVP_DigestFinal_ex(ctx.get(), digest, &len) != 1)
    throw NumericError("SHA-256 computation failed");
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i)
    os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
  return os.str();
}

std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return sha256_hex(ss.str());
}

void ReportBundle::add_file(const std::string& relative_path, std::string contents) {
  if (relative_path.empty() || relative_path == "manifest.json")
    throw PreconditionError("invalid report path '" + relative_path + "'");
  files_[relative_path] = std::move(contents);
}

void ReportBundle::add_json(const std::string& relative_path, const nlohmann::json& j) {
  add_file(relative_path, dump_json(j));
}

void ReportBundle::add_table(const std::string& relative_path, const Table& table) {
  add_file(relative_path, table.to_csv());
}

const std::string& ReportBundle::contents(const std::string& relative_path) const {
  auto it = files_.find(relative_path);
  if (it == files_.end()) throw LookupError("report has no file '" + relative_path + "'");
  return it->second;
}

std::vector<std::string> ReportBundle::paths() const {
  std::vector<std::string> out;
  for (const auto& [p, c] : files_) out.push_back(p);
  return out;
}

nlohmann::json ReportBundle::manifest(nlohmann::json metadata) const {
  nlohmann::json outputs = nlohmann::json::array();
  for (const auto& [path, bytes] : files_)
    outputs.push_back({{"path", path}, {"sha256", sha256_hex(bytes)}, {"bytes", bytes.size()}});
  metadata["outputs"] = outputs;
  return metadata;
}

void ReportBundle::write(const std::filesystem::path& dir, nlohmann::json metadata) const {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());
  auto put = [&](const std::filesystem::path& rel, const std::string& bytes) {
    const auto target = dir / rel;
    if (target.has_parent_path()) {
      std::filesystem::create_directories(target.parent_path(), ec);
      if (ec) throw IoError("cannot create " + target.parent_path().string());
    }
    std::ofstream out(target, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + target.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for " + target.string());
  };
  for (const auto& [path, bytes] : files_) put(path, bytes);
  put("manifest.json", dump_json(manifest(std::move(metadata))));
}

std::string slug(const std::string& name) {
  std::string out;
  for (unsigned char c : name) {
    if (std::isalnum(c) || c == '-' || c == '.') out += static_cast<char>(c);
    else if (out.empty() || out.back() != '_') out += '_';
  }
  while (!out.empty() && out.back() == '_') out.pop_back();
  return out.empty() ? "term" : out;
}

std::string dump_json(const nlohmann::json& j) { return j.dump(2) + "\n"; }

}  // namespace panelamm
