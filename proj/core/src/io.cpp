#include "refeed/io.hpp"

#include <openssl/evp.h>

#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <sstream>
#include <stdexcept>

namespace refeed {

void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw std::runtime_error("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return std::move(buf).str();
}

std::string format_f32(float v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", static_cast<double>(v));
  return buf;
}

std::vector<std::pair<std::string, Vector>> read_embeddings_jsonl(
    const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<std::pair<std::string, Vector>> records;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json obj = nlohmann::json::parse(line, nullptr, false);
    if (obj.is_discarded() || !obj.is_object() || !obj.contains("id") ||
        !obj.contains("vector") || !obj["id"].is_string() || !obj["vector"].is_array()) {
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) +
                               ": expected {\"id\": str, \"vector\": [num...]}");
    }
    Vector vec;
    vec.reserve(obj["vector"].size());
    for (const auto& v : obj["vector"]) {
      if (!v.is_number()) {
        throw std::runtime_error(path.string() + ":" + std::to_string(lineno) +
                                 ": non-numeric vector entry");
      }
      vec.push_back(static_cast<float>(v.get<double>()));
    }
    records.emplace_back(obj["id"].get<std::string>(), std::move(vec));
  }
  return records;
}

std::string embeddings_jsonl(const std::vector<std::pair<std::string, Vector>>& records) {
  std::string out;
  for (const auto& [id, vec] : records) {
    out += "{\"id\":";
    out += nlohmann::json(id).dump();
    out += ",\"vector\":[";
    for (std::size_t i = 0; i < vec.size(); ++i) {
      if (i) out += ',';
      out += format_f32(vec[i]);
    }
    out += "]}\n";
  }
  return out;
}

std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (!EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr)) {
    throw std::runtime_error("sha256 failed");
  }
  static const char* hex = "0123456789abcdef";
  std::string out(len * 2, '0');
  for (unsigned int i = 0; i < len; ++i) {
    out[2 * i] = hex[digest[i] >> 4];
    out[2 * i + 1] = hex[digest[i] & 0xF];
  }
  return out;
}

std::string sha256_hex_file(const std::filesystem::path& path) {
  return sha256_hex(read_file(path));
}

}  // namespace refeed
