#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "refeed/vecmath.hpp"

namespace refeed {

// Writes via a sibling temp file and rename, so readers never observe
// a partial file.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

std::string read_file(const std::filesystem::path& path);

// Embedding records, one JSON object per line: {"id": "...", "vector": [...]}.
// Parse errors name the 1-based line number. Values are parsed as
// float64 and stored as float32.
std::vector<std::pair<std::string, Vector>> read_embeddings_jsonl(
    const std::filesystem::path& path);

std::string embeddings_jsonl(const std::vector<std::pair<std::string, Vector>>& records);

// Shortest decimal form that round-trips a float32 (%.9g).
std::string format_f32(float v);

std::string sha256_hex(std::string_view bytes);
std::string sha256_hex_file(const std::filesystem::path& path);

}  // namespace refeed
