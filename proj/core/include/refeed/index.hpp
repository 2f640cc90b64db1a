#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "refeed/vecmath.hpp"

namespace refeed {

// Flat in-memory dense index: row-major float32 matrix plus doc ids.
// Vectors are stored exactly as given — no normalization, no
// quantization. Search is exhaustive.
class DenseIndex {
public:
  // Consumes (id, vector) records. Throws on duplicate ids (message
  // names the id) and on dimension mismatches against the first record.
  static DenseIndex build(std::vector<std::pair<std::string, Vector>> records);

  std::uint32_t dim() const { return dim_; }
  std::size_t size() const { return ids_.size(); }
  std::span<const float> row(std::size_t i) const {
    return {data_.data() + i * dim_, dim_};
  }
  const std::string& id(std::size_t i) const { return ids_[i]; }
  std::optional<std::size_t> row_of(std::string_view id) const;

  // Binary format, little-endian: "RFDX", u32 version (1), u32 dim,
  // u64 count, count*dim float32 row-major, then count ids as
  // u32-length-prefixed UTF-8. save() writes to a temp file and
  // renames. load() errors name the byte offset of the problem.
  void save(const std::filesystem::path& path) const;
  static DenseIndex load(const std::filesystem::path& path);

private:
  DenseIndex() = default;
  std::uint32_t dim_ = 0;
  std::vector<float> data_;
  std::vector<std::string> ids_;
  std::unordered_map<std::string, std::size_t> by_id_;
};

struct Candidate {
  std::string doc_id;
  double score;
  std::size_t row;
};

// Invariant: entries sorted by score descending, doc_id ascending on
// exact ties; no duplicate doc ids.
struct CandidateSet {
  std::string query_id;
  std::vector<Candidate> entries;
};

// Exhaustive top-k by float64 dot product. Scores equal dot(query,
// row(i)) bit-for-bit. Throws on dimension mismatch (empty index
// returns an empty set). k >= size() returns every row.
CandidateSet search(const DenseIndex& index, std::span<const float> query, std::size_t k,
                    std::string query_id = {});

}  // namespace refeed
