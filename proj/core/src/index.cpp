#include "refeed/index.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <queue>
#include <stdexcept>

#include "refeed/io.hpp"

namespace refeed {

DenseIndex DenseIndex::build(std::vector<std::pair<std::string, Vector>> records) {
  DenseIndex idx;
  idx.ids_.reserve(records.size());
  for (auto& [id, vec] : records) {
    if (idx.ids_.empty()) {
      idx.dim_ = static_cast<std::uint32_t>(vec.size());
    } else if (vec.size() != idx.dim_) {
      throw std::invalid_argument("index build: vector for '" + id + "' has dim " +
                                  std::to_string(vec.size()) + ", expected " +
                                  std::to_string(idx.dim_));
    }
    if (!idx.by_id_.emplace(id, idx.ids_.size()).second) {
      throw std::invalid_argument("index build: duplicate id '" + id + "'");
    }
    idx.data_.insert(idx.data_.end(), vec.begin(), vec.end());
    idx.ids_.push_back(std::move(id));
  }
  return idx;
}

std::optional<std::size_t> DenseIndex::row_of(std::string_view id) const {
  auto it = by_id_.find(std::string(id));
  return it == by_id_.end() ? std::nullopt : std::make_optional(it->second);
}

namespace {

constexpr char kMagic[4] = {'R', 'F', 'D', 'X'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

// Cursor with offset-carrying error messages.
struct Reader {
  const std::string& buf;
  std::size_t pos = 0;

  void need(std::size_t n, const char* what) const {
    if (buf.size() - pos < n) {
      throw std::runtime_error("index load: truncated reading " + std::string(what) +
                               " at offset " + std::to_string(pos) + ": need " +
                               std::to_string(n) + " bytes, have " +
                               std::to_string(buf.size() - pos));
    }
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
    pos += 4;
    return v;
  }
  std::uint64_t u64(const char* what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
    pos += 8;
    return v;
  }
};

}  // namespace

void DenseIndex::save(const std::filesystem::path& path) const {
  std::string out;
  out.reserve(4 + 4 + 4 + 8 + data_.size() * 4 + ids_.size() * 12);
  out.append(kMagic, 4);
  put_u32(out, kVersion);
  put_u32(out, dim_);
  put_u64(out, ids_.size());
  for (float f : data_) put_u32(out, std::bit_cast<std::uint32_t>(f));
  for (const std::string& id : ids_) {
    put_u32(out, static_cast<std::uint32_t>(id.size()));
    out += id;
  }
  write_file_atomic(path, out);
}

DenseIndex DenseIndex::load(const std::filesystem::path& path) {
  const std::string buf = read_file(path);
  Reader r{buf};
  r.need(4, "magic");
  if (std::memcmp(buf.data(), kMagic, 4) != 0) {
    throw std::runtime_error("index load: bad magic at offset 0 in " + path.string());
  }
  r.pos = 4;
  const std::uint32_t version = r.u32("version");
  if (version != kVersion) {
    throw std::runtime_error("index load: unsupported version " + std::to_string(version) +
                             " at offset 4");
  }
  DenseIndex idx;
  idx.dim_ = r.u32("dim");
  const std::uint64_t count = r.u64("count");
  r.need(count * idx.dim_ * 4, "vector data");
  idx.data_.resize(count * idx.dim_);
  for (std::size_t i = 0; i < idx.data_.size(); ++i) {
    std::uint32_t bits = 0;
    std::memcpy(&bits, buf.data() + r.pos + i * 4, 4);
    idx.data_[i] = std::bit_cast<float>(bits);
  }
  r.pos += count * idx.dim_ * 4;
  idx.ids_.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::uint32_t len = r.u32("id length");
    r.need(len, "id bytes");
    std::string id = buf.substr(r.pos, len);
    r.pos += len;
    if (!idx.by_id_.emplace(id, idx.ids_.size()).second) {
      throw std::runtime_error("index load: duplicate id '" + id + "'");
    }
    idx.ids_.push_back(std::move(id));
  }
  if (r.pos != buf.size()) {
    throw std::runtime_error("index load: " + std::to_string(buf.size() - r.pos) +
                             " trailing bytes at offset " + std::to_string(r.pos));
  }
  return idx;
}

CandidateSet search(const DenseIndex& index, std::span<const float> query, std::size_t k,
                    std::string query_id) {
  CandidateSet result{std::move(query_id), {}};
  if (index.size() == 0 || k == 0) return result;
  if (query.size() != index.dim()) {
    throw std::invalid_argument("search: query dim " + std::to_string(query.size()) +
                                " does not match index dim " + std::to_string(index.dim()));
  }

  // Heap of the current top k with the weakest survivor on top
  // (priority_queue treats the comparator as less-than, so "better"
  // floats the worst entry up). Ties break toward the smaller doc id.
  struct Entry {
    double score;
    std::size_t row;
  };
  const auto better = [&](const Entry& x, const Entry& y) {
    if (x.score != y.score) return x.score > y.score;
    return index.id(x.row) < index.id(y.row);
  };
  std::priority_queue<Entry, std::vector<Entry>, decltype(better)> heap(better);
  for (std::size_t i = 0; i < index.size(); ++i) {
    Entry e{dot(query, index.row(i)), i};
    if (heap.size() < k) {
      heap.push(e);
    } else if (better(e, heap.top())) {
      heap.pop();
      heap.push(e);
    }
  }

  result.entries.resize(heap.size());
  for (std::size_t i = heap.size(); i-- > 0;) {
    const Entry e = heap.top();
    heap.pop();
    result.entries[i] = Candidate{index.id(e.row), e.score, e.row};
  }
  return result;
}

}  // namespace refeed
