#include "ricl/embed_io.hpp"

#include <bit>
#include <cstdint>
#include <cstring>

#include <json.hpp>

#include "ricl/error.hpp"
#include "ricl/io.hpp"
#include "ricl/text.hpp"

namespace ricl {

namespace {

constexpr std::string_view kMagic = "ICLE";
constexpr std::uint32_t kVersion = 1;

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += 4;
    return v;
  }

  std::string_view take(std::size_t n, const char* what) {
    need(n, what);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n) {
      throw DataError(std::string("embedding file truncated while reading ") + what);
    }
  }

  std::string_view bytes_;
  std::size_t pos_ = 0;
};

std::uint32_t checked_u32(std::size_t v, const char* what) {
  if (v > 0xFFFFFFFFu) throw DataError(std::string(what) + " exceeds u32 range");
  return static_cast<std::uint32_t>(v);
}

}  // namespace

std::string encode_embeddings_binary(const EmbeddingIndex& index) {
  std::string out(kMagic);
  put_u32(out, kVersion);
  put_u32(out, checked_u32(index.dim(), "dim"));
  put_u32(out, checked_u32(index.size(), "count"));
  for (const auto& [id, vec] : index.entries()) {
    put_u32(out, checked_u32(id.size(), "id length"));
    out += id;
    for (double x : vec.values()) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(x)));
  }
  return out;
}

EmbeddingIndex decode_embeddings_binary(std::string_view bytes, std::string source_tag) {
  Reader r(bytes);
  if (r.take(kMagic.size(), "magic") != kMagic) throw DataError("not an ICLE embedding file");
  const std::uint32_t version = r.u32("version");
  if (version != kVersion) {
    throw DataError("unsupported embedding file version " + std::to_string(version));
  }
  const std::uint32_t dim = r.u32("dim");
  const std::uint32_t count = r.u32("count");
  if (dim == 0) throw DataError("embedding file declares dim 0");
  EmbeddingIndex index(std::move(source_tag));
  for (std::uint32_t n = 0; n < count; ++n) {
    const std::uint32_t id_len = r.u32("id length");
    std::string id(r.take(id_len, "id"));
    if (!text::is_valid_utf8(id)) throw DataError("record " + std::to_string(n) + ": id is not UTF-8");
    std::vector<double> values(dim);
    for (auto& x : values) x = static_cast<double>(std::bit_cast<float>(r.u32("vector")));
    try {
      index.add(std::move(id), EmbeddingVector(std::move(values)));
    } catch (const std::invalid_argument& e) {
      throw DataError("record " + std::to_string(n) + ": " + e.what());
    }
  }
  if (!r.done()) throw DataError("embedding file has trailing bytes after " + std::to_string(count) + " records");
  return index;
}

std::string encode_embeddings_jsonl(const EmbeddingIndex& index) {
  std::string out;
  for (const auto& [id, vec] : index.entries()) {
    nlohmann::ordered_json j;
    j["id"] = id;
    auto& arr = j["vector"] = nlohmann::ordered_json::array();
    for (double x : vec.values()) arr.push_back(static_cast<float>(x));
    out += j.dump();
    out += '\n';
  }
  return out;
}

EmbeddingIndex decode_embeddings_jsonl(std::string_view content, std::string source_tag) {
  EmbeddingIndex index(std::move(source_tag));
  std::size_t pos = 0;
  std::size_t line_no = 0;
  while (pos < content.size()) {
    std::size_t end = content.find('\n', pos);
    if (end == std::string_view::npos) end = content.size();
    std::string_view line = content.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (text::trim(line).empty()) continue;
    const std::string where = "line " + std::to_string(line_no) + ": ";
    try {
      auto j = nlohmann::json::parse(line);
      std::vector<double> values;
      for (const auto& v : j.at("vector")) {
        // Narrow through f32 so JSONL and binary loads agree exactly.
        values.push_back(static_cast<double>(static_cast<float>(v.get<double>())));
      }
      index.add(j.at("id").get<std::string>(), EmbeddingVector(std::move(values)));
    } catch (const nlohmann::json::exception& e) {
      throw DataError(where + e.what());
    } catch (const std::invalid_argument& e) {
      throw DataError(where + e.what());
    } catch (const DataError& e) {
      throw DataError(where + e.what());
    }
  }
  if (index.empty()) throw DataError("embedding file has no records");
  return index;
}

void write_embeddings(const std::filesystem::path& path, const EmbeddingIndex& index) {
  const bool jsonl = path.extension() == ".jsonl" || path.extension() == ".json";
  io::write_file(path, jsonl ? encode_embeddings_jsonl(index) : encode_embeddings_binary(index));
}

EmbeddingIndex load_embeddings(const std::filesystem::path& path) {
  std::string bytes = io::read_file(path);
  try {
    if (bytes.size() >= kMagic.size() && std::string_view(bytes).substr(0, 4) == kMagic) {
      return decode_embeddings_binary(bytes, path.string());
    }
    return decode_embeddings_jsonl(bytes, path.string());
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

}  // namespace ricl
