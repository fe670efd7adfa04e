#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "ricl/embed.hpp"

namespace ricl {

/// Binary embedding file layout (all integers little-endian):
///
///   "ICLE"  u32 version=1  u32 dim  u32 count
///   count x [ u32 id_len  id bytes (UTF-8)  dim x f32 ]
///
/// Components are narrowed to f32 on write; values read back are the
/// stored floats widened exactly to double.
std::string encode_embeddings_binary(const EmbeddingIndex& index);
EmbeddingIndex decode_embeddings_binary(std::string_view bytes, std::string source_tag = {});

/// Interchange format: one `{"id": ..., "vector": [...]}` object per line.
std::string encode_embeddings_jsonl(const EmbeddingIndex& index);
EmbeddingIndex decode_embeddings_jsonl(std::string_view content, std::string source_tag = {});

void write_embeddings(const std::filesystem::path& path, const EmbeddingIndex& index);
/// Detects the format from the magic bytes; anything else is read as JSONL.
EmbeddingIndex load_embeddings(const std::filesystem::path& path);

}  // namespace ricl
