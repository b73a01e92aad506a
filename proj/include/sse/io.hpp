#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "sse/codebook.hpp"
#include "sse/types.hpp"

namespace sse::io {

// SSE1 matrix layout, little-endian:
//   "SSE1" | u32 version = 1 | u64 rows | u64 dim | u8 dtype (1 = f32) |
//   7 zero bytes | rows * dim values, row-major
inline constexpr std::size_t kMatrixHeaderBytes = 32;
inline constexpr std::uint32_t kMatrixVersion = 1;
inline constexpr std::uint8_t kDtypeF32 = 1;

// Codebook container, little-endian:
//   "SSEC" | u32 version = 1 | u64 header length | UTF-8 JSON header |
//   D * f u32 codes, row-major | f SSE1 tables
inline constexpr std::uint32_t kCodebookVersion = 1;

std::string encode_matrix(const EmbeddingMatrix<float>& m);
/// The buffer must hold exactly one matrix.
EmbeddingMatrix<float> decode_matrix(std::string_view bytes);

std::string encode_codebook(const Codebook<float>& cb);
Codebook<float> decode_codebook(std::string_view bytes);

/// The JSON header of an encoded codebook, unparsed.
std::string codebook_header(std::string_view bytes);

void write_matrix(const std::filesystem::path& path, const EmbeddingMatrix<float>& m);
EmbeddingMatrix<float> read_matrix(const std::filesystem::path& path);

void write_codebook(const std::filesystem::path& path, const Codebook<float>& cb);
Codebook<float> read_codebook(const std::filesystem::path& path);

/// One token per line, id = line index. Rejects duplicates (naming both
/// lines) and invalid UTF-8. A trailing newline does not add a token.
std::vector<std::string> read_vocab(const std::filesystem::path& path);
std::vector<std::string> parse_vocab(std::string_view text);

struct TsvEmbeddings {
  std::vector<std::string> tokens;
  EmbeddingMatrix<float> matrix;
};

/// token<TAB>v1<TAB>...<TAB>vd per line; values are parsed straight to f32.
TsvEmbeddings read_tsv(const std::filesystem::path& path);
TsvEmbeddings parse_tsv(std::string_view text);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view bytes);

bool is_valid_utf8(std::string_view s);

}  // namespace sse::io
