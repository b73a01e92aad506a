#include "sse/io.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <unordered_map>

#include <json.hpp>

namespace sse::io {
namespace {

constexpr std::string_view kMatrixMagic = "SSE1";
constexpr std::string_view kCodebookMagic = "SSEC";

class ByteWriter {
 public:
  explicit ByteWriter(std::string& out) : out_(out) {}

  template <typename T>
  void put(T value) {
    static_assert(std::is_unsigned_v<T>);
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      out_.push_back(static_cast<char>((value >> (8 * i)) & 0xFF));
    }
  }
  void put_f32(float v) { put(std::bit_cast<std::uint32_t>(v)); }
  void bytes(std::string_view s) { out_.append(s); }

 private:
  std::string& out_;
};

class ByteReader {
 public:
  explicit ByteReader(std::string_view buf) : buf_(buf) {}

  std::size_t remaining() const { return buf_.size() - pos_; }

  template <typename T>
  T get(const char* what) {
    static_assert(std::is_unsigned_v<T>);
    need(sizeof(T), what);
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      v |= static_cast<T>(static_cast<unsigned char>(buf_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(T);
    return v;
  }
  float get_f32(const char* what) { return std::bit_cast<float>(get<std::uint32_t>(what)); }

  std::string_view bytes(std::size_t n, const char* what) {
    need(n, what);
    auto s = buf_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  void need(std::size_t n, const char* what) const {
    if (remaining() < n) {
      throw TruncatedPayload(std::string("truncated ") + what + ": need " + std::to_string(n) +
                             " bytes, " + std::to_string(remaining()) + " left");
    }
  }

 private:
  std::string_view buf_;
  std::size_t pos_ = 0;
};

void encode_matrix_to(std::string& out, const EmbeddingMatrix<float>& m) {
  if (m.rows() < 1 || m.cols() < 1) throw DataError("write_matrix: matrix must be non-empty");
  require_finite(m, "write_matrix");
  out.reserve(out.size() + kMatrixHeaderBytes + static_cast<std::size_t>(m.size()) * 4);
  ByteWriter w(out);
  w.bytes(kMatrixMagic);
  w.put<std::uint32_t>(kMatrixVersion);
  w.put<std::uint64_t>(static_cast<std::uint64_t>(m.rows()));
  w.put<std::uint64_t>(static_cast<std::uint64_t>(m.cols()));
  w.put<std::uint8_t>(kDtypeF32);
  for (int i = 0; i < 7; ++i) w.put<std::uint8_t>(0);
  for (Index i = 0; i < m.size(); ++i) w.put_f32(m.data()[i]);
}

EmbeddingMatrix<float> decode_matrix_from(ByteReader& r) {
  if (r.remaining() < kMatrixMagic.size() ||
      r.bytes(kMatrixMagic.size(), "magic") != kMatrixMagic) {
    throw BadMagic("not an SSE1 matrix (bad magic)");
  }
  const auto version = r.get<std::uint32_t>("matrix header");
  if (version != kMatrixVersion) {
    throw UnsupportedVersion("unsupported SSE1 version " + std::to_string(version));
  }
  const auto rows = r.get<std::uint64_t>("matrix header");
  const auto dim = r.get<std::uint64_t>("matrix header");
  const auto dtype = r.get<std::uint8_t>("matrix header");
  if (dtype != kDtypeF32) throw UnknownDtype("unknown SSE1 dtype " + std::to_string(dtype));
  for (auto b : r.bytes(7, "matrix header")) {
    if (b != 0) throw ValidationError("SSE1 reserved header bytes are not zero");
  }
  if (rows < 1 || dim < 1) throw ValidationError("SSE1 matrix has zero rows or columns");
  // Checked by division so a lying header cannot overflow the byte count.
  if (dim > r.remaining() / 4 || rows > r.remaining() / 4 / dim) {
    throw TruncatedPayload("truncated matrix payload: header declares " + std::to_string(rows) +
                           "x" + std::to_string(dim) + " values, " +
                           std::to_string(r.remaining()) + " bytes remain");
  }

  EmbeddingMatrix<float> m(static_cast<Index>(rows), static_cast<Index>(dim));
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = r.get_f32("matrix payload");
  if (!m.allFinite()) throw ValidationError("SSE1 payload contains non-finite values");
  return m;
}

void expect_end(const ByteReader& r, const char* what) {
  if (r.remaining() != 0) {
    throw ValidationError(std::string(what) + ": " + std::to_string(r.remaining()) +
                          " unexpected trailing bytes");
  }
}

template <typename T>
T header_field(const nlohmann::json& h, const char* key) {
  if (!h.contains(key)) throw ValidationError(std::string("codebook header missing '") + key + "'");
  try {
    return h.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("codebook header field '") + key + "': " + e.what());
  }
}

}  // namespace

std::string encode_matrix(const EmbeddingMatrix<float>& m) {
  std::string out;
  encode_matrix_to(out, m);
  return out;
}

EmbeddingMatrix<float> decode_matrix(std::string_view bytes) {
  ByteReader r(bytes);
  auto m = decode_matrix_from(r);
  expect_end(r, "SSE1 matrix");
  return m;
}

std::string encode_codebook(const Codebook<float>& cb) {
  const auto& cfg = cb.config();
  nlohmann::json h;
  h["format"] = "sse-codebook";
  h["version"] = kCodebookVersion;
  h["vocab_size"] = cfg.vocab_size;
  h["embed_dim"] = cfg.embed_dim;
  h["num_subspaces"] = cfg.num_subspaces;
  h["table_size"] = cfg.table_size;
  h["subspace_dims"] = cfg.subspace_dims;
  h["reserved_tokens"] = cb.reserved_tokens();
  h["seed"] = cb.provenance().seed;
  h["algorithm"] = to_string(cb.provenance().algorithm);
  const std::string header = h.dump();

  std::string out;
  ByteWriter w(out);
  w.bytes(kCodebookMagic);
  w.put<std::uint32_t>(kCodebookVersion);
  w.put<std::uint64_t>(header.size());
  w.bytes(header);
  const auto& codes = cb.assignment();
  for (Index i = 0; i < codes.size(); ++i) w.put<std::uint32_t>(codes.data()[i]);
  for (const auto& t : cb.tables()) encode_matrix_to(out, t);
  return out;
}

std::string codebook_header(std::string_view bytes) {
  ByteReader r(bytes);
  if (r.remaining() < kCodebookMagic.size() ||
      r.bytes(kCodebookMagic.size(), "magic") != kCodebookMagic) {
    throw BadMagic("not an SSE codebook (bad magic)");
  }
  const auto version = r.get<std::uint32_t>("codebook header");
  if (version != kCodebookVersion) {
    throw UnsupportedVersion("unsupported codebook version " + std::to_string(version));
  }
  const auto len = r.get<std::uint64_t>("codebook header");
  return std::string(r.bytes(len, "codebook header"));
}

Codebook<float> decode_codebook(std::string_view bytes) {
  const std::string header_text = codebook_header(bytes);
  ByteReader r(bytes);
  r.bytes(kCodebookMagic.size() + 4 + 8 + header_text.size(), "codebook header");

  if (!is_valid_utf8(header_text)) throw ValidationError("codebook header is not valid UTF-8");
  nlohmann::json h;
  try {
    h = nlohmann::json::parse(header_text);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("codebook header is not valid JSON: ") + e.what());
  }
  if (!h.is_object()) throw ValidationError("codebook header is not a JSON object");
  if (header_field<std::uint32_t>(h, "version") != kCodebookVersion) {
    throw UnsupportedVersion("unsupported codebook header version");
  }

  SubspaceConfig cfg;
  cfg.vocab_size = header_field<std::int64_t>(h, "vocab_size");
  cfg.embed_dim = header_field<std::int64_t>(h, "embed_dim");
  cfg.num_subspaces = header_field<std::int64_t>(h, "num_subspaces");
  cfg.table_size = header_field<std::int64_t>(h, "table_size");
  cfg.subspace_dims = header_field<std::vector<std::int64_t>>(h, "subspace_dims");
  auto reserved = header_field<std::vector<Index>>(h, "reserved_tokens");
  Provenance prov;
  prov.seed = header_field<std::uint64_t>(h, "seed");
  prov.algorithm = parse_algorithm(header_field<std::string>(h, "algorithm"));
  try {
    cfg.validate_shape();
  } catch (const InvalidConfig& e) {
    throw ValidationError(std::string("codebook header: ") + e.what());
  }

  if (static_cast<std::uint64_t>(cfg.vocab_size) >
      r.remaining() / 4 / static_cast<std::uint64_t>(cfg.num_subspaces)) {
    throw TruncatedPayload("codebook codes: header declares " + std::to_string(cfg.vocab_size) +
                           "x" + std::to_string(cfg.num_subspaces) + " codes, payload holds fewer");
  }
  CodeAssignment codes(cfg.vocab_size, cfg.num_subspaces);
  for (Index i = 0; i < codes.size(); ++i) {
    const auto c = r.get<std::uint32_t>("codebook codes");
    if (c >= static_cast<std::uint64_t>(cfg.table_size)) {
      throw ValidationError("codebook code " + std::to_string(c) + " at position " +
                            std::to_string(i) + " is outside [0, table_size=" +
                            std::to_string(cfg.table_size) + ")");
    }
    codes.data()[i] = c;
  }

  SubspaceTables<float> tables;
  for (std::int64_t k = 0; k < cfg.num_subspaces; ++k) {
    auto t = decode_matrix_from(r);
    if (t.rows() != cfg.table_size || t.cols() != cfg.subspace_dims[static_cast<std::size_t>(k)]) {
      throw ValidationError("codebook table " + std::to_string(k) + " is " +
                            std::to_string(t.rows()) + "x" + std::to_string(t.cols()) +
                            ", header declares " + std::to_string(cfg.table_size) + "x" +
                            std::to_string(cfg.subspace_dims[static_cast<std::size_t>(k)]));
    }
    tables.push_back(std::move(t));
  }
  expect_end(r, "codebook");

  try {
    return Codebook<float>(cfg, std::move(codes), std::move(tables), std::move(reserved), prov);
  } catch (const FormatError&) {
    throw;
  } catch (const Error& e) {
    throw ValidationError(std::string("codebook: ") + e.what());
  }
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("error reading '" + path.string() + "'");
  return data;
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("error writing '" + path.string() + "'");
}

void write_matrix(const std::filesystem::path& path, const EmbeddingMatrix<float>& m) {
  write_file(path, encode_matrix(m));
}

EmbeddingMatrix<float> read_matrix(const std::filesystem::path& path) {
  return decode_matrix(read_file(path));
}

void write_codebook(const std::filesystem::path& path, const Codebook<float>& cb) {
  write_file(path, encode_codebook(cb));
}

Codebook<float> read_codebook(const std::filesystem::path& path) {
  return decode_codebook(read_file(path));
}

bool is_valid_utf8(std::string_view s) {
  std::size_t i = 0;
  while (i < s.size()) {
    const auto c = static_cast<unsigned char>(s[i]);
    std::size_t len;
    std::uint32_t cp;
    if (c < 0x80) {
      ++i;
      continue;
    } else if ((c & 0xE0) == 0xC0) {
      len = 2;
      cp = c & 0x1F;
    } else if ((c & 0xF0) == 0xE0) {
      len = 3;
      cp = c & 0x0F;
    } else if ((c & 0xF8) == 0xF0) {
      len = 4;
      cp = c & 0x07;
    } else {
      return false;
    }
    if (i + len > s.size()) return false;
    for (std::size_t j = 1; j < len; ++j) {
      const auto cc = static_cast<unsigned char>(s[i + j]);
      if ((cc & 0xC0) != 0x80) return false;
      cp = (cp << 6) | (cc & 0x3F);
    }
    // overlong forms, surrogates, beyond U+10FFFF
    if ((len == 2 && cp < 0x80) || (len == 3 && cp < 0x800) || (len == 4 && cp < 0x10000)) {
      return false;
    }
    if ((cp >= 0xD800 && cp <= 0xDFFF) || cp > 0x10FFFF) return false;
    i += len;
  }
  return true;
}

namespace {

template <typename Fn>
void for_each_line(std::string_view text, Fn&& fn) {
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    auto line = text.substr(pos, end - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    fn(++line_no, line);
    pos = end + 1;
  }
}

}  // namespace

std::vector<std::string> parse_vocab(std::string_view text) {
  std::vector<std::string> tokens;
  std::unordered_map<std::string, std::size_t> first_seen;
  for_each_line(text, [&](std::size_t line_no, std::string_view line) {
    if (!is_valid_utf8(line)) {
      throw DataError("vocab line " + std::to_string(line_no) + ": invalid UTF-8");
    }
    auto [it, inserted] = first_seen.emplace(std::string(line), line_no);
    if (!inserted) {
      throw DataError("vocab line " + std::to_string(line_no) + ": duplicate of line " +
                      std::to_string(it->second));
    }
    tokens.emplace_back(line);
  });
  return tokens;
}

std::vector<std::string> read_vocab(const std::filesystem::path& path) {
  return parse_vocab(read_file(path));
}

TsvEmbeddings parse_tsv(std::string_view text) {
  TsvEmbeddings out;
  std::vector<float> values;
  Index dim = -1;
  for_each_line(text, [&](std::size_t line_no, std::string_view line) {
    const auto where = "tsv line " + std::to_string(line_no);
    if (!is_valid_utf8(line)) throw DataError(where + ": invalid UTF-8");
    auto tab = line.find('\t');
    if (tab == std::string_view::npos) throw DataError(where + ": expected token<TAB>values");
    out.tokens.emplace_back(line.substr(0, tab));
    Index count = 0;
    while (tab != std::string_view::npos) {
      const auto start = tab + 1;
      tab = line.find('\t', start);
      const auto field = line.substr(start, tab == std::string_view::npos ? tab : tab - start);
      float v = 0.0f;
      const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
      if (ec != std::errc() || ptr != field.data() + field.size() || !std::isfinite(v)) {
        throw DataError(where + ": bad value '" + std::string(field) + "'");
      }
      values.push_back(v);
      ++count;
    }
    if (dim < 0) dim = count;
    if (count != dim) {
      throw DataError(where + ": has " + std::to_string(count) + " values, expected " +
                      std::to_string(dim));
    }
  });
  if (out.tokens.empty()) throw DataError("tsv: no rows");
  out.matrix = Eigen::Map<EmbeddingMatrix<float>>(values.data(),
                                                  static_cast<Index>(out.tokens.size()), dim);
  return out;
}

TsvEmbeddings read_tsv(const std::filesystem::path& path) { return parse_tsv(read_file(path)); }

}  // namespace sse::io
