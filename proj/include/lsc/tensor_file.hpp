#pragma once

// LSCE embedding files: a concatenation of records, each
//
//   offset  size  field
//   0       4     magic "LSCE"
//   4       4     version (u32, little-endian, currently 1)
//   8       4     dim (u32)
//   12      4     token_count (u32)
//   16      4     id_length (u32)
//   20      n     image_id, utf-8, n = id_length
//   20+n    4*t*d payload, token_count x dim float32 little-endian, row-major
//
// A file ends exactly after its last record.

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lsc/embedding.hpp"
#include "lsc/error.hpp"

namespace lsc {

inline constexpr char kTensorMagic[4] = {'L', 'S', 'C', 'E'};
inline constexpr std::uint32_t kTensorVersion = 1;
inline constexpr std::size_t kTensorHeaderSize = 20;

static_assert(sizeof(float) == 4 && std::numeric_limits<float>::is_iec559, "IEEE-754 binary32 required");

namespace detail {

inline std::uint32_t load_u32_le(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline void store_u32_le(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

/// Strict UTF-8 check: no overlongs, no surrogates, max U+10FFFF.
inline bool valid_utf8(std::string_view s) {
  std::size_t i = 0;
  while (i < s.size()) {
    const auto c = static_cast<unsigned char>(s[i]);
    std::size_t len;
    std::uint32_t cp;
    if (c < 0x80) {
      ++i;
      continue;
    } else if ((c & 0xe0) == 0xc0) {
      len = 2;
      cp = c & 0x1f;
    } else if ((c & 0xf0) == 0xe0) {
      len = 3;
      cp = c & 0x0f;
    } else if ((c & 0xf8) == 0xf0) {
      len = 4;
      cp = c & 0x07;
    } else {
      return false;
    }
    if (i + len > s.size()) return false;
    for (std::size_t k = 1; k < len; ++k) {
      const auto cc = static_cast<unsigned char>(s[i + k]);
      if ((cc & 0xc0) != 0x80) return false;
      cp = (cp << 6) | (cc & 0x3f);
    }
    if ((len == 2 && cp < 0x80) || (len == 3 && cp < 0x800) || (len == 4 && cp < 0x10000)) return false;
    if (cp > 0x10ffff || (cp >= 0xd800 && cp <= 0xdfff)) return false;
    i += len;
  }
  return true;
}

}  // namespace detail

/// Parses a whole LSCE buffer. Every record is tagged with `stage`, which
/// the file itself does not carry. `name` only labels errors.
inline std::vector<EmbeddingRecord> parse_tensor_bytes(std::span<const unsigned char> bytes, Stage stage,
                                                       const std::string& name = "<buffer>") {
  std::vector<EmbeddingRecord> records;
  std::size_t pos = 0;
  const std::size_t size = bytes.size();
  while (pos < size) {
    const std::size_t start = pos;
    const std::size_t remaining = size - pos;
    const bool magic_ok = remaining >= 4 && std::memcmp(bytes.data() + pos, kTensorMagic, 4) == 0;
    if (!magic_ok) {
      if (start == 0) throw ParseError(name, start, ParseReason::BadMagic);
      throw ParseError(name, start, ParseReason::TrailingGarbage,
                       std::to_string(remaining) + " bytes after the last record");
    }
    if (remaining < kTensorHeaderSize)
      throw ParseError(name, start, ParseReason::TruncatedHeader,
                       "need " + std::to_string(kTensorHeaderSize) + " bytes, have " + std::to_string(remaining));
    const unsigned char* h = bytes.data() + pos;
    const std::uint32_t version = detail::load_u32_le(h + 4);
    const std::uint32_t dim = detail::load_u32_le(h + 8);
    const std::uint32_t tokens = detail::load_u32_le(h + 12);
    const std::uint32_t id_len = detail::load_u32_le(h + 16);
    if (version != kTensorVersion)
      throw ParseError(name, start + 4, ParseReason::UnsupportedVersion, "version " + std::to_string(version));
    if (dim == 0) throw ParseError(name, start + 8, ParseReason::ZeroDim);
    if (tokens == 0) throw ParseError(name, start + 12, ParseReason::ZeroTokens);
    if (id_len == 0) throw ParseError(name, start + 16, ParseReason::EmptyId);
    pos += kTensorHeaderSize;

    if (size - pos < id_len)
      throw ParseError(name, pos, ParseReason::TruncatedId,
                       "need " + std::to_string(id_len) + " bytes, have " + std::to_string(size - pos));
    std::string id(reinterpret_cast<const char*>(bytes.data() + pos), id_len);
    if (!detail::valid_utf8(id)) throw ParseError(name, pos, ParseReason::InvalidUtf8Id);
    pos += id_len;

    const std::uint64_t count = static_cast<std::uint64_t>(dim) * tokens;
    const std::uint64_t need = count * 4;
    if (size - pos < need) {
      const std::size_t whole = (size - pos) / 4;
      throw ParseError(name, pos + whole * 4, ParseReason::TruncatedPayload,
                       "record '" + id + "' needs " + std::to_string(count) + " floats, has " + std::to_string(whole));
    }
    std::vector<double> values(static_cast<std::size_t>(count));
    for (std::size_t i = 0; i < values.size(); ++i) {
      const float f = std::bit_cast<float>(detail::load_u32_le(bytes.data() + pos + 4 * i));
      if (!std::isfinite(f))
        throw ParseError(name, pos + 4 * i, ParseReason::NonFiniteValue, "record '" + id + "'");
      values[i] = static_cast<double>(f);
    }
    pos += static_cast<std::size_t>(need);
    records.emplace_back(std::move(id), stage, tokens, dim, std::move(values));
  }
  return records;
}

inline std::vector<unsigned char> read_file_bytes(const std::filesystem::path& path) {
  std::error_code ec;
  if (!std::filesystem::is_regular_file(path, ec))
    throw Error(ErrorKind::MissingFile, "'" + path.string() + "' does not exist or is not a regular file");
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open '" + path.string() + "'");
  std::vector<unsigned char> data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw Error(ErrorKind::Io, "read failed on '" + path.string() + "'");
  return data;
}

inline std::vector<EmbeddingRecord> read_tensor_file(const std::filesystem::path& path, Stage stage) {
  const auto bytes = read_file_bytes(path);
  return parse_tensor_bytes(bytes, stage, path.string());
}

/// Serializes records. Values are narrowed to float32 (round to nearest).
inline std::string encode_tensor_records(std::span<const EmbeddingRecord* const> records) {
  std::string out;
  for (const auto* r : records) {
    out.append(kTensorMagic, 4);
    detail::store_u32_le(out, kTensorVersion);
    detail::store_u32_le(out, static_cast<std::uint32_t>(r->dim()));
    detail::store_u32_le(out, static_cast<std::uint32_t>(r->num_tokens()));
    detail::store_u32_le(out, static_cast<std::uint32_t>(r->image_id().size()));
    out.append(r->image_id());
    for (double v : r->tokens()) detail::store_u32_le(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  }
  return out;
}

inline void write_text_file(const std::filesystem::path& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot open '" + path.string() + "' for writing");
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw Error(ErrorKind::Io, "write failed on '" + path.string() + "'");
}

inline void write_tensor_file(const std::filesystem::path& path, std::span<const EmbeddingRecord* const> records) {
  write_text_file(path, encode_tensor_records(records));
}

}  // namespace lsc
