#pragma once

// BTMX: the binary tensor exchange format shared by every pipeline stage.
//
//   offset 0   4 bytes   magic "BTMX"
//   offset 4   4 bytes   header_len, uint32 little-endian
//   offset 8   header_len bytes of UTF-8 JSON
//              {"dtype":"f32","meta":{...},"order":"row-major","shape":[...]}
//   then       product(shape) * 4 bytes, IEEE-754 float32 little-endian,
//              row-major
//
// Nothing may follow the payload. See FORMATS.md for the full description.

#include <Eigen/Dense>

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "brainalign/errors.hpp"

namespace brainalign {

using Meta = std::map<std::string, std::string>;
using Shape = std::vector<std::size_t>;

struct Tensor {
  Shape shape;
  std::vector<float> data;
  Meta meta;

  std::size_t rank() const { return shape.size(); }
};

namespace detail {

inline constexpr std::array<char, 4> kMagic{'B', 'T', 'M', 'X'};

inline std::size_t shape_product(const Shape &shape) {
  std::size_t n = 1;
  for (auto s : shape)
    n *= s;
  return n;
}

inline void put_u32le(std::string &out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i)
    out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

inline std::uint32_t get_u32le(const unsigned char *p) {
  return static_cast<std::uint32_t>(p[0]) |
         (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

inline void check_shape(const Shape &shape) {
  require(!shape.empty(), "tensor shape must be non-empty");
  for (auto s : shape)
    require(s >= 1, "tensor shape entries must be >= 1");
}

} // namespace detail

/// Serialize to the BTMX byte layout.
inline std::string encode_tensor(const Shape &shape, std::span<const float> data,
                                 const Meta &meta = {}) {
  detail::check_shape(shape);
  require(data.size() == detail::shape_product(shape),
          "tensor data length " + std::to_string(data.size()) +
              " does not match shape product " +
              std::to_string(detail::shape_product(shape)));

  nlohmann::json header = {{"dtype", "f32"},
                           {"order", "row-major"},
                           {"shape", shape},
                           {"meta", nlohmann::json::object()}};
  for (const auto &[k, v] : meta)
    header["meta"][k] = v;
  const std::string text = header.dump();

  std::string out;
  out.reserve(8 + text.size() + 4 * data.size());
  out.append(detail::kMagic.data(), 4);
  detail::put_u32le(out, static_cast<std::uint32_t>(text.size()));
  out += text;
  for (float f : data)
    detail::put_u32le(out, std::bit_cast<std::uint32_t>(f));
  return out;
}

inline Tensor decode_tensor(std::string_view bytes) {
  const auto *p = reinterpret_cast<const unsigned char *>(bytes.data());
  if (bytes.size() < 4 || std::memcmp(p, detail::kMagic.data(), 4) != 0)
    throw ParseError("magic", "expected \"BTMX\"");
  if (bytes.size() < 8)
    throw ParseError("header_len", "file ends before header length");
  const std::uint32_t header_len = detail::get_u32le(p + 4);
  if (8ull + header_len > bytes.size())
    throw ParseError("header_len", "header length " +
                                       std::to_string(header_len) +
                                       " runs past end of file");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(8, header_len));
  } catch (const nlohmann::json::parse_error &e) {
    throw ParseError("header", std::string("not valid JSON: ") + e.what());
  }
  if (!header.is_object())
    throw ParseError("header", "not a JSON object");

  if (!header.contains("dtype") || header["dtype"] != "f32")
    throw ParseError("dtype", "must be \"f32\"");
  if (!header.contains("order") || header["order"] != "row-major")
    throw ParseError("order", "must be \"row-major\"");

  Tensor t;
  if (!header.contains("shape") || !header["shape"].is_array() ||
      header["shape"].empty())
    throw ParseError("shape", "must be a non-empty array");
  for (const auto &s : header["shape"]) {
    if (!s.is_number_unsigned() || s.get<std::uint64_t>() < 1)
      throw ParseError("shape", "entries must be integers >= 1");
    t.shape.push_back(s.get<std::size_t>());
  }

  if (header.contains("meta")) {
    const auto &m = header["meta"];
    if (!m.is_object())
      throw ParseError("meta", "must be an object");
    for (auto it = m.begin(); it != m.end(); ++it) {
      if (!it.value().is_string())
        throw ParseError("meta", "value for \"" + it.key() + "\" is not a string");
      t.meta[it.key()] = it.value().get<std::string>();
    }
  }

  const std::size_t n = detail::shape_product(t.shape);
  const std::size_t offset = 8 + header_len;
  const std::size_t have = bytes.size() - offset;
  if (have < 4 * n)
    throw ParseError("payload", "truncated: expected " + std::to_string(4 * n) +
                                    " bytes, found " + std::to_string(have));
  if (have > 4 * n)
    throw ParseError("payload", "trailing bytes after payload");

  t.data.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    t.data[i] = std::bit_cast<float>(detail::get_u32le(p + offset + 4 * i));
  return t;
}

inline std::string read_file(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw IoError(path, "cannot open for reading");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::string &path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out)
    throw IoError(path, "cannot open for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out)
    throw IoError(path, "write failed");
}

inline void write_tensor(const std::string &path, const Shape &shape,
                         std::span<const float> data, const Meta &meta = {}) {
  write_file(path, encode_tensor(shape, data, meta));
}

inline Tensor read_tensor(const std::string &path) {
  return decode_tensor(read_file(path));
}

// Matrix bridges. All arithmetic is done in double; float32 only exists at
// the file boundary.

inline Tensor matrix_to_tensor(const Eigen::MatrixXd &m, Meta meta = {}) {
  Tensor t;
  t.shape = {static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())};
  t.data.resize(m.size());
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c)
      t.data[r * m.cols() + c] = static_cast<float>(m(r, c));
  t.meta = std::move(meta);
  return t;
}

/// Rank-1 tensors become a single column.
inline Eigen::MatrixXd tensor_to_matrix(const Tensor &t) {
  require(t.rank() == 1 || t.rank() == 2,
          "expected a rank-1 or rank-2 tensor, got rank " + std::to_string(t.rank()));
  const auto rows = static_cast<Eigen::Index>(t.shape[0]);
  const auto cols = t.rank() == 2 ? static_cast<Eigen::Index>(t.shape[1]) : 1;
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c)
      m(r, c) = t.data[r * cols + c];
  return m;
}

inline void write_matrix(const std::string &path, const Eigen::MatrixXd &m,
                         const Meta &meta = {}) {
  const Tensor t = matrix_to_tensor(m, meta);
  write_tensor(path, t.shape, t.data, t.meta);
}

inline Eigen::MatrixXd read_matrix(const std::string &path, Meta *meta = nullptr) {
  Tensor t = read_tensor(path);
  if (meta)
    *meta = t.meta;
  return tensor_to_matrix(t);
}

} // namespace brainalign
