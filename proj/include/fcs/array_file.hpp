#pragma once

// Versioned container of named numeric arrays: a textual header followed by a
// raw little-endian payload.
//
//   <MAGIC> v<version>
//   meta <key> <value>
//   array <name> <f32|f64> <d0>x<d1>... <byte offset into payload>
//   end
//   <payload>

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "fcs/errors.hpp"
#include "fcs/file_util.hpp"

namespace fcs {

enum class DType { f32, f64 };

inline std::size_t dtype_size(DType t) { return t == DType::f32 ? 4 : 8; }
inline const char* dtype_name(DType t) { return t == DType::f32 ? "f32" : "f64"; }

struct NamedArray {
  std::string name;
  DType dtype = DType::f32;
  std::vector<std::int64_t> shape;
  std::vector<double> values;  // f32 arrays hold float-representable values

  std::int64_t element_count() const {
    std::int64_t n = 1;
    for (auto d : shape) n *= d;
    return n;
  }
};

struct ArrayFile {
  std::string magic;
  int version = 1;
  std::vector<std::pair<std::string, std::string>> meta;
  std::vector<NamedArray> arrays;

  std::optional<std::string> meta_value(const std::string& key) const {
    for (const auto& [k, v] : meta)
      if (k == key) return v;
    return std::nullopt;
  }

  const NamedArray* find(const std::string& name) const {
    for (const auto& a : arrays)
      if (a.name == name) return &a;
    return nullptr;
  }
};

namespace detail {

inline std::string shape_string(const std::vector<std::int64_t>& shape) {
  std::string s;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += 'x';
    s += std::to_string(shape[i]);
  }
  return s;
}

template <typename T>
void append_le(std::string& out, T value) {
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  out.append(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T read_le(const char* p) {
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, p, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

}  // namespace detail

inline std::string serialize_array_file(const ArrayFile& file) {
  std::string header = file.magic + " v" + std::to_string(file.version) + "\n";
  for (const auto& [k, v] : file.meta) {
    if (k.find_first_of(" \n") != std::string::npos || v.find('\n') != std::string::npos)
      fail(Errc::invalid_input, "meta entries must be single-line with a space-free key");
    header += "meta " + k + " " + v + "\n";
  }
  std::string payload;
  for (const auto& a : file.arrays) {
    if (std::int64_t(a.values.size()) != a.element_count())
      fail(Errc::shape_mismatch, "array " + a.name + " holds " + std::to_string(a.values.size()) +
                                     " values for shape " + detail::shape_string(a.shape));
    header += "array " + a.name + " " + dtype_name(a.dtype) + " " + detail::shape_string(a.shape) + " " +
              std::to_string(payload.size()) + "\n";
    for (double v : a.values) {
      if (a.dtype == DType::f32)
        detail::append_le(payload, float(v));
      else
        detail::append_le(payload, v);
    }
  }
  header += "end\n";
  return header + payload;
}

inline void write_array_file(const ArrayFile& file, const std::filesystem::path& path) {
  write_file_atomic(path, serialize_array_file(file));
}

/// Parses a container; throws corrupt_file for malformed or truncated input,
/// version_mismatch when the magic matches but the version does not.
inline ArrayFile parse_array_file(const std::string& bytes, const std::string& magic, int version) {
  ArrayFile file;
  file.magic = magic;
  file.version = version;

  std::size_t pos = 0;
  auto next_line = [&](std::string& line) {
    const auto nl = bytes.find('\n', pos);
    if (nl == std::string::npos) fail(Errc::corrupt_file, "header is truncated");
    line.assign(bytes, pos, nl - pos);
    pos = nl + 1;
  };

  std::string line;
  next_line(line);
  if (line.rfind(magic + " v", 0) != 0) fail(Errc::corrupt_file, "expected '" + magic + "' header, got '" + line.substr(0, 40) + "'");
  {
    const std::string ver = line.substr(magic.size() + 2);
    if (ver != std::to_string(version))
      fail(Errc::version_mismatch, magic + " version " + ver + " is not supported (expected v" + std::to_string(version) + ")");
  }

  struct Pending { NamedArray array; std::size_t offset; };
  std::vector<Pending> pending;
  for (;;) {
    next_line(line);
    if (line == "end") break;
    std::istringstream ls(line);
    std::string kind;
    ls >> kind;
    if (kind == "meta") {
      std::string key;
      ls >> key;
      std::string value;
      std::getline(ls, value);
      if (!value.empty() && value.front() == ' ') value.erase(0, 1);
      if (key.empty()) fail(Errc::corrupt_file, "meta line without key");
      file.meta.emplace_back(key, value);
    } else if (kind == "array") {
      Pending p;
      std::string dtype, shape;
      if (!(ls >> p.array.name >> dtype >> shape >> p.offset)) fail(Errc::corrupt_file, "malformed array line: " + line);
      if (dtype == "f32")
        p.array.dtype = DType::f32;
      else if (dtype == "f64")
        p.array.dtype = DType::f64;
      else
        fail(Errc::corrupt_file, "unknown dtype " + dtype);
      std::istringstream ss(shape);
      std::string dim;
      while (std::getline(ss, dim, 'x')) {
        try {
          const long long d = std::stoll(dim);
          if (d < 0) throw std::out_of_range("negative");
          p.array.shape.push_back(d);
        } catch (const std::exception&) {
          fail(Errc::corrupt_file, "bad shape '" + shape + "' for " + p.array.name);
        }
      }
      pending.push_back(std::move(p));
    } else {
      fail(Errc::corrupt_file, "unexpected header line: " + line.substr(0, 60));
    }
  }

  const std::size_t payload_start = pos;
  const std::size_t payload_size = bytes.size() - payload_start;
  for (auto& p : pending) {
    const std::size_t width = dtype_size(p.array.dtype);
    const std::size_t count = std::size_t(p.array.element_count());
    if (p.offset > payload_size || count * width > payload_size - p.offset)
      fail(Errc::corrupt_file, "payload truncated in array " + p.array.name);
    const char* base = bytes.data() + payload_start + p.offset;
    p.array.values.resize(count);
    for (std::size_t i = 0; i < count; ++i)
      p.array.values[i] = p.array.dtype == DType::f32 ? double(detail::read_le<float>(base + i * 4))
                                                      : detail::read_le<double>(base + i * 8);
    file.arrays.push_back(std::move(p.array));
  }
  return file;
}

inline ArrayFile read_array_file(const std::filesystem::path& path, const std::string& magic, int version) {
  return parse_array_file(read_file(path), magic, version);
}

}  // namespace fcs
