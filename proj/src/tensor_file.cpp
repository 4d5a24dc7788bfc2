// SPDX-License-Identifier: Apache-2.0
#include "groundlens/tensor_file.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

namespace groundlens {

namespace {

template <typename T>
T byteswap(T value) {
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(bytes[i], bytes[sizeof(T) - 1 - i]);
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

template <typename T>
void write_raw(const fs::path& file, std::span<const T> values) {
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + file.string());
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(values.data()),
              static_cast<std::streamsize>(values.size_bytes()));
  } else {
    for (T v : values) {
      const T le = byteswap(v);
      out.write(reinterpret_cast<const char*>(&le), sizeof(T));
    }
  }
  if (!out) throw IoError("write failed: " + file.string());
}

template <typename T>
std::vector<T> read_raw(const fs::path& file, std::size_t expected_count) {
  std::error_code ec;
  if (!fs::is_regular_file(file, ec)) throw IoError("missing tensor file: " + file.string());
  const std::uintmax_t actual = fs::file_size(file, ec);
  if (ec) throw IoError("cannot stat: " + file.string());
  const std::uintmax_t expected = static_cast<std::uintmax_t>(expected_count) * sizeof(T);
  if (actual != expected) throw SizeMismatchError(file, expected, actual);

  std::vector<T> values(expected_count);
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IoError("cannot open: " + file.string());
  in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(expected));
  if (in.gcount() != static_cast<std::streamsize>(expected)) throw IoError("short read: " + file.string());
  if constexpr (std::endian::native != std::endian::little) {
    for (T& v : values) v = byteswap(v);
  }
  return values;
}

}  // namespace

std::size_t element_count(const Shape& shape) {
  constexpr std::size_t limit = std::numeric_limits<std::size_t>::max() / 8;
  std::size_t n = 1;
  for (std::size_t d : shape) {
    if (d != 0 && n > limit / d) throw Error("shape " + shape_string(shape) + " is too large");
    n *= d;
  }
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

SizeMismatchError::SizeMismatchError(const fs::path& file, std::uintmax_t expected, std::uintmax_t actual)
    : Error("size mismatch for " + file.filename().string() + ": expected " + std::to_string(expected) +
            " bytes, found " + std::to_string(actual)),
      expected_bytes(expected),
      actual_bytes(actual) {}

void write_f32(const fs::path& file, std::span<const float> values) { write_raw(file, values); }
void write_f64(const fs::path& file, std::span<const double> values) { write_raw(file, values); }

std::vector<float> read_f32(const fs::path& file, std::size_t expected_count) {
  return read_raw<float>(file, expected_count);
}

std::vector<double> read_f64(const fs::path& file, std::size_t expected_count) {
  return read_raw<double>(file, expected_count);
}

std::string read_text(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IoError("cannot open: " + file.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_text(const fs::path& file, const std::string& text) {
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + file.string());
  out << text;
  if (!out) throw IoError("write failed: " + file.string());
}

bool is_plain_file_name(const std::string& name) {
  if (name.empty() || name == "." || name == "..") return false;
  return name.find('/') == std::string::npos && name.find('\\') == std::string::npos &&
         name.find('\0') == std::string::npos;
}

}  // namespace groundlens
