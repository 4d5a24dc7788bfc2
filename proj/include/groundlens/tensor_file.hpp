// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "groundlens/error.hpp"

namespace groundlens {

namespace fs = std::filesystem;

using Shape = std::vector<std::size_t>;

/// Product of the dimensions. Throws Error on overflow of the byte count
/// for 8-byte elements, so a corrupt manifest cannot request absurd sizes.
std::size_t element_count(const Shape& shape);

std::string shape_string(const Shape& shape);

/// Byte-count disagreement between a declared shape and a file on disk.
class SizeMismatchError : public Error {
 public:
  SizeMismatchError(const fs::path& file, std::uintmax_t expected, std::uintmax_t actual);
  std::uintmax_t expected_bytes;
  std::uintmax_t actual_bytes;
};

// Raw headerless little-endian row-major arrays.
void write_f32(const fs::path& file, std::span<const float> values);
void write_f64(const fs::path& file, std::span<const double> values);
std::vector<float> read_f32(const fs::path& file, std::size_t expected_count);
std::vector<double> read_f64(const fs::path& file, std::size_t expected_count);

/// Whole-file read/write helpers for text artifacts (JSON, tables).
std::string read_text(const fs::path& file);
void write_text(const fs::path& file, const std::string& text);

/// A bare file name with no directory components; used to reject manifests
/// that point outside their container.
bool is_plain_file_name(const std::string& name);

}  // namespace groundlens
