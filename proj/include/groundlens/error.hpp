// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace groundlens {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// File-system failure (unreadable, unwritable, missing file).
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace groundlens
