// Copyright (c) 2026, The pdistill Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <filesystem>
#include <string>

#include <unistd.h>

#include "pdistill/diffkernel.hpp"
#include "pdistill/rng.hpp"

namespace pdistill::testing {

inline RealVector random_logits(Rng& rng, std::size_t n, double scale = 3.0) {
  RealVector z(n);
  for (auto& v : z) v = rng.uniform(-scale, scale);
  return z;
}

inline double rel_err(double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); }

/// Fresh scratch directory under the system temp dir, removed on scope exit.
class ScratchDir {
 public:
  explicit ScratchDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() /
            ("pdistill-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter()++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~ScratchDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  ScratchDir(const ScratchDir&) = delete;
  ScratchDir& operator=(const ScratchDir&) = delete;

  const std::filesystem::path& path() const { return path_; }

 private:
  static std::size_t& counter() {
    static std::size_t n = 0;
    return n;
  }
  std::filesystem::path path_;
};

}  // namespace pdistill::testing
