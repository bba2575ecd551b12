// Copyright (c) 2026 The X-Prompt Desk Authors
// SPDX-License-Identifier: Apache-2.0
//
// Shared helpers for the unit tests.

#pragma once

#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "xprompt/rng.hpp"
#include "xprompt/tensor.hpp"

namespace xprompt::testing {

inline Tensor random_tensor(Shape shape, Rng& rng, double scale = 1.0, bool requires_grad = false) {
  std::vector<double> v(numel(shape));
  for (auto& x : v) x = rng.normal(0.0, scale);
  return Tensor::from(std::move(shape), std::move(v), requires_grad);
}

inline Tensor uniform_tensor(Shape shape, Rng& rng, double lo, double hi) {
  std::vector<double> v(numel(shape));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor::from(std::move(shape), std::move(v));
}

/// Writable view of a leaf held through a const handle.
inline std::span<double> mut(const Tensor& t) {
  Tensor handle = t;
  return handle.mutable_values();
}

inline std::vector<double> to_vec(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) { return max_abs_diff(a.values(), b.values()); }

inline bool bit_equal(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return false;
  const auto x = a.values(), y = b.values();
  for (std::size_t i = 0; i < x.size(); ++i)
    if (std::memcmp(&x[i], &y[i], sizeof(double)) != 0) return false;
  return true;
}

inline bool bit_equal(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) return false;
  return x.empty() || std::memcmp(x.data(), y.data(), x.size() * sizeof(double)) == 0;
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::uint64_t counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("xprompt_test_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  std::string str() const { return path_.string(); }
  std::string sub(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

}  // namespace xprompt::testing
