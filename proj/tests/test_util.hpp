// Copyright 2026 The gridfm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <fstream>
#include <string>

namespace gridfm::testutil {

inline std::filesystem::path tmp_dir(const std::string& name) {
  const std::filesystem::path dir = std::filesystem::path(GRIDFM_TEST_TMP) / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::string write_file(const std::filesystem::path& path, const std::string& content) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  out << content;
  return path.string();
}

inline std::string data_path(const std::string& rel) {
  return (std::filesystem::path(GRIDFM_DATA_DIR) / rel).string();
}

// Deterministic LCG for property-style tests.
class Lcg {
public:
  explicit Lcg(unsigned long long seed) : state_(seed) {}
  double uniform(double lo, double hi) {
    state_ = state_ * 6364136223846793005ull + 1442695040888963407ull;
    const double u = static_cast<double>((state_ >> 11) & ((1ull << 53) - 1)) /
                     static_cast<double>(1ull << 53);
    return lo + u * (hi - lo);
  }
  int uniform_int(int lo, int hi) {  // inclusive
    return lo + static_cast<int>(uniform(0.0, static_cast<double>(hi - lo + 1) - 1e-12));
  }

private:
  unsigned long long state_;
};

}  // namespace gridfm::testutil
