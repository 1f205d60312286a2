#pragma once

#include <cmath>
#include <filesystem>
#include <random>
#include <string>

#include <unistd.h>

#include <gtest/gtest.h>

#include "patchlikely/image.hpp"
#include "patchlikely/rng.hpp"
#include "patchlikely/tensor.hpp"

namespace testutil {

using namespace patchlikely;

inline TensorD random_tensor(Rng& rng, const Shape& shape, double lo = -1.0, double hi = 1.0) {
  TensorD t(shape);
  for (double& v : t.data()) v = lo + (hi - lo) * rng.uniform();
  return t;
}

inline Image8 random_image(Rng& rng, int w, int h) {
  Image8 img(w, h);
  for (uint8_t& v : img.pixels) v = static_cast<uint8_t>(rng.below(256));
  return img;
}

inline Image8 solid_image(int w, int h, uint8_t v) { return Image8(w, h, v); }

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("patchlikely_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::filesystem::path data_dir() { return std::filesystem::path(PATCHLIKELY_TEST_DATA); }

}  // namespace testutil
