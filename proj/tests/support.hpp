#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <unistd.h>

#include "selftune/image.hpp"
#include "selftune/rng.hpp"

namespace testing {

inline selftune::Image random_image(int h, int w, int c, std::uint64_t seed) {
  selftune::Rng rng(seed);
  selftune::Image img(h, w, c);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int k = 0; k < c; ++k) img.set(y, x, k, static_cast<float>(rng.uniform()));
  return img;
}

inline selftune::Mask random_mask(int h, int w, double p, std::uint64_t seed) {
  selftune::Rng rng(seed);
  selftune::Mask m(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) m.set(y, x, rng.uniform() < p);
  return m;
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("selftune_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
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

}  // namespace testing
