#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string_view>
#include <vector>

#include "selftune/image.hpp"

namespace selftune {

/// Repetitive texture families. `noise` (white noise) is not periodic and is
/// only used for non-repetitive sanity runs.
enum class PatternFamily { tiles, stripes, bricks, checker, gradient_tiles, noise };

std::string_view to_string(PatternFamily f);
PatternFamily parse_family(std::string_view name);

struct DatasetSpec {
  std::vector<PatternFamily> families{PatternFamily::tiles, PatternFamily::stripes, PatternFamily::bricks,
                                      PatternFamily::checker, PatternFamily::gradient_tiles};
  int period_min = 4;
  int period_max = 12;
  int colors_min = 2;             // palette size per image
  int colors_max = 4;
  double min_color_distance = 0.25;  // L-inf distance between palette entries
  int count = 200;
  int image_size = 64;
  std::optional<std::filesystem::path> real_folder;
  double real_fraction = 0.1;

  friend bool operator==(const DatasetSpec&, const DatasetSpec&) = default;
};

void validate(const DatasetSpec& spec);

struct SyntheticImage {
  Image image;
  PatternFamily family = PatternFamily::tiles;
  int period = 0;  // 0 for real or noise images
  bool real = false;
};

/// Deterministic in (spec, seed). Periodic families satisfy
/// I[y][x] == I[y][x + period] wherever both are inside the image.
std::vector<SyntheticImage> make_synthetic_corpus(const DatasetSpec& spec, std::uint64_t seed);
std::vector<Image> make_synthetic_dataset(const DatasetSpec& spec, std::uint64_t seed);

/// Sorted *.png paths of a folder. Throws IoError for an unreadable folder.
std::vector<std::filesystem::path> list_png_files(const std::filesystem::path& folder);

/// Sorted *.png files of a folder, centre-cropped to a square and resized
/// (bilinear) to size x size RGB. Throws IoError for an unreadable folder.
std::vector<Image> load_image_folder(const std::filesystem::path& folder, int size);

/// Centre square crop then bilinear resize; gray becomes RGB.
Image crop_and_resize(const Image& image, int size);

}  // namespace selftune
