#pragma once

#include <cstdint>
#include <numbers>
#include <optional>

#include "selftune/image.hpp"

namespace selftune {

/// Brush-stroke mask parameters. Defaults are sized for 64x64 inputs.
struct FreeformSpec {
  int strokes_min = 1, strokes_max = 4;
  int vertices_min = 4, vertices_max = 12;
  int width_min = 4, width_max = 12;
  int length_min = 4, length_max = 16;
  double angle_jitter = std::numbers::pi / 4;
  double coverage_min = 0.20, coverage_max = 0.40;

  friend bool operator==(const FreeformSpec&, const FreeformSpec&) = default;
};

struct RectOrigin {
  int y = 0, x = 0;
  friend bool operator==(const RectOrigin&, const RectOrigin&) = default;
};

struct RectSpec {
  int rect_height = 32, rect_width = 32;
  std::optional<RectOrigin> origin;  // nullopt = random placement

  friend bool operator==(const RectSpec&, const RectSpec&) = default;
};

/// Number of regenerations gen_freeform tries before giving up.
inline constexpr int kFreeformAttempts = 64;

void validate(const FreeformSpec& spec);

/// Free-form stroke mask whose coverage lies in [coverage_min, coverage_max].
/// Attempts that miss the bounds are regenerated from derived sub-seeds;
/// throws GenerationError once kFreeformAttempts are exhausted.
Mask gen_freeform(int height, int width, const FreeformSpec& spec, std::uint64_t seed);

Mask gen_rect(int height, int width, const RectSpec& spec, std::uint64_t seed);

double coverage(const Mask& mask);

}  // namespace selftune
