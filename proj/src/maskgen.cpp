#include "selftune/maskgen.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>

#include "selftune/error.hpp"
#include "selftune/rng.hpp"

namespace selftune {

namespace {

// Stamps a disk of the given diameter centred at (cx, cy); a pixel is covered
// when its centre lies inside the disk.
void stamp_disk(Mask& mask, double cx, double cy, double diameter) {
  const double r = diameter / 2.0;
  const int y0 = std::max(0, static_cast<int>(std::floor(cy - r)));
  const int y1 = std::min(mask.height() - 1, static_cast<int>(std::ceil(cy + r)));
  const int x0 = std::max(0, static_cast<int>(std::floor(cx - r)));
  const int x1 = std::min(mask.width() - 1, static_cast<int>(std::ceil(cx + r)));
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) {
      const double dy = y + 0.5 - cy, dx = x + 0.5 - cx;
      if (dx * dx + dy * dy <= r * r) mask.set(y, x, true);
    }
}

void draw_segment(Mask& mask, double ax, double ay, double bx, double by, double diameter) {
  const double len = std::hypot(bx - ax, by - ay);
  const int steps = std::max(1, static_cast<int>(std::ceil(len * 2.0)));
  for (int s = 0; s <= steps; ++s) {
    const double t = static_cast<double>(s) / steps;
    stamp_disk(mask, ax + t * (bx - ax), ay + t * (by - ay), diameter);
  }
}

Mask draw_strokes(int height, int width, const FreeformSpec& spec, std::uint64_t seed) {
  Rng rng(seed);
  Mask mask(height, width);
  const int strokes = rng.uniform_int(spec.strokes_min, spec.strokes_max);
  for (int s = 0; s < strokes; ++s) {
    double x = rng.uniform(0.0, width);
    double y = rng.uniform(0.0, height);
    double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const int vertices = rng.uniform_int(spec.vertices_min, spec.vertices_max);
    const double diameter = rng.uniform_int(spec.width_min, spec.width_max);
    stamp_disk(mask, x, y, diameter);
    for (int v = 1; v < vertices; ++v) {
      angle += rng.uniform(-spec.angle_jitter, spec.angle_jitter);
      const double len = rng.uniform(spec.length_min, spec.length_max);
      double nx = x + len * std::cos(angle);
      double ny = y + len * std::sin(angle);
      // Reflect off the borders so strokes stay on the canvas.
      if (nx < 0.0 || nx >= width) {
        angle = std::numbers::pi - angle;
        nx = std::clamp(nx, 0.0, std::nextafter(static_cast<double>(width), 0.0));
      }
      if (ny < 0.0 || ny >= height) {
        angle = -angle;
        ny = std::clamp(ny, 0.0, std::nextafter(static_cast<double>(height), 0.0));
      }
      draw_segment(mask, x, y, nx, ny, diameter);
      x = nx;
      y = ny;
    }
  }
  return mask;
}

}  // namespace

void validate(const FreeformSpec& s) {
  auto range = [](const char* name, auto lo, auto hi) {
    if (lo > hi) throw SpecError(fmt::format("FreeformSpec: {} min {} exceeds max {}", name, lo, hi));
  };
  range("strokes", s.strokes_min, s.strokes_max);
  range("vertices", s.vertices_min, s.vertices_max);
  range("width", s.width_min, s.width_max);
  range("length", s.length_min, s.length_max);
  if (s.strokes_min < 0 || s.vertices_min < 1 || s.width_min < 1 || s.length_min < 0)
    throw SpecError("FreeformSpec: counts and sizes must be positive");
  if (s.angle_jitter < 0.0) throw SpecError("FreeformSpec: angle_jitter must be non-negative");
  if (!(s.coverage_min >= 0.0 && s.coverage_min < s.coverage_max && s.coverage_max <= 1.0))
    throw SpecError(fmt::format("FreeformSpec: coverage bounds [{}, {}] must satisfy 0 <= min < max <= 1",
                                s.coverage_min, s.coverage_max));
}

Mask gen_freeform(int height, int width, const FreeformSpec& spec, std::uint64_t seed) {
  validate(spec);
  if (height < 16 || width < 16)
    throw ShapeError(fmt::format("gen_freeform needs at least 16x16, got {}x{}", height, width));

  const double area = static_cast<double>(height) * width;
  const double max_stroke_area =
      (spec.vertices_max - 1) * static_cast<double>(spec.length_max) * spec.width_max +
      std::numbers::pi * spec.width_max * spec.width_max / 4.0;
  if (spec.strokes_max * max_stroke_area < spec.coverage_min * area)
    throw GenerationError(fmt::format("coverage_min {} unattainable: brush area at most {:.0f} of {:.0f} pixels",
                                      spec.coverage_min, spec.strokes_max * max_stroke_area, area));

  int below = 0, above = 0;
  for (int attempt = 0; attempt < kFreeformAttempts; ++attempt) {
    Mask mask = draw_strokes(height, width, spec, derive_seed(seed, {static_cast<std::uint64_t>(attempt)}));
    const double cov = coverage(mask);
    if (cov < spec.coverage_min)
      ++below;
    else if (cov > spec.coverage_max)
      ++above;
    else
      return mask;
  }
  const bool min_side = below >= above;
  throw GenerationError(fmt::format("no mask within {} attempts satisfied coverage_{} = {} ({} below, {} above)",
                                    kFreeformAttempts, min_side ? "min" : "max",
                                    min_side ? spec.coverage_min : spec.coverage_max, below, above));
}

Mask gen_rect(int height, int width, const RectSpec& spec, std::uint64_t seed) {
  if (spec.rect_height < 1 || spec.rect_width < 1 || spec.rect_height > height || spec.rect_width > width)
    throw PlacementError(fmt::format("{}x{} rectangle does not fit a {}x{} image", spec.rect_height,
                                     spec.rect_width, height, width));
  RectOrigin origin;
  if (spec.origin) {
    origin = *spec.origin;
    if (origin.y < 0 || origin.x < 0 || origin.y + spec.rect_height > height || origin.x + spec.rect_width > width)
      throw PlacementError(fmt::format("{}x{} rectangle at ({}, {}) leaves the {}x{} image", spec.rect_height,
                                       spec.rect_width, origin.y, origin.x, height, width));
  } else {
    Rng rng(seed);
    origin.y = rng.uniform_int(0, height - spec.rect_height);
    origin.x = rng.uniform_int(0, width - spec.rect_width);
  }
  Mask mask(height, width);
  for (int y = origin.y; y < origin.y + spec.rect_height; ++y)
    for (int x = origin.x; x < origin.x + spec.rect_width; ++x) mask.set(y, x, true);
  return mask;
}

double coverage(const Mask& mask) {
  return static_cast<double>(mask.count()) / (static_cast<double>(mask.height()) * mask.width());
}

}  // namespace selftune
