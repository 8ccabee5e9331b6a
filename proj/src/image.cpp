#include "selftune/image.hpp"

#include <algorithm>
#include <fmt/format.h>

#include "selftune/error.hpp"

namespace selftune {

namespace {

float clamp01(float v) { return std::clamp(v, 0.0f, 1.0f); }

void check_dims(int height, int width) {
  if (height <= 0 || width <= 0) throw ShapeError(fmt::format("invalid dimensions {}x{}", height, width));
}

void require_match(const Image& image, const Mask& mask, const char* op) {
  if (image.height() != mask.height() || image.width() != mask.width())
    throw ShapeError(fmt::format("{}: image {}x{} vs mask {}x{}", op, image.height(), image.width(),
                                 mask.height(), mask.width()));
}

struct Source {
  int y, x;
};

// Source pixel feeding output position (y, x) for an h x w output.
Source source_of(Transform op, int y, int x, int h, int w) {
  switch (op) {
    case Transform::identity: return {y, x};
    case Transform::flip_horizontal: return {y, w - 1 - x};
    case Transform::flip_vertical: return {h - 1 - y, x};
    case Transform::rotate90: return {h - 1 - x, y};
    case Transform::rotate180: return {h - 1 - y, w - 1 - x};
    case Transform::rotate270: return {x, w - 1 - y};
  }
  return {y, x};
}

void check_transformable(int h, int w, Transform op) {
  if ((op == Transform::rotate90 || op == Transform::rotate270) && h != w)
    throw ShapeError(fmt::format("{} needs a square input, got {}x{}", to_string(op), h, w));
}

}  // namespace

Image::Image(int height, int width, int channels, float fill)
    : height_(height), width_(width), channels_(channels) {
  check_dims(height, width);
  if (channels != 1 && channels != 3) throw ShapeError(fmt::format("unsupported channel count {}", channels));
  data_.assign(static_cast<std::size_t>(height) * width * channels, clamp01(fill));
}

Image::Image(int height, int width, int channels, std::vector<float> data)
    : height_(height), width_(width), channels_(channels), data_(std::move(data)) {
  check_dims(height, width);
  if (channels != 1 && channels != 3) throw ShapeError(fmt::format("unsupported channel count {}", channels));
  if (data_.size() != static_cast<std::size_t>(height) * width * channels)
    throw ShapeError(fmt::format("data length {} does not match {}x{}x{}", data_.size(), height, width, channels));
  for (float& v : data_) v = clamp01(v);
}

void Image::set(int y, int x, int c, float v) { data_[index(y, x, c)] = clamp01(v); }

Mask::Mask(int height, int width, std::uint8_t fill) : height_(height), width_(width) {
  check_dims(height, width);
  data_.assign(static_cast<std::size_t>(height) * width, fill ? 1 : 0);
}

Mask::Mask(int height, int width, std::vector<std::uint8_t> data)
    : height_(height), width_(width), data_(std::move(data)) {
  check_dims(height, width);
  if (data_.size() != static_cast<std::size_t>(height) * width)
    throw ShapeError(fmt::format("mask data length {} does not match {}x{}", data_.size(), height, width));
  for (auto& v : data_) v = v ? 1 : 0;
}

std::size_t Mask::count() const { return static_cast<std::size_t>(std::count(data_.begin(), data_.end(), 1)); }

std::string_view to_string(Transform t) {
  switch (t) {
    case Transform::identity: return "identity";
    case Transform::flip_horizontal: return "horizontal-flip";
    case Transform::flip_vertical: return "vertical-flip";
    case Transform::rotate90: return "rotate-90";
    case Transform::rotate180: return "rotate-180";
    case Transform::rotate270: return "rotate-270";
  }
  return "?";
}

Transform inverse(Transform t) {
  if (t == Transform::rotate90) return Transform::rotate270;
  if (t == Transform::rotate270) return Transform::rotate90;
  return t;
}

Image apply_mask(const Image& image, const Mask& mask) {
  require_match(image, mask, "apply_mask");
  std::vector<float> out(image.data().begin(), image.data().end());
  const int c = image.channels();
  for (int y = 0; y < image.height(); ++y)
    for (int x = 0; x < image.width(); ++x)
      if (mask.hole(y, x))
        for (int k = 0; k < c; ++k) out[image.index(y, x, k)] = 0.0f;
  return Image(image.height(), image.width(), c, std::move(out));
}

Image composite(const Image& prediction, const Image& input, const Mask& mask) {
  if (!prediction.same_shape(input))
    throw ShapeError(fmt::format("composite: prediction {}x{}x{} vs input {}x{}x{}", prediction.height(),
                                 prediction.width(), prediction.channels(), input.height(), input.width(),
                                 input.channels()));
  require_match(input, mask, "composite");
  std::vector<float> out(input.data().begin(), input.data().end());
  const int c = input.channels();
  for (int y = 0; y < input.height(); ++y)
    for (int x = 0; x < input.width(); ++x)
      if (mask.hole(y, x))
        for (int k = 0; k < c; ++k) out[input.index(y, x, k)] = prediction.at(y, x, k);
  return Image(input.height(), input.width(), c, std::move(out));
}

Mask complement(const Mask& mask) {
  std::vector<std::uint8_t> out(mask.data().begin(), mask.data().end());
  for (auto& v : out) v = v ? 0 : 1;
  return Mask(mask.height(), mask.width(), std::move(out));
}

Image transform(const Image& image, Transform op) {
  const int h = image.height(), w = image.width(), c = image.channels();
  check_transformable(h, w, op);
  std::vector<float> out(image.size());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const Source s = source_of(op, y, x, h, w);
      for (int k = 0; k < c; ++k) out[image.index(y, x, k)] = image.at(s.y, s.x, k);
    }
  return Image(h, w, c, std::move(out));
}

Mask transform(const Mask& mask, Transform op) {
  const int h = mask.height(), w = mask.width();
  check_transformable(h, w, op);
  Mask out(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const Source s = source_of(op, y, x, h, w);
      out.set(y, x, mask.hole(s.y, s.x));
    }
  return out;
}

double mean_squared_error(const Image& a, const Image& b) {
  if (!a.same_shape(b)) throw ShapeError("mean_squared_error: shape mismatch");
  double acc = 0.0;
  const auto da = a.data(), db = b.data();
  for (std::size_t i = 0; i < da.size(); ++i) {
    const double d = static_cast<double>(da[i]) - db[i];
    acc += d * d;
  }
  return acc / static_cast<double>(da.size());
}

}  // namespace selftune
