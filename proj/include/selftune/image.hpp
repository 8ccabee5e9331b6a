#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace selftune {

/// H x W x C raster with values in [0, 1], stored row-major in (y, x, c) order.
/// Values are clamped on construction and by every mutating accessor.
class Image {
 public:
  Image() = default;
  Image(int height, int width, int channels, float fill = 0.0f);
  Image(int height, int width, int channels, std::vector<float> data);

  int height() const { return height_; }
  int width() const { return width_; }
  int channels() const { return channels_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  float at(int y, int x, int c = 0) const { return data_[index(y, x, c)]; }
  void set(int y, int x, int c, float v);

  std::span<const float> data() const { return data_; }

  std::size_t index(int y, int x, int c) const {
    return (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
  }

  bool same_shape(const Image& other) const {
    return height_ == other.height_ && width_ == other.width_ && channels_ == other.channels_;
  }

  friend bool operator==(const Image&, const Image&) = default;

 private:
  int height_ = 0;
  int width_ = 0;
  int channels_ = 0;
  std::vector<float> data_;
};

/// H x W binary map, 1 = missing pixel.
class Mask {
 public:
  Mask() = default;
  Mask(int height, int width, std::uint8_t fill = 0);
  Mask(int height, int width, std::vector<std::uint8_t> data);

  int height() const { return height_; }
  int width() const { return width_; }

  bool hole(int y, int x) const { return data_[static_cast<std::size_t>(y) * width_ + x] != 0; }
  void set(int y, int x, bool hole) { data_[static_cast<std::size_t>(y) * width_ + x] = hole ? 1 : 0; }

  std::span<const std::uint8_t> data() const { return data_; }
  std::size_t count() const;

  friend bool operator==(const Mask&, const Mask&) = default;

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<std::uint8_t> data_;
};

enum class Transform { identity, flip_horizontal, flip_vertical, rotate90, rotate180, rotate270 };

inline constexpr Transform kAllTransforms[] = {Transform::identity, Transform::flip_horizontal,
                                               Transform::flip_vertical, Transform::rotate90,
                                               Transform::rotate180, Transform::rotate270};

std::string_view to_string(Transform t);
Transform inverse(Transform t);

/// image * (1 - mask): hole pixels become 0 in every channel.
Image apply_mask(const Image& image, const Mask& mask);

/// input where mask = 0, prediction where mask = 1.
Image composite(const Image& prediction, const Image& input, const Mask& mask);

Mask complement(const Mask& mask);

/// Rotations are clockwise and need square inputs.
Image transform(const Image& image, Transform op);
Mask transform(const Mask& mask, Transform op);

double mean_squared_error(const Image& a, const Image& b);

}  // namespace selftune
