#include "selftune/png_io.hpp"

#include <png.h>

#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <fmt/format.h>
#include <memory>
#include <vector>

#include "selftune/error.hpp"

namespace selftune {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) throw IoError(fmt::format("cannot open '{}'", path.string()));
  return f;
}

// Raw samples as decoded from the file, before conversion to [0,1].
struct Decoded {
  int height = 0, width = 0, channels = 0;  // channels as stored (1..4)
  int bit_depth = 0;
  std::vector<std::uint16_t> samples;
};

Decoded decode(const std::filesystem::path& path) {
  FilePtr file = open_file(path, "rb");
  unsigned char sig[8];
  if (std::fread(sig, 1, 8, file.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0)
    throw IoError(fmt::format("'{}' is not a PNG file", path.string()));

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw IoError("png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw IoError("png_create_info_struct failed");
  }

  Decoded out;
  std::vector<png_bytep> rows;
  std::vector<png_byte> buffer;
  volatile int bad_depth = 0;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    if (bad_depth) throw FormatError(fmt::format("'{}': unsupported bit depth {}", path.string(), static_cast<int>(bad_depth)));
    throw IoError(fmt::format("'{}': corrupt PNG data", path.string()));
  }

  png_init_io(png, file.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  const int color_type = png_get_color_type(png, info);
  out.bit_depth = png_get_bit_depth(png, info);
  if (color_type == PNG_COLOR_TYPE_PALETTE) {
    png_set_palette_to_rgb(png);
    out.bit_depth = 8;
  } else if (out.bit_depth != 8 && out.bit_depth != 16) {
    bad_depth = out.bit_depth;
    png_longjmp(png, 1);
  }
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  png_read_update_info(png, info);

  out.width = static_cast<int>(png_get_image_width(png, info));
  out.height = static_cast<int>(png_get_image_height(png, info));
  out.channels = png_get_channels(png, info);
  const std::size_t rowbytes = png_get_rowbytes(png, info);
  buffer.resize(rowbytes * out.height);
  rows.resize(out.height);
  for (int y = 0; y < out.height; ++y) rows[y] = buffer.data() + rowbytes * y;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  const std::size_t n = static_cast<std::size_t>(out.height) * out.width * out.channels;
  out.samples.resize(n);
  if (out.bit_depth == 16) {
    for (std::size_t i = 0; i < n; ++i)
      out.samples[i] = static_cast<std::uint16_t>((buffer[2 * i] << 8) | buffer[2 * i + 1]);
  } else {
    for (std::size_t i = 0; i < n; ++i) out.samples[i] = buffer[i];
  }
  return out;
}

void encode(const std::filesystem::path& path, int height, int width, int channels,
            const std::vector<png_byte>& pixels) {
  FilePtr file = open_file(path, "wb");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw IoError("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw IoError("png_create_info_struct failed");
  }
  std::vector<png_bytep> rows(height);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError(fmt::format("failed writing '{}'", path.string()));
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8,
               channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const std::size_t stride = static_cast<std::size_t>(width) * channels;
  for (int y = 0; y < height; ++y) rows[y] = const_cast<png_bytep>(pixels.data() + stride * y);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace

Image load_image(const std::filesystem::path& path) {
  const Decoded d = decode(path);
  const float scale = d.bit_depth == 16 ? 1.0f / 65535.0f : 1.0f / 255.0f;
  const int color = d.channels >= 3 ? 3 : 1;
  std::vector<float> data(static_cast<std::size_t>(d.height) * d.width * color);
  for (std::size_t p = 0; p < static_cast<std::size_t>(d.height) * d.width; ++p)
    for (int c = 0; c < color; ++c) data[p * color + c] = d.samples[p * d.channels + c] * scale;
  return Image(d.height, d.width, color, std::move(data));
}

void save_image(const Image& image, const std::filesystem::path& path) {
  std::vector<png_byte> pixels(image.size());
  const auto src = image.data();
  for (std::size_t i = 0; i < src.size(); ++i)
    pixels[i] = static_cast<png_byte>(std::lround(static_cast<double>(src[i]) * 255.0));
  encode(path, image.height(), image.width(), image.channels(), pixels);
}

Mask load_mask(const std::filesystem::path& path) {
  const Decoded d = decode(path);
  const std::uint16_t threshold = d.bit_depth == 16 ? 32768 : 128;
  std::vector<std::uint8_t> data(static_cast<std::size_t>(d.height) * d.width);
  for (std::size_t p = 0; p < data.size(); ++p) data[p] = d.samples[p * d.channels] >= threshold ? 1 : 0;
  return Mask(d.height, d.width, std::move(data));
}

void save_mask(const Mask& mask, const std::filesystem::path& path) {
  std::vector<png_byte> pixels(mask.data().size());
  for (std::size_t i = 0; i < pixels.size(); ++i) pixels[i] = mask.data()[i] ? 255 : 0;
  encode(path, mask.height(), mask.width(), 1, pixels);
}

}  // namespace selftune
