#include "selftune/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fmt/format.h>

#include "selftune/error.hpp"
#include "selftune/png_io.hpp"
#include "selftune/rng.hpp"

namespace selftune {

namespace {

using Color = std::array<float, 3>;

std::vector<Color> make_palette(Rng& rng, const DatasetSpec& spec) {
  const int n = rng.uniform_int(spec.colors_min, spec.colors_max);
  std::vector<Color> palette;
  for (int attempt = 0; static_cast<int>(palette.size()) < n && attempt < 1000; ++attempt) {
    Color c{static_cast<float>(rng.uniform()), static_cast<float>(rng.uniform()), static_cast<float>(rng.uniform())};
    const bool distinct = std::all_of(palette.begin(), palette.end(), [&](const Color& o) {
      float d = 0.0f;
      for (int k = 0; k < 3; ++k) d = std::max(d, std::abs(c[k] - o[k]));
      return d >= spec.min_color_distance;
    });
    if (distinct) palette.push_back(c);
  }
  while (static_cast<int>(palette.size()) < n) palette.push_back(palette.empty() ? Color{0.5f, 0.5f, 0.5f} : palette.back());
  return palette;
}

// A p x p tile of the background colour with a few wrapped rectangles and
// discs in other palette colours.
std::vector<Color> make_tile(Rng& rng, int p, const std::vector<Color>& palette) {
  std::vector<Color> tile(static_cast<std::size_t>(p) * p, palette[0]);
  const int shapes = rng.uniform_int(1, 3);
  for (int s = 0; s < shapes; ++s) {
    const Color& color = palette[1 + s % (palette.size() - 1)];
    const double cy = rng.uniform(0.0, p), cx = rng.uniform(0.0, p);
    const double ry = rng.uniform(0.15, 0.4) * p, rx = rng.uniform(0.15, 0.4) * p;
    const bool disc = rng.uniform() < 0.5;
    for (int y = 0; y < p; ++y)
      for (int x = 0; x < p; ++x) {
        // Wrapped offsets keep the tile seamless.
        double dy = std::abs(y + 0.5 - cy), dx = std::abs(x + 0.5 - cx);
        dy = std::min(dy, p - dy);
        dx = std::min(dx, p - dx);
        const bool inside = disc ? (dy * dy) / (ry * ry) + (dx * dx) / (rx * rx) <= 1.0 : dy <= ry && dx <= rx;
        if (inside) tile[static_cast<std::size_t>(y) * p + x] = color;
      }
  }
  return tile;
}

Image render(int size, auto&& pixel) {
  Image img(size, size, 3);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const Color c = pixel(y, x);
      for (int k = 0; k < 3; ++k) img.set(y, x, k, c[k]);
    }
  return img;
}

int wrap(int v, int p) { return ((v % p) + p) % p; }

Image make_pattern(PatternFamily family, int p, int size, Rng& rng, const DatasetSpec& spec) {
  const auto palette = make_palette(rng, spec);
  const int oy = rng.uniform_int(0, p - 1), ox = rng.uniform_int(0, p - 1);
  switch (family) {
    case PatternFamily::tiles: {
      const auto tile = make_tile(rng, p, palette);
      return render(size, [&](int y, int x) { return tile[wrap(y + oy, p) * p + wrap(x + ox, p)]; });
    }
    case PatternFamily::stripes: {
      std::vector<Color> profile(p);
      const int bands = std::min<int>(static_cast<int>(palette.size()), p);
      for (int i = 0; i < p; ++i) profile[i] = palette[(i * bands) / p];
      const int orientation = rng.uniform_int(0, 2);  // vertical, horizontal, diagonal
      return render(size, [&](int y, int x) {
        const int t = orientation == 0 ? x + ox : orientation == 1 ? y + oy : x + y + ox;
        return profile[wrap(t, p)];
      });
    }
    case PatternFamily::bricks: {
      const int brick_h = rng.uniform_int(std::max(2, p / 3), std::max(2, p));
      const Color mortar = palette[0], brick = palette[1];
      const Color alt = palette[palette.size() > 2 ? 2 : 1];
      return render(size, [&](int y, int x) {
        const int row = (y + oy) / brick_h;
        const int shift = (row % 2) ? p / 2 : 0;
        if ((y + oy) % brick_h == 0 || wrap(x + ox + shift, p) == 0) return mortar;
        return (row % 3 == 2) ? alt : brick;
      });
    }
    case PatternFamily::checker: {
      const int half = std::max(1, p / 2);
      return render(size, [&](int y, int x) {
        const bool a = wrap(x + ox, p) < half, b = wrap(y + oy, p) < half;
        return (a != b) ? palette[0] : palette[1];
      });
    }
    case PatternFamily::gradient_tiles: {
      const auto tile = make_tile(rng, p, palette);
      const float strength = static_cast<float>(rng.uniform(0.15, 0.35));
      return render(size, [&](int y, int x) {
        Color c = tile[wrap(y + oy, p) * p + wrap(x + ox, p)];
        const float g = strength * (static_cast<float>(y) / (size - 1) - 0.5f);
        for (float& v : c) v = std::clamp(v + g, 0.0f, 1.0f);
        return c;
      });
    }
    case PatternFamily::noise:
      return render(size, [&](int, int) {
        return Color{static_cast<float>(rng.uniform()), static_cast<float>(rng.uniform()),
                     static_cast<float>(rng.uniform())};
      });
  }
  throw SpecError("unknown pattern family");
}

float bilinear(const Image& img, double y, double x, int c) {
  y = std::clamp(y, 0.0, img.height() - 1.0);
  x = std::clamp(x, 0.0, img.width() - 1.0);
  const int y0 = static_cast<int>(y), x0 = static_cast<int>(x);
  const int y1 = std::min(y0 + 1, img.height() - 1), x1 = std::min(x0 + 1, img.width() - 1);
  const double fy = y - y0, fx = x - x0;
  const double top = img.at(y0, x0, c) * (1 - fx) + img.at(y0, x1, c) * fx;
  const double bottom = img.at(y1, x0, c) * (1 - fx) + img.at(y1, x1, c) * fx;
  return static_cast<float>(top * (1 - fy) + bottom * fy);
}

}  // namespace

std::string_view to_string(PatternFamily f) {
  switch (f) {
    case PatternFamily::tiles: return "tiles";
    case PatternFamily::stripes: return "stripes";
    case PatternFamily::bricks: return "bricks";
    case PatternFamily::checker: return "checker";
    case PatternFamily::gradient_tiles: return "gradient+tiles";
    case PatternFamily::noise: return "noise";
  }
  return "?";
}

PatternFamily parse_family(std::string_view name) {
  for (auto f : {PatternFamily::tiles, PatternFamily::stripes, PatternFamily::bricks, PatternFamily::checker,
                 PatternFamily::gradient_tiles, PatternFamily::noise})
    if (to_string(f) == name) return f;
  throw ConfigError(fmt::format("unknown pattern family '{}'", name));
}

void validate(const DatasetSpec& s) {
  if (s.count < 1) throw SpecError("DatasetSpec: count must be >= 1");
  if (s.image_size < 8) throw SpecError("DatasetSpec: image_size must be >= 8");
  if (s.families.empty()) throw SpecError("DatasetSpec: no pattern families");
  if (s.period_min < 2 || s.period_max > s.image_size / 2 || s.period_min > s.period_max)
    throw SpecError(fmt::format("DatasetSpec: period range [{}, {}] must lie within [2, {}]", s.period_min,
                                s.period_max, s.image_size / 2));
  if (s.colors_min < 2 || s.colors_min > s.colors_max) throw SpecError("DatasetSpec: need 2 <= colors_min <= colors_max");
  if (s.real_fraction < 0.0 || s.real_fraction > 1.0) throw SpecError("DatasetSpec: real_fraction must be in [0, 1]");
}

std::vector<SyntheticImage> make_synthetic_corpus(const DatasetSpec& spec, std::uint64_t seed) {
  validate(spec);
  std::vector<Image> real;
  if (spec.real_folder) real = load_image_folder(*spec.real_folder, spec.image_size);
  const int n_real = real.empty() ? 0 : static_cast<int>(std::lround(spec.count * spec.real_fraction));

  std::vector<SyntheticImage> out;
  out.reserve(spec.count);
  for (int i = 0; i < spec.count; ++i) {
    if (i < n_real) {
      out.push_back({real[i % real.size()], PatternFamily::noise, 0, true});
      continue;
    }
    Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(i)}));
    const auto family = spec.families[rng.uniform_int(0, static_cast<int>(spec.families.size()) - 1)];
    const int period = rng.uniform_int(spec.period_min, spec.period_max);
    Image img = make_pattern(family, period, spec.image_size, rng, spec);
    out.push_back({std::move(img), family, family == PatternFamily::noise ? 0 : period, false});
  }
  return out;
}

std::vector<Image> make_synthetic_dataset(const DatasetSpec& spec, std::uint64_t seed) {
  std::vector<Image> images;
  for (auto& s : make_synthetic_corpus(spec, seed)) images.push_back(std::move(s.image));
  return images;
}

Image crop_and_resize(const Image& image, int size) {
  const int side = std::min(image.height(), image.width());
  const int y0 = (image.height() - side) / 2, x0 = (image.width() - side) / 2;
  Image out(size, size, 3);
  const double scale = static_cast<double>(side) / size;
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x)
      for (int c = 0; c < 3; ++c) {
        const int src_c = image.channels() == 3 ? c : 0;
        const double sy = y0 + (y + 0.5) * scale - 0.5, sx = x0 + (x + 0.5) * scale - 0.5;
        out.set(y, x, c, bilinear(image, sy, sx, src_c));
      }
  return out;
}

std::vector<std::filesystem::path> list_png_files(const std::filesystem::path& folder) {
  std::error_code ec;
  std::vector<std::filesystem::path> files;
  for (std::filesystem::directory_iterator it(folder, ec), end; !ec && it != end; it.increment(ec))
    if (it->path().extension() == ".png") files.push_back(it->path());
  if (ec) throw IoError(fmt::format("cannot read image folder '{}': {}", folder.string(), ec.message()));
  std::sort(files.begin(), files.end());
  return files;
}

std::vector<Image> load_image_folder(const std::filesystem::path& folder, int size) {
  std::vector<Image> images;
  for (const auto& f : list_png_files(folder)) images.push_back(crop_and_resize(load_image(f), size));
  return images;
}

}  // namespace selftune
