#include <doctest.h>

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>

#include "selftune/error.hpp"
#include "selftune/quality.hpp"
#include "selftune/synthetic.hpp"
#include "support.hpp"

using namespace selftune;
using testing::random_image;

namespace {

// Direct double loop over every 11x11 window, no separable filtering.
double ssim_oracle(const Image& a, const Image& b) {
  double g[11], gsum = 0.0;
  for (int i = 0; i < 11; ++i) gsum += g[i] = std::exp(-((i - 5) * (i - 5)) / (2.0 * 1.5 * 1.5));
  for (double& v : g) v /= gsum;
  const double c1 = 1e-4, c2 = 9e-4;
  double total = 0.0;
  int count = 0;
  for (int c = 0; c < a.channels(); ++c)
    for (int y = 0; y + 11 <= a.height(); ++y)
      for (int x = 0; x + 11 <= a.width(); ++x) {
        double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
        for (int dy = 0; dy < 11; ++dy)
          for (int dx = 0; dx < 11; ++dx) {
            const double w = g[dy] * g[dx], va = a.at(y + dy, x + dx, c), vb = b.at(y + dy, x + dx, c);
            ma += w * va;
            mb += w * vb;
            saa += w * va * va;
            sbb += w * vb * vb;
            sab += w * va * vb;
          }
        const double va = saa - ma * ma, vb = sbb - mb * mb, cov = sab - ma * mb;
        total += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
        ++count;
      }
  return total / count;
}

FeatureStats diag_stats(const std::vector<double>& mu, const std::vector<double>& var) {
  FeatureStats s;
  s.mean = Eigen::Map<const Eigen::VectorXd>(mu.data(), static_cast<Eigen::Index>(mu.size()));
  s.covariance = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(mu.size()), static_cast<Eigen::Index>(mu.size()));
  for (std::size_t i = 0; i < var.size(); ++i) s.covariance(i, i) = var[i];
  s.count = 100;
  return s;
}

FeatureStats random_full_stats(int d, Rng& rng) {
  Eigen::MatrixXd a(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) a(i, j) = rng.normal();
  FeatureStats s;
  s.mean = Eigen::VectorXd(d);
  for (int i = 0; i < d; ++i) s.mean(i) = rng.normal();
  s.covariance = a * a.transpose() + 0.01 * Eigen::MatrixXd::Identity(d, d);
  s.count = 100;
  return s;
}

// Tr sqrt(S1 S2) from the general (non-symmetric) eigenvalues of the product.
double frechet_oracle(const FeatureStats& a, const FeatureStats& b) {
  Eigen::EigenSolver<Eigen::MatrixXd> es(a.covariance * b.covariance);
  double tr = 0.0;
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) tr += std::sqrt(std::max(0.0, es.eigenvalues()(i).real()));
  return (a.mean - b.mean).squaredNorm() + a.covariance.trace() + b.covariance.trace() - 2.0 * tr;
}

std::vector<FidRecord> history(std::initializer_list<double> values) {
  std::vector<FidRecord> h;
  int i = 0;
  for (double v : values) h.push_back({25 * i++, v});
  return h;
}

}  // namespace

TEST_CASE("psnr") {
  const Image a(8, 8, 3, 0.0f), b(8, 8, 3, 1.0f);
  CHECK(psnr(a, a) == kPsnrCap);
  CHECK(psnr(a, b) == doctest::Approx(0.0));
  Image c(10, 10, 1, 0.0f);
  for (int i = 0; i < 10; ++i) c.set(0, i, 0, 1.0f);  // 10 of 100 pixels differ by 1 -> MSE 0.1
  Image d(10, 10, 1, 0.0f);
  CHECK(psnr(c, d) == doctest::Approx(10.0));
  for (int i = 0; i < 10; ++i) d.set(0, i, 0, 0.0f), c.set(0, i, 0, i == 0 ? 1.0f : 0.0f);
  CHECK(psnr(c, d) == doctest::Approx(20.0));  // MSE 0.01
  CHECK_THROWS_AS(psnr(a, Image(8, 8, 1)), ShapeError);

  for (std::uint64_t s = 0; s < 20; ++s) {
    const Image x = random_image(12, 12, 3, s), y = random_image(12, 12, 3, s + 50);
    CHECK(psnr(x, y) == psnr(y, x));
    CHECK(psnr(x, y) == doctest::Approx(-10.0 * std::log10(mean_squared_error(x, y))));
  }
  // strictly decreasing in MSE
  double prev = kPsnrCap + 1;
  for (int k = 1; k <= 20; ++k) {
    const double p = psnr(Image(4, 4, 1, 0.0f), Image(4, 4, 1, k * 0.05f));
    CHECK(p < prev);
    prev = p;
  }
}

TEST_CASE("ssim") {
  const Image x = random_image(20, 20, 3, 1);
  CHECK(ssim(x, x) == doctest::Approx(1.0).epsilon(1e-12));
  const double expect = (2 * 0.25 * 0.75 + 1e-4) / (0.25 * 0.25 + 0.75 * 0.75 + 1e-4);
  CHECK(ssim(Image(16, 16, 1, 0.25f), Image(16, 16, 1, 0.75f)) == doctest::Approx(expect).epsilon(1e-9));
  CHECK(expect == doctest::Approx(0.600).epsilon(1e-3));
  CHECK_THROWS_AS(ssim(Image(10, 30, 1), Image(10, 30, 1)), ShapeError);

  for (std::uint64_t s = 0; s < 10; ++s) {
    const int h = 11 + static_cast<int>(s % 5), w = 11 + static_cast<int>((s * 7) % 9);
    const Image a = random_image(h, w, s % 2 ? 3 : 1, s), b = random_image(h, w, s % 2 ? 3 : 1, s + 100);
    const double v = ssim(a, b);
    CHECK(v == doctest::Approx(ssim_oracle(a, b)).epsilon(1e-9));
    CHECK(v == doctest::Approx(ssim(b, a)).epsilon(1e-12));
    CHECK(std::abs(v) <= 1.0);
  }
}

TEST_CASE("patch features") {
  const Image img = random_image(64, 64, 3, 3);
  const auto f = extract_patch_features(img);
  CHECK(f.size() == 225);
  CHECK(f[0].size() == kFeatureDim);
  const auto g = extract_patch_features(random_image(64, 64, 3, 3));
  for (std::size_t i = 0; i < f.size(); ++i) CHECK(f[i] == g[i]);

  const auto constant = extract_patch_features(Image(64, 64, 3, 0.3f));
  for (const auto& v : constant) CHECK(v == constant[0]);

  // gray is treated as RGB with equal channels
  Image gray = random_image(32, 32, 1, 4), rgb(32, 32, 3);
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x)
      for (int c = 0; c < 3; ++c) rgb.set(y, x, c, gray.at(y, x));
  const auto fg = extract_patch_features(gray), fr = extract_patch_features(rgb);
  for (std::size_t i = 0; i < fg.size(); ++i) CHECK(fg[i] == fr[i]);

  // region selects by patch centre
  Mask region(64, 64);
  region.set(4, 4, true);
  region.set(8, 8, true);
  region.set(5, 4, true);
  CHECK(extract_patch_features(img, region).size() == 2);
  CHECK_THROWS_AS(extract_patch_features(img, Mask(64, 64)), DegenerateError);
  CHECK_THROWS_AS(extract_patch_features(img, Mask(32, 32, 1)), ShapeError);
}

TEST_CASE("gaussian_stats") {
  std::vector<Eigen::VectorXd> f{Eigen::Vector2d(0, 0), Eigen::Vector2d(2, 2)};
  const auto s = gaussian_stats(f);
  CHECK(s.mean.isApprox(Eigen::Vector2d(1, 1)));
  CHECK(s.covariance(0, 0) == 2.0);
  CHECK(s.covariance(0, 1) == 2.0);
  CHECK(s.covariance(1, 1) == 2.0);
  CHECK(s.degenerate());

  std::vector<Eigen::VectorXd> same(5, Eigen::Vector3d(0.5, -1, 2));
  const auto r = gaussian_stats(same);
  CHECK(r.mean.isApprox(Eigen::Vector3d(0.5, -1, 2)));
  CHECK(r.covariance.isZero(0.0));

  Rng rng(5);
  std::vector<Eigen::VectorXd> many;
  for (int i = 0; i < 30; ++i) many.push_back(Eigen::Vector3d(rng.normal(), rng.normal(), rng.normal()));
  auto shuffled = many;
  std::reverse(shuffled.begin(), shuffled.end());
  std::swap(shuffled[3], shuffled[17]);
  const auto a = gaussian_stats(many), b = gaussian_stats(shuffled);
  CHECK((a.mean - b.mean).norm() < 1e-12);
  CHECK((a.covariance - b.covariance).norm() < 1e-12);
  CHECK((a.covariance - a.covariance.transpose()).norm() < 1e-12);
  CHECK_THROWS_AS(gaussian_stats(std::vector<Eigen::VectorXd>{Eigen::Vector2d(1, 1)}), DegenerateError);
}

TEST_CASE("frechet distance") {
  const auto a = diag_stats({0.0}, {1.0}), b = diag_stats({1.0}, {1.0}), c = diag_stats({0.0}, {4.0});
  CHECK(frechet_distance(a, a) == doctest::Approx(0.0));
  CHECK(frechet_distance(a, b) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(frechet_distance(c, a) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK_THROWS_AS(frechet_distance(a, diag_stats({0.0, 0.0}, {1.0, 1.0})), ShapeError);

  Rng rng(17);
  for (int trial = 0; trial < 100; ++trial) {
    const int d = rng.uniform_int(1, 4);
    std::vector<double> m1(d), m2(d), v1(d), v2(d);
    double expect = 0.0;
    for (int k = 0; k < d; ++k) {
      m1[k] = rng.normal();
      m2[k] = rng.normal();
      v1[k] = rng.uniform(0.0, 3.0);
      v2[k] = rng.uniform(0.0, 3.0);
      expect += (m1[k] - m2[k]) * (m1[k] - m2[k]) + std::pow(std::sqrt(v1[k]) - std::sqrt(v2[k]), 2);
    }
    CHECK(std::abs(frechet_distance(diag_stats(m1, v1), diag_stats(m2, v2)) - expect) < 1e-9);
  }
  for (int trial = 0; trial < 50; ++trial) {
    const int d = rng.uniform_int(1, 6);
    const auto s1 = random_full_stats(d, rng), s2 = random_full_stats(d, rng);
    const double ab = frechet_distance(s1, s2), ba = frechet_distance(s2, s1);
    CHECK(ab >= 0.0);
    CHECK(ab == doctest::Approx(ba).epsilon(1e-8));
    CHECK(ab == doctest::Approx(frechet_oracle(s1, s2)).epsilon(1e-7));
    CHECK(frechet_distance(s1, s1) < 1e-8);
  }

  auto bad = diag_stats({0.0, 0.0}, {1.0, 1.0});
  bad.covariance(1, 1) = -1.0;
  CHECK_THROWS_AS(frechet_distance(bad, diag_stats({0.0, 0.0}, {1.0, 1.0})), NumericError);
}

TEST_CASE("internal fid prefers a coherent fill") {
  DatasetSpec ds;
  ds.families = {PatternFamily::tiles};
  ds.period_min = ds.period_max = 8;
  ds.count = 1;
  const Image tile = make_synthetic_dataset(ds, 4).front();
  Mask hole(64, 64);
  for (int y = 16; y < 40; ++y)
    for (int x = 20; x < 44; ++x) hole.set(y, x, true);

  double mean[3] = {0, 0, 0};
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x)
      for (int c = 0; c < 3; ++c) mean[c] += tile.at(y, x, c) / 4096.0;
  Image flat = tile;
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x)
      if (hole.hole(y, x))
        for (int c = 0; c < 3; ++c) flat.set(y, x, c, static_cast<float>(mean[c]));

  const double coherent = internal_fid(tile, tile, hole), filled = internal_fid(flat, flat, hole);
  CHECK(coherent < filled);
  CHECK(internal_fid(tile, std::nullopt, tile, std::nullopt) == doctest::Approx(0.0).epsilon(1e-9));

  Mask tiny(64, 64);
  tiny.set(30, 30, true);
  CHECK_THROWS_AS(internal_fid(tile, tile, tiny), DegenerateError);
}

TEST_CASE("smoothing and stopping") {
  const auto h = history({3, 6, 9, 12});
  const auto sm = smoothed_fid(h, 3);
  REQUIRE(sm.size() == 4);
  CHECK(sm[0] == 3.0);
  CHECK(sm[1] == 4.5);
  CHECK(sm[2] == 6.0);
  CHECK(sm[3] == 9.0);

  for (int w = 1; w <= 4; ++w)
    for (int p = 1; p <= 3; ++p)
      for (int m = 0; m <= 4; ++m) CHECK_FALSE(should_stop(history({10, 9, 8}), StopPolicy{w, p, m}));
  CHECK(should_stop(history({8, 9, 10}), StopPolicy{1, 1, 2}));
  CHECK_FALSE(should_stop(history({8, 9, 8, 9}), StopPolicy{1, 2, 1}));
  CHECK(should_stop(history({8, 7, 9, 10}), StopPolicy{1, 2, 1}));
  CHECK_FALSE(should_stop(history({8, 9, 10}), StopPolicy{1, 1, 4}));
  CHECK_FALSE(should_stop({}, StopPolicy{}));
  CHECK_THROWS_AS(validate(StopPolicy{0, 1, 1}), SpecError);

  // monotone non-increasing histories never stop; pure in its inputs
  Rng rng(3);
  for (int t = 0; t < 100; ++t) {
    std::vector<FidRecord> hist;
    double v = 10.0;
    const int n = rng.uniform_int(0, 12);
    for (int i = 0; i < n; ++i) hist.push_back({i, v -= rng.uniform(0.0, 1.0)});
    const StopPolicy pol{rng.uniform_int(1, 4), rng.uniform_int(1, 3), rng.uniform_int(0, 5)};
    CHECK_FALSE(should_stop(hist, pol));
    hist.push_back({n, v + 100.0});
    CHECK(should_stop(hist, pol) == should_stop(hist, pol));
  }
}
