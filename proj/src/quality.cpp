#include "selftune/quality.hpp"

#include <Eigen/Eigenvalues>
#include <array>
#include <cmath>
#include <fmt/format.h>

#include "selftune/error.hpp"
#include "selftune/rng.hpp"

namespace selftune {

namespace {

constexpr int kSsimWindow = 11;
constexpr double kSsimSigma = 1.5;
constexpr double kSsimC1 = 0.01 * 0.01;
constexpr double kSsimC2 = 0.03 * 0.03;
constexpr double kEigenTolerance = 1e-8;

void require_same_shape(const Image& a, const Image& b, const char* op) {
  if (!a.same_shape(b))
    throw ShapeError(fmt::format("{}: {}x{}x{} vs {}x{}x{}", op, a.height(), a.width(), a.channels(), b.height(),
                                 b.width(), b.channels()));
}

std::array<double, kSsimWindow> gaussian_kernel() {
  std::array<double, kSsimWindow> k{};
  double sum = 0.0;
  for (int i = 0; i < kSsimWindow; ++i) {
    const double d = i - kSsimWindow / 2;
    k[i] = std::exp(-d * d / (2.0 * kSsimSigma * kSsimSigma));
    sum += k[i];
  }
  for (double& v : k) v /= sum;
  return k;
}

// Separable "valid" Gaussian filtering of an h x w plane.
std::vector<double> filter_valid(const std::vector<double>& plane, int h, int w) {
  static const auto k = gaussian_kernel();
  const int oh = h - kSsimWindow + 1, ow = w - kSsimWindow + 1;
  std::vector<double> rows(static_cast<std::size_t>(h) * ow);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int i = 0; i < kSsimWindow; ++i) acc += k[i] * plane[static_cast<std::size_t>(y) * w + x + i];
      rows[static_cast<std::size_t>(y) * ow + x] = acc;
    }
  std::vector<double> out(static_cast<std::size_t>(oh) * ow);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int i = 0; i < kSsimWindow; ++i) acc += k[i] * rows[static_cast<std::size_t>(y + i) * ow + x];
      out[static_cast<std::size_t>(y) * ow + x] = acc;
    }
  return out;
}

// Fixed seed-0 projection: kFeatureDim filters over 8x8x3 patches.
const Eigen::MatrixXd& projection() {
  static const Eigen::MatrixXd p = [] {
    const int in = kPatchSize * kPatchSize * 3;
    Eigen::MatrixXd m(kFeatureDim, in);
    const double scale = 1.0 / std::sqrt(static_cast<double>(in));
    for (int f = 0; f < kFeatureDim; ++f) {
      Rng rng(derive_seed(0, {static_cast<std::uint64_t>(f)}));
      for (int i = 0; i < in; ++i) m(f, i) = rng.normal() * scale;
    }
    return m;
  }();
  return p;
}

// Eigen-decomposition based root of a symmetric PSD matrix.
Eigen::MatrixXd symmetric_sqrt(const Eigen::MatrixXd& m, const char* what) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(m);
  if (solver.info() != Eigen::Success) throw NumericError(fmt::format("eigendecomposition of {} failed", what));
  Eigen::VectorXd ev = solver.eigenvalues();
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    if (ev(i) < -kEigenTolerance)
      throw NumericError(fmt::format("{} is not positive semi-definite (eigenvalue {})", what, ev(i)));
    ev(i) = std::sqrt(std::max(ev(i), 0.0));
  }
  return solver.eigenvectors() * ev.asDiagonal() * solver.eigenvectors().transpose();
}

}  // namespace

double psnr(const Image& a, const Image& b) {
  require_same_shape(a, b, "psnr");
  const double mse = mean_squared_error(a, b);
  if (mse <= 0.0) return kPsnrCap;
  return std::min(kPsnrCap, -10.0 * std::log10(mse));
}

double ssim(const Image& a, const Image& b) {
  require_same_shape(a, b, "ssim");
  const int h = a.height(), w = a.width();
  if (h < kSsimWindow || w < kSsimWindow)
    throw ShapeError(fmt::format("ssim needs at least {0}x{0} images, got {1}x{2}", kSsimWindow, h, w));
  const std::size_t n = static_cast<std::size_t>(h) * w;
  double total = 0.0;
  std::size_t positions = 0;
  for (int c = 0; c < a.channels(); ++c) {
    std::vector<double> pa(n), pb(n), aa(n), bb(n), ab(n);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const std::size_t i = static_cast<std::size_t>(y) * w + x;
        pa[i] = a.at(y, x, c);
        pb[i] = b.at(y, x, c);
        aa[i] = pa[i] * pa[i];
        bb[i] = pb[i] * pb[i];
        ab[i] = pa[i] * pb[i];
      }
    const auto mu_a = filter_valid(pa, h, w), mu_b = filter_valid(pb, h, w);
    const auto e_aa = filter_valid(aa, h, w), e_bb = filter_valid(bb, h, w), e_ab = filter_valid(ab, h, w);
    for (std::size_t i = 0; i < mu_a.size(); ++i) {
      const double va = e_aa[i] - mu_a[i] * mu_a[i];
      const double vb = e_bb[i] - mu_b[i] * mu_b[i];
      const double cov = e_ab[i] - mu_a[i] * mu_b[i];
      const double num = (2.0 * mu_a[i] * mu_b[i] + kSsimC1) * (2.0 * cov + kSsimC2);
      const double den = (mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + kSsimC1) * (va + vb + kSsimC2);
      total += num / den;
    }
    positions += mu_a.size();
  }
  return total / static_cast<double>(positions);
}

std::vector<Eigen::VectorXd> extract_patch_features(const Image& image, const PatchRegion& region) {
  if (region && (region->height() != image.height() || region->width() != image.width()))
    throw ShapeError("extract_patch_features: region does not match the image");
  const Eigen::MatrixXd& proj = projection();
  std::vector<Eigen::VectorXd> features;
  Eigen::VectorXd patch(kPatchSize * kPatchSize * 3);
  for (int y = 0; y + kPatchSize <= image.height(); y += kPatchStride)
    for (int x = 0; x + kPatchSize <= image.width(); x += kPatchStride) {
      if (region && !region->hole(y + kPatchSize / 2, x + kPatchSize / 2)) continue;
      int i = 0;
      for (int dy = 0; dy < kPatchSize; ++dy)
        for (int dx = 0; dx < kPatchSize; ++dx)
          for (int c = 0; c < 3; ++c) patch(i++) = image.at(y + dy, x + dx, image.channels() == 3 ? c : 0);
      features.emplace_back(proj * patch);
    }
  if (features.empty()) throw DegenerateError("extract_patch_features: region contains no patch centre");
  return features;
}

FeatureStats gaussian_stats(std::span<const Eigen::VectorXd> features) {
  if (features.size() < 2)
    throw DegenerateError(fmt::format("gaussian_stats needs at least 2 samples, got {}", features.size()));
  const Eigen::Index d = features.front().size();
  FeatureStats s;
  s.count = features.size();
  s.mean = Eigen::VectorXd::Zero(d);
  for (const auto& f : features) {
    if (f.size() != d) throw ShapeError("gaussian_stats: inconsistent feature dimensions");
    s.mean += f;
  }
  s.mean /= static_cast<double>(s.count);
  s.covariance = Eigen::MatrixXd::Zero(d, d);
  for (const auto& f : features) {
    const Eigen::VectorXd c = f - s.mean;
    s.covariance.noalias() += c * c.transpose();
  }
  s.covariance /= static_cast<double>(s.count - 1);
  return s;
}

double frechet_distance(const FeatureStats& a, const FeatureStats& b) {
  if (a.mean.size() != b.mean.size() || a.covariance.rows() != b.covariance.rows())
    throw ShapeError(fmt::format("frechet_distance: dimension {} vs {}", a.mean.size(), b.mean.size()));
  const Eigen::MatrixXd sa = 0.5 * (a.covariance + a.covariance.transpose());
  const Eigen::MatrixXd sb = 0.5 * (b.covariance + b.covariance.transpose());
  const Eigen::MatrixXd root_a = symmetric_sqrt(sa, "first covariance");
  Eigen::MatrixXd product = root_a * sb * root_a;
  product = 0.5 * (product + product.transpose());

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(product, Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) throw NumericError("eigendecomposition of the covariance product failed");
  double trace_root = 0.0;
  for (Eigen::Index i = 0; i < solver.eigenvalues().size(); ++i) {
    const double ev = solver.eigenvalues()(i);
    if (ev < -kEigenTolerance)
      throw NumericError(fmt::format("covariance product is not positive semi-definite (eigenvalue {})", ev));
    trace_root += std::sqrt(std::max(ev, 0.0));
  }
  const double d2 = (a.mean - b.mean).squaredNorm() + sa.trace() + sb.trace() - 2.0 * trace_root;
  return std::max(d2, 0.0);
}

double internal_fid(const Image& candidate, const PatchRegion& candidate_region, const Image& reference,
                    const PatchRegion& reference_region) {
  const auto cf = extract_patch_features(candidate, candidate_region);
  const auto rf = extract_patch_features(reference, reference_region);
  const std::size_t need = kFeatureDim + 1;
  if (cf.size() < need || rf.size() < need)
    throw DegenerateError(fmt::format("internal_fid needs {} patches per side, got {} candidate / {} reference",
                                      need, cf.size(), rf.size()));
  return frechet_distance(gaussian_stats(cf), gaussian_stats(rf));
}

double internal_fid(const Image& candidate, const Image& reference, const Mask& hole) {
  return internal_fid(candidate, hole, reference, complement(hole));
}

void validate(const StopPolicy& p) {
  if (p.window < 1 || p.patience < 1 || p.min_evals < 0)
    throw SpecError(fmt::format("StopPolicy needs window >= 1 and patience >= 1 (got {}, {})", p.window, p.patience));
}

std::vector<double> smoothed_fid(std::span<const FidRecord> history, int window) {
  std::vector<double> out;
  out.reserve(history.size());
  for (std::size_t i = 0; i < history.size(); ++i) {
    const std::size_t lo = i + 1 >= static_cast<std::size_t>(window) ? i + 1 - window : 0;
    double sum = 0.0;
    for (std::size_t j = lo; j <= i; ++j) sum += history[j].fid;
    out.push_back(sum / static_cast<double>(i + 1 - lo));
  }
  return out;
}

bool should_stop(std::span<const FidRecord> history, const StopPolicy& policy) {
  validate(policy);
  if (history.size() < static_cast<std::size_t>(policy.min_evals)) return false;
  if (history.size() < static_cast<std::size_t>(policy.patience) + 1) return false;
  const auto s = smoothed_fid(history, policy.window);
  for (std::size_t k = s.size() - policy.patience; k < s.size(); ++k)
    if (!(s[k] > s[k - 1])) return false;
  return true;
}

}  // namespace selftune
