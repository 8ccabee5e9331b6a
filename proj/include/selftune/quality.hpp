#pragma once

#include <Eigen/Core>
#include <optional>
#include <span>
#include <vector>

#include "selftune/image.hpp"

namespace selftune {

inline constexpr double kPsnrCap = 100.0;

/// -10 log10(MSE) for unit-range images, capped at kPsnrCap (identical images).
double psnr(const Image& a, const Image& b);

/// Single-scale SSIM: 11x11 Gaussian window (sigma 1.5) over valid positions,
/// C1 = 0.01^2, C2 = 0.03^2, averaged over positions and channels.
double ssim(const Image& a, const Image& b);

// ---------------------------------------------------------------------------
// Patch-feature Frechet distance

inline constexpr int kPatchSize = 8;
inline constexpr int kPatchStride = 4;
inline constexpr int kFeatureDim = 16;

/// Pixels with value 1 belong to the region; nullopt means the whole image.
using PatchRegion = std::optional<Mask>;

/// Dense 8x8 stride-4 patches whose centre pixel (y + 4, x + 4) lies in the
/// region, each projected by a fixed seed-0 random linear filter bank to 16
/// dimensions. Gray images are treated as RGB with equal channels.
/// Throws DegenerateError when no patch qualifies.
std::vector<Eigen::VectorXd> extract_patch_features(const Image& image, const PatchRegion& region = std::nullopt);

struct FeatureStats {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;
  std::size_t count = 0;

  /// Fewer samples than dimension + 1: the covariance is rank deficient.
  bool degenerate() const { return count < static_cast<std::size_t>(mean.size()) + 1; }
};

/// Sample mean and unbiased covariance. Throws DegenerateError below 2 samples.
FeatureStats gaussian_stats(std::span<const Eigen::VectorXd> features);

/// |mu1 - mu2|^2 + Tr(S1 + S2 - 2 (S1 S2)^{1/2}), with the trace of the root
/// taken from the eigenvalues of the symmetric S1^{1/2} S2 S1^{1/2}.
/// Eigenvalues in [-1e-8, 0) are clamped; lower ones throw NumericError.
double frechet_distance(const FeatureStats& a, const FeatureStats& b);

/// Frechet distance between candidate patches in `candidate_region` and
/// reference patches in `reference_region`. Each side needs at least
/// kFeatureDim + 1 patches, else DegenerateError.
double internal_fid(const Image& candidate, const PatchRegion& candidate_region, const Image& reference,
                    const PatchRegion& reference_region);

/// No-reference score of an inpainting: patches centred in the hole of
/// `candidate` against patches centred in the valid part of `reference`.
double internal_fid(const Image& candidate, const Image& reference, const Mask& hole);

// ---------------------------------------------------------------------------
// Early stopping

struct FidRecord {
  int iteration = 0;
  double fid = 0.0;
  friend bool operator==(const FidRecord&, const FidRecord&) = default;
};

struct StopPolicy {
  int window = 3;     // trailing mean over this many evaluations
  int patience = 2;   // consecutive smoothed increases needed
  int min_evals = 4;  // evaluations before stopping is allowed

  friend bool operator==(const StopPolicy&, const StopPolicy&) = default;
};

void validate(const StopPolicy& policy);

/// Trailing-window mean of the FID history (partial windows at the start).
std::vector<double> smoothed_fid(std::span<const FidRecord> history, int window);

/// True iff the history holds at least min_evals entries and the smoothed
/// FID rose at each of the last `patience` evaluations.
bool should_stop(std::span<const FidRecord> history, const StopPolicy& policy);

}  // namespace selftune
