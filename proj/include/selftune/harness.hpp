#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "selftune/config.hpp"
#include "selftune/finetune.hpp"

namespace selftune {

/// One report line. Failure rows have no T and a stop reason starting with "error: ".
struct ReportRow {
  std::string image_id;
  std::optional<int> T;
  std::optional<double> psnr, ssim, fid;
  std::optional<double> seconds;
  std::string stop_reason;

  friend bool operator==(const ReportRow&, const ReportRow&) = default;
};

inline constexpr std::string_view kReportHeader = "image_id,T,psnr,ssim,fid,seconds,stop_reason";
inline constexpr std::string_view kMeanId = "mean";

struct ImageOutcome {
  std::string image_id;
  std::optional<RunLog> log;  // empty when the image failed
  std::string error;
};

struct ExperimentReport {
  std::vector<ReportRow> rows;  // per-image rows (by image id), then one "mean" row per checkpoint
  std::vector<ImageOutcome> images;
};

struct InputImage {
  std::string id;
  Image clean;
};

/// Images named by the experiment: the folder's PNG stems, or
/// "<index:03>_<family>" for synthetic ones (non-repetitive runs read "..._noise").
std::vector<InputImage> experiment_images(const ExperimentConfig& config, int size);

// Seed splitting for image i of an experiment with global seed s:
//   synthetic images   derive_seed(s, {kImageSeedTag})
//   hole mask          derive_seed(s, {kHoleSeedTag, i})
//   fine-tuning run    derive_seed(s, {kRunSeedTag, i})
inline constexpr std::uint64_t kImageSeedTag = 201;
inline constexpr std::uint64_t kHoleSeedTag = 202;
inline constexpr std::uint64_t kRunSeedTag = 203;

using ProgressFn = std::function<void(std::size_t done, std::size_t total, const ImageOutcome&)>;

/// Fine-tunes every image, writes per-image artifacts under output_dir and
/// returns the report. Per-image failures become failure rows.
ExperimentReport run_experiment(const ExperimentConfig& config, const ProgressFn& progress = {});

std::string format_report(const std::vector<ReportRow>& rows);
void write_report(const std::vector<ReportRow>& rows, const std::filesystem::path& path);

/// "<weights>.disc", the optional discriminator saved next to generator weights.
std::filesystem::path discriminator_path(const std::filesystem::path& weights);

}  // namespace selftune
