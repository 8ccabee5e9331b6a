#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "selftune/finetune.hpp"
#include "selftune/model.hpp"
#include "selftune/pretrain.hpp"
#include "selftune/synthetic.hpp"

namespace selftune {

using Json = nlohmann::json;

/// Everything `pretrain` needs. The training images are the synthetic corpus
/// of `dataset` generated from derive_seed(train.seed, {kDatasetSeedTag}).
struct PretrainConfig {
  ModelSpec model;
  DatasetSpec dataset;
  TrainConfig train;

  friend bool operator==(const PretrainConfig&, const PretrainConfig&) = default;
};

inline constexpr std::uint64_t kDatasetSeedTag = 101;

enum class Metric { psnr, ssim, fid };
std::string_view to_string(Metric m);

struct ExperimentConfig {
  std::filesystem::path weights;
  /// Model spec file. Empty means "<weights>.spec.json" if present, else the default ModelSpec.
  std::filesystem::path model;
  /// Image source: a folder of PNGs, or the synthetic `dataset` when empty.
  std::filesystem::path image_folder;
  DatasetSpec dataset;
  /// Hole source: "<mask_folder>/<image_id>.png", or `holes` generated per image when empty.
  std::filesystem::path mask_folder;
  FreeformSpec holes;
  FinetuneConfig finetune;  // iterations and checkpoints are taken from `checkpoints`
  std::vector<Metric> metrics{Metric::psnr, Metric::ssim, Metric::fid};
  std::vector<int> checkpoints{0, 100, 200, 400};
  std::filesystem::path output_dir = "out";
  std::uint64_t seed = 0;
  bool timing = false;  // fill the seconds column (makes the report non-reproducible)
  int workers = 1;

  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

void validate(const ExperimentConfig& config);

// JSON mapping. Readers reject unknown keys and wrong types with ConfigError;
// missing keys keep their defaults.
Json to_json(const ModelSpec& v);
Json to_json(const FreeformSpec& v);
Json to_json(const RectSpec& v);
Json to_json(const DatasetSpec& v);
Json to_json(const TrainConfig& v);
Json to_json(const StopPolicy& v);
Json to_json(const FinetuneConfig& v);
Json to_json(const PretrainConfig& v);
Json to_json(const ExperimentConfig& v);

ModelSpec model_spec_from_json(const Json& j);
FreeformSpec freeform_from_json(const Json& j);
DatasetSpec dataset_from_json(const Json& j);
TrainConfig train_from_json(const Json& j);
FinetuneConfig finetune_from_json(const Json& j);
PretrainConfig pretrain_config_from_json(const Json& j);
ExperimentConfig experiment_config_from_json(const Json& j);

Json read_json(const std::filesystem::path& path);
void write_json(const Json& j, const std::filesystem::path& path);

PretrainConfig load_pretrain_config(const std::filesystem::path& path);

/// Relative paths are resolved against the config file's directory. The
/// weights file (and mask/image folders when given) must exist.
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

/// "<weights>.spec.json", written next to trained weights.
std::filesystem::path spec_sidecar(const std::filesystem::path& weights);

/// Explicit spec file, else the weights sidecar, else the default ModelSpec.
ModelSpec resolve_model_spec(const std::filesystem::path& weights, const std::filesystem::path& model_file);

}  // namespace selftune
