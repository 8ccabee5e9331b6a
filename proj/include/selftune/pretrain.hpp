#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <vector>

#include "selftune/losses.hpp"
#include "selftune/maskgen.hpp"
#include "selftune/model.hpp"

namespace selftune {

struct TrainConfig {
  int epochs = 40;
  int batch_size = 8;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  LossWeights weights;
  FreeformSpec mask;
  bool flips = true;  // random horizontal / vertical flips per sample

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

void validate(const TrainConfig& config);

struct PretrainResult {
  ModelParams params;
  std::optional<ModelParams> discriminator;
  std::vector<double> epoch_loss;  // mean reconstruction loss per epoch
};

using EpochCallback = std::function<void(int epoch, double loss)>;

/// Supervised training of the generator on (masked image, clean image) pairs
/// with the loss taken over every pixel. Deterministic in (spec, dataset,
/// config). Throws NumericError naming the epoch on divergence.
PretrainResult pretrain(const ModelSpec& spec, const std::vector<Image>& dataset, const TrainConfig& config,
                        const EpochCallback& on_epoch = {});

/// CSV with header "epoch,loss", epochs numbered from 1.
void write_loss_log(const std::vector<double>& epoch_loss, const std::filesystem::path& path);

}  // namespace selftune
