#include "selftune/pretrain.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <fstream>
#include <numeric>

#include "selftune/error.hpp"
#include "selftune/rng.hpp"

namespace selftune {

namespace {

constexpr std::uint64_t kShuffleTag = 1;
constexpr std::uint64_t kSampleTag = 2;
constexpr std::uint64_t kInitTag = 3;

}  // namespace

void validate(const TrainConfig& c) {
  if (c.epochs < 0 || c.batch_size < 1) throw SpecError("TrainConfig: epochs >= 0 and batch_size >= 1 required");
  if (!(c.lr > 0.0)) throw SpecError("TrainConfig: lr must be positive");
  if (c.weights.rec < 0.0 || c.weights.adv < 0.0) throw SpecError("TrainConfig: loss weights must be >= 0");
  validate(c.mask);
}

PretrainResult pretrain(const ModelSpec& spec, const std::vector<Image>& dataset, const TrainConfig& config,
                        const EpochCallback& on_epoch) {
  validate(config);
  if (dataset.empty()) throw SpecError("pretrain: empty dataset");
  const Generator gen(spec);
  const bool adversarial = spec.use_discriminator && config.weights.adv > 0.0;
  const Discriminator disc(spec);

  PretrainResult result;
  result.params = gen.init_params(derive_seed(config.seed, {kInitTag}));
  auto optim = init_optim(result.params);
  std::optional<OptimState> disc_optim;
  if (adversarial) {
    result.discriminator = disc.init_params(derive_seed(config.seed, {kInitTag, 1}));
    disc_optim = init_optim(*result.discriminator);
  }

  const int size = spec.input_size;
  std::vector<std::size_t> order(dataset.size());
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle(derive_seed(config.seed, {kShuffleTag, static_cast<std::uint64_t>(epoch)}));
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle.next() % i]);

    double epoch_sum = 0.0;
    int batches = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      std::vector<Sample> batch;
      for (std::size_t j = start; j < end; ++j) {
        const std::size_t idx = order[j];
        const std::uint64_t sample_seed =
            derive_seed(config.seed, {kSampleTag, static_cast<std::uint64_t>(epoch), static_cast<std::uint64_t>(idx)});
        Image clean = dataset[idx];
        if (clean.height() != size || clean.width() != size || clean.channels() != 3)
          throw ShapeError(fmt::format("pretrain: dataset image {} is {}x{}x{}, model expects {}x{}x3", idx,
                                       clean.height(), clean.width(), clean.channels(), size, size));
        if (config.flips) {
          Rng flip(sample_seed);
          if (flip.next() & 1) clean = transform(clean, Transform::flip_horizontal);
          if (flip.next() & 1) clean = transform(clean, Transform::flip_vertical);
        }
        Mask hole = gen_freeform(size, size, config.mask, derive_seed(sample_seed, {1}));
        batch.push_back({apply_mask(clean, hole), hole, clean, Mask(size, size)});
      }

      double batch_rec = 0.0;
      const LossFn<float> loss = [&](const Tensor<float>& out, std::size_t i) {
        LossEval<float> e = rec_loss_with_grad(batch[i].target, out, batch[i].exclusion);
        batch_rec += e.value;
        e.value *= config.weights.rec;
        for (auto& g : e.grad_output.data) g = static_cast<float>(g * config.weights.rec);
        if (adversarial) {
          const auto adv = adv_generator_with_grad(disc, *result.discriminator, out);
          for (std::size_t k = 0; k < e.grad_output.data.size(); ++k)
            e.grad_output.data[k] += static_cast<float>(config.weights.adv * adv.grad_output.data[k]);
        }
        return e;
      };

      GradResult<float> g;
      try {
        g = gen.grad(result.params, loss, batch);
      } catch (const NumericError& err) {
        throw NumericError(fmt::format("pretrain diverged in epoch {}: {}", epoch + 1, err.what()));
      }
      if (adversarial) {
        ModelParams dg = result.discriminator->zeros_like();
        for (std::size_t i = 0; i < batch.size(); ++i)
          adv_discriminator_grad(disc, *result.discriminator, to_tensor<float>(batch[i].target), g.outputs[i], dg);
        for (auto& a : dg.arrays)
          for (auto& v : a.values) v /= static_cast<float>(batch.size());
        adam_step(*result.discriminator, dg, *disc_optim, config.lr);
      }
      try {
        adam_step(result.params, g.grads, optim, config.lr);
      } catch (const NumericError& err) {
        throw NumericError(fmt::format("pretrain diverged in epoch {}: {}", epoch + 1, err.what()));
      }
      epoch_sum += batch_rec / static_cast<double>(batch.size());
      ++batches;
    }
    const double mean = epoch_sum / batches;
    if (!std::isfinite(mean)) throw NumericError(fmt::format("pretrain diverged in epoch {}", epoch + 1));
    result.epoch_loss.push_back(mean);
    if (on_epoch) on_epoch(epoch + 1, mean);
  }
  return result;
}

void write_loss_log(const std::vector<double>& epoch_loss, const std::filesystem::path& path) {
  std::ofstream f(path);
  if (!f) throw IoError(fmt::format("cannot write '{}'", path.string()));
  f << "epoch,loss\n";
  for (std::size_t i = 0; i < epoch_loss.size(); ++i) f << fmt::format("{},{:.8f}\n", i + 1, epoch_loss[i]);
}

}  // namespace selftune
