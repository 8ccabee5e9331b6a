#pragma once

#include "selftune/model.hpp"

namespace selftune {

struct RecLoss {
  double value = 0.0;
  bool degenerate = false;  // every pixel excluded, nothing to supervise
};

/// Mean squared difference over pixels where `exclusion` is 0, all channels.
/// Excluded pixels are skipped entirely, so their contents never matter.
RecLoss rec_loss(const Image& target, const Image& prediction, const Mask& exclusion);

/// rec_loss of a (C, H, W) network output, with its gradient.
template <class T>
LossEval<T> rec_loss_with_grad(const Image& target, const Tensor<T>& prediction, const Mask& exclusion);

/// Hinge pair: generator term -mean D(fake), discriminator term
/// mean relu(1 - D(real)) + mean relu(1 + D(fake)).
struct AdvTerms {
  double generator = 0.0;
  double discriminator = 0.0;
};

/// Throws ConfigError when spec.use_discriminator is false.
AdvTerms adv_loss(const ModelSpec& spec, const ModelParams& disc_params, const Image& real, const Image& fake);

/// Generator-side adversarial term for a network output, with its gradient
/// with respect to that output.
LossEval<float> adv_generator_with_grad(const Discriminator& disc, const ModelParams& disc_params,
                                        const Tensor<float>& fake);

/// Accumulates the discriminator hinge-loss gradient for one (real, fake)
/// pair into `grads`; returns the loss value.
double adv_discriminator_grad(const Discriminator& disc, const ModelParams& disc_params, const Tensor<float>& real,
                              const Tensor<float>& fake, ModelParams& grads);

struct LossWeights {
  double rec = 1.0;
  double adv = 0.0;
  friend bool operator==(const LossWeights&, const LossWeights&) = default;
};

/// weights.rec * rec + weights.adv * adv; NumericError for non-finite terms.
double total_loss(double rec, double adv, const LossWeights& weights);

}  // namespace selftune
