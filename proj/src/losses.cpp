#include "selftune/losses.hpp"

#include <cmath>
#include <fmt/format.h>

#include "selftune/error.hpp"

namespace selftune {

namespace {

void check_pair(const Image& target, int c, int h, int w, const Mask& exclusion) {
  if (target.channels() != c || target.height() != h || target.width() != w)
    throw ShapeError(fmt::format("rec_loss: target {}x{}x{} vs prediction {}x{}x{}", target.height(), target.width(),
                                 target.channels(), h, w, c));
  if (exclusion.height() != h || exclusion.width() != w) throw ShapeError("rec_loss: mask does not match the images");
}

}  // namespace

RecLoss rec_loss(const Image& target, const Image& prediction, const Mask& exclusion) {
  check_pair(target, prediction.channels(), prediction.height(), prediction.width(), exclusion);
  double sum = 0.0;
  std::size_t n = 0;
  for (int y = 0; y < target.height(); ++y)
    for (int x = 0; x < target.width(); ++x) {
      if (exclusion.hole(y, x)) continue;
      for (int c = 0; c < target.channels(); ++c) {
        const double d = static_cast<double>(prediction.at(y, x, c)) - target.at(y, x, c);
        sum += d * d;
        ++n;
      }
    }
  if (n == 0) return {0.0, true};
  return {sum / static_cast<double>(n), false};
}

template <class T>
LossEval<T> rec_loss_with_grad(const Image& target, const Tensor<T>& prediction, const Mask& exclusion) {
  check_pair(target, prediction.channels, prediction.height, prediction.width, exclusion);
  LossEval<T> e;
  e.grad_output = Tensor<T>(prediction.channels, prediction.height, prediction.width);
  const std::size_t valid = (static_cast<std::size_t>(target.height()) * target.width() - exclusion.count()) *
                            static_cast<std::size_t>(target.channels());
  if (valid == 0) return e;
  const double scale = 2.0 / static_cast<double>(valid);
  double sum = 0.0;
  for (int y = 0; y < target.height(); ++y)
    for (int x = 0; x < target.width(); ++x) {
      if (exclusion.hole(y, x)) continue;
      for (int c = 0; c < target.channels(); ++c) {
        const double d = static_cast<double>(prediction(c, y, x)) - target.at(y, x, c);
        sum += d * d;
        e.grad_output(c, y, x) = static_cast<T>(scale * d);
      }
    }
  e.value = sum / static_cast<double>(valid);
  return e;
}

template LossEval<float> rec_loss_with_grad<float>(const Image&, const Tensor<float>&, const Mask&);
template LossEval<double> rec_loss_with_grad<double>(const Image&, const Tensor<double>&, const Mask&);

AdvTerms adv_loss(const ModelSpec& spec, const ModelParams& disc_params, const Image& real, const Image& fake) {
  if (!spec.use_discriminator) throw ConfigError("adv_loss called with the discriminator disabled");
  const Discriminator disc(spec);
  const auto d_real = disc.forward(disc_params, real);
  const auto d_fake = disc.forward(disc_params, fake);
  AdvTerms t;
  double gen = 0.0, hinge_real = 0.0, hinge_fake = 0.0;
  for (float v : d_fake.data) {
    gen -= v;
    hinge_fake += std::max(0.0, 1.0 + v);
  }
  for (float v : d_real.data) hinge_real += std::max(0.0, 1.0 - v);
  t.generator = gen / static_cast<double>(d_fake.data.size());
  t.discriminator = hinge_real / static_cast<double>(d_real.data.size()) +
                    hinge_fake / static_cast<double>(d_fake.data.size());
  return t;
}

LossEval<float> adv_generator_with_grad(const Discriminator& disc, const ModelParams& disc_params,
                                        const Tensor<float>& fake) {
  ModelParams scratch = disc_params.zeros_like();
  LossEval<float> e;
  Tensor<float> input_grad;
  disc.net().backprop<float>(
      disc_params, fake,
      [&](const Tensor<float>& scores) {
        const double inv = 1.0 / static_cast<double>(scores.data.size());
        double sum = 0.0;
        for (float v : scores.data) sum += v;
        e.value = -sum * inv;
        Tensor<float> g(scores.channels, scores.height, scores.width, static_cast<float>(-inv));
        return g;
      },
      scratch, &input_grad);
  e.grad_output = std::move(input_grad);
  return e;
}

double adv_discriminator_grad(const Discriminator& disc, const ModelParams& disc_params, const Tensor<float>& real,
                              const Tensor<float>& fake, ModelParams& grads) {
  double loss = 0.0;
  auto hinge = [&](const Tensor<float>& input, float sign) {
    disc.net().backprop<float>(
        disc_params, input,
        [&](const Tensor<float>& scores) {
          const double inv = 1.0 / static_cast<double>(scores.data.size());
          Tensor<float> g(scores.channels, scores.height, scores.width);
          // real: relu(1 - D), fake: relu(1 + D)
          for (std::size_t i = 0; i < scores.data.size(); ++i) {
            const double margin = 1.0 - sign * scores.data[i];
            if (margin > 0.0) {
              loss += margin * inv;
              g.data[i] = static_cast<float>(-sign * inv);
            }
          }
          return g;
        },
        grads);
  };
  hinge(real, 1.0f);
  hinge(fake, -1.0f);
  return loss;
}

double total_loss(double rec, double adv, const LossWeights& weights) {
  if (!std::isfinite(rec) || !std::isfinite(adv))
    throw NumericError(fmt::format("non-finite loss term (rec {}, adv {})", rec, adv));
  return weights.rec * rec + weights.adv * adv;
}

}  // namespace selftune
