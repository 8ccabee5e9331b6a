#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "selftune/image.hpp"

namespace selftune {

/// Architecture of the reference gated-convolution inpainting generator.
///
/// The generator reads masked RGB plus the mask as a fourth channel, runs an
/// encoder of `depth` stride-2 blocks, one block per entry of `dilations`,
/// and a nearest-upsample decoder back to full resolution. The last 3-channel
/// convolution goes through a sigmoid, so outputs are always in [0, 1].
///
/// `base_channels == 0` (with depth 0 and no dilations) is the degenerate
/// single-convolution model: just the output layer.
struct ModelSpec {
  int input_size = 64;
  int base_channels = 32;
  int depth = 2;
  std::vector<int> dilations{2, 4};
  bool gated = true;
  bool use_discriminator = false;
  int kernel_size = 3;

  friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

void validate(const ModelSpec& spec);

/// FNV-1a hash of the generator-relevant ModelSpec fields.
std::uint64_t fingerprint(const ModelSpec& spec);
std::uint64_t discriminator_fingerprint(const ModelSpec& spec);

template <class T>
struct ParamArray {
  std::string name;
  std::vector<int> shape;
  std::vector<T> values;

  friend bool operator==(const ParamArray&, const ParamArray&) = default;
};

/// Named parameter arrays in layer order, tagged with the fingerprint of the
/// spec that created them. Also used for gradients and Adam moments.
template <class T>
class BasicParams {
 public:
  std::uint64_t fingerprint = 0;
  std::vector<ParamArray<T>> arrays;

  ParamArray<T>& at(std::string_view name);
  const ParamArray<T>& at(std::string_view name) const;

  std::size_t total_size() const;
  /// Same names and shapes in the same order.
  bool congruent(const BasicParams& other) const;
  bool all_finite() const;
  BasicParams zeros_like() const;

  template <class U>
  BasicParams<U> cast() const {
    BasicParams<U> out;
    out.fingerprint = fingerprint;
    for (const auto& a : arrays) out.arrays.push_back({a.name, a.shape, std::vector<U>(a.values.begin(), a.values.end())});
    return out;
  }

  friend bool operator==(const BasicParams&, const BasicParams&) = default;
};

using ModelParams = BasicParams<float>;
using Gradients = BasicParams<float>;

/// Channel-major (C, H, W) activation buffer.
template <class T>
struct Tensor {
  int channels = 0, height = 0, width = 0;
  std::vector<T> data;

  Tensor() = default;
  Tensor(int c, int h, int w, T fill = T(0)) : channels(c), height(h), width(w), data(std::size_t(c) * h * w, fill) {}

  T& operator()(int c, int y, int x) { return data[(std::size_t(c) * height + y) * width + x]; }
  T operator()(int c, int y, int x) const { return data[(std::size_t(c) * height + y) * width + x]; }
};

/// Converts between the (y, x, c) Image layout and (c, y, x) tensors.
template <class T>
Tensor<T> to_tensor(const Image& image);
Image to_image(const Tensor<float>& tensor);
Image to_image(const Tensor<double>& tensor);

/// Generator input: masked RGB followed by the mask channel.
template <class T>
Tensor<T> generator_input(const Image& masked, const Mask& mask);

enum class Activation { none, elu, leaky_relu, sigmoid };

struct LayerDesc {
  std::string name;
  int in = 0, out = 0;
  int kernel = 3, stride = 1, dilation = 1;
  bool upsample = false;  // nearest x2 before the convolution
  bool gated = false;     // act(feature) * sigmoid(gate)
  Activation act = Activation::none;
};

/// One training sample for grad(): the network sees `input` + `mask`; the
/// loss compares its output with `target`, ignoring `exclusion` holes.
struct Sample {
  Image input;
  Mask mask;
  Image target;
  Mask exclusion;
};

template <class T>
struct LossEval {
  double value = 0.0;
  Tensor<T> grad_output;  // d value / d network output
};

/// Differentiable scalar function of the generator output for sample `index`.
template <class T>
using LossFn = std::function<LossEval<T>(const Tensor<T>& output, std::size_t index)>;

template <class T>
struct GradResult {
  double loss = 0.0;  // mean over the batch
  BasicParams<T> grads;
  std::vector<Tensor<T>> outputs;  // forward outputs, one per sample
};

/// Sequential stack of (optionally gated) convolutions with exact
/// reverse-mode gradients. Generator and discriminator are both instances.
class ConvNet {
 public:
  ConvNet(std::vector<LayerDesc> layers, std::uint64_t fingerprint);

  const std::vector<LayerDesc>& layers() const { return layers_; }
  std::uint64_t fingerprint() const { return fingerprint_; }

  template <class T>
  BasicParams<T> init_params(std::uint64_t seed) const;

  /// Throws ContractError when names, shapes or fingerprint do not match.
  template <class T>
  void check_params(const BasicParams<T>& params) const;

  template <class T>
  Tensor<T> forward(const BasicParams<T>& params, const Tensor<T>& input) const;

  /// Forward + backward for one input. Accumulates parameter gradients of
  /// `scale * <grad_output, output>` into `grads` and returns the gradient
  /// with respect to the input when `input_grad` is non-null.
  template <class T>
  Tensor<T> backprop(const BasicParams<T>& params, const Tensor<T>& input,
                     const std::function<Tensor<T>(const Tensor<T>&)>& grad_output, BasicParams<T>& grads,
                     Tensor<T>* input_grad = nullptr) const;

 private:
  std::vector<LayerDesc> layers_;
  std::uint64_t fingerprint_;
};

std::vector<LayerDesc> generator_layers(const ModelSpec& spec);
std::vector<LayerDesc> discriminator_layers(const ModelSpec& spec);

class Generator {
 public:
  explicit Generator(ModelSpec spec);

  const ModelSpec& spec() const { return spec_; }
  const ConvNet& net() const { return net_; }

  /// Fan-in scaled normal initialization, deterministic in (spec, seed).
  template <class T = float>
  BasicParams<T> init_params(std::uint64_t seed) const {
    return net_.init_params<T>(seed);
  }

  /// f(masked, mask): full-resolution RGB in [0, 1].
  Image forward(const ModelParams& params, const Image& masked, const Mask& mask) const;

  template <class T>
  Tensor<T> forward_tensor(const BasicParams<T>& params, const Image& masked, const Mask& mask) const;

  /// Mean batch loss and its exact gradient with respect to every parameter.
  /// Throws NumericError for a non-finite loss.
  template <class T>
  GradResult<T> grad(const BasicParams<T>& params, const LossFn<T>& loss, std::span<const Sample> batch) const;

 private:
  void check_input(const Image& masked, const Mask& mask) const;

  ModelSpec spec_;
  ConvNet net_;
};

/// Four stride-2 convolutions ending in a one-channel patch score map.
class Discriminator {
 public:
  explicit Discriminator(ModelSpec spec);

  const ConvNet& net() const { return net_; }

  template <class T = float>
  BasicParams<T> init_params(std::uint64_t seed) const {
    return net_.init_params<T>(seed);
  }

  Tensor<float> forward(const ModelParams& params, const Image& image) const;

 private:
  ModelSpec spec_;
  ConvNet net_;
};

/// Throws ConfigError when spec.use_discriminator is false.
Tensor<float> disc_forward(const ModelSpec& spec, const ModelParams& disc_params, const Image& image);

template <class T>
struct BasicOptimState {
  BasicParams<T> first_moment;
  BasicParams<T> second_moment;
  std::int64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

using OptimState = BasicOptimState<float>;

template <class T>
BasicOptimState<T> init_optim(const BasicParams<T>& params, double beta1 = 0.9, double beta2 = 0.999,
                              double epsilon = 1e-8);

/// Adam with bias correction. Throws NumericError on non-finite gradients
/// (params untouched) or when the update leaves a non-finite entry.
template <class T>
void adam_step(BasicParams<T>& params, const BasicParams<T>& grads, BasicOptimState<T>& state, double lr);

}  // namespace selftune
