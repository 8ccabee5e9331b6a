#include "selftune/model.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <fmt/format.h>

#include "selftune/error.hpp"
#include "selftune/rng.hpp"

namespace selftune {

namespace {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MatMap = Eigen::Map<RowMat<T>>;
template <class T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string canonical(const ModelSpec& s) {
  std::string out = fmt::format("input={};base={};depth={};kernel={};gated={};dil=", s.input_size, s.base_channels,
                                s.depth, s.kernel_size, s.gated ? 1 : 0);
  for (int d : s.dilations) out += fmt::format("{},", d);
  return out;
}

int padding_of(const LayerDesc& l) { return l.dilation * (l.kernel - 1) / 2; }

int out_extent(int in, const LayerDesc& l) {
  return (in + 2 * padding_of(l) - l.dilation * (l.kernel - 1) - 1) / l.stride + 1;
}

template <class T>
T activate(Activation a, T x) {
  switch (a) {
    case Activation::none: return x;
    case Activation::elu: return x > T(0) ? x : std::expm1(x);
    case Activation::leaky_relu: return x > T(0) ? x : T(0.2) * x;
    case Activation::sigmoid: return T(1) / (T(1) + std::exp(-x));
  }
  return x;
}

// Derivative expressed through the pre-activation x.
template <class T>
T activate_grad(Activation a, T x) {
  switch (a) {
    case Activation::none: return T(1);
    case Activation::elu: return x > T(0) ? T(1) : std::exp(x);
    case Activation::leaky_relu: return x > T(0) ? T(1) : T(0.2);
    case Activation::sigmoid: {
      const T s = T(1) / (T(1) + std::exp(-x));
      return s * (T(1) - s);
    }
  }
  return T(1);
}

template <class T>
T sigmoid(T x) {
  return T(1) / (T(1) + std::exp(-x));
}

template <class T>
Tensor<T> upsample2(const Tensor<T>& x) {
  Tensor<T> out(x.channels, x.height * 2, x.width * 2);
  for (int c = 0; c < x.channels; ++c)
    for (int y = 0; y < out.height; ++y)
      for (int xx = 0; xx < out.width; ++xx) out(c, y, xx) = x(c, y / 2, xx / 2);
  return out;
}

template <class T>
Tensor<T> upsample2_backward(const Tensor<T>& g) {
  Tensor<T> out(g.channels, g.height / 2, g.width / 2);
  for (int c = 0; c < g.channels; ++c)
    for (int y = 0; y < g.height; ++y)
      for (int x = 0; x < g.width; ++x) out(c, y / 2, x / 2) += g(c, y, x);
  return out;
}

// Rows indexed by (c, ky, kx), columns by output position (oy, ox).
template <class T>
void im2col(const Tensor<T>& x, const LayerDesc& l, int oh, int ow, std::vector<T>& cols) {
  const int k = l.kernel, pad = padding_of(l);
  const std::size_t n = std::size_t(oh) * ow;
  cols.assign(std::size_t(x.channels) * k * k * n, T(0));
  std::size_t row = 0;
  for (int c = 0; c < x.channels; ++c)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx, ++row) {
        T* dst = cols.data() + row * n;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * l.stride - pad + ky * l.dilation;
          if (iy < 0 || iy >= x.height) continue;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * l.stride - pad + kx * l.dilation;
            if (ix >= 0 && ix < x.width) dst[std::size_t(oy) * ow + ox] = x(c, iy, ix);
          }
        }
      }
}

template <class T>
Tensor<T> col2im(const std::vector<T>& cols, const LayerDesc& l, int channels, int h, int w, int oh, int ow) {
  Tensor<T> out(channels, h, w);
  const int k = l.kernel, pad = padding_of(l);
  const std::size_t n = std::size_t(oh) * ow;
  std::size_t row = 0;
  for (int c = 0; c < channels; ++c)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx, ++row) {
        const T* src = cols.data() + row * n;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * l.stride - pad + ky * l.dilation;
          if (iy < 0 || iy >= h) continue;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * l.stride - pad + kx * l.dilation;
            if (ix >= 0 && ix < w) out(c, iy, ix) += src[std::size_t(oy) * ow + ox];
          }
        }
      }
  return out;
}

template <class T>
struct LayerCache {
  int in_c = 0, in_h = 0, in_w = 0;  // after optional upsampling
  int out_h = 0, out_w = 0;
  std::vector<T> cols;
  std::vector<T> feature;  // pre-activation
  std::vector<T> gate;     // pre-sigmoid
};

struct LayerParams {
  std::size_t weight, bias, gate_weight, gate_bias;
};

std::vector<LayerParams> param_slots(const std::vector<LayerDesc>& layers) {
  std::vector<LayerParams> slots;
  std::size_t next = 0;
  for (const auto& l : layers) {
    LayerParams p{next, next + 1, 0, 0};
    next += 2;
    if (l.gated) {
      p.gate_weight = next;
      p.gate_bias = next + 1;
      next += 2;
    }
    slots.push_back(p);
  }
  return slots;
}

template <class T>
Tensor<T> layer_forward(const LayerDesc& l, const LayerParams& slot, const BasicParams<T>& params,
                        const Tensor<T>& input, LayerCache<T>& cache) {
  const Tensor<T> up = l.upsample ? upsample2(input) : Tensor<T>();
  const Tensor<T>& x = l.upsample ? up : input;
  cache.in_c = x.channels;
  cache.in_h = x.height;
  cache.in_w = x.width;
  cache.out_h = out_extent(x.height, l);
  cache.out_w = out_extent(x.width, l);
  const int n = cache.out_h * cache.out_w;
  const int kdim = l.in * l.kernel * l.kernel;
  im2col(x, l, cache.out_h, cache.out_w, cache.cols);
  ConstMatMap<T> cols(cache.cols.data(), kdim, n);

  auto affine = [&](std::size_t w_idx, std::size_t b_idx, std::vector<T>& dst) {
    dst.resize(std::size_t(l.out) * n);
    MatMap<T> out(dst.data(), l.out, n);
    ConstMatMap<T> w(params.arrays[w_idx].values.data(), l.out, kdim);
    out.noalias() = w * cols;
    const auto& b = params.arrays[b_idx].values;
    for (int o = 0; o < l.out; ++o) out.row(o).array() += b[o];
  };
  affine(slot.weight, slot.bias, cache.feature);
  if (l.gated) affine(slot.gate_weight, slot.gate_bias, cache.gate);

  Tensor<T> y(l.out, cache.out_h, cache.out_w);
  for (std::size_t i = 0; i < y.data.size(); ++i) {
    T v = activate(l.act, cache.feature[i]);
    if (l.gated) v *= sigmoid(cache.gate[i]);
    y.data[i] = v;
  }
  return y;
}

template <class T>
Tensor<T> layer_backward(const LayerDesc& l, const LayerParams& slot, const BasicParams<T>& params,
                         const LayerCache<T>& cache, const Tensor<T>& dy, BasicParams<T>& grads, bool need_input) {
  const int n = cache.out_h * cache.out_w;
  const int kdim = l.in * l.kernel * l.kernel;
  std::vector<T> dfeat(dy.data.size()), dgate;
  if (l.gated) dgate.resize(dy.data.size());
  for (std::size_t i = 0; i < dy.data.size(); ++i) {
    const T f = cache.feature[i];
    if (l.gated) {
      const T s = sigmoid(cache.gate[i]);
      dfeat[i] = dy.data[i] * s * activate_grad(l.act, f);
      dgate[i] = dy.data[i] * activate(l.act, f) * s * (T(1) - s);
    } else {
      dfeat[i] = dy.data[i] * activate_grad(l.act, f);
    }
  }

  ConstMatMap<T> cols(cache.cols.data(), kdim, n);
  RowMat<T> dcols;
  auto accumulate = [&](std::size_t w_idx, std::size_t b_idx, const std::vector<T>& d) {
    ConstMatMap<T> dm(d.data(), l.out, n);
    // Product into a temporary first so accumulation order does not depend
    // on GEMM blocking (batch sums stay exactly reproducible).
    RowMat<T> dw;
    dw.noalias() = dm * cols.transpose();
    MatMap<T> gw(grads.arrays[w_idx].values.data(), l.out, kdim);
    gw += dw;
    auto& gb = grads.arrays[b_idx].values;
    // Plain loop: Eigen's vectorized sum() peels by address alignment.
    for (int o = 0; o < l.out; ++o) {
      T acc = T(0);
      for (const T* p = d.data() + std::size_t(o) * n, *end = p + n; p != end; ++p) acc += *p;
      gb[o] += acc;
    }
    if (need_input) {
      ConstMatMap<T> w(params.arrays[w_idx].values.data(), l.out, kdim);
      if (dcols.size() == 0)
        dcols.noalias() = w.transpose() * dm;
      else
        dcols.noalias() += w.transpose() * dm;
    }
  };
  accumulate(slot.weight, slot.bias, dfeat);
  if (l.gated) accumulate(slot.gate_weight, slot.gate_bias, dgate);
  if (!need_input) return {};

  std::vector<T> flat(dcols.data(), dcols.data() + dcols.size());
  Tensor<T> dx = col2im(flat, l, cache.in_c, cache.in_h, cache.in_w, cache.out_h, cache.out_w);
  return l.upsample ? upsample2_backward(dx) : dx;
}

}  // namespace

// ---------------------------------------------------------------------------
// ModelSpec

void validate(const ModelSpec& s) {
  if (s.input_size <= 0) throw SpecError(fmt::format("input_size must be positive, got {}", s.input_size));
  if (s.depth < 0 || s.depth > 8) throw SpecError(fmt::format("depth {} out of range", s.depth));
  if (s.input_size % (1 << s.depth) != 0)
    throw SpecError(fmt::format("input_size {} is not divisible by 2^{}", s.input_size, s.depth));
  if (s.kernel_size < 1 || s.kernel_size % 2 == 0)
    throw SpecError(fmt::format("kernel_size must be odd and positive, got {}", s.kernel_size));
  if (s.base_channels < 0) throw SpecError("base_channels must be non-negative");
  if (s.base_channels == 0 && (s.depth != 0 || !s.dilations.empty()))
    throw SpecError("base_channels 0 is only valid with depth 0 and no middle blocks");
  for (int d : s.dilations)
    if (d < 1) throw SpecError(fmt::format("dilation {} must be >= 1", d));
}

std::uint64_t fingerprint(const ModelSpec& spec) { return fnv1a("generator;" + canonical(spec)); }

std::uint64_t discriminator_fingerprint(const ModelSpec& spec) {
  return fnv1a("discriminator;" + canonical(spec));
}

std::vector<LayerDesc> generator_layers(const ModelSpec& s) {
  validate(s);
  const int k = s.kernel_size;
  std::vector<LayerDesc> layers;
  if (s.base_channels == 0) {
    layers.push_back({"out", 4, 3, k, 1, 1, false, false, Activation::sigmoid});
    return layers;
  }
  const int b = s.base_channels;
  layers.push_back({"enc0", 4, b, k, 1, 1, false, s.gated, Activation::elu});
  for (int d = 1; d <= s.depth; ++d)
    layers.push_back({fmt::format("enc{}", d), b << (d - 1), b << d, k, 2, 1, false, s.gated, Activation::elu});
  const int wide = b << s.depth;
  for (std::size_t i = 0; i < s.dilations.size(); ++i)
    layers.push_back({fmt::format("mid{}", i), wide, wide, k, 1, s.dilations[i], false, s.gated, Activation::elu});
  for (int d = s.depth; d >= 1; --d)
    layers.push_back({fmt::format("dec{}", d), b << d, b << (d - 1), k, 1, 1, true, s.gated, Activation::elu});
  layers.push_back({"out", b, 3, k, 1, 1, false, false, Activation::sigmoid});
  return layers;
}

std::vector<LayerDesc> discriminator_layers(const ModelSpec& s) {
  validate(s);
  const int b = std::max(s.base_channels, 8);
  return {
      {"disc0", 3, b, 3, 2, 1, false, false, Activation::leaky_relu},
      {"disc1", b, 2 * b, 3, 2, 1, false, false, Activation::leaky_relu},
      {"disc2", 2 * b, 4 * b, 3, 2, 1, false, false, Activation::leaky_relu},
      {"disc3", 4 * b, 1, 3, 2, 1, false, false, Activation::none},
  };
}

// ---------------------------------------------------------------------------
// BasicParams

template <class T>
ParamArray<T>& BasicParams<T>::at(std::string_view name) {
  for (auto& a : arrays)
    if (a.name == name) return a;
  throw ContractError(fmt::format("no parameter named '{}'", name));
}

template <class T>
const ParamArray<T>& BasicParams<T>::at(std::string_view name) const {
  for (const auto& a : arrays)
    if (a.name == name) return a;
  throw ContractError(fmt::format("no parameter named '{}'", name));
}

template <class T>
std::size_t BasicParams<T>::total_size() const {
  std::size_t n = 0;
  for (const auto& a : arrays) n += a.values.size();
  return n;
}

template <class T>
bool BasicParams<T>::congruent(const BasicParams& other) const {
  if (arrays.size() != other.arrays.size()) return false;
  for (std::size_t i = 0; i < arrays.size(); ++i)
    if (arrays[i].name != other.arrays[i].name || arrays[i].shape != other.arrays[i].shape ||
        arrays[i].values.size() != other.arrays[i].values.size())
      return false;
  return true;
}

template <class T>
bool BasicParams<T>::all_finite() const {
  for (const auto& a : arrays)
    for (T v : a.values)
      if (!std::isfinite(v)) return false;
  return true;
}

template <class T>
BasicParams<T> BasicParams<T>::zeros_like() const {
  BasicParams out;
  out.fingerprint = fingerprint;
  for (const auto& a : arrays) out.arrays.push_back({a.name, a.shape, std::vector<T>(a.values.size(), T(0))});
  return out;
}

// ---------------------------------------------------------------------------
// Tensors

template <class T>
Tensor<T> to_tensor(const Image& image) {
  Tensor<T> t(image.channels(), image.height(), image.width());
  for (int y = 0; y < image.height(); ++y)
    for (int x = 0; x < image.width(); ++x)
      for (int c = 0; c < image.channels(); ++c) t(c, y, x) = static_cast<T>(image.at(y, x, c));
  return t;
}

namespace {
template <class T>
Image tensor_to_image(const Tensor<T>& t) {
  std::vector<float> data(t.data.size());
  for (int y = 0; y < t.height; ++y)
    for (int x = 0; x < t.width; ++x)
      for (int c = 0; c < t.channels; ++c)
        data[(std::size_t(y) * t.width + x) * t.channels + c] = static_cast<float>(t(c, y, x));
  return Image(t.height, t.width, t.channels, std::move(data));
}
}  // namespace

Image to_image(const Tensor<float>& tensor) { return tensor_to_image(tensor); }
Image to_image(const Tensor<double>& tensor) { return tensor_to_image(tensor); }

template <class T>
Tensor<T> generator_input(const Image& masked, const Mask& mask) {
  if (masked.height() != mask.height() || masked.width() != mask.width())
    throw ShapeError(fmt::format("image {}x{} vs mask {}x{}", masked.height(), masked.width(), mask.height(),
                                 mask.width()));
  if (masked.channels() != 3) throw ShapeError(fmt::format("expected RGB input, got {} channels", masked.channels()));
  Tensor<T> t(4, masked.height(), masked.width());
  for (int y = 0; y < masked.height(); ++y)
    for (int x = 0; x < masked.width(); ++x) {
      for (int c = 0; c < 3; ++c) t(c, y, x) = static_cast<T>(masked.at(y, x, c));
      t(3, y, x) = mask.hole(y, x) ? T(1) : T(0);
    }
  return t;
}

// ---------------------------------------------------------------------------
// ConvNet

ConvNet::ConvNet(std::vector<LayerDesc> layers, std::uint64_t fingerprint)
    : layers_(std::move(layers)), fingerprint_(fingerprint) {}

template <class T>
BasicParams<T> ConvNet::init_params(std::uint64_t seed) const {
  BasicParams<T> p;
  p.fingerprint = fingerprint_;
  std::uint64_t index = 0;
  auto add = [&](const std::string& name, std::vector<int> shape, double stddev) {
    std::size_t n = 1;
    for (int d : shape) n *= static_cast<std::size_t>(d);
    std::vector<T> values(n, T(0));
    if (stddev > 0.0) {
      Rng rng(derive_seed(seed, {index}));
      for (auto& v : values) v = static_cast<T>(rng.normal() * stddev);
    }
    ++index;
    p.arrays.push_back({name, std::move(shape), std::move(values)});
  };
  for (const auto& l : layers_) {
    const double fan_in = static_cast<double>(l.in) * l.kernel * l.kernel;
    const double gain = (l.act == Activation::elu || l.act == Activation::leaky_relu) ? 2.0 : 1.0;
    add(l.name + ".weight", {l.out, l.in, l.kernel, l.kernel}, std::sqrt(gain / fan_in));
    add(l.name + ".bias", {l.out}, 0.0);
    if (l.gated) {
      add(l.name + ".gate.weight", {l.out, l.in, l.kernel, l.kernel}, std::sqrt(1.0 / fan_in));
      add(l.name + ".gate.bias", {l.out}, 0.0);
    }
  }
  return p;
}

template <class T>
void ConvNet::check_params(const BasicParams<T>& params) const {
  if (params.fingerprint != fingerprint_)
    throw ContractError(fmt::format("parameter fingerprint {:016x} does not match model {:016x}", params.fingerprint,
                                    fingerprint_));
  const auto slots = param_slots(layers_);
  const std::size_t expected = slots.empty() ? 0 : (layers_.back().gated ? slots.back().gate_bias : slots.back().bias) + 1;
  if (params.arrays.size() != expected)
    throw ContractError(fmt::format("expected {} parameter arrays, got {}", expected, params.arrays.size()));
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& l = layers_[i];
    const std::size_t wsize = std::size_t(l.out) * l.in * l.kernel * l.kernel;
    auto check = [&](std::size_t idx, std::size_t n) {
      if (params.arrays[idx].values.size() != n)
        throw ContractError(fmt::format("parameter '{}' has {} entries, expected {}", params.arrays[idx].name,
                                        params.arrays[idx].values.size(), n));
    };
    check(slots[i].weight, wsize);
    check(slots[i].bias, l.out);
    if (l.gated) {
      check(slots[i].gate_weight, wsize);
      check(slots[i].gate_bias, l.out);
    }
  }
}

template <class T>
Tensor<T> ConvNet::forward(const BasicParams<T>& params, const Tensor<T>& input) const {
  check_params(params);
  const auto slots = param_slots(layers_);
  Tensor<T> x = input;
  LayerCache<T> cache;
  for (std::size_t i = 0; i < layers_.size(); ++i) x = layer_forward(layers_[i], slots[i], params, x, cache);
  return x;
}

template <class T>
Tensor<T> ConvNet::backprop(const BasicParams<T>& params, const Tensor<T>& input,
                            const std::function<Tensor<T>(const Tensor<T>&)>& grad_output, BasicParams<T>& grads,
                            Tensor<T>* input_grad) const {
  check_params(params);
  if (!params.congruent(grads)) throw ContractError("gradient buffer is not congruent with the parameters");
  const auto slots = param_slots(layers_);
  std::vector<LayerCache<T>> caches(layers_.size());
  Tensor<T> x = input;
  for (std::size_t i = 0; i < layers_.size(); ++i) x = layer_forward(layers_[i], slots[i], params, x, caches[i]);

  Tensor<T> dy = grad_output(x);
  if (dy.data.size() != x.data.size()) throw ShapeError("loss gradient does not match the network output");
  for (std::size_t i = layers_.size(); i-- > 0;) {
    const bool need_input = i > 0 || input_grad != nullptr;
    dy = layer_backward(layers_[i], slots[i], params, caches[i], dy, grads, need_input);
  }
  if (input_grad) *input_grad = std::move(dy);
  return x;
}

// ---------------------------------------------------------------------------
// Generator / Discriminator

Generator::Generator(ModelSpec spec)
    : spec_(std::move(spec)), net_(generator_layers(spec_), fingerprint(spec_)) {}

void Generator::check_input(const Image& masked, const Mask& mask) const {
  if (masked.height() != spec_.input_size || masked.width() != spec_.input_size)
    throw ContractError(fmt::format("model expects {0}x{0} input, got {1}x{2}", spec_.input_size, masked.height(),
                                    masked.width()));
  if (masked.channels() != 3) throw ContractError("model expects an RGB input");
  if (mask.height() != masked.height() || mask.width() != masked.width())
    throw ContractError("mask dimensions do not match the input image");
}

Image Generator::forward(const ModelParams& params, const Image& masked, const Mask& mask) const {
  return to_image(forward_tensor(params, masked, mask));
}

template <class T>
Tensor<T> Generator::forward_tensor(const BasicParams<T>& params, const Image& masked, const Mask& mask) const {
  check_input(masked, mask);
  return net_.forward(params, generator_input<T>(masked, mask));
}

template <class T>
GradResult<T> Generator::grad(const BasicParams<T>& params, const LossFn<T>& loss,
                              std::span<const Sample> batch) const {
  if (batch.empty()) throw ContractError("grad: empty batch");
  GradResult<T> result;
  result.grads = params.zeros_like();
  double total = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const Sample& s = batch[i];
    check_input(s.input, s.mask);
    if (!s.target.same_shape(s.input)) throw ContractError("grad: target shape differs from input");
    auto out = net_.backprop<T>(
        params, generator_input<T>(s.input, s.mask),
        [&](const Tensor<T>& y) {
          LossEval<T> e = loss(y, i);
          total += e.value;
          return std::move(e.grad_output);
        },
        result.grads);
    result.outputs.push_back(std::move(out));
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  result.loss = total * inv;
  if (!std::isfinite(result.loss)) throw NumericError(fmt::format("non-finite loss {}", result.loss));
  for (auto& a : result.grads.arrays)
    for (auto& v : a.values) v = static_cast<T>(v * inv);
  return result;
}

Discriminator::Discriminator(ModelSpec spec)
    : spec_(std::move(spec)), net_(discriminator_layers(spec_), discriminator_fingerprint(spec_)) {}

Tensor<float> Discriminator::forward(const ModelParams& params, const Image& image) const {
  if (image.channels() != 3) throw ContractError("discriminator expects an RGB image");
  return net_.forward(params, to_tensor<float>(image));
}

Tensor<float> disc_forward(const ModelSpec& spec, const ModelParams& disc_params, const Image& image) {
  if (!spec.use_discriminator) throw ConfigError("disc_forward called with the discriminator disabled");
  return Discriminator(spec).forward(disc_params, image);
}

// ---------------------------------------------------------------------------
// Adam

template <class T>
BasicOptimState<T> init_optim(const BasicParams<T>& params, double beta1, double beta2, double epsilon) {
  BasicOptimState<T> s;
  s.first_moment = params.zeros_like();
  s.second_moment = params.zeros_like();
  s.beta1 = beta1;
  s.beta2 = beta2;
  s.epsilon = epsilon;
  return s;
}

template <class T>
void adam_step(BasicParams<T>& params, const BasicParams<T>& grads, BasicOptimState<T>& state, double lr) {
  if (!params.congruent(grads) || !params.congruent(state.first_moment) || !params.congruent(state.second_moment))
    throw ContractError("adam_step: parameters, gradients and moments are not congruent");
  if (!grads.all_finite()) throw NumericError("adam_step: non-finite gradient");
  state.step += 1;
  const double b1 = state.beta1, b2 = state.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  for (std::size_t a = 0; a < params.arrays.size(); ++a) {
    auto& p = params.arrays[a].values;
    const auto& g = grads.arrays[a].values;
    auto& m = state.first_moment.arrays[a].values;
    auto& v = state.second_moment.arrays[a].values;
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = g[i];
      const double mi = b1 * m[i] + (1.0 - b1) * gi;
      const double vi = b2 * v[i] + (1.0 - b2) * gi * gi;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      p[i] = static_cast<T>(p[i] - lr * (mi / c1) / (std::sqrt(vi / c2) + state.epsilon));
    }
  }
  if (!params.all_finite()) throw NumericError("adam_step: update produced a non-finite parameter");
}

// ---------------------------------------------------------------------------
// Explicit instantiations

#define SELFTUNE_INSTANTIATE(T)                                                                              \
  template class BasicParams<T>;                                                                             \
  template Tensor<T> to_tensor<T>(const Image&);                                                             \
  template Tensor<T> generator_input<T>(const Image&, const Mask&);                                          \
  template BasicParams<T> ConvNet::init_params<T>(std::uint64_t) const;                                      \
  template void ConvNet::check_params<T>(const BasicParams<T>&) const;                                       \
  template Tensor<T> ConvNet::forward<T>(const BasicParams<T>&, const Tensor<T>&) const;                     \
  template Tensor<T> ConvNet::backprop<T>(const BasicParams<T>&, const Tensor<T>&,                           \
                                          const std::function<Tensor<T>(const Tensor<T>&)>&, BasicParams<T>&, \
                                          Tensor<T>*) const;                                                 \
  template Tensor<T> Generator::forward_tensor<T>(const BasicParams<T>&, const Image&, const Mask&) const;    \
  template GradResult<T> Generator::grad<T>(const BasicParams<T>&, const LossFn<T>&, std::span<const Sample>) \
      const;                                                                                                 \
  template BasicOptimState<T> init_optim<T>(const BasicParams<T>&, double, double, double);                  \
  template void adam_step<T>(BasicParams<T>&, const BasicParams<T>&, BasicOptimState<T>&, double);

SELFTUNE_INSTANTIATE(float)
SELFTUNE_INSTANTIATE(double)

#undef SELFTUNE_INSTANTIATE

}  // namespace selftune
