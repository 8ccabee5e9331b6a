#include <doctest.h>

#include <cmath>
#include <cstring>
#include <fstream>

#include "gradcheck.hpp"
#include "selftune/error.hpp"
#include "selftune/losses.hpp"
#include "selftune/model.hpp"
#include "selftune/weights_io.hpp"
#include "support.hpp"

using namespace selftune;
using testing::random_image;
using testing::random_mask;

namespace {

ModelSpec small_spec() {
  ModelSpec s;
  s.input_size = 16;
  s.base_channels = 4;
  s.depth = 2;
  return s;
}

Sample sample(int n, std::uint64_t seed) {
  const Mask m = random_mask(n, n, 0.3, seed);
  return {apply_mask(random_image(n, n, 3, seed + 1), m), m, random_image(n, n, 3, seed + 2), Mask(n, n)};
}

}  // namespace

TEST_CASE("init_params") {
  ModelSpec spec;
  spec.base_channels = 16;
  const Generator gen(spec);
  const auto a = gen.init_params(3), b = gen.init_params(3), c = gen.init_params(4);
  CHECK(a == b);
  CHECK_FALSE(a == c);
  CHECK(a.at("enc0.weight").shape == std::vector<int>{16, 4, 3, 3});
  CHECK(a.at("enc0.gate.weight").shape == std::vector<int>{16, 4, 3, 3});
  CHECK(a.at("out.weight").shape == std::vector<int>{3, 16, 3, 3});
  CHECK(a.fingerprint == fingerprint(spec));
  for (const auto& arr : a.arrays)
    if (arr.name.ends_with("bias"))
      for (float v : arr.values) CHECK(v == 0.0f);

  ModelSpec bad = spec;
  bad.input_size = 62;
  CHECK_THROWS_AS(Generator{bad}, SpecError);
  bad = spec;
  bad.base_channels = 0;
  CHECK_THROWS_AS(Generator{bad}, SpecError);
}

TEST_CASE("fingerprints") {
  ModelSpec a, b;
  b.use_discriminator = true;
  CHECK(fingerprint(a) == fingerprint(b));
  b.base_channels = 16;
  CHECK(fingerprint(a) != fingerprint(b));
  CHECK(fingerprint(a) != discriminator_fingerprint(a));
}

TEST_CASE("forward shape, range and determinism") {
  const ModelSpec spec = small_spec();
  const Generator gen(spec);
  const auto params = gen.init_params(1);
  const Sample s = sample(16, 5);
  const Image out = gen.forward(params, s.input, s.mask);
  CHECK(out.height() == 16);
  CHECK(out.width() == 16);
  CHECK(out.channels() == 3);
  CHECK(out == gen.forward(params, s.input, s.mask));
  CHECK_THROWS_AS(gen.forward(params, random_image(8, 8, 3, 1), Mask(8, 8)), ContractError);
  CHECK_THROWS_AS(gen.forward(params, s.input, Mask(8, 8)), ContractError);
  CHECK_THROWS_AS(gen.forward(Generator(ModelSpec{}).init_params(0), s.input, s.mask), ContractError);

  // bounded for wild parameters
  auto wild = params;
  Rng rng(2);
  for (auto& a : wild.arrays)
    for (auto& v : a.values) v = static_cast<float>(50.0 * rng.normal());
  const auto t = gen.forward_tensor(wild, s.input, s.mask);
  for (float v : t.data) {
    CHECK(v >= 0.0f);
    CHECK(v <= 1.0f);
  }
}

TEST_CASE("single 1x1 convolution model") {
  ModelSpec spec;
  spec.input_size = 4;
  spec.base_channels = 0;
  spec.depth = 0;
  spec.dilations = {};
  spec.kernel_size = 1;
  const Generator gen(spec);
  auto params = gen.init_params(0);
  REQUIRE(params.arrays.size() == 2);
  auto& w = params.at("out.weight");
  REQUIRE(w.shape == std::vector<int>{3, 4, 1, 1});
  const float weight = 1.7f, c = 0.6f;
  std::fill(w.values.begin(), w.values.end(), 0.0f);
  for (int o = 0; o < 3; ++o) w.values[o * 4 + o] = weight;  // output channel o reads input channel o
  std::fill(params.at("out.bias").values.begin(), params.at("out.bias").values.end(), 0.0f);
  const Image out = gen.forward(params, Image(4, 4, 3, c), Mask(4, 4));
  const double expect = 1.0 / (1.0 + std::exp(-static_cast<double>(weight) * c));
  for (float v : out.data()) CHECK(v == doctest::Approx(expect).epsilon(1e-6));
}

TEST_CASE("gradient of a constant loss is zero") {
  const Generator gen(small_spec());
  const auto params = gen.init_params(1);
  std::vector<Sample> batch{sample(16, 1)};
  const LossFn<float> constant = [](const Tensor<float>& out, std::size_t) {
    return LossEval<float>{3.0, Tensor<float>(out.channels, out.height, out.width)};
  };
  const auto g = gen.grad(params, constant, batch);
  CHECK(g.loss == 3.0);
  for (const auto& a : g.grads.arrays)
    for (float v : a.values) CHECK(v == 0.0f);
}

TEST_CASE("gradients match central differences") {
  const auto r = testing::finite_difference_check(testing::gradcheck_spec(), 11);
  INFO("worst " << r.worst << " at " << r.worst_name << "[" << r.worst_index << "]");
  CHECK(r.checked > 500);
  CHECK(r.worst < 1e-3);

  ModelSpec plain = testing::gradcheck_spec();
  plain.gated = false;
  plain.dilations = {2};
  const auto p = testing::finite_difference_check(plain, 12);
  INFO("plain worst " << p.worst << " at " << p.worst_name);
  CHECK(p.worst < 1e-3);
}

TEST_CASE("duplicate batch entries average to the single-sample gradient") {
  const Generator gen(small_spec());
  const auto params = gen.init_params(2);
  const Sample s = sample(16, 9);
  const LossFn<float> loss = [&](const Tensor<float>& out, std::size_t) {
    return rec_loss_with_grad(s.target, out, s.exclusion);
  };
  std::vector<Sample> one{s}, two{s, s};
  const auto g1 = gen.grad(params, loss, one), g2 = gen.grad(params, loss, two);
  CHECK(g1.loss == g2.loss);
  for (std::size_t a = 0; a < g1.grads.arrays.size(); ++a)
    for (std::size_t k = 0; k < g1.grads.arrays[a].values.size(); ++k)
      CHECK(g2.grads.arrays[a].values[k] == doctest::Approx(g1.grads.arrays[a].values[k]).epsilon(1e-6));
  CHECK_THROWS_AS(gen.grad(params, loss, std::span<const Sample>{}), ContractError);

  const LossFn<float> nan_loss = [](const Tensor<float>& out, std::size_t) {
    return LossEval<float>{std::nan(""), Tensor<float>(out.channels, out.height, out.width)};
  };
  CHECK_THROWS_AS(gen.grad(params, nan_loss, one), NumericError);
}

TEST_CASE("adam on a scalar") {
  BasicParams<double> p;
  p.arrays.push_back({"x", {1}, {0.5}});
  BasicParams<double> g = p.zeros_like();
  g.arrays[0].values[0] = 1.0;
  auto state = init_optim(p);
  const double lr = 0.01;
  adam_step(p, g, state, lr);
  CHECK(state.step == 1);
  CHECK(state.first_moment.arrays[0].values[0] == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(state.second_moment.arrays[0].values[0] == doctest::Approx(0.001).epsilon(1e-12));
  const double m_hat = 0.1 / (1.0 - 0.9), v_hat = 0.001 / (1.0 - 0.999);
  CHECK(p.arrays[0].values[0] == doctest::Approx(0.5 - lr * m_hat / (std::sqrt(v_hat) + 1e-8)).epsilon(1e-12));
  CHECK(p.arrays[0].values[0] == doctest::Approx(0.5 - lr).epsilon(1e-7));

  // a second step against an independently evaluated recurrence
  g.arrays[0].values[0] = -2.0;
  const double m2 = 0.9 * 0.1 + 0.1 * -2.0, v2 = 0.999 * 0.001 + 0.001 * 4.0;
  const double expect = p.arrays[0].values[0] - lr * (m2 / (1 - 0.81)) / (std::sqrt(v2 / (1 - 0.999 * 0.999)) + 1e-8);
  adam_step(p, g, state, lr);
  CHECK(p.arrays[0].values[0] == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("adam with zero gradient and independent entries") {
  BasicParams<double> p;
  p.arrays.push_back({"a", {2}, {1.0, -1.0}});
  auto state = init_optim(p);
  BasicParams<double> g = p.zeros_like();
  g.arrays[0].values[0] = 0.5;
  adam_step(p, g, state, 0.1);
  CHECK(p.arrays[0].values[1] == -1.0);  // no cross-talk
  const double m = state.first_moment.arrays[0].values[0];
  const auto before = p;
  adam_step(p, p.zeros_like(), state, 0.1);
  CHECK(state.first_moment.arrays[0].values[0] == doctest::Approx(0.9 * m));
  CHECK(std::abs(state.first_moment.arrays[0].values[0]) < std::abs(m));
  CHECK(p.arrays[0].values[1] == before.arrays[0].values[1]);

  BasicParams<double> bad = p.zeros_like();
  bad.arrays[0].values[0] = std::numeric_limits<double>::infinity();
  const auto snapshot = p;
  CHECK_THROWS_AS(adam_step(p, bad, state, 0.1), NumericError);
  CHECK(p == snapshot);
  BasicParams<double> wrong;
  wrong.arrays.push_back({"b", {2}, {0.0, 0.0}});
  CHECK_THROWS_AS(adam_step(p, wrong, state, 0.1), ContractError);
}

TEST_CASE("discriminator") {
  ModelSpec spec;
  spec.base_channels = 8;
  spec.use_discriminator = true;
  const Discriminator disc(spec);
  auto params = disc.init_params(0);
  const Image img = random_image(64, 64, 3, 1);
  const auto scores = disc_forward(spec, params, img);
  CHECK(scores.channels == 1);
  CHECK(scores.height == 4);
  CHECK(scores.width == 4);
  CHECK(disc_forward(spec, params, img).data == scores.data);
  for (auto& a : params.arrays) std::fill(a.values.begin(), a.values.end(), 0.0f);
  for (float v : disc_forward(spec, params, img).data) CHECK(v == 0.0f);
  spec.use_discriminator = false;
  CHECK_THROWS_AS(disc_forward(spec, params, img), ConfigError);
}

TEST_CASE("weights container") {
  testing::TempDir dir("weights");
  const ModelSpec spec = small_spec();
  const auto params = Generator(spec).init_params(4);
  save_weights(params, dir / "w.bin");
  CHECK(load_weights(dir / "w.bin") == params);
  CHECK(load_weights(dir / "w.bin", fingerprint(spec)) == params);
  CHECK_THROWS_AS(load_weights(dir / "w.bin", fingerprint(ModelSpec{})), ContractError);

  std::ifstream f(dir / "w.bin", std::ios::binary);
  std::vector<char> bytes((std::istreambuf_iterator<char>(f)), {});
  REQUIRE(bytes.size() > 24);
  CHECK(std::string(bytes.data(), 4) == "STIW");
  auto u32 = [&](std::size_t at) {
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(bytes[at + i]);
    return v;
  };
  std::uint64_t fp = 0;
  for (int i = 7; i >= 0; --i) fp = (fp << 8) | static_cast<unsigned char>(bytes[8 + i]);
  CHECK(u32(4) == kWeightsVersion);
  CHECK(fp == fingerprint(spec));
  CHECK(u32(16) == params.arrays.size());
  const std::uint32_t name_len = u32(20);
  CHECK(std::string(bytes.data() + 24, name_len) == params.arrays[0].name);
  CHECK(u32(24 + name_len) == 4);  // rank
  std::size_t expect = 20;
  for (const auto& a : params.arrays) expect += 4 + a.name.size() + 4 + 4 * a.shape.size() + 4 * a.values.size();
  CHECK(bytes.size() == expect);

  auto write = [&](const std::string& name, std::vector<char> b) {
    std::ofstream o(dir / name, std::ios::binary);
    o.write(b.data(), static_cast<std::streamsize>(b.size()));
  };
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  write("magic.bin", bad_magic);
  CHECK_THROWS_AS(load_weights(dir / "magic.bin"), FormatError);
  write("short.bin", std::vector<char>(bytes.begin(), bytes.end() - 3));
  CHECK_THROWS_AS(load_weights(dir / "short.bin"), FormatError);
  auto trailing = bytes;
  trailing.push_back(0);
  write("trail.bin", trailing);
  CHECK_THROWS_AS(load_weights(dir / "trail.bin"), FormatError);
  CHECK_THROWS_AS(load_weights(dir / "absent.bin"), IoError);
}
