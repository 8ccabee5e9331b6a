#include "selftune/finetune.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fmt/format.h>
#include <fstream>
#include <limits>

#include "selftune/rng.hpp"

namespace selftune {

namespace {

constexpr std::uint64_t kMaskTag = 11;
constexpr std::uint64_t kAugmentTag = 12;
constexpr std::uint64_t kDiscInitTag = 13;

bool adversarial(const FinetuneConfig& config) { return config.weights.adv > 0.0; }

Mask draw_mask(const CorruptionSpec& spec, int size, std::uint64_t seed) {
  if (const auto* ff = std::get_if<FreeformSpec>(&spec)) return gen_freeform(size, size, *ff, seed);
  return gen_rect(size, size, std::get<RectSpec>(spec), seed);
}

}  // namespace

struct FinetuneAccess {
  static ModelParams& params(FinetuneState& s) { return s.params_; }
  static OptimState& optim(FinetuneState& s) { return s.optim_; }
  static int& iteration(FinetuneState& s) { return s.iteration_; }
  static std::optional<ModelParams>& disc(FinetuneState& s) { return s.disc_params_; }
  static std::optional<OptimState>& disc_optim(FinetuneState& s) { return s.disc_optim_; }

  // Appends an FID evaluation and updates the best snapshot.
  static void record_fid(FinetuneState& s, double fid, const Image& output, const Image& raw) {
    s.fid_history_.push_back({s.iteration_, fid});
    if (fid < s.best_fid_) {
      s.best_fid_ = fid;
      s.best_params_ = s.params_;
      s.best_iteration_ = s.iteration_;
      s.best_output_ = output;
      s.best_raw_ = raw;
    }
  }
};

void validate(const FinetuneConfig& c) {
  if (c.iterations < 0) throw SpecError("FinetuneConfig: iterations must be >= 0");
  if (c.batch < 1) throw SpecError("FinetuneConfig: batch must be >= 1");
  if (!(c.lr >= 0.0) || !std::isfinite(c.lr)) throw SpecError("FinetuneConfig: lr must be finite and >= 0");
  if (c.weights.rec < 0.0 || c.weights.adv < 0.0) throw SpecError("FinetuneConfig: loss weights must be >= 0");
  if (c.eval_every < 0) throw SpecError("FinetuneConfig: eval_every must be >= 0");
  if (const auto* ff = std::get_if<FreeformSpec>(&c.mask_spec)) validate(*ff);
  if (c.auto_stop) {
    validate(*c.auto_stop);
    if (c.eval_every < 1) throw SpecError("FinetuneConfig: auto_stop needs eval_every >= 1");
    for (int cp : c.checkpoints)
      if (cp % c.eval_every != 0)
        throw SpecError(fmt::format("FinetuneConfig: checkpoint {} is not a multiple of eval_every {}", cp,
                                    c.eval_every));
  }
  for (int cp : c.checkpoints)
    if (cp < 0) throw SpecError("FinetuneConfig: negative checkpoint");
}

Image initial_predict(const Generator& generator, const ModelParams& params, const Image& masked, const Mask& hole) {
  if (!(apply_mask(masked, hole) == masked))
    throw ContractError("initial_predict: masked input has non-zero pixels inside the hole");
  return generator.forward(params, masked, hole);
}

Image corrupt(const Image& initial_prediction, const Mask& random_mask) {
  return apply_mask(initial_prediction, random_mask);
}

FinetuneState::FinetuneState(const Generator& generator, ModelParams initial, Image masked_input, Mask hole,
                             const FinetuneConfig& config, std::optional<ModelParams> discriminator)
    : params_(std::move(initial)), masked_input_(std::move(masked_input)), hole_(std::move(hole)) {
  validate(config);
  generator.net().check_params(params_);
  optim_ = init_optim(params_);
  initial_prediction_ = initial_predict(generator, params_, masked_input_, hole_);
  best_params_ = params_;
  best_fid_ = std::numeric_limits<double>::infinity();
  best_output_ = composite(initial_prediction_, masked_input_, hole_);
  best_raw_ = initial_prediction_;
  if (adversarial(config)) {
    if (!generator.spec().use_discriminator)
      throw ConfigError("adversarial weight > 0 but the model spec disables the discriminator");
    const Discriminator disc(generator.spec());
    if (discriminator) {
      disc.net().check_params(*discriminator);
      disc_params_ = std::move(discriminator);
    } else {
      disc_params_ = disc.init_params(derive_seed(config.seed, {kDiscInitTag}));
    }
    disc_optim_ = init_optim(*disc_params_);
  }
}

StepLog finetune_step(const Generator& generator, FinetuneState& state, const FinetuneConfig& config) {
  const int i = state.iteration();
  const int size = generator.spec().input_size;
  try {
    std::vector<Sample> batch;
    batch.reserve(config.batch);
    for (int b = 0; b < config.batch; ++b) {
      const auto ui = static_cast<std::uint64_t>(i);
      const auto ub = static_cast<std::uint64_t>(b);
      const Mask random_mask = draw_mask(config.mask_spec, size, derive_seed(config.seed, {kMaskTag, ui, ub}));
      Sample s{corrupt(state.initial_prediction(), random_mask), random_mask, state.initial_prediction(),
               state.hole()};
      if (config.augment) {
        Rng rng(derive_seed(config.seed, {kAugmentTag, ui, ub}));
        const Transform t = kAllTransforms[rng.uniform_int(0, 5)];
        s = {transform(s.input, t), transform(s.mask, t), transform(s.target, t), transform(s.exclusion, t)};
      }
      batch.push_back(std::move(s));
    }

    const bool adv = adversarial(config);
    const Discriminator disc(generator.spec());
    auto& disc_params = FinetuneAccess::disc(state);
    double rec_sum = 0.0, adv_sum = 0.0;
    const LossFn<float> loss = [&](const Tensor<float>& out, std::size_t k) {
      LossEval<float> e = rec_loss_with_grad(batch[k].target, out, batch[k].exclusion);
      rec_sum += e.value;
      double adv_value = 0.0;
      if (adv) {
        const auto a = adv_generator_with_grad(disc, *disc_params, out);
        adv_value = a.value;
        adv_sum += a.value;
        for (std::size_t j = 0; j < e.grad_output.data.size(); ++j)
          e.grad_output.data[j] = static_cast<float>(config.weights.rec * e.grad_output.data[j] +
                                                     config.weights.adv * a.grad_output.data[j]);
      } else {
        for (auto& g : e.grad_output.data) g = static_cast<float>(config.weights.rec * g);
      }
      e.value = total_loss(e.value, adv_value, config.weights);
      return e;
    };

    GradResult<float> g = generator.grad(state.params(), loss, batch);
    if (adv) {
      ModelParams dg = disc_params->zeros_like();
      for (std::size_t k = 0; k < batch.size(); ++k)
        adv_discriminator_grad(disc, *disc_params, to_tensor<float>(batch[k].target), g.outputs[k], dg);
      for (auto& a : dg.arrays)
        for (auto& v : a.values) v /= static_cast<float>(batch.size());
      adam_step(*disc_params, dg, *FinetuneAccess::disc_optim(state), config.lr);
    }
    adam_step(FinetuneAccess::params(state), g.grads, FinetuneAccess::optim(state), config.lr);
    ++FinetuneAccess::iteration(state);

    const double inv = 1.0 / static_cast<double>(config.batch);
    return {state.iteration(), rec_sum * inv, adv_sum * inv, g.loss};
  } catch (const NumericError& e) {
    throw NumericError(fmt::format("fine-tuning iteration {}: {}", i, e.what()));
  }
}

Image current_output(const Generator& generator, const FinetuneState& state) {
  return composite(generator.forward(state.params(), state.masked_input(), state.hole()), state.masked_input(),
                   state.hole());
}

double output_fid(const Image& composited, const Mask& hole) { return internal_fid(composited, composited, hole); }

std::string_view to_string(StopReason r) { return r == StopReason::auto_stop ? "auto-stop" : "budget"; }

FinetuneResult run_finetune(const Generator& generator, const ModelParams& initial, const Image& masked,
                            const Mask& hole, const FinetuneConfig& config, std::optional<ModelParams> discriminator) {
  const auto start = std::chrono::steady_clock::now();
  auto elapsed = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count(); };
  FinetuneState state(generator, initial, masked, hole, config, std::move(discriminator));
  FinetuneResult result;
  result.baseline = composite(state.initial_prediction(), masked, hole);
  RunLog& log = result.log;

  const int budget = config.iterations;
  std::vector<int> checkpoints = config.checkpoints;
  std::sort(checkpoints.begin(), checkpoints.end());
  checkpoints.erase(std::unique(checkpoints.begin(), checkpoints.end()), checkpoints.end());
  std::erase_if(checkpoints, [&](int c) { return c > budget; });
  auto is_checkpoint = [&](int it) { return std::binary_search(checkpoints.begin(), checkpoints.end(), it); };

  bool fid_enabled = config.auto_stop.has_value() || config.eval_every > 0;
  // Returns the FID, or nullopt when the hole is too small to score and no
  // stopping decision depends on it.
  auto evaluate = [&]() -> std::optional<double> {
    const Image raw = generator.forward(state.params(), masked, hole);
    const Image out = composite(raw, masked, hole);
    double fid;
    try {
      fid = output_fid(out, hole);
    } catch (const DegenerateError&) {
      if (config.auto_stop) throw;
      fid_enabled = false;
      return std::nullopt;
    }
    FinetuneAccess::record_fid(state, fid, out, raw);
    return fid;
  };
  auto record_checkpoint = [&](int it, StopReason reason) {
    if (config.auto_stop) {
      log.checkpoints.push_back({it, state.best_output(), state.best_raw(), reason, state.best_iteration(), elapsed()});
    } else {
      const Image raw = generator.forward(state.params(), masked, hole);
      log.checkpoints.push_back({it, composite(raw, masked, hole), raw, reason, it, elapsed()});
    }
  };

  try {
    IterationRecord first{0, std::nullopt, std::nullopt};
    if (fid_enabled) first.fid = evaluate();
    log.records.push_back(first);
    if (is_checkpoint(0)) record_checkpoint(0, StopReason::budget);

    while (state.iteration() < budget) {
      IterationRecord rec;
      rec.step = finetune_step(generator, state, config);
      rec.iteration = state.iteration();
      const int it = state.iteration();
      const bool eval_due = fid_enabled && ((config.eval_every > 0 && it % config.eval_every == 0) ||
                                            (config.auto_stop && it == budget));
      if (eval_due) rec.fid = evaluate();
      log.records.push_back(rec);
      const bool stop = eval_due && config.auto_stop && should_stop(state.fid_history(), *config.auto_stop);
      if (is_checkpoint(it)) record_checkpoint(it, stop ? StopReason::auto_stop : StopReason::budget);
      if (stop) {
        log.stop_reason = StopReason::auto_stop;
        break;
      }
    }
  } catch (const Error& e) {
    log.fid_history = state.fid_history();
    log.stop_iteration = state.iteration();
    throw FinetuneError(e.what(), std::move(log));
  }

  log.stop_iteration = state.iteration();
  log.fid_history = state.fid_history();
  if (log.stop_reason == StopReason::auto_stop)
    for (int c : checkpoints)
      if (c > log.stop_iteration) record_checkpoint(c, StopReason::auto_stop);

  result.params = config.auto_stop ? state.best_params() : state.params();
  log.selected_iteration = config.auto_stop ? state.best_iteration() : state.iteration();
  result.raw = generator.forward(result.params, masked, hole);
  result.image = composite(result.raw, masked, hole);
  return result;
}

void write_run_log(const RunLog& log, const std::filesystem::path& path) {
  std::ofstream f(path);
  if (!f) throw IoError(fmt::format("cannot write '{}'", path.string()));
  f << "iteration,loss_rec,loss_adv,fid\n";
  for (const auto& r : log.records) {
    f << r.iteration << ',';
    if (r.step) f << fmt::format("{:.8f},{:.8f}", r.step->loss_rec, r.step->loss_adv);
    else f << ',';
    f << ',';
    if (r.fid) f << fmt::format("{:.6f}", *r.fid);
    f << '\n';
  }
}

}  // namespace selftune
