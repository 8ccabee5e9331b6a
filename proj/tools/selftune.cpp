// selftune command-line front end.
//
// Exit codes: 0 success, 1 usage error, 2 runtime error.

#include <CLI11.hpp>
#include <fmt/format.h>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>

#include "selftune/config.hpp"
#include "selftune/finetune.hpp"
#include "selftune/harness.hpp"
#include "selftune/maskgen.hpp"
#include "selftune/png_io.hpp"
#include "selftune/pretrain.hpp"
#include "selftune/quality.hpp"
#include "selftune/rng.hpp"
#include "selftune/synthetic.hpp"
#include "selftune/weights_io.hpp"

namespace fs = std::filesystem;
using namespace selftune;

namespace {

struct PretrainArgs {
  fs::path config, out;
  bool quiet = false;
};

struct FinetuneArgs {
  fs::path weights, image, out, config, model, baseline, log, save_mask;
  std::string mask;
  std::optional<int> iters;
  bool auto_stop = false;
  std::uint64_t seed = 0;
};

struct EvaluateArgs {
  fs::path config, report;
  bool quiet = false;
};

struct MaskgenArgs {
  int height = 64, width = 64;
  std::uint64_t seed = 0;
  double coverage_min = FreeformSpec{}.coverage_min, coverage_max = FreeformSpec{}.coverage_max;
  fs::path out;
};

struct MetricsArgs {
  fs::path a, b;
};

struct ConfigArgs {
  std::string kind = "experiment";
  fs::path out;
};

int cmd_pretrain(const PretrainArgs& a) {
  const PretrainConfig cfg = load_pretrain_config(a.config);
  const auto data = make_synthetic_dataset(cfg.dataset, derive_seed(cfg.train.seed, {kDatasetSeedTag}));
  const auto start = std::chrono::steady_clock::now();
  const auto result = pretrain(cfg.model, data, cfg.train, [&](int epoch, double loss) {
    if (a.quiet) return;
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    fmt::print(stderr, "epoch {}/{} loss {:.6f} ({:.0f}s)\n", epoch, cfg.train.epochs, loss, s);
  });
  if (a.out.has_parent_path()) fs::create_directories(a.out.parent_path());
  save_weights(result.params, a.out);
  write_json(to_json(cfg.model), spec_sidecar(a.out));
  write_loss_log(result.epoch_loss, fs::path(a.out.string() + ".loss.csv"));
  if (result.discriminator) save_weights(*result.discriminator, discriminator_path(a.out));
  return 0;
}

int cmd_finetune(const FinetuneArgs& a) {
  const ModelSpec spec = resolve_model_spec(a.weights, a.model);
  const Generator gen(spec);
  const ModelParams params = load_weights(a.weights, fingerprint(spec));
  FinetuneConfig cfg = a.config.empty() ? FinetuneConfig{} : finetune_from_json(read_json(a.config));
  cfg.seed = a.seed;
  if (a.iters) cfg.iterations = *a.iters;
  if (a.auto_stop && !cfg.auto_stop) cfg.auto_stop = StopPolicy{};
  cfg.checkpoints.clear();

  const Image image = load_image(a.image);
  const int n = spec.input_size;
  if (image.height() != n || image.width() != n || image.channels() != 3)
    throw ShapeError(fmt::format("image is {}x{}x{}, the model expects {}x{}x3", image.height(), image.width(),
                                 image.channels(), n, n));
  const Mask hole = a.mask == "gen" ? gen_freeform(n, n, FreeformSpec{}, derive_seed(a.seed, {kHoleSeedTag, 0}))
                                    : load_mask(a.mask);
  if (hole.height() != n || hole.width() != n)
    throw ShapeError(fmt::format("mask is {}x{}, the model expects {}x{}", hole.height(), hole.width(), n, n));

  std::optional<ModelParams> disc;
  if (cfg.weights.adv > 0.0 && fs::is_regular_file(discriminator_path(a.weights)))
    disc = load_weights(discriminator_path(a.weights), discriminator_fingerprint(spec));

  const FinetuneResult r = run_finetune(gen, params, apply_mask(image, hole), hole, cfg, disc);
  save_image(r.image, a.out);
  if (!a.baseline.empty()) save_image(r.baseline, a.baseline);
  if (!a.log.empty()) write_run_log(r.log, a.log);
  if (!a.save_mask.empty()) save_mask(hole, a.save_mask);
  fmt::print("stop={} iteration={} selected={}\n", to_string(r.log.stop_reason), r.log.stop_iteration,
             r.log.selected_iteration);
  return 0;
}

int cmd_evaluate(const EvaluateArgs& a) {
  const ExperimentConfig cfg = load_experiment_config(a.config);
  const auto report = run_experiment(cfg, [&](std::size_t done, std::size_t total, const ImageOutcome& o) {
    if (a.quiet) return;
    if (o.log) fmt::print(stderr, "[{}/{}] {} stop={} selected={}\n", done, total, o.image_id,
                          to_string(o.log->stop_reason), o.log->selected_iteration);
    else fmt::print(stderr, "[{}/{}] {} failed: {}\n", done, total, o.image_id, o.error);
  });
  write_report(report.rows, a.report);
  return 0;
}

int cmd_maskgen(const MaskgenArgs& a) {
  FreeformSpec spec;
  spec.coverage_min = a.coverage_min;
  spec.coverage_max = a.coverage_max;
  const Mask m = gen_freeform(a.height, a.width, spec, a.seed);
  save_mask(m, a.out);
  fmt::print("coverage={:.4f}\n", coverage(m));
  return 0;
}

int cmd_metrics(const MetricsArgs& a) {
  const Image x = load_image(a.a), y = load_image(a.b);
  fmt::print("psnr={:.2f} ssim={:.4f}\n", psnr(x, y), ssim(x, y));
  return 0;
}

int cmd_config(const ConfigArgs& a) {
  Json j;
  if (a.kind == "pretrain") j = to_json(PretrainConfig{});
  else if (a.kind == "finetune") j = to_json(FinetuneConfig{});
  else if (a.kind == "model") j = to_json(ModelSpec{});
  else {
    ExperimentConfig e;
    e.weights = "weights.bin";
    j = to_json(e);
  }
  if (a.out.empty()) fmt::print("{}\n", j.dump(2));
  else write_json(j, a.out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Test-time self-supervised fine-tuning for image inpainting"};
  app.require_subcommand(1);

  PretrainArgs pre;
  auto* p = app.add_subcommand("pretrain", "Train the reference model on the synthetic corpus");
  p->add_option("--config", pre.config, "Pretrain JSON config")->required();
  p->add_option("--out", pre.out, "Output weights file")->required();
  p->add_flag("--quiet", pre.quiet);

  FinetuneArgs ft;
  auto* f = app.add_subcommand("finetune", "Adapt the model to one masked image");
  f->add_option("--weights", ft.weights)->required();
  f->add_option("--image", ft.image)->required();
  f->add_option("--mask", ft.mask, "Hole mask PNG, or 'gen' for a generated one")->required();
  f->add_option("--out", ft.out, "Composited output PNG")->required();
  auto* iters = f->add_option("--iters", ft.iters, "Iteration budget T");
  auto* stop = f->add_flag("--auto-stop", ft.auto_stop, "Stop when the smoothed internal FID rises");
  iters->excludes(stop);
  f->add_option("--seed", ft.seed);
  f->add_option("--config", ft.config, "Fine-tuning JSON config");
  f->add_option("--model", ft.model, "Model spec JSON (default: <weights>.spec.json)");
  f->add_option("--baseline", ft.baseline, "Also write the un-tuned composite here");
  f->add_option("--log", ft.log, "Per-iteration CSV log");
  f->add_option("--save-mask", ft.save_mask, "Write the hole mask used");

  EvaluateArgs ev;
  auto* e = app.add_subcommand("evaluate", "Run an experiment and write the report CSV");
  e->add_option("--config", ev.config)->required();
  e->add_option("--report", ev.report)->required();
  e->add_flag("--quiet", ev.quiet);

  MaskgenArgs mg;
  auto* m = app.add_subcommand("maskgen", "Write a seeded free-form mask");
  m->add_option("--height", mg.height)->required();
  m->add_option("--width", mg.width)->required();
  m->add_option("--seed", mg.seed)->required();
  m->add_option("--coverage-min", mg.coverage_min);
  m->add_option("--coverage-max", mg.coverage_max);
  m->add_option("--out", mg.out)->required();

  MetricsArgs mt;
  auto* q = app.add_subcommand("metrics", "PSNR and SSIM between two PNGs");
  q->add_option("--a", mt.a)->required();
  q->add_option("--b", mt.b)->required();

  ConfigArgs cf;
  auto* c = app.add_subcommand("config", "Print or write a reference config with every default");
  c->add_option("--kind", cf.kind)->check(CLI::IsMember({"experiment", "pretrain", "finetune", "model"}));
  c->add_option("--out", cf.out);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    if (err.get_exit_code() == 0) return app.exit(err);
    std::cerr << err.what() << "\n\n" << app.help();
    return 1;
  }

  try {
    if (*p) return cmd_pretrain(pre);
    if (*f) return cmd_finetune(ft);
    if (*e) return cmd_evaluate(ev);
    if (*m) return cmd_maskgen(mg);
    if (*q) return cmd_metrics(mt);
    if (*c) return cmd_config(cf);
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << '\n';
    return 2;
  }
  return 1;
}
