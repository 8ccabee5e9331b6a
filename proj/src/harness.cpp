#include "selftune/harness.hpp"

#include <algorithm>
#include <atomic>
#include <fmt/format.h>
#include <fstream>
#include <mutex>
#include <thread>

#include "selftune/error.hpp"
#include "selftune/png_io.hpp"
#include "selftune/quality.hpp"
#include "selftune/rng.hpp"
#include "selftune/weights_io.hpp"

namespace selftune {

namespace fs = std::filesystem;

namespace {

bool wants(const ExperimentConfig& c, Metric m) {
  return std::find(c.metrics.begin(), c.metrics.end(), m) != c.metrics.end();
}

std::string csv_safe(std::string s) {
  for (char& ch : s)
    if (ch == ',' || ch == '\n' || ch == '\r' || ch == '"') ch = ch == ',' ? ';' : ' ';
  return s;
}

std::string opt(const std::optional<double>& v, int digits) {
  return v ? fmt::format("{:.{}f}", *v, digits) : std::string();
}

struct Model {
  Generator generator;
  ModelParams params;
  std::optional<ModelParams> discriminator;
};

struct ImageRun {
  ImageOutcome outcome;
  std::vector<ReportRow> rows;
};

ImageRun run_one(const ExperimentConfig& config, const Model& model, const InputImage& input, std::size_t index) {
  ImageRun run;
  run.outcome.image_id = input.id;
  const int size = model.generator.spec().input_size;
  const auto i = static_cast<std::uint64_t>(index);
  try {
    Mask hole = config.mask_folder.empty()
                    ? gen_freeform(size, size, config.holes, derive_seed(config.seed, {kHoleSeedTag, i}))
                    : load_mask(config.mask_folder / (input.id + ".png"));
    if (hole.height() != size || hole.width() != size)
      throw ShapeError(fmt::format("mask is {}x{}, model expects {}x{}", hole.height(), hole.width(), size, size));
    const Image masked = apply_mask(input.clean, hole);

    FinetuneConfig ft = config.finetune;
    ft.iterations = config.checkpoints.back();
    ft.checkpoints = config.checkpoints;
    ft.seed = derive_seed(config.seed, {kRunSeedTag, i});
    FinetuneResult result = run_finetune(model.generator, model.params, masked, hole, ft, model.discriminator);

    for (const auto& cp : result.log.checkpoints) {
      ReportRow row{input.id, cp.iteration, std::nullopt, std::nullopt, std::nullopt, std::nullopt,
                    std::string(to_string(cp.reason))};
      if (wants(config, Metric::psnr)) row.psnr = psnr(input.clean, cp.image);
      if (wants(config, Metric::ssim)) row.ssim = ssim(input.clean, cp.image);
      if (wants(config, Metric::fid)) {
        try {
          row.fid = output_fid(cp.image, hole);
        } catch (const DegenerateError&) {
        }
      }
      if (config.timing) row.seconds = cp.seconds;
      run.rows.push_back(std::move(row));
    }

    const fs::path dir = config.output_dir / input.id;
    fs::create_directories(dir);
    save_image(result.baseline, dir / "baseline.png");
    save_image(result.image, dir / "final.png");
    save_mask(hole, dir / "mask.png");
    save_image(masked, dir / "input.png");
    write_run_log(result.log, dir / "run_log.csv");
    run.outcome.log = std::move(result.log);
  } catch (const std::exception& e) {
    run.rows.clear();
    run.outcome.log.reset();
    run.outcome.error = e.what();
    run.rows.push_back({input.id, std::nullopt, std::nullopt, std::nullopt, std::nullopt, std::nullopt,
                        "error: " + csv_safe(e.what())});
  }
  return run;
}

std::string synthetic_id(std::size_t index, const SyntheticImage& s) {
  std::string name = s.real ? "real" : std::string(to_string(s.family));
  std::replace(name.begin(), name.end(), '+', '-');
  return fmt::format("{:03}_{}", index, name);
}

}  // namespace

fs::path discriminator_path(const fs::path& weights) { return fs::path(weights.string() + ".disc"); }

std::vector<InputImage> experiment_images(const ExperimentConfig& config, int size) {
  std::vector<InputImage> out;
  if (!config.image_folder.empty()) {
    for (const auto& f : list_png_files(config.image_folder))
      out.push_back({f.stem().string(), crop_and_resize(load_image(f), size)});
    return out;
  }
  DatasetSpec ds = config.dataset;
  if (ds.image_size != size)
    throw ConfigError(fmt::format("dataset.image_size {} differs from model input_size {}", ds.image_size, size));
  auto corpus = make_synthetic_corpus(ds, derive_seed(config.seed, {kImageSeedTag}));
  for (std::size_t i = 0; i < corpus.size(); ++i) out.push_back({synthetic_id(i, corpus[i]), std::move(corpus[i].image)});
  return out;
}

ExperimentReport run_experiment(const ExperimentConfig& config, const ProgressFn& progress) {
  validate(config);
  const ModelSpec spec = resolve_model_spec(config.weights, config.model);
  Model model{Generator(spec), load_weights(config.weights, fingerprint(spec)), std::nullopt};
  if (config.finetune.weights.adv > 0.0 && fs::is_regular_file(discriminator_path(config.weights)))
    model.discriminator = load_weights(discriminator_path(config.weights), discriminator_fingerprint(spec));

  const std::vector<InputImage> images = experiment_images(config, spec.input_size);
  fs::create_directories(config.output_dir);

  std::vector<ImageRun> runs(images.size());
  std::atomic<std::size_t> next{0};
  std::size_t done = 0;
  std::mutex mu;
  auto worker = [&] {
    for (std::size_t k; (k = next++) < images.size();) {
      runs[k] = run_one(config, model, images[k], k);
      std::lock_guard lock(mu);
      ++done;
      if (progress) progress(done, images.size(), runs[k].outcome);
    }
  };
  const int n_workers = std::min<int>(config.workers, static_cast<int>(std::max<std::size_t>(images.size(), 1)));
  if (n_workers <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int w = 0; w < n_workers; ++w) pool.emplace_back(worker);
  }

  std::vector<std::size_t> order(images.size());
  for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return images[a].id < images[b].id; });

  ExperimentReport report;
  for (std::size_t k : order) {
    report.rows.insert(report.rows.end(), runs[k].rows.begin(), runs[k].rows.end());
    report.images.push_back(std::move(runs[k].outcome));
  }

  for (int cp : config.checkpoints) {
    double sums[4] = {0, 0, 0, 0};
    int counts[4] = {0, 0, 0, 0};
    for (const auto& r : report.rows) {
      if (r.T != cp) continue;
      const std::optional<double> vals[4] = {r.psnr, r.ssim, r.fid, r.seconds};
      for (int m = 0; m < 4; ++m)
        if (vals[m]) sums[m] += *vals[m], ++counts[m];
    }
    auto mean = [&](int m) { return counts[m] ? std::optional(sums[m] / counts[m]) : std::nullopt; };
    report.rows.push_back({std::string(kMeanId), cp, mean(0), mean(1), mean(2), mean(3), ""});
  }
  return report;
}

std::string format_report(const std::vector<ReportRow>& rows) {
  std::string out(kReportHeader);
  out += '\n';
  for (const auto& r : rows)
    out += fmt::format("{},{},{},{},{},{},{}\n", r.image_id, r.T ? std::to_string(*r.T) : "", opt(r.psnr, 4),
                       opt(r.ssim, 6), opt(r.fid, 6), opt(r.seconds, 3), r.stop_reason);
  return out;
}

void write_report(const std::vector<ReportRow>& rows, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError(fmt::format("cannot write '{}'", path.string()));
  f << format_report(rows);
}

}  // namespace selftune
