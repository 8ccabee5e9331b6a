#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "selftune/error.hpp"
#include "selftune/losses.hpp"
#include "selftune/maskgen.hpp"
#include "selftune/model.hpp"
#include "selftune/quality.hpp"

namespace selftune {

/// Corruption masks for fine-tuning. A RectSpec with an explicit origin hides
/// one chosen region every step.
using CorruptionSpec = std::variant<FreeformSpec, RectSpec>;

struct FinetuneConfig {
  int iterations = 400;  // T
  double lr = 1e-4;
  int batch = 4;  // corruption masks per step
  CorruptionSpec mask_spec = FreeformSpec{};
  bool augment = false;  // random flip / rotation shared within each sample
  LossWeights weights;
  std::optional<StopPolicy> auto_stop;
  int eval_every = 25;  // iterations between internal-FID evaluations, 0 = never
  std::uint64_t seed = 0;
  /// Iterations at which to record the output a run with that budget would
  /// return. Under auto_stop they must be multiples of eval_every.
  std::vector<int> checkpoints;

  friend bool operator==(const FinetuneConfig&, const FinetuneConfig&) = default;
};

void validate(const FinetuneConfig& config);

/// Per-run mutable state. The initial prediction, masked input and hole mask
/// are fixed at construction and never change afterwards.
class FinetuneState {
 public:
  /// A discriminator is created (or taken from `discriminator`) only when
  /// the config gives the adversarial term a positive weight.
  FinetuneState(const Generator& generator, ModelParams initial, Image masked_input, Mask hole,
                const FinetuneConfig& config, std::optional<ModelParams> discriminator = std::nullopt);

  const ModelParams& params() const { return params_; }
  const OptimState& optim() const { return optim_; }
  int iteration() const { return iteration_; }
  const Image& initial_prediction() const { return initial_prediction_; }
  const Image& masked_input() const { return masked_input_; }
  const Mask& hole() const { return hole_; }
  const std::vector<FidRecord>& fid_history() const { return fid_history_; }
  const std::optional<ModelParams>& discriminator() const { return disc_params_; }

  /// Lowest-FID snapshot so far (ties keep the earlier one).
  const ModelParams& best_params() const { return best_params_; }
  int best_iteration() const { return best_iteration_; }
  const Image& best_output() const { return best_output_; }
  const Image& best_raw() const { return best_raw_; }

 private:
  friend struct FinetuneAccess;

  ModelParams params_;
  OptimState optim_;
  int iteration_ = 0;
  Image initial_prediction_;
  Image masked_input_;
  Mask hole_;
  std::vector<FidRecord> fid_history_;
  ModelParams best_params_;
  int best_iteration_ = 0;
  double best_fid_ = 0.0;
  Image best_output_;
  Image best_raw_;
  std::optional<ModelParams> disc_params_;
  std::optional<OptimState> disc_optim_;
};

/// I_pred = f(masked, hole). `masked` must already be zero inside the hole.
Image initial_predict(const Generator& generator, const ModelParams& params, const Image& masked, const Mask& hole);

/// I_pred with the pixels under `random_mask` zeroed.
Image corrupt(const Image& initial_prediction, const Mask& random_mask);

struct StepLog {
  int iteration = 0;  // iteration count after the step
  double loss_rec = 0.0;
  double loss_adv = 0.0;
  double loss_total = 0.0;
};

/// One parameter update: B corrupted copies of I_pred (optionally with one
/// random transform per sample), mean total loss with the original hole
/// excluded, one Adam step. Errors carry the iteration index.
StepLog finetune_step(const Generator& generator, FinetuneState& state, const FinetuneConfig& config);

/// Composite of the current model output with the valid input pixels.
Image current_output(const Generator& generator, const FinetuneState& state);

/// Internal FID of a composited output: hole-centred against valid-centred patches.
double output_fid(const Image& composited, const Mask& hole);

enum class StopReason { budget, auto_stop };
std::string_view to_string(StopReason r);

struct IterationRecord {
  int iteration = 0;
  std::optional<StepLog> step;  // empty for iteration 0
  std::optional<double> fid;
};

struct CheckpointOutput {
  int iteration = 0;
  Image image;                // composited
  Image raw;                  // network output before compositing
  StopReason reason = StopReason::budget;
  int selected_iteration = 0;  // iteration whose parameters produced `image`
  double seconds = 0.0;        // wall-clock time since the run started
};

struct RunLog {
  std::vector<IterationRecord> records;
  std::vector<FidRecord> fid_history;
  StopReason stop_reason = StopReason::budget;
  int stop_iteration = 0;
  int selected_iteration = 0;
  std::vector<CheckpointOutput> checkpoints;
};

/// CSV: iteration,loss_rec,loss_adv,fid (blank where not recorded).
void write_run_log(const RunLog& log, const std::filesystem::path& path);

struct FinetuneResult {
  ModelParams params;  // theta*
  Image image;         // composite(f(theta*), masked, hole)
  Image raw;           // f(theta*) before compositing
  Image baseline;      // composite(I_pred, masked, hole)
  RunLog log;
};

/// Raised when a run aborts; carries the log up to the failure.
class FinetuneError : public Error {
 public:
  FinetuneError(const std::string& what, RunLog log) : Error(what), log_(std::move(log)) {}
  const RunLog& log() const { return log_; }

 private:
  RunLog log_;
};

/// Full adaptation of `initial` to one masked image.
FinetuneResult run_finetune(const Generator& generator, const ModelParams& initial, const Image& masked,
                            const Mask& hole, const FinetuneConfig& config,
                            std::optional<ModelParams> discriminator = std::nullopt);

}  // namespace selftune
