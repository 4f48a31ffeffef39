#pragma once

// Weakly supervised training: the only signal is the physics residual and
// the known boundary values of each input. No solution field is ever read.

#include "nsgen/data.hpp"
#include "nsgen/io.hpp"
#include "nsgen/physics_loss.hpp"
#include "nsgen/unet.hpp"

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace nsgen {

/// Per-sample loss setup derived from an input's boundary spec and shapes.
LossContext make_context(const InputTensor& input, const LossWeights& w,
                         ResidualMode mode = ResidualMode::weighted_abs_sum);

struct BatchLoss {
  ResidualReport mean;  // component-wise mean over the batch
  double total = 0.0;
};

/// Forward a batch, evaluate the composite loss of every sample (residual and
/// Neumann terms on the boundary-overwritten field, Dirichlet term on the raw
/// output) and, when `accumulate_grad` is set, backpropagate the batch mean
/// into the model's gradients.
template <typename S>
BatchLoss batch_objective(UNet<S>& model, const std::vector<const InputTensor*>& inputs,
                          const std::vector<const LossContext*>& contexts, Mode mode,
                          bool accumulate_grad);

struct Adam {
  double lr = 2e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long t = 0;
  std::vector<Vec<double>> m, v;

  void step(UNet<float>& model);
};

struct StageSpec {
  std::string id = "A0";
  std::string recipe;  // empty: taken from the stage id
  int grid_size = 0;   // 0: taken from the stage id
  int in_channels = 0; // 0: taken from the stage id
  std::filesystem::path source;  // source checkpoint directory
  std::string surgery;  // none | expand_channels | expand_depth; empty: stage default
  int epochs = 2000;
  int batch_size = 16;
  double lr = 2e-5;
  double lr_final = 0.0;  // > 0: cosine decay from lr to lr_final across the epochs
  LossWeights weights;
  bool auto_balance = true;
  ResidualMode mode = ResidualMode::weighted_abs_sum;
  int base_width = 64;
  std::uint64_t seed = 0;
  int checkpoint_every = 100;

  /// Fills recipe, grid size and channels from the stage id and checks
  /// the invariants.
  StageSpec resolved() const;
};

/// Stage that must precede `id` in the curriculum (empty for A0).
std::string stage_predecessor(const std::string& id);

struct EpochRecord {
  int epoch = 0;
  double loss_x = 0, loss_y = 0, loss_c = 0, loss_residual = 0;
  double loss_neumann = 0, loss_boundary = 0, total = 0;
};

struct TrainReport {
  std::string stage;
  std::vector<EpochRecord> epochs;
  LossWeights weights;  // frozen after balancing
  std::filesystem::path final_checkpoint;
  std::filesystem::path best_checkpoint;
  double best_total = 0.0;
  double wall_seconds = 0.0;
  std::uint64_t seed = 0;
};

struct TrainingAborted : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Training ranges advertised for a stage's models.
ParamRanges stage_ranges(const std::string& stage);

/// Initial model of a stage: fresh for A0, otherwise the source checkpoint
/// after the stage's surgery, with the surgery invariant verified on
/// `probe` inputs.
UNet<float> initial_model(const StageSpec& spec, const std::vector<const InputTensor*>& probe,
                          nlohmann::json* surgery_record = nullptr);

/// Run one stage. Writes the latest checkpoint to `out_dir` every
/// checkpoint_every epochs and at the end, the best-total-loss checkpoint to
/// `out_dir/best`, and one JSON line per epoch to `telemetry` when given.
TrainReport train_stage(const StageSpec& spec, const Dataset& data,
                        const std::filesystem::path& out_dir, std::ostream* telemetry = nullptr);

struct CurriculumStage {
  StageSpec spec;
  std::filesystem::path data_dir;
  std::filesystem::path out_dir;
};

/// Runs stages in order after checking the dependency order A0 -> A and
/// A -> B0 -> B1 -> B2 -> B3. Each stage after the first of its chain
/// transfers from the previous stage's output.
std::vector<TrainReport> run_curriculum(std::vector<CurriculumStage> stages,
                                        std::ostream* telemetry = nullptr);

void validate_curriculum_order(const std::vector<std::string>& ids);

}  // namespace nsgen
