#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "guardnet/dataset.hpp"
#include "guardnet/losses.hpp"
#include "guardnet/metrics.hpp"
#include "guardnet/model.hpp"
#include "guardnet/optim.hpp"

namespace guardnet {

struct TrainConfig {
  int epochs = 5;
  int batch_size = 32;
  double peak_lr = 2e-5;
  double warmup_ratio = 0.1;
  AdamWConfig adamw;
  double grad_clip = 1.0;
  std::uint64_t seed = 0;

  void validate() const;
};

// Linear warmup to peak_lr over warmup_ratio * total_steps, then cosine to 0.
double lr_at(long step, long total_steps, const TrainConfig& cfg);

struct EpochRecord {
  int epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_macro_f1 = 0.0;
  double val_accuracy = 0.0;

  friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

struct TrainResult {
  GuardModel model;  // weights from the best validation epoch
  std::vector<EpochRecord> history;
  int best_epoch = 0;
};

// One JSON object per line: {"epoch", "loss", "macro_f1", "accuracy"}.
std::string history_jsonl(const std::vector<EpochRecord>& history);

// Targets as a B x 2 matrix of 0/1 in label order.
Tensor64 label_targets(const std::vector<const Sample*>& batch);

// Merged-malicious predictions of a model over a dataset, and the resulting confusion.
std::vector<std::uint8_t> predict_malicious(const FrozenModel& m, const Dataset& ds);
Confusion evaluate_confusion(const FrozenModel& m, const Dataset& ds);

/// Mini-batch training of a neural architecture. gamma = 0 selects the
/// weighted BCE loss, otherwise the focal loss. Throws TrainingError with
/// epoch and step when the loss or a gradient diverges.
TrainResult train(GuardModel model, const Dataset& train_set, const Dataset& val_set, const TrainConfig& cfg,
                  const FocalConfig& loss);

struct Recipe {
  TrainConfig train;
  FocalConfig loss;
};

// Per-architecture defaults: Sharanga plain BCE, Mahendra focal gamma 2,
// Raudra focal gamma 3 with weights (1.5, 1.0) at lr 3e-5.
Recipe default_recipe(Arch arch);

struct TwoStageConfig {
  TrainConfig stage1{3, 32, 2e-5, 0.1, {}, 1.0, 0};
  bool skip_stage1 = false;  // forced on for precomputed backends
  ForestConfig forest;
  BoostConfig boost;
};

struct TwoStageResult {
  GuardModel model;
  std::vector<EpochRecord> stage1_history;
  Tensor64 features;  // CLS features the ensembles were fitted on, one row per training sample
};

/// Stage 1 fine-tunes the encoder under a temporary CLS linear head with BCE
/// (the head is then dropped). Stage 2 fits one ensemble per label on the
/// frozen encoder's CLS features.
TwoStageResult two_stage_fit(Arch arch, const ModelConfig& model_cfg, EmbeddingBackend<double> backend,
                             const Dataset& train_set, const Dataset& val_set, const TwoStageConfig& cfg);

struct GridSpace {
  std::vector<double> lrs{2e-5, 3e-5, 5e-5};
  std::vector<double> gammas{2.0, 3.0};
  std::vector<TaskWeights> label_weight_pairs{{1.0, 1.0}, {1.5, 1.0}};
  int probe_epochs = 3;

  void validate() const;
};

struct GridCandidate {
  double lr = 0.0;
  double gamma = 0.0;
  TaskWeights weights{1.0, 1.0};
  double macro_f1 = 0.0;
  double train_loss = 0.0;
};

struct GridResult {
  GridCandidate best;
  std::vector<GridCandidate> results;  // every candidate, in enumeration order
};

// Candidate order used for tie-breaking: lower lr, then lower gamma, then lexicographic weights.
bool grid_order(const GridCandidate& a, const GridCandidate& b);

/// Exhaustive search; each candidate trains its own copy of `initial` for
/// probe_epochs and is scored by its best validation macro F1. Candidates run
/// in parallel when exec is parallel.
GridResult grid_search(const GridSpace& space, const GuardModel& initial, const Dataset& train_set,
                       const Dataset& val_set, const TrainConfig& base,
                       kernels::Exec exec = kernels::default_exec());

std::string grid_results_jsonl(const std::vector<GridCandidate>& results);

}  // namespace guardnet
