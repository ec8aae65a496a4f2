#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <vector>

#include "aplc/corpus.hpp"
#include "aplc/model.hpp"
#include "aplc/optimizer.hpp"
#include "aplc/partition.hpp"
#include "aplc/schedule.hpp"

namespace aplc {

struct TrainConfig {
  std::size_t batch_size = 12;
  std::size_t epochs = 8;
  GroupRates rates;
  std::uint64_t warmup_steps = 0;
  PartitionSpec partition{{0.5, 0.5}, 2.0, 768};
  std::size_t embedding_dim = 256;
  std::uint64_t seed = 1;
  /// Validation P@k every this many epochs; 0 disables monitoring.
  std::size_t eval_every = 1;
  /// Written at the end of every epoch when non-empty.
  std::filesystem::path checkpoint_path;
  /// Global-norm gradient clip; 0 disables.
  double clip_norm = 0.0;
  bool gate_supervision = false;
  AdamWOptions adamw;
  /// Trailing share of the training samples held out for monitoring.
  double validation_fraction = 0.1;
  std::vector<std::size_t> eval_k{1, 3, 5};
  InferenceMode inference;

  /// Throws UsageError on invalid sizes or rates.
  void validate() const;
  /// Hash of every field that influences the trained weights.
  std::uint64_t fingerprint() const;
};

struct StepLog {
  std::uint64_t step = 0;
  double lr_encoder = 0.0;
  double lr_hidden = 0.0;
  double lr_aplc = 0.0;
  double loss = 0.0;
};

struct EpochLog {
  std::size_t epoch = 0;  // 1-based
  double mean_loss = 0.0;
  std::vector<double> validation_p_at_k;  // aligned with TrainConfig::eval_k; empty if skipped
};

struct FitOptions {
  /// Continue from a checkpoint produced with the same config.
  const LoadedModel* resume = nullptr;
  /// Stop (after checkpointing) once this many epochs have completed in
  /// total, without changing the schedule.
  std::optional<std::size_t> stop_after_epochs;
  /// Progress lines (one per epoch); null for silence.
  std::ostream* progress = nullptr;
};

struct FitResult {
  Model model;
  TrainState state;
  std::vector<StepLog> steps;
  std::vector<EpochLog> epochs;
};

/// Builds a freshly initialised model for `dataset` (partition from the
/// label frequencies of `train_part`).
Model initial_model(const Dataset& train_part, const TrainConfig& config);

/// Trains encoder and APLC layer with per-group AdamW and the slanted
/// triangular schedule. The last `validation_fraction` of `dataset` is only
/// used for monitoring. Throws NumericError on a non-finite loss (naming the
/// step) and DataError when dataset and resumed model disagree on D or L.
FitResult fit(const Dataset& dataset, const TrainConfig& config, const FitOptions& options = {});

/// Training log as CSV: step,lr_x,lr_h,lr_a,loss.
void write_training_log(std::span<const StepLog> steps, std::ostream& out);

}  // namespace aplc
