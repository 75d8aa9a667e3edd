#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "sfus/nn/autograd.hpp"
#include "sfus/tensor.hpp"

namespace sfus::train {

struct TrainConfig {
  double learning_rate = 5e-4;
  std::size_t epochs = 50;
  std::size_t batch_size = 16;
  double focal_gamma = 2.0;
  std::size_t patience = 10;
  std::uint64_t seed = 1;
  /// Parameter-name prefixes that receive no updates.
  std::vector<std::string> freeze;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;

  static TrainConfig fusion() { return {}; }
  /// Tiny encoders on the synthetic cohort plateau within three epochs:
  /// lr 1e-3, 4 epochs, patience 2.
  static TrainConfig tiny_encoder();
  /// lr 1e-5, early stopping on target validation kappa.
  static TrainConfig fine_tune();

  /// learning_rate 0 is accepted (the identity run); negative or
  /// non-finite rates, zero epochs, zero batch or zero patience are not.
  void validate() const;
  bool is_frozen(std::string_view name) const;
};

std::string train_config_to_json(const TrainConfig& cfg);
/// Missing keys keep their defaults; unknown keys are rejected.
TrainConfig train_config_from_json(std::string_view text, const TrainConfig& defaults = {});

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  std::size_t steps = 0;  // optimizer steps taken so far
  double train_loss = 0.0;
  double val_kappa = 0.0;
  double val_accuracy = 0.0;
  double wall_ms = 0.0;
  bool best = false;

  /// Wall time is excluded.
  bool same_numbers(const EpochRecord& other) const;
};

struct TrainLog {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  std::string stop_reason;  // "epochs", "patience", "diverged"

  const EpochRecord& best() const;
  /// One JSON object per line; `with_wall` false drops the wall_ms field.
  std::string to_jsonl(bool with_wall = true) const;
  static TrainLog from_jsonl(std::string_view text);
  bool same_numbers(const TrainLog& other) const;
};

class TrainError : public std::runtime_error {
 public:
  TrainError(const std::string& what, TrainLog log) : std::runtime_error(what), log_(std::move(log)) {}
  const TrainLog& log() const noexcept { return log_; }

 private:
  TrainLog log_;
};

/// Where a window came from, for per-subject reassembly.
struct WindowOrigin {
  std::string subject_id;
  std::size_t start_epoch = 0;
};

/// N windows of T epochs. Every input is [N, T, ...]; labels are [N * T]
/// row-major (window, epoch).
struct SequenceDataset {
  std::vector<Tensor> inputs;
  std::vector<int> labels;
  std::vector<WindowOrigin> origins;  // empty or size N

  std::size_t size() const { return inputs.empty() ? 0 : inputs.front().dim(0); }
  std::size_t window_epochs() const { return inputs.empty() ? 0 : inputs.front().dim(1); }
  SequenceDataset gather(std::span<const std::size_t> rows) const;
  SequenceDataset slice(std::size_t first, std::size_t count) const;
  /// Throws std::invalid_argument on ragged inputs or labels outside [0, 4).
  void validate() const;
};

/// Maps batched inputs to stage probabilities [B, T, 4].
using ForwardFn = std::function<nn::Var(std::span<const nn::Var> inputs)>;

class Adam {
 public:
  Adam(std::vector<nn::Parameter*> params, double lr, double beta1 = 0.9, double beta2 = 0.999,
       double eps = 1e-8);
  /// Applies one update from the accumulated gradients.
  void step();
  std::size_t steps() const { return steps_; }

 private:
  std::vector<nn::Parameter*> params_;
  std::vector<Tensor> m_, v_;
  double lr_, beta1_, beta2_, eps_;
  std::size_t steps_ = 0;
};

/// Probabilities [N * T, 4] without recording a graph.
Tensor predict(const ForwardFn& forward, const SequenceDataset& data, std::size_t batch_size = 32);

/// Adam on the unfrozen parameters with focal loss; after every epoch the
/// validation kappa is measured, and on return `params` holds the values of
/// the best epoch (first one on ties). Throws TrainError when the loss goes
/// non-finite; the error carries the log so far.
TrainLog train(nn::ParameterSet& params, const ForwardFn& forward, const SequenceDataset& train_set,
               const SequenceDataset& val_set, const TrainConfig& cfg);

}  // namespace sfus::train
