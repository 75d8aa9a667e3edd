#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sfus/data/labels.hpp"
#include "sfus/data/synth.hpp"
#include "sfus/dsp/preprocess.hpp"
#include "sfus/models/fusion.hpp"
#include "sfus/models/ppg_encoder.hpp"
#include "sfus/models/sceeg_encoder.hpp"
#include "sfus/report.hpp"
#include "sfus/train/trainer.hpp"

namespace sfus::train {

/// Raised when a dataset cannot serve the requested windows.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Preprocessed, label-aligned epochs of one subject.
struct SubjectEpochs {
  std::string id;
  Tensor sceeg;  // [E, 3000]
  Tensor ppg;    // [E, 1024]
  std::vector<int> stages;
};

struct Cohort {
  std::vector<SubjectEpochs> subjects;

  std::vector<std::string> ids() const;
  /// Throws DataError for an unknown id.
  const SubjectEpochs& subject(std::string_view id) const;
};

/// Preprocesses both modalities and trims all three streams to their common
/// epoch count.
SubjectEpochs prepare_subject(const data::SubjectRecordings& rec, const dsp::PreprocessConfig& cfg = {});
Cohort prepare_cohort(std::span<const data::SubjectRecordings> recordings, const dsp::PreprocessConfig& cfg = {});

enum class Inputs { kSceeg, kPpg, kBoth };

/// Non-overlapping windows of T epochs in subject then epoch order; the
/// trailing remainder of each subject is dropped. Both: inputs {scEEG, PPG}.
SequenceDataset make_windows(const Cohort& cohort, std::span<const std::string> ids, Inputs inputs, std::size_t T);

/// Input `index` alone.
SequenceDataset select_input(const SequenceDataset& data, std::size_t index);

/// One trainable model of any stage. Address-stable across moves.
class StageModel {
 public:
  explicit StageModel(models::SceegEncoder encoder);
  explicit StageModel(models::PpgEncoder encoder);
  StageModel(models::FusionModel fusion, models::EncoderHashes hashes);
  StageModel(StageModel&&) noexcept;
  StageModel& operator=(StageModel&&) noexcept;
  ~StageModel();

  /// Dispatches on the checkpoint's model tag.
  static StageModel from_checkpoint(const nn::Checkpoint& ckpt);
  /// Tiny or full-scale encoder for a T-epoch window.
  static StageModel encoder(Modality modality, std::size_t T, bool tiny, std::uint64_t seed);

  /// "sceeg", "ppg", "xattn" or "mamba".
  std::string kind() const;
  std::size_t input_count() const;
  nn::ParameterSet& params();
  const nn::ParameterSet& params() const;
  ForwardFn forward() const;
  /// Per-epoch features [B, T, d] of an encoder; throws for fusion models.
  nn::Var features(const nn::Var& windows) const;
  nn::Checkpoint checkpoint() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Features [N, T, d] of `encoder` over windows [N, T, L].
Tensor encoder_features(const StageModel& encoder, const Tensor& windows, std::size_t batch_size = 32);

/// Inputs {scEEG features, PPG features} for a kBoth dataset.
SequenceDataset fusion_dataset(const StageModel& sceeg, const StageModel& ppg, const SequenceDataset& both);

TrainLog train_model(StageModel& model, const SequenceDataset& train_set, const SequenceDataset& val_set,
                     const TrainConfig& cfg);

struct FineTuneResult {
  nn::Checkpoint checkpoint;
  TrainLog log;
};

/// Loads `source`, trains on the target data with early stopping on target
/// validation kappa, and returns the best checkpoint.
FineTuneResult fine_tune(const nn::Checkpoint& source, const SequenceDataset& train_set,
                         const SequenceDataset& val_set, const TrainConfig& cfg = TrainConfig::fine_tune());

/// Median wall time of `reps` single-window forward passes after `warmup`.
double inference_ms(const StageModel& model, const SequenceDataset& data, std::size_t reps = 100,
                    std::size_t warmup = 10);

/// Scores `model` on `data` (subject origins required for sleep measures).
report::Evaluation evaluate_model(std::string name, const StageModel& model, const SequenceDataset& data);
report::Evaluation evaluate_probabilities(std::string name, const Tensor& probs, const SequenceDataset& data);

struct SweepConfig {
  Modality modality = Modality::kSceeg;
  bool tiny = true;
  TrainConfig train;
  std::vector<std::size_t> windows = {1, 2, 6, 10, 20, 60};
  std::size_t timing_reps = 100;
  std::size_t timing_warmup = 10;
};

/// Trains and scores one encoder per window length on the split.
std::vector<report::SweepRow> window_sweep(const Cohort& cohort, const data::SplitManifest& split,
                                           const SweepConfig& cfg);

/// Encoders, then score / cross-attention / Mamba fusion on their frozen
/// features, all on one cohort split.
struct ExperimentConfig {
  std::size_t window = 6;
  bool tiny = true;
  std::uint64_t seed = 1;
  TrainConfig encoder_train = TrainConfig::tiny_encoder();
  TrainConfig fusion_train = TrainConfig::fusion();
  /// Wall-clock timing of single-window inference in the reports.
  bool measure_inference = false;
};

struct ExperimentResult {
  report::Evaluation sceeg, ppg, score, xattn, mamba;
  models::AlphaSearch alpha;
  TrainLog sceeg_log, ppg_log, xattn_log, mamba_log;
  models::EncoderHashes encoder_hashes_before, encoder_hashes_after;
  std::size_t xattn_params = 0, mamba_params = 0;

  /// Every numeric outcome, without wall-clock fields.
  std::string numeric_report() const;
};

ExperimentResult run_experiment(const Cohort& cohort, const data::SplitManifest& split, const ExperimentConfig& cfg);

/// Content hash of a checkpoint's encoded bytes.
std::uint64_t checkpoint_hash(const nn::Checkpoint& ckpt);

}  // namespace sfus::train
