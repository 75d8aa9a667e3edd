#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "sfus/signal.hpp"

namespace sfus::data {

using TransitionMatrix = std::array<std::array<double, kNumStages>, kNumStages>;

struct SynthConfig {
  std::size_t n_subjects = 40;
  std::size_t epochs_per_subject = 120;
  double sceeg_rate_hz = 256.0;
  double ppg_rate_hz = 64.0;
  /// Per-epoch Markov transitions, row = current stage.
  TransitionMatrix transitions = {{{0.86, 0.12, 0.01, 0.01},
                                   {0.04, 0.84, 0.07, 0.05},
                                   {0.02, 0.10, 0.88, 0.00},
                                   {0.03, 0.08, 0.00, 0.89}}};
  std::array<double, kNumStages> initial = {0.25, 0.25, 0.25, 0.25};
  double sceeg_noise = 0.5;
  double ppg_noise = 0.15;
  /// Probability that a Light epoch's scEEG is rendered with the Wake recipe.
  double sceeg_light_wake_confusability = 0.45;
  /// Probability that a Deep (REM) epoch's PPG is rendered with the REM (Deep) recipe.
  double ppg_deep_rem_confusability = 0.4;
  /// 0 = source domain; > 0 shifts rhythms, heart rates and amplitudes.
  double domain_shift = 0.0;
  std::uint64_t seed = 7;
  std::string subject_prefix = "sub";

  /// Throws std::invalid_argument on non-stochastic rows or bad ranges.
  void validate() const;
};

std::string synth_config_to_json(const SynthConfig& cfg);
/// Missing keys keep their defaults; unknown keys are rejected.
SynthConfig synth_config_from_json(std::string_view text);

struct SubjectRecordings {
  RawRecording sceeg;
  RawRecording ppg;
  Hypnogram hypnogram;
};

/// Subject i draws from SeededRng(cfg.seed).derive(i); output is independent
/// of generation order.
SubjectRecordings synth_subject(const SynthConfig& cfg, std::size_t index);
std::vector<SubjectRecordings> synth_generate(const SynthConfig& cfg);

/// Stage sequence alone (first stage from `initial`).
std::vector<int> synth_stages(const SynthConfig& cfg, std::size_t n_epochs, std::uint64_t seed);

}  // namespace sfus::data
