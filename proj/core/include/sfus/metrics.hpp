#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "sfus/signal.hpp"

namespace sfus::metrics {

class MetricError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// counts[truth][pred]
struct ConfusionMatrix {
  std::array<std::array<std::int64_t, kNumStages>, kNumStages> counts{};

  std::int64_t total() const;
  std::int64_t trace() const;
  std::int64_t row_sum(int c) const;
  std::int64_t col_sum(int c) const;
  bool operator==(const ConfusionMatrix&) const = default;
};

/// Throws MetricError on length mismatch, empty input or labels outside [0, 4).
ConfusionMatrix confusion(std::span<const int> pred, std::span<const int> truth);

/// Cohen's kappa. When chance agreement is 1, returns 1 for perfect
/// agreement and 0 otherwise. Throws MetricError on an empty matrix.
double kappa(const ConfusionMatrix& cm);
double accuracy(const ConfusionMatrix& cm);

struct StageScores {
  double recall = 0.0;
  double precision = 0.0;
  double f1 = 0.0;
  /// Set when a denominator was empty and a score was reported as 0.
  bool degenerate = false;
};

struct ClassMetrics {
  std::array<StageScores, kNumStages> per_stage{};
  double accuracy = 0.0;
  double macro_f1 = 0.0;
};

ClassMetrics class_metrics(const ConfusionMatrix& cm);

inline constexpr double kEpochMinutes = kEpochSeconds / 60.0;

struct SleepMeasures {
  double tst_min = 0.0;
  double se_pct = 0.0;
  double fr_light_pct = 0.0;
  double fr_deep_pct = 0.0;
  double fr_rem_pct = 0.0;
  /// TST = 0; SE and every FR are reported as 0.
  bool degenerate = false;
};

/// Throws MetricError on an empty hypnogram or invalid label.
SleepMeasures sleep_measures(std::span<const int> stages);

struct MeasuresMae {
  double tst_min = 0.0;
  double se_pct = 0.0;
  double fr_light_pct = 0.0;
  double fr_deep_pct = 0.0;
  double fr_rem_pct = 0.0;
  std::size_t subjects = 0;
};

/// Mean absolute error over subjects; subject ids must match pairwise.
MeasuresMae measures_mae(std::span<const Hypnogram> pred, std::span<const Hypnogram> ref);

/// Row-wise argmax of a [T, 4] probability matrix, lowest index on ties.
std::vector<int> argmax_rows(std::span<const double> probs, std::size_t classes = kNumStages);

}  // namespace sfus::metrics
