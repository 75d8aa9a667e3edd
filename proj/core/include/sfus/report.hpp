#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "sfus/metrics.hpp"
#include "sfus/models/fusion.hpp"

namespace sfus::report {

/// Test-set scores of one model.
struct Evaluation {
  std::string name;
  metrics::ConfusionMatrix confusion;
  double kappa = 0.0;
  double accuracy = 0.0;
  metrics::ClassMetrics classes;
  metrics::MeasuresMae mae;
  std::size_t params = 0;
  /// Median single-window forward time; absent when not measured.
  std::optional<double> infer_ms;
  /// Present for score-level fusion.
  std::optional<models::AlphaSearch> alpha;
};

/// Scores probability rows [N * T, 4] against `labels`. Per-subject sleep
/// measures use `subjects[i]` as the owner of row i; rows of one subject must
/// be in epoch order.
Evaluation evaluate_probs(std::string name, const Tensor& probs, std::span<const int> labels,
                          std::span<const std::string> subjects);

/// Deterministic JSON (fixed key order, shortest round-trip doubles).
/// `with_timing` false drops infer_ms so reports compare byte for byte.
std::string evaluation_to_json(const Evaluation& e, bool with_timing = true);
Evaluation evaluation_from_json(std::string_view text);

/// Columns: model, kappa, Acc, size, infer ms, per-stage F1.
std::string comparison_table(std::span<const Evaluation> rows);

struct SweepRow {
  std::size_t window = 0;
  std::string label;
  double kappa = 0.0;
  double accuracy = 0.0;
  std::size_t params = 0;
  /// PPG residual depth; 0 for scEEG.
  std::size_t depth = 0;
  double infer_ms = 0.0;
};

std::string sweep_to_json(std::string_view modality, std::span<const SweepRow> rows, bool with_timing = true);
std::string sweep_table(std::string_view modality, std::span<const SweepRow> rows);

/// Kappa against alpha on the validation grid, best point marked.
std::string alpha_curve_svg(const models::AlphaSearch& search);
/// Grouped bars of TST/SE/FR MAE per model.
std::string mae_bars_svg(std::span<const Evaluation> rows);

/// "1.23M" style sizes.
std::string format_size(std::size_t params);

}  // namespace sfus::report
