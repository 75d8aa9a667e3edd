#include "sfus/metrics.hpp"

#include <cmath>
#include <string>

namespace sfus::metrics {

namespace {

void check_label(int v) {
  if (v < 0 || v >= kNumStages) throw MetricError("stage label " + std::to_string(v) + " outside [0, 4)");
}

double ratio_or_zero(double num, double den, bool& degenerate) {
  if (den == 0.0) {
    degenerate = true;
    return 0.0;
  }
  return num / den;
}

}  // namespace

std::int64_t ConfusionMatrix::total() const {
  std::int64_t t = 0;
  for (const auto& row : counts)
    for (auto v : row) t += v;
  return t;
}

std::int64_t ConfusionMatrix::trace() const {
  std::int64_t t = 0;
  for (int c = 0; c < kNumStages; ++c) t += counts[c][c];
  return t;
}

std::int64_t ConfusionMatrix::row_sum(int c) const {
  std::int64_t t = 0;
  for (auto v : counts[c]) t += v;
  return t;
}

std::int64_t ConfusionMatrix::col_sum(int c) const {
  std::int64_t t = 0;
  for (const auto& row : counts) t += row[c];
  return t;
}

ConfusionMatrix confusion(std::span<const int> pred, std::span<const int> truth) {
  if (pred.size() != truth.size()) {
    throw MetricError("confusion: " + std::to_string(pred.size()) + " predictions vs " +
                      std::to_string(truth.size()) + " labels");
  }
  if (pred.empty()) throw MetricError("confusion: no aligned epochs");
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    check_label(pred[i]);
    check_label(truth[i]);
    ++cm.counts[truth[i]][pred[i]];
  }
  return cm;
}

double kappa(const ConfusionMatrix& cm) {
  const auto total = static_cast<double>(cm.total());
  if (total == 0.0) throw MetricError("kappa: empty confusion matrix");
  const double po = static_cast<double>(cm.trace()) / total;
  double pe = 0.0;
  for (int c = 0; c < kNumStages; ++c) {
    pe += static_cast<double>(cm.row_sum(c)) * static_cast<double>(cm.col_sum(c));
  }
  pe /= total * total;
  if (pe == 1.0) return po == 1.0 ? 1.0 : 0.0;
  return (po - pe) / (1.0 - pe);
}

double accuracy(const ConfusionMatrix& cm) {
  const auto total = cm.total();
  if (total == 0) throw MetricError("accuracy: empty confusion matrix");
  return static_cast<double>(cm.trace()) / static_cast<double>(total);
}

ClassMetrics class_metrics(const ConfusionMatrix& cm) {
  ClassMetrics out;
  out.accuracy = accuracy(cm);
  double f1_sum = 0.0;
  for (int c = 0; c < kNumStages; ++c) {
    StageScores& s = out.per_stage[c];
    const auto tp = static_cast<double>(cm.counts[c][c]);
    s.recall = ratio_or_zero(tp, static_cast<double>(cm.row_sum(c)), s.degenerate);
    s.precision = ratio_or_zero(tp, static_cast<double>(cm.col_sum(c)), s.degenerate);
    s.f1 = ratio_or_zero(2.0 * s.precision * s.recall, s.precision + s.recall, s.degenerate);
    f1_sum += s.f1;
  }
  out.macro_f1 = f1_sum / kNumStages;
  return out;
}

SleepMeasures sleep_measures(std::span<const int> stages) {
  if (stages.empty()) throw MetricError("sleep_measures: empty hypnogram");
  std::array<std::int64_t, kNumStages> n{};
  for (int s : stages) {
    check_label(s);
    ++n[s];
  }
  SleepMeasures m;
  const std::int64_t sleep_epochs = n[kLight] + n[kDeep] + n[kRem];
  m.tst_min = static_cast<double>(sleep_epochs) * kEpochMinutes;
  if (sleep_epochs == 0) {
    m.degenerate = true;
    return m;
  }
  const double wake_min = static_cast<double>(n[kWake]) * kEpochMinutes;
  m.se_pct = m.tst_min / (m.tst_min + wake_min) * 100.0;
  const auto sleep = static_cast<double>(sleep_epochs);
  m.fr_light_pct = static_cast<double>(n[kLight]) / sleep * 100.0;
  m.fr_deep_pct = static_cast<double>(n[kDeep]) / sleep * 100.0;
  m.fr_rem_pct = static_cast<double>(n[kRem]) / sleep * 100.0;
  return m;
}

MeasuresMae measures_mae(std::span<const Hypnogram> pred, std::span<const Hypnogram> ref) {
  if (pred.size() != ref.size()) throw MetricError("measures_mae: subject lists differ in length");
  if (pred.empty()) throw MetricError("measures_mae: no subjects");
  MeasuresMae mae;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i].subject_id != ref[i].subject_id) {
      throw MetricError("measures_mae: subject '" + pred[i].subject_id + "' paired with '" +
                        ref[i].subject_id + "'");
    }
    const SleepMeasures p = sleep_measures(pred[i].stages);
    const SleepMeasures r = sleep_measures(ref[i].stages);
    mae.tst_min += std::abs(p.tst_min - r.tst_min);
    mae.se_pct += std::abs(p.se_pct - r.se_pct);
    mae.fr_light_pct += std::abs(p.fr_light_pct - r.fr_light_pct);
    mae.fr_deep_pct += std::abs(p.fr_deep_pct - r.fr_deep_pct);
    mae.fr_rem_pct += std::abs(p.fr_rem_pct - r.fr_rem_pct);
  }
  const auto n = static_cast<double>(pred.size());
  mae.tst_min /= n;
  mae.se_pct /= n;
  mae.fr_light_pct /= n;
  mae.fr_deep_pct /= n;
  mae.fr_rem_pct /= n;
  mae.subjects = pred.size();
  return mae;
}

std::vector<int> argmax_rows(std::span<const double> probs, std::size_t classes) {
  if (classes == 0 || probs.size() % classes != 0) throw MetricError("argmax_rows: ragged probability matrix");
  std::vector<int> out(probs.size() / classes);
  for (std::size_t r = 0; r < out.size(); ++r) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < classes; ++c) {
      if (probs[r * classes + c] > probs[r * classes + best]) best = c;
    }
    out[r] = static_cast<int>(best);
  }
  return out;
}

}  // namespace sfus::metrics
