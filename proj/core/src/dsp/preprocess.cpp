#include "sfus/dsp/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace sfus::dsp {

namespace {

std::vector<double> run_filter(const SosCascade& sos, std::span<const double> x, bool zero_phase) {
  return zero_phase ? sos.apply_zero_phase(x) : sos.apply(x);
}

}  // namespace

std::string PreprocessConfig::canonical() const {
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "band=%.17g,%.17g,%d,%d;eeg_len=%zu;ppg=%.17g,%d,%.17g,%.17g;ppg_len=%zu;clip=%.17g;"
                "epoch_s=%.17g;zero_phase=%d;kaiser=%.17g,%d",
                sceeg_band.low_hz, sceeg_band.high_hz, sceeg_band.highpass_order,
                sceeg_band.lowpass_order, sceeg_epoch_len, ppg_cutoff_hz, ppg_filter_order,
                ppg_stopband_db, ppg_stop_ratio, ppg_epoch_len, clip_sigma, epoch_seconds,
                zero_phase ? 1 : 0, resampler.kaiser_beta, resampler.taps_per_phase);
  return buf;
}

std::uint64_t PreprocessConfig::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : canonical()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

Moments moments(std::span<const double> x) {
  if (x.empty()) return {};
  double sum = 0.0;
  for (double v : x) sum += v;
  const double mean = sum / static_cast<double>(x.size());
  double ss = 0.0;
  for (double v : x) ss += (v - mean) * (v - mean);
  return {mean, std::sqrt(ss / static_cast<double>(x.size()))};
}

std::vector<double> clip_sd(std::span<const double> x, double k) {
  std::vector<double> y(x.begin(), x.end());
  const Moments m = moments(x);
  if (m.stddev == 0.0) return y;
  const double lo = m.mean - k * m.stddev;
  const double hi = m.mean + k * m.stddev;
  for (double& v : y) v = std::clamp(v, lo, hi);
  return y;
}

std::vector<double> zscore(std::span<const double> x) {
  const Moments m = moments(x);
  if (!(m.stddev > 0.0)) throw SignalError("zscore: degenerate (zero-variance) signal");
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = (x[i] - m.mean) / m.stddev;
  // second pass removes the residual rounding in the mean
  const Moments r = moments(y);
  for (double& v : y) v = (v - r.mean) / r.stddev;
  return y;
}

Tensor segment_epochs(std::span<const double> x, std::size_t len) {
  if (len == 0) throw SignalError("segment_epochs: epoch length must be positive");
  if (x.size() < len) {
    throw SignalError("segment_epochs: signal of " + std::to_string(x.size()) +
                      " samples is shorter than one epoch (" + std::to_string(len) + ")");
  }
  const std::size_t n = x.size() / len;
  return Tensor({n, len}, std::vector<double>(x.begin(), x.begin() + static_cast<std::ptrdiff_t>(n * len)));
}

std::vector<EpochWindow> build_windows(const Tensor& epochs, std::size_t T, Modality modality,
                                       const std::string& subject_id, std::size_t stride) {
  if (T == 0) throw SignalError("build_windows: T must be >= 1");
  if (epochs.rank() != 2) throw ShapeError("build_windows: epochs must be [n, len]");
  if (stride == 0) stride = T;
  const std::size_t n = epochs.dim(0);
  if (n < T) {
    throw SignalError("build_windows: " + std::to_string(n) + " epochs cannot fill a window of " +
                      std::to_string(T));
  }
  std::vector<EpochWindow> out;
  for (std::size_t start = 0; start + T <= n; start += stride) {
    out.push_back(EpochWindow{epochs.rows(start, T), modality, subject_id, start});
  }
  return out;
}

SosCascade ppg_lowpass(const PreprocessConfig& cfg, double rate_hz) {
  return design_cheby2_lowpass(cfg.ppg_filter_order, cfg.ppg_cutoff_hz, cfg.ppg_stopband_db, rate_hz,
                               cfg.ppg_stop_ratio);
}

std::vector<double> bandpass_sceeg(std::span<const double> x, double rate_hz, const PreprocessConfig& cfg) {
  return run_filter(design_sceeg_bandpass(rate_hz, cfg.sceeg_band), x, cfg.zero_phase);
}

Ratio epoch_ratio(double rate_hz, std::size_t epoch_len, double epoch_seconds) {
  // target / source = epoch_len / (epoch_seconds * rate)
  const double source_per_epoch = epoch_seconds * rate_hz;
  const double rounded = std::round(source_per_epoch);
  if (std::abs(source_per_epoch - rounded) < 1e-9 * source_per_epoch && rounded >= 1.0) {
    return {static_cast<std::int64_t>(epoch_len), static_cast<std::int64_t>(rounded)};
  }
  return rational_approx(static_cast<double>(epoch_len) / source_per_epoch);
}

Tensor preprocess(const RawRecording& rec, const PreprocessConfig& cfg) {
  rec.validate();
  if (rec.modality == Modality::kSceeg) {
    const auto filtered = bandpass_sceeg(rec.samples, rec.rate_hz, cfg);
    const auto resampled = resample(filtered, epoch_ratio(rec.rate_hz, cfg.sceeg_epoch_len, cfg.epoch_seconds),
                                    cfg.resampler);
    return segment_epochs(zscore(resampled), cfg.sceeg_epoch_len);
  }
  const auto filtered = run_filter(ppg_lowpass(cfg, rec.rate_hz), rec.samples, cfg.zero_phase);
  const auto resampled =
      resample(filtered, epoch_ratio(rec.rate_hz, cfg.ppg_epoch_len, cfg.epoch_seconds), cfg.resampler);
  return segment_epochs(zscore(clip_sd(resampled, cfg.clip_sigma)), cfg.ppg_epoch_len);
}

}  // namespace sfus::dsp
