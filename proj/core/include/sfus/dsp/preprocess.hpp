#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "sfus/dsp/filter.hpp"
#include "sfus/dsp/resample.hpp"
#include "sfus/signal.hpp"
#include "sfus/tensor.hpp"

namespace sfus::dsp {

struct PreprocessConfig {
  BandpassSpec sceeg_band{};
  std::size_t sceeg_epoch_len = kSceegEpochLen;
  double ppg_cutoff_hz = 8.0;
  int ppg_filter_order = 8;
  double ppg_stopband_db = 40.0;
  double ppg_stop_ratio = 1.25;
  std::size_t ppg_epoch_len = kPpgEpochLen;
  double clip_sigma = 3.0;
  double epoch_seconds = kEpochSeconds;
  bool zero_phase = false;
  ResampleSpec resampler{};

  /// Stable across runs: FNV-1a over a canonical text rendering.
  std::uint64_t hash() const;
  std::string canonical() const;
};

/// Population mean and standard deviation (1/N).
struct Moments {
  double mean = 0.0;
  double stddev = 0.0;
};
Moments moments(std::span<const double> x);

/// Clamps to [mean - k sd, mean + k sd] of the input; sd = 0 passes through.
std::vector<double> clip_sd(std::span<const double> x, double k);
/// Throws SignalError when the input has zero variance.
std::vector<double> zscore(std::span<const double> x);

/// [floor(n / len), len]; trailing remainder dropped. Throws SignalError if n < len.
Tensor segment_epochs(std::span<const double> x, std::size_t len);
/// Windows of T epochs every `stride` epochs (stride 0 means T).
std::vector<EpochWindow> build_windows(const Tensor& epochs, std::size_t T, Modality modality,
                                       const std::string& subject_id, std::size_t stride = 0);

SosCascade ppg_lowpass(const PreprocessConfig& cfg, double rate_hz);
std::vector<double> bandpass_sceeg(std::span<const double> x, double rate_hz,
                                   const PreprocessConfig& cfg = {});

/// Exact rational factor that maps `rate_hz` onto epoch_len samples per epoch.
Ratio epoch_ratio(double rate_hz, std::size_t epoch_len, double epoch_seconds);

/// scEEG: bandpass, resample, z-score, segment.
/// PPG: lowpass, resample, clip, z-score, segment.
/// Returns [n_epochs, epoch_len].
Tensor preprocess(const RawRecording& rec, const PreprocessConfig& cfg = {});

}  // namespace sfus::dsp
