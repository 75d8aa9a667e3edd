#pragma once

#include <complex>
#include <span>
#include <vector>

namespace sfus::dsp {

/// y = (b0 + b1 z^-1 + b2 z^-2) / (1 + a1 z^-1 + a2 z^-2)
struct Biquad {
  double b0 = 1.0, b1 = 0.0, b2 = 0.0;
  double a1 = 0.0, a2 = 0.0;
};

/// Zeros, poles and gain of an analog or digital transfer function.
struct Zpk {
  std::vector<std::complex<double>> zeros;
  std::vector<std::complex<double>> poles;
  double gain = 1.0;
};

class SosCascade {
 public:
  SosCascade() = default;
  explicit SosCascade(std::vector<Biquad> sections) : sections_(std::move(sections)) {}

  const std::vector<Biquad>& sections() const noexcept { return sections_; }
  std::size_t order() const noexcept;

  /// Causal direct-form II transposed, zero initial state.
  std::vector<double> apply(std::span<const double> x) const;
  /// Forward then time-reversed pass; squared magnitude, zero phase.
  std::vector<double> apply_zero_phase(std::span<const double> x) const;

  /// H(e^{j 2 pi f / rate}).
  std::complex<double> response(double freq_hz, double rate_hz) const;
  std::vector<double> impulse_response(std::size_t n) const;

  /// Cascade with `other` appended.
  SosCascade then(const SosCascade& other) const;
  /// Scales the numerator of the first section.
  void scale_gain(double factor);

 private:
  std::vector<Biquad> sections_;
};

/// Analog prototypes, cutoff 1 rad/s (Chebyshev-II: stopband edge at 1 rad/s).
Zpk butterworth_prototype(int order);
Zpk cheby2_prototype(int order, double stopband_atten_db);

Zpk analog_lowpass_to_lowpass(const Zpk& proto, double omega);
Zpk analog_lowpass_to_highpass(const Zpk& proto, double omega);
/// s = 2 fs (z - 1) / (z + 1); zeros at infinity land on z = -1.
Zpk bilinear(const Zpk& analog, double rate_hz);
/// Pairs conjugate poles with nearest zeros; sections ordered by pole radius.
SosCascade zpk_to_sos(const Zpk& digital);

/// 2 fs tan(pi f / fs): analog frequency mapped onto `freq_hz` by the bilinear transform.
double prewarp(double freq_hz, double rate_hz);

/// Chebyshev-II lowpass with its stopband edge at `stop_ratio * cutoff_hz`,
/// DC gain normalized to 1; the stopband gain never exceeds -stopband_atten_db.
/// Throws std::invalid_argument at/above Nyquist.
SosCascade design_cheby2_lowpass(int order, double cutoff_hz, double stopband_atten_db,
                                 double rate_hz, double stop_ratio = 1.25);
SosCascade design_butterworth_lowpass(int order, double cutoff_hz, double rate_hz);
SosCascade design_butterworth_highpass(int order, double cutoff_hz, double rate_hz);

struct BandpassSpec {
  double low_hz = 0.3;
  double high_hz = 35.0;
  int highpass_order = 2;
  int lowpass_order = 8;
};

/// Butterworth highpass cascaded with Butterworth lowpass.
SosCascade design_sceeg_bandpass(double rate_hz, const BandpassSpec& spec = {});

}  // namespace sfus::dsp
