#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace sfus::dsp {

struct Ratio {
  std::int64_t up = 1;
  std::int64_t down = 1;
};

/// Best rational approximation of `value` with denominator <= max_den
/// (continued fractions); exact for ratios of small integers.
Ratio rational_approx(double value, std::int64_t max_den = 1 << 20);

struct ResampleSpec {
  double kaiser_beta = 8.6;
  /// Filter length, counted in samples of the slower of the two rates.
  int taps_per_phase = 32;
};

/// Rational polyphase resampler with a Kaiser-windowed sinc. Every phase is
/// normalized to unit DC gain, so constants pass through exactly. Edges are
/// extended by repeating the boundary sample.
class PolyphaseResampler {
 public:
  PolyphaseResampler(Ratio ratio, ResampleSpec spec = {});

  Ratio ratio() const noexcept { return ratio_; }
  /// round(n * up / down)
  std::size_t output_length(std::size_t n) const;
  std::vector<double> apply(std::span<const double> x) const;

 private:
  struct Phase {
    std::int64_t first = 0;  // offset of the first tap relative to floor(m * down / up)
    std::vector<double> taps;
  };
  Ratio ratio_;
  std::vector<Phase> phases_;
};

/// Throws std::invalid_argument on non-positive rates or an empty result.
std::vector<double> resample(std::span<const double> x, double from_hz, double to_hz,
                             const ResampleSpec& spec = {});
std::vector<double> resample(std::span<const double> x, Ratio ratio, const ResampleSpec& spec = {});

}  // namespace sfus::dsp
