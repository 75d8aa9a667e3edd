#include "sfus/dsp/resample.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>

namespace sfus::dsp {

namespace {

double sinc(double x) {
  if (x == 0.0) return 1.0;
  const double px = std::numbers::pi * x;
  return std::sin(px) / px;
}

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

}  // namespace

Ratio rational_approx(double value, std::int64_t max_den) {
  if (!(value > 0.0) || !std::isfinite(value)) throw std::invalid_argument("rational_approx: value must be positive");
  // convergents h/k of the continued fraction
  std::int64_t h0 = 0, h1 = 1, k0 = 1, k1 = 0;
  double x = value;
  for (int iter = 0; iter < 64; ++iter) {
    const double a_real = std::floor(x);
    if (a_real > 1e15) break;
    const auto a = static_cast<std::int64_t>(a_real);
    const std::int64_t h2 = a * h1 + h0;
    const std::int64_t k2 = a * k1 + k0;
    if (k2 > max_den) break;
    h0 = h1, h1 = h2, k0 = k1, k1 = k2;
    const double approx = static_cast<double>(h1) / static_cast<double>(k1);
    if (std::abs(approx - value) <= 1e-12 * value) break;
    const double frac = x - a_real;
    if (frac <= 0.0) break;
    x = 1.0 / frac;
  }
  if (k1 == 0 || h1 == 0) throw std::invalid_argument("rational_approx: value out of range");
  return {h1, k1};
}

PolyphaseResampler::PolyphaseResampler(Ratio ratio, ResampleSpec spec) {
  if (ratio.up <= 0 || ratio.down <= 0) throw std::invalid_argument("resampler: ratio must be positive");
  if (spec.taps_per_phase < 2) throw std::invalid_argument("resampler: need at least 2 taps per phase");
  const std::int64_t g = std::gcd(ratio.up, ratio.down);
  ratio_ = {ratio.up / g, ratio.down / g};
  const std::int64_t up = ratio_.up;
  const std::int64_t slow = std::max(ratio_.up, ratio_.down);
  // window half-width on the upsampled grid
  const double half_width = 0.5 * spec.taps_per_phase * static_cast<double>(slow);
  const double i0_beta = std::cyl_bessel_i(0.0, spec.kaiser_beta);

  phases_.resize(static_cast<std::size_t>(up));
  for (std::int64_t phi = 0; phi < up; ++phi) {
    Phase& phase = phases_[static_cast<std::size_t>(phi)];
    const auto jmin = static_cast<std::int64_t>(std::floor((phi - half_width) / up)) + 1;
    const auto jmax = static_cast<std::int64_t>(std::ceil((phi + half_width) / up)) - 1;
    phase.first = jmin;
    double total = 0.0;
    for (std::int64_t j = jmin; j <= jmax; ++j) {
      const double arg = static_cast<double>(phi - j * up);
      const double r = arg / half_width;
      const double window = std::cyl_bessel_i(0.0, spec.kaiser_beta * std::sqrt(std::max(0.0, 1.0 - r * r))) / i0_beta;
      const double tap = sinc(arg / static_cast<double>(slow)) * window;
      phase.taps.push_back(tap);
      total += tap;
    }
    for (double& t : phase.taps) t /= total;
  }
}

std::size_t PolyphaseResampler::output_length(std::size_t n) const {
  // round half up in exact integer arithmetic
  const auto num = static_cast<std::int64_t>(n) * ratio_.up;
  return static_cast<std::size_t>((2 * num + ratio_.down) / (2 * ratio_.down));
}

std::vector<double> PolyphaseResampler::apply(std::span<const double> x) const {
  const std::size_t out_len = output_length(x.size());
  if (x.empty() || out_len == 0) throw std::invalid_argument("resample: output length is 0");
  const auto n = static_cast<std::int64_t>(x.size());
  std::vector<double> y(out_len);
  for (std::size_t m = 0; m < out_len; ++m) {
    const std::int64_t t = static_cast<std::int64_t>(m) * ratio_.down;
    const std::int64_t base = floor_div(t, ratio_.up);
    const Phase& phase = phases_[static_cast<std::size_t>(t - base * ratio_.up)];
    const std::int64_t first = base + phase.first;
    double acc = 0.0;
    const auto count = static_cast<std::int64_t>(phase.taps.size());
    if (first >= 0 && first + count <= n) {
      const double* src = x.data() + first;
      for (std::int64_t i = 0; i < count; ++i) acc += phase.taps[static_cast<std::size_t>(i)] * src[i];
    } else {
      for (std::int64_t i = 0; i < count; ++i) {
        const std::int64_t k = std::clamp<std::int64_t>(first + i, 0, n - 1);
        acc += phase.taps[static_cast<std::size_t>(i)] * x[static_cast<std::size_t>(k)];
      }
    }
    y[m] = acc;
  }
  return y;
}

std::vector<double> resample(std::span<const double> x, Ratio ratio, const ResampleSpec& spec) {
  return PolyphaseResampler(ratio, spec).apply(x);
}

std::vector<double> resample(std::span<const double> x, double from_hz, double to_hz,
                             const ResampleSpec& spec) {
  if (!(from_hz > 0.0) || !(to_hz > 0.0)) throw std::invalid_argument("resample: rates must be positive");
  return resample(x, rational_approx(to_hz / from_hz), spec);
}

}  // namespace sfus::dsp
