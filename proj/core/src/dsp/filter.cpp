#include "sfus/dsp/filter.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace sfus::dsp {

namespace {

using cplx = std::complex<double>;
constexpr double kPi = std::numbers::pi;

void require_below_nyquist(double freq_hz, double rate_hz, const char* what) {
  if (!(rate_hz > 0.0)) throw std::invalid_argument(std::string(what) + ": rate must be positive");
  if (!(freq_hz > 0.0) || freq_hz >= rate_hz / 2.0) {
    throw std::invalid_argument(std::string(what) + ": frequency " + std::to_string(freq_hz) +
                                " Hz must lie in (0, " + std::to_string(rate_hz / 2.0) + ")");
  }
}

cplx product(const std::vector<cplx>& v, cplx offset, double sign) {
  cplx acc{1.0, 0.0};
  for (const cplx& x : v) acc *= offset + sign * x;
  return acc;
}

// Splits roots into upper-half-plane representatives of conjugate pairs and
// real roots. Members with tiny imaginary part count as real.
void split_roots(const std::vector<cplx>& roots, std::vector<cplx>& pairs,
                 std::vector<double>& reals) {
  constexpr double kTol = 1e-10;
  for (const cplx& r : roots) {
    if (std::abs(r.imag()) <= kTol * std::max(1.0, std::abs(r))) {
      reals.push_back(r.real());
    } else if (r.imag() > 0) {
      pairs.push_back(r);
    }
  }
}

}  // namespace

std::size_t SosCascade::order() const noexcept {
  std::size_t n = 0;
  for (const Biquad& s : sections_) n += s.a2 != 0.0 || s.b2 != 0.0 ? 2 : 1;
  return n;
}

std::vector<double> SosCascade::apply(std::span<const double> x) const {
  std::vector<double> y(x.begin(), x.end());
  for (const Biquad& s : sections_) {
    double z1 = 0.0, z2 = 0.0;
    for (double& v : y) {
      const double in = v;
      const double out = s.b0 * in + z1;
      z1 = s.b1 * in - s.a1 * out + z2;
      z2 = s.b2 * in - s.a2 * out;
      v = out;
    }
  }
  return y;
}

std::vector<double> SosCascade::apply_zero_phase(std::span<const double> x) const {
  std::vector<double> y = apply(x);
  std::reverse(y.begin(), y.end());
  y = apply(y);
  std::reverse(y.begin(), y.end());
  return y;
}

std::complex<double> SosCascade::response(double freq_hz, double rate_hz) const {
  const cplx zinv = std::polar(1.0, -2.0 * kPi * freq_hz / rate_hz);
  const cplx zinv2 = zinv * zinv;
  cplx h{1.0, 0.0};
  for (const Biquad& s : sections_) {
    h *= (s.b0 + s.b1 * zinv + s.b2 * zinv2) / (1.0 + s.a1 * zinv + s.a2 * zinv2);
  }
  return h;
}

std::vector<double> SosCascade::impulse_response(std::size_t n) const {
  std::vector<double> impulse(n, 0.0);
  if (n > 0) impulse[0] = 1.0;
  return apply(impulse);
}

SosCascade SosCascade::then(const SosCascade& other) const {
  std::vector<Biquad> all = sections_;
  all.insert(all.end(), other.sections_.begin(), other.sections_.end());
  return SosCascade(std::move(all));
}

void SosCascade::scale_gain(double factor) {
  if (sections_.empty()) sections_.push_back(Biquad{});
  Biquad& s = sections_.front();
  s.b0 *= factor;
  s.b1 *= factor;
  s.b2 *= factor;
}

Zpk butterworth_prototype(int order) {
  if (order < 1) throw std::invalid_argument("filter order must be >= 1");
  Zpk z;
  for (int k = 0; k < order; ++k) {
    const double theta = kPi * (2.0 * k + order + 1) / (2.0 * order);
    z.poles.push_back(std::polar(1.0, theta));
  }
  return z;
}

Zpk cheby2_prototype(int order, double stopband_atten_db) {
  if (order < 1) throw std::invalid_argument("filter order must be >= 1");
  if (!(stopband_atten_db > 0.0)) throw std::invalid_argument("stopband attenuation must be > 0 dB");
  const double eps = 1.0 / std::sqrt(std::pow(10.0, stopband_atten_db / 10.0) - 1.0);
  const double mu = std::asinh(1.0 / eps) / order;
  Zpk z;
  for (int m = -order + 1; m < order; m += 2) {
    const double angle = m * kPi / (2.0 * order);
    if (m != 0) z.zeros.push_back(cplx(0.0, 1.0 / std::sin(angle)));
    // inverse of a Chebyshev-I pole on the ellipse
    const cplx p(-std::sinh(mu) * std::cos(angle), std::cosh(mu) * std::sin(angle));
    z.poles.push_back(1.0 / p);
  }
  z.gain = (product(z.poles, 0.0, -1.0) / product(z.zeros, 0.0, -1.0)).real();
  return z;
}

Zpk analog_lowpass_to_lowpass(const Zpk& proto, double omega) {
  Zpk z = proto;
  for (cplx& v : z.zeros) v *= omega;
  for (cplx& v : z.poles) v *= omega;
  const long degree = static_cast<long>(z.poles.size()) - static_cast<long>(z.zeros.size());
  z.gain = proto.gain * std::pow(omega, static_cast<double>(degree));
  return z;
}

Zpk analog_lowpass_to_highpass(const Zpk& proto, double omega) {
  Zpk z;
  for (const cplx& v : proto.zeros) z.zeros.push_back(omega / v);
  for (const cplx& v : proto.poles) z.poles.push_back(omega / v);
  // the prototype's zeros at infinity become zeros at s = 0
  for (std::size_t i = proto.zeros.size(); i < proto.poles.size(); ++i) z.zeros.emplace_back(0.0, 0.0);
  z.gain = proto.gain *
           (product(proto.zeros, 0.0, -1.0) / product(proto.poles, 0.0, -1.0)).real();
  return z;
}

Zpk bilinear(const Zpk& analog, double rate_hz) {
  const double fs2 = 2.0 * rate_hz;
  Zpk d;
  for (const cplx& v : analog.zeros) d.zeros.push_back((fs2 + v) / (fs2 - v));
  for (const cplx& v : analog.poles) d.poles.push_back((fs2 + v) / (fs2 - v));
  for (std::size_t i = analog.zeros.size(); i < analog.poles.size(); ++i) d.zeros.emplace_back(-1.0, 0.0);
  d.gain = analog.gain *
           (product(analog.zeros, fs2, -1.0) / product(analog.poles, fs2, -1.0)).real();
  return d;
}

SosCascade zpk_to_sos(const Zpk& digital) {
  if (digital.zeros.size() > digital.poles.size()) {
    throw std::invalid_argument("zpk_to_sos: more zeros than poles");
  }
  std::vector<cplx> pole_pairs, zero_pairs;
  std::vector<double> real_poles, real_zeros;
  split_roots(digital.poles, pole_pairs, real_poles);
  split_roots(digital.zeros, zero_pairs, real_zeros);

  // Least resonant first; the sharpest section runs last.
  std::sort(pole_pairs.begin(), pole_pairs.end(),
            [](const cplx& a, const cplx& b) { return std::abs(a) < std::abs(b); });
  std::sort(real_poles.begin(), real_poles.end(),
            [](double a, double b) { return std::abs(a) < std::abs(b); });

  auto take_zero_pair = [&](cplx pole, double& c1, double& c2) {
    if (!zero_pairs.empty()) {
      auto it = std::min_element(zero_pairs.begin(), zero_pairs.end(), [&](const cplx& a, const cplx& b) {
        return std::abs(a - pole) < std::abs(b - pole);
      });
      c1 = -2.0 * it->real();
      c2 = std::norm(*it);
      zero_pairs.erase(it);
      return 2;
    }
    if (real_zeros.size() >= 2) {
      const double z1 = real_zeros.back();
      real_zeros.pop_back();
      const double z2 = real_zeros.back();
      real_zeros.pop_back();
      c1 = -(z1 + z2);
      c2 = z1 * z2;
      return 2;
    }
    if (!real_zeros.empty()) {
      c1 = -real_zeros.back();
      c2 = 0.0;
      real_zeros.pop_back();
      return 1;
    }
    c1 = c2 = 0.0;
    return 0;
  };

  std::vector<Biquad> sections;
  for (const cplx& p : pole_pairs) {
    Biquad s;
    s.a1 = -2.0 * p.real();
    s.a2 = std::norm(p);
    take_zero_pair(p, s.b1, s.b2);
    sections.push_back(s);
  }
  for (std::size_t i = 0; i < real_poles.size(); i += 2) {
    Biquad s;
    if (i + 1 < real_poles.size()) {
      s.a1 = -(real_poles[i] + real_poles[i + 1]);
      s.a2 = real_poles[i] * real_poles[i + 1];
    } else {
      s.a1 = -real_poles[i];
    }
    take_zero_pair(real_poles[i], s.b1, s.b2);
    sections.push_back(s);
  }
  if (!zero_pairs.empty() || !real_zeros.empty()) {
    throw std::logic_error("zpk_to_sos: unpaired zeros remain");
  }
  SosCascade sos(std::move(sections));
  sos.scale_gain(digital.gain);
  return sos;
}

double prewarp(double freq_hz, double rate_hz) {
  return 2.0 * rate_hz * std::tan(kPi * freq_hz / rate_hz);
}

SosCascade design_cheby2_lowpass(int order, double cutoff_hz, double stopband_atten_db,
                                 double rate_hz, double stop_ratio) {
  require_below_nyquist(cutoff_hz, rate_hz, "cheby2 lowpass cutoff");
  const double stop_hz = stop_ratio * cutoff_hz;
  require_below_nyquist(stop_hz, rate_hz, "cheby2 lowpass stopband edge");
  // The equiripple stopband peaks at exactly the design attenuation; aim slightly
  // past it so rounded coefficients never land above the requested floor.
  constexpr double kRoundingMarginDb = 1e-6;
  const Zpk analog = analog_lowpass_to_lowpass(cheby2_prototype(order, stopband_atten_db + kRoundingMarginDb),
                                               prewarp(stop_hz, rate_hz));
  SosCascade sos = zpk_to_sos(bilinear(analog, rate_hz));
  sos.scale_gain(1.0 / std::abs(sos.response(0.0, rate_hz)));
  return sos;
}

SosCascade design_butterworth_lowpass(int order, double cutoff_hz, double rate_hz) {
  require_below_nyquist(cutoff_hz, rate_hz, "butterworth lowpass cutoff");
  const Zpk analog = analog_lowpass_to_lowpass(butterworth_prototype(order), prewarp(cutoff_hz, rate_hz));
  return zpk_to_sos(bilinear(analog, rate_hz));
}

SosCascade design_butterworth_highpass(int order, double cutoff_hz, double rate_hz) {
  require_below_nyquist(cutoff_hz, rate_hz, "butterworth highpass cutoff");
  const Zpk analog = analog_lowpass_to_highpass(butterworth_prototype(order), prewarp(cutoff_hz, rate_hz));
  return zpk_to_sos(bilinear(analog, rate_hz));
}

SosCascade design_sceeg_bandpass(double rate_hz, const BandpassSpec& spec) {
  if (!(spec.low_hz < spec.high_hz)) throw std::invalid_argument("bandpass: low edge must be below high edge");
  if (!(rate_hz > 2.0 * spec.high_hz)) {
    throw std::invalid_argument("bandpass: rate " + std::to_string(rate_hz) +
                                " Hz too low for a " + std::to_string(spec.high_hz) + " Hz edge");
  }
  return design_butterworth_highpass(spec.highpass_order, spec.low_hz, rate_hz)
      .then(design_butterworth_lowpass(spec.lowpass_order, spec.high_hz, rate_hz));
}

}  // namespace sfus::dsp
