#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include "sfus/dsp/filter.hpp"
#include "sfus/metrics.hpp"
#include "sfus/tensor.hpp"

// Reference loops written independently of the library kernels.
namespace sfus::testing {

inline Tensor naive_matmul(const Tensor& a, const Tensor& b) {
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor y({m, n});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0;
      for (std::size_t p = 0; p < k; ++p) s += a.at(i, p) * b.at(p, j);
      y.at(i, j) = s;
    }
  return y;
}

inline Tensor naive_conv(const Tensor& x, const Tensor& w, std::size_t stride, std::size_t pad) {
  const std::size_t cin = x.dim(0), len = x.dim(1), cout = w.dim(0), k = w.dim(2);
  const std::size_t lout = (len + 2 * pad - k) / stride + 1;
  Tensor y({cout, lout});
  for (std::size_t o = 0; o < cout; ++o)
    for (std::size_t t = 0; t < lout; ++t) {
      double s = 0;
      for (std::size_t c = 0; c < cin; ++c)
        for (std::size_t j = 0; j < k; ++j) {
          const long pos = static_cast<long>(t * stride + j) - static_cast<long>(pad);
          if (pos >= 0 && pos < static_cast<long>(len)) s += w.at(o, c, j) * x.at(c, pos);
        }
      y.at(o, t) = s;
    }
  return y;
}

// softmax(Q K^T / sqrt(d)) V with every projection the identity.
inline Tensor naive_attention(const Tensor& q, const Tensor& k, const Tensor& v) {
  const std::size_t tq = q.dim(0), tk = k.dim(0), d = q.dim(1);
  Tensor y({tq, d});
  for (std::size_t i = 0; i < tq; ++i) {
    std::vector<double> s(tk);
    double mx = -1e300;
    for (std::size_t j = 0; j < tk; ++j) {
      double dot = 0;
      for (std::size_t p = 0; p < d; ++p) dot += q.at(i, p) * k.at(j, p);
      s[j] = dot / std::sqrt(static_cast<double>(d));
      mx = std::max(mx, s[j]);
    }
    double z = 0;
    for (double& e : s) z += (e = std::exp(e - mx));
    for (std::size_t p = 0; p < d; ++p) {
      double acc = 0;
      for (std::size_t j = 0; j < tk; ++j) acc += s[j] / z * v.at(j, p);
      y.at(i, p) = acc;
    }
  }
  return y;
}

inline Tensor naive_affine(const Tensor& x, const Tensor& w, const Tensor& b) {
  Tensor y = naive_matmul(x, w);
  for (std::size_t i = 0; i < y.dim(0); ++i)
    for (std::size_t j = 0; j < y.dim(1); ++j) y.at(i, j) += b[j];
  return y;
}

/// Multi-head attention with arbitrary projections; head h owns columns
/// [h * d / heads, (h + 1) * d / heads) of the projected width.
inline Tensor naive_multihead(const Tensor& query, const Tensor& context, const Tensor (&w)[4], const Tensor (&b)[4],
                              std::size_t heads) {
  const Tensor q = naive_affine(query, w[0], b[0]);
  const Tensor k = naive_affine(context, w[1], b[1]);
  const Tensor v = naive_affine(context, w[2], b[2]);
  const std::size_t d = q.dim(1), dh = d / heads;
  Tensor merged({q.dim(0), d});
  for (std::size_t h = 0; h < heads; ++h) {
    Tensor qh({q.dim(0), dh}), kh({k.dim(0), dh}), vh({v.dim(0), dh});
    for (std::size_t j = 0; j < dh; ++j) {
      for (std::size_t i = 0; i < q.dim(0); ++i) qh.at(i, j) = q.at(i, h * dh + j);
      for (std::size_t i = 0; i < k.dim(0); ++i) kh.at(i, j) = k.at(i, h * dh + j), vh.at(i, j) = v.at(i, h * dh + j);
    }
    const Tensor oh = naive_attention(qh, kh, vh);
    for (std::size_t i = 0; i < q.dim(0); ++i)
      for (std::size_t j = 0; j < dh; ++j) merged.at(i, h * dh + j) = oh.at(i, j);
  }
  return naive_affine(merged, w[3], b[3]);
}

// h_t = exp(delta_t A) h_{t-1} + delta_t B_t u_t,  y_t = C_t . h_t, stepped one channel at a time
inline Tensor naive_scan(const Tensor& u, const Tensor& delta, const Tensor& a, const Tensor& bm, const Tensor& cm) {
  const std::size_t batch = u.dim(0), t_len = u.dim(1), ch = u.dim(2), ns = a.dim(1);
  Tensor y(u.shape());
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t c = 0; c < ch; ++c) {
      std::vector<double> h(ns, 0.0);
      for (std::size_t t = 0; t < t_len; ++t) {
        const double dt = delta.at(b, t, c), x = u.at(b, t, c);
        double out = 0.0;
        for (std::size_t n = 0; n < ns; ++n) {
          h[n] = std::exp(dt * a.at(c, n)) * h[n] + dt * bm.at(b, t, n) * x;
          out += cm.at(b, t, n) * h[n];
        }
        y.at(b, t, c) = out;
      }
    }
  }
  return y;
}

// kappa = (N * agree - sum row*col) / (N^2 - sum row*col), in long double.
inline double kappa_oracle(const metrics::ConfusionMatrix& cm) {
  long double n = 0, agree = 0, chance = 0;
  long double rows[kNumStages] = {}, cols[kNumStages] = {};
  for (int t = 0; t < kNumStages; ++t) {
    for (int p = 0; p < kNumStages; ++p) {
      n += cm.counts[t][p];
      rows[t] += cm.counts[t][p];
      cols[p] += cm.counts[t][p];
    }
    agree += cm.counts[t][t];
  }
  for (int c = 0; c < kNumStages; ++c) chance += rows[c] * cols[c];
  if (n * n == chance) return agree == n ? 1.0 : 0.0;
  return static_cast<double>((n * agree - chance) / (n * n - chance));
}

inline std::vector<double> sine(double freq, double rate, std::size_t n, double amp = 1.0, double phase = 0.0) {
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = amp * std::sin(2 * std::numbers::pi * freq * i / rate + phase);
  return x;
}

// Least-squares fit of a*sin + b*cos at a known frequency over [begin, end).
inline double fitted_amplitude(const std::vector<double>& y, double freq, double rate, std::size_t begin) {
  double ss = 0, sc = 0, cc = 0, ys = 0, yc = 0;
  for (std::size_t i = begin; i < y.size(); ++i) {
    const double w = 2 * std::numbers::pi * freq * i / rate;
    const double s = std::sin(w), c = std::cos(w);
    ss += s * s, sc += s * c, cc += c * c, ys += y[i] * s, yc += y[i] * c;
  }
  const double det = ss * cc - sc * sc;
  const double a = (ys * cc - yc * sc) / det;
  const double b = (yc * ss - ys * sc) / det;
  return std::hypot(a, b);
}

// Direct polynomial evaluation of every section at z = 1.
inline double dc_gain(const dsp::SosCascade& sos) {
  double g = 1.0;
  for (const dsp::Biquad& s : sos.sections()) g *= (s.b0 + s.b1 + s.b2) / (1.0 + s.a1 + s.a2);
  return g;
}

inline double dft_magnitude(const std::vector<double>& h, double freq, double rate) {
  std::complex<double> acc = 0.0;
  for (std::size_t n = 0; n < h.size(); ++n) acc += h[n] * std::polar(1.0, -2 * std::numbers::pi * freq * n / rate);
  return std::abs(acc);
}

/// Worst stopband gain (dB) of `sos` from a DFT of its impulse response.
inline double stopband_db(const dsp::SosCascade& sos, double stop_hz, double rate, std::size_t n = 8192) {
  const auto h = sos.impulse_response(n);
  double worst = 0.0;
  for (std::size_t k = 0; k <= n / 2; ++k) {
    const double f = rate * static_cast<double>(k) / static_cast<double>(n);
    if (f >= stop_hz) worst = std::max(worst, dft_magnitude(h, f, rate));
  }
  return 20 * std::log10(worst);
}

}  // namespace sfus::testing
