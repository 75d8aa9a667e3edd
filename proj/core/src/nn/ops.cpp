#include "sfus/nn/ops.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

namespace sfus::nn {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_to_string(a.shape()) +
                     " vs " + shape_to_string(b.shape()));
  }
}

// Gradient buffer of input i, or nullptr when it does not need one.
Tensor* grad_of(Node& n, std::size_t i) {
  Node& in = *n.inputs[i];
  return in.requires_grad ? &in.grad_buffer() : nullptr;
}

const Tensor& value_of(Node& n, std::size_t i) { return n.inputs[i]->value; }

struct AxisSplit {
  std::size_t outer = 1;
  std::size_t n = 1;
  std::size_t inner = 1;
};

AxisSplit split_at(const Shape& shape, std::size_t axis) {
  if (axis >= shape.size()) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for " +
                     shape_to_string(shape));
  }
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.n = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

std::size_t last_dim(const Var& x) {
  if (x.rank() == 0) throw ShapeError("scalar has no last axis");
  return x.shape().back();
}

// Elementwise unary op with derivative expressed through input and output.
template <typename F, typename DF>
Var unary(const Var& x, F f, DF df) {
  Tensor y(x.shape());
  const Tensor& xv = x.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = f(xv[i]);
  return make_result(std::move(y), {x}, [df](Node& n) {
    Tensor* gx = grad_of(n, 0);
    if (!gx) return;
    const Tensor& xv = value_of(n, 0);
    for (std::size_t i = 0; i < n.grad.size(); ++i) {
      (*gx)[i] += n.grad[i] * df(xv[i], n.value[i]);
    }
  });
}

// Pure index permutation: out[i] = in[map[i]].
Var permute(const Var& x, Shape out_shape, std::shared_ptr<std::vector<std::size_t>> map) {
  Tensor y(std::move(out_shape));
  const Tensor& xv = x.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = xv[(*map)[i]];
  return make_result(std::move(y), {x}, [map](Node& n) {
    Tensor* gx = grad_of(n, 0);
    if (!gx) return;
    for (std::size_t i = 0; i < n.grad.size(); ++i) (*gx)[(*map)[i]] += n.grad[i];
  });
}

}  // namespace

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  Tensor y = a.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += b.value()[i];
  return make_result(std::move(y), {a, b}, [](Node& n) {
    for (std::size_t k = 0; k < 2; ++k) {
      if (Tensor* g = grad_of(n, k)) {
        for (std::size_t i = 0; i < n.grad.size(); ++i) (*g)[i] += n.grad[i];
      }
    }
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a, b, "sub");
  Tensor y = a.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] -= b.value()[i];
  return make_result(std::move(y), {a, b}, [](Node& n) {
    if (Tensor* g = grad_of(n, 0)) {
      for (std::size_t i = 0; i < n.grad.size(); ++i) (*g)[i] += n.grad[i];
    }
    if (Tensor* g = grad_of(n, 1)) {
      for (std::size_t i = 0; i < n.grad.size(); ++i) (*g)[i] -= n.grad[i];
    }
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a, b, "mul");
  Tensor y = a.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= b.value()[i];
  return make_result(std::move(y), {a, b}, [](Node& n) {
    const Tensor& av = value_of(n, 0);
    const Tensor& bv = value_of(n, 1);
    if (Tensor* g = grad_of(n, 0)) {
      for (std::size_t i = 0; i < n.grad.size(); ++i) (*g)[i] += n.grad[i] * bv[i];
    }
    if (Tensor* g = grad_of(n, 1)) {
      for (std::size_t i = 0; i < n.grad.size(); ++i) (*g)[i] += n.grad[i] * av[i];
    }
  });
}

Var scale(const Var& x, double s) {
  return unary(x, [s](double v) { return v * s; }, [s](double, double) { return s; });
}

Var add_scalar(const Var& x, double s) {
  return unary(x, [s](double v) { return v + s; }, [](double, double) { return 1.0; });
}

Var add_bias(const Var& x, const Var& b) {
  const std::size_t d = last_dim(x);
  if (b.rank() != 1 || b.dim(0) != d) throw ShapeError("add_bias: bias must be [last dim]");
  Tensor y = x.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += b.value()[i % d];
  return make_result(std::move(y), {x, b}, [d](Node& n) {
    if (Tensor* g = grad_of(n, 0)) {
      for (std::size_t i = 0; i < n.grad.size(); ++i) (*g)[i] += n.grad[i];
    }
    if (Tensor* g = grad_of(n, 1)) {
      for (std::size_t i = 0; i < n.grad.size(); ++i) (*g)[i % d] += n.grad[i];
    }
  });
}

Var mul_lastdim(const Var& x, const Var& v) {
  const std::size_t d = last_dim(x);
  if (v.rank() != 1 || v.dim(0) != d) throw ShapeError("mul_lastdim: vector must be [last dim]");
  Tensor y = x.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= v.value()[i % d];
  return make_result(std::move(y), {x, v}, [d](Node& n) {
    const Tensor& xv = value_of(n, 0);
    const Tensor& vv = value_of(n, 1);
    if (Tensor* g = grad_of(n, 0)) {
      for (std::size_t i = 0; i < n.grad.size(); ++i) (*g)[i] += n.grad[i] * vv[i % d];
    }
    if (Tensor* g = grad_of(n, 1)) {
      for (std::size_t i = 0; i < n.grad.size(); ++i) (*g)[i % d] += n.grad[i] * xv[i];
    }
  });
}

Var scale_leading(const Var& x, const Var& s) {
  if (x.rank() == 0 || s.rank() != 1 || s.dim(0) != x.dim(0)) {
    throw ShapeError("scale_leading: need x[B, ...] and s[B]");
  }
  const std::size_t block = x.value().size() / x.dim(0);
  Tensor y = x.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= s.value()[i / block];
  return make_result(std::move(y), {x, s}, [block](Node& n) {
    const Tensor& xv = value_of(n, 0);
    const Tensor& sv = value_of(n, 1);
    if (Tensor* g = grad_of(n, 0)) {
      for (std::size_t i = 0; i < n.grad.size(); ++i) (*g)[i] += n.grad[i] * sv[i / block];
    }
    if (Tensor* g = grad_of(n, 1)) {
      for (std::size_t i = 0; i < n.grad.size(); ++i) (*g)[i / block] += n.grad[i] * xv[i];
    }
  });
}

Var matmul(const Var& a, const Var& b) {
  if (a.rank() < 2) throw ShapeError("matmul: lhs must have rank >= 2");
  const std::size_t k = last_dim(a);
  if (b.rank() == 2) {
    if (b.dim(0) != k) {
      throw ShapeError("matmul: inner dims differ " + shape_to_string(a.shape()) + " @ " +
                       shape_to_string(b.shape()));
    }
    const std::size_t rows = a.value().size() / k;
    const std::size_t cols = b.dim(1);
    Shape out_shape = a.shape();
    out_shape.back() = cols;
    Tensor y(out_shape);
    MapMat(y.data(), rows, cols).noalias() =
        CMapMat(a.value().data(), rows, k) * CMapMat(b.value().data(), k, cols);
    return make_result(std::move(y), {a, b}, [rows, k, cols](Node& n) {
      CMapMat dy(n.grad.data(), rows, cols);
      if (Tensor* ga = grad_of(n, 0)) {
        MapMat(ga->data(), rows, k).noalias() +=
            dy * CMapMat(value_of(n, 1).data(), k, cols).transpose();
      }
      if (Tensor* gb = grad_of(n, 1)) {
        MapMat(gb->data(), k, cols).noalias() +=
            CMapMat(value_of(n, 0).data(), rows, k).transpose() * dy;
      }
    });
  }
  if (a.rank() != 3 || b.rank() != 3 || a.dim(0) != b.dim(0) || b.dim(1) != k) {
    throw ShapeError("matmul: batched shapes " + shape_to_string(a.shape()) + " @ " +
                     shape_to_string(b.shape()));
  }
  const std::size_t batch = a.dim(0), m = a.dim(1), cols = b.dim(2);
  Tensor y({batch, m, cols});
  for (std::size_t i = 0; i < batch; ++i) {
    MapMat(y.data() + i * m * cols, m, cols).noalias() =
        CMapMat(a.value().data() + i * m * k, m, k) *
        CMapMat(b.value().data() + i * k * cols, k, cols);
  }
  return make_result(std::move(y), {a, b}, [batch, m, k, cols](Node& n) {
    Tensor* ga = grad_of(n, 0);
    Tensor* gb = grad_of(n, 1);
    for (std::size_t i = 0; i < batch; ++i) {
      CMapMat dy(n.grad.data() + i * m * cols, m, cols);
      if (ga) {
        MapMat(ga->data() + i * m * k, m, k).noalias() +=
            dy * CMapMat(value_of(n, 1).data() + i * k * cols, k, cols).transpose();
      }
      if (gb) {
        MapMat(gb->data() + i * k * cols, k, cols).noalias() +=
            CMapMat(value_of(n, 0).data() + i * m * k, m, k).transpose() * dy;
      }
    }
  });
}

Var matmul_nt(const Var& a, const Var& b) {
  if (a.rank() != 3 || b.rank() != 3 || a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2)) {
    throw ShapeError("matmul_nt: shapes " + shape_to_string(a.shape()) + " and " +
                     shape_to_string(b.shape()));
  }
  const std::size_t batch = a.dim(0), m = a.dim(1), k = a.dim(2), cols = b.dim(1);
  Tensor y({batch, m, cols});
  for (std::size_t i = 0; i < batch; ++i) {
    MapMat(y.data() + i * m * cols, m, cols).noalias() =
        CMapMat(a.value().data() + i * m * k, m, k) *
        CMapMat(b.value().data() + i * cols * k, cols, k).transpose();
  }
  return make_result(std::move(y), {a, b}, [batch, m, k, cols](Node& n) {
    Tensor* ga = grad_of(n, 0);
    Tensor* gb = grad_of(n, 1);
    for (std::size_t i = 0; i < batch; ++i) {
      CMapMat dy(n.grad.data() + i * m * cols, m, cols);
      if (ga) {
        MapMat(ga->data() + i * m * k, m, k).noalias() +=
            dy * CMapMat(value_of(n, 1).data() + i * cols * k, cols, k);
      }
      if (gb) {
        MapMat(gb->data() + i * cols * k, cols, k).noalias() +=
            dy.transpose() * CMapMat(value_of(n, 0).data() + i * m * k, m, k);
      }
    }
  });
}

Var linear(const Var& x, const Var& w, const Var& b) {
  if (w.rank() != 2) throw ShapeError("linear: weight must be [in, out]");
  const std::size_t in = last_dim(x);
  if (w.dim(0) != in) {
    throw ShapeError("linear: input " + shape_to_string(x.shape()) + " vs weight " +
                     shape_to_string(w.shape()));
  }
  const std::size_t out = w.dim(1);
  const bool has_bias = static_cast<bool>(b);
  if (has_bias && (b.rank() != 1 || b.dim(0) != out)) {
    throw ShapeError("linear: bias must be [out]");
  }
  const std::size_t rows = x.value().size() / in;
  Shape out_shape = x.shape();
  out_shape.back() = out;
  Tensor y(out_shape);
  MapMat ym(y.data(), rows, out);
  ym.noalias() = CMapMat(x.value().data(), rows, in) * CMapMat(w.value().data(), in, out);
  if (has_bias) {
    ym.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(b.value().data(), out);
  }
  std::vector<Var> inputs{x, w};
  if (has_bias) inputs.push_back(b);
  return make_result(std::move(y), std::move(inputs), [rows, in, out, has_bias](Node& n) {
    CMapMat dy(n.grad.data(), rows, out);
    if (Tensor* gx = grad_of(n, 0)) {
      MapMat(gx->data(), rows, in).noalias() +=
          dy * CMapMat(value_of(n, 1).data(), in, out).transpose();
    }
    if (Tensor* gw = grad_of(n, 1)) {
      MapMat(gw->data(), in, out).noalias() +=
          CMapMat(value_of(n, 0).data(), rows, in).transpose() * dy;
    }
    if (has_bias) {
      if (Tensor* gb = grad_of(n, 2)) {
        Eigen::Map<Eigen::RowVectorXd>(gb->data(), out) += dy.colwise().sum();
      }
    }
  });
}

Var transpose_last2(const Var& x) {
  if (x.rank() < 2) throw ShapeError("transpose_last2: rank < 2");
  const std::size_t r = x.rank();
  const std::size_t rows = x.dim(r - 2), cols = x.dim(r - 1);
  const std::size_t batch = x.value().size() / (rows * cols);
  Shape out_shape = x.shape();
  std::swap(out_shape[r - 2], out_shape[r - 1]);
  auto map = std::make_shared<std::vector<std::size_t>>(x.value().size());
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t j = 0; j < cols; ++j) {
      for (std::size_t i = 0; i < rows; ++i) {
        (*map)[b * rows * cols + j * rows + i] = b * rows * cols + i * cols + j;
      }
    }
  }
  return permute(x, std::move(out_shape), std::move(map));
}

std::size_t conv1d_output_length(std::size_t length, std::size_t kernel, Conv1dSpec spec) {
  const std::size_t span = spec.dilation * (kernel - 1) + 1;
  const std::size_t padded = length + 2 * spec.padding;
  if (spec.stride == 0 || kernel == 0 || padded < span) return 0;
  return (padded - span) / spec.stride + 1;
}

Var conv1d(const Var& x, const Var& w, const Var& bias, Conv1dSpec spec) {
  if (w.rank() != 3) throw ShapeError("conv1d: kernels must be [Cout, Cin, K]");
  const bool batched = x.rank() == 3;
  if (!batched && x.rank() != 2) throw ShapeError("conv1d: input must be [N, Cin, L] or [Cin, L]");
  if (spec.stride == 0 || spec.dilation == 0) throw std::invalid_argument("conv1d: stride/dilation must be >= 1");
  const std::size_t batch = batched ? x.dim(0) : 1;
  const std::size_t cin = x.dim(batched ? 1 : 0);
  const std::size_t len = x.dim(batched ? 2 : 1);
  const std::size_t cout = w.dim(0), k = w.dim(2);
  if (w.dim(1) != cin) {
    throw ShapeError("conv1d: input channels " + std::to_string(cin) + " vs kernel " +
                     shape_to_string(w.shape()));
  }
  const bool has_bias = static_cast<bool>(bias);
  if (has_bias && (bias.rank() != 1 || bias.dim(0) != cout)) {
    throw ShapeError("conv1d: bias must be [Cout]");
  }
  const std::size_t lout = conv1d_output_length(len, k, spec);
  if (lout == 0) throw ShapeError("conv1d: empty output length");

  const std::size_t ck = cin * k;
  auto cols = std::make_shared<std::vector<double>>(batch * ck * lout, 0.0);
  const double* xv = x.value().data();
  for (std::size_t b = 0; b < batch; ++b) {
    double* cb = cols->data() + b * ck * lout;
    for (std::size_t c = 0; c < cin; ++c) {
      const double* xc = xv + (b * cin + c) * len;
      for (std::size_t kk = 0; kk < k; ++kk) {
        double* row = cb + (c * k + kk) * lout;
        for (std::size_t t = 0; t < lout; ++t) {
          const auto pos = static_cast<std::ptrdiff_t>(t * spec.stride + kk * spec.dilation) -
                           static_cast<std::ptrdiff_t>(spec.padding);
          if (pos >= 0 && pos < static_cast<std::ptrdiff_t>(len)) row[t] = xc[pos];
        }
      }
    }
  }
  Shape out_shape = batched ? Shape{batch, cout, lout} : Shape{cout, lout};
  Tensor y(out_shape);
  CMapMat wm(w.value().data(), cout, ck);
  for (std::size_t b = 0; b < batch; ++b) {
    MapMat yb(y.data() + b * cout * lout, cout, lout);
    yb.noalias() = wm * CMapMat(cols->data() + b * ck * lout, ck, lout);
    if (has_bias) {
      yb.colwise() += Eigen::Map<const Eigen::VectorXd>(bias.value().data(), cout);
    }
  }
  std::vector<Var> inputs{x, w};
  if (has_bias) inputs.push_back(bias);
  return make_result(
      std::move(y), std::move(inputs),
      [=](Node& n) {
        Tensor* gx = grad_of(n, 0);
        Tensor* gw = grad_of(n, 1);
        Tensor* gbias = has_bias ? grad_of(n, 2) : nullptr;
        CMapMat wmat(value_of(n, 1).data(), cout, ck);
        RowMat dcols(ck, lout);
        for (std::size_t b = 0; b < batch; ++b) {
          CMapMat dy(n.grad.data() + b * cout * lout, cout, lout);
          CMapMat cb(cols->data() + b * ck * lout, ck, lout);
          if (gw) MapMat(gw->data(), cout, ck).noalias() += dy * cb.transpose();
          if (gbias) Eigen::Map<Eigen::VectorXd>(gbias->data(), cout) += dy.rowwise().sum();
          if (gx) {
            dcols.noalias() = wmat.transpose() * dy;
            for (std::size_t c = 0; c < cin; ++c) {
              double* gxc = gx->data() + (b * cin + c) * len;
              for (std::size_t kk = 0; kk < k; ++kk) {
                const double* row = dcols.data() + (c * k + kk) * lout;
                for (std::size_t t = 0; t < lout; ++t) {
                  const auto pos =
                      static_cast<std::ptrdiff_t>(t * spec.stride + kk * spec.dilation) -
                      static_cast<std::ptrdiff_t>(spec.padding);
                  if (pos >= 0 && pos < static_cast<std::ptrdiff_t>(len)) gxc[pos] += row[t];
                }
              }
            }
          }
        }
      });
}

std::size_t maxpool1d_output_length(std::size_t length, std::size_t kernel,
                                    std::size_t stride, std::size_t padding) {
  const std::size_t padded = length + 2 * padding;
  if (stride == 0 || kernel == 0 || padded < kernel) return 0;
  return (padded - kernel) / stride + 1;
}

Var maxpool1d(const Var& x, std::size_t kernel, std::size_t stride, std::size_t padding) {
  if (x.rank() != 3) throw ShapeError("maxpool1d: input must be [N, C, L]");
  if (2 * padding > kernel) throw std::invalid_argument("maxpool1d: padding exceeds half kernel");
  const std::size_t rows = x.dim(0) * x.dim(1), len = x.dim(2);
  const std::size_t lout = maxpool1d_output_length(len, kernel, stride, padding);
  if (lout == 0) throw ShapeError("maxpool1d: empty output length");
  Tensor y({x.dim(0), x.dim(1), lout});
  auto arg = std::make_shared<std::vector<std::size_t>>(rows * lout);
  const double* xv = x.value().data();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t t = 0; t < lout; ++t) {
      const auto start = static_cast<std::ptrdiff_t>(t * stride) - static_cast<std::ptrdiff_t>(padding);
      double best = -std::numeric_limits<double>::infinity();
      std::size_t best_i = 0;
      for (std::size_t j = 0; j < kernel; ++j) {
        const std::ptrdiff_t pos = start + static_cast<std::ptrdiff_t>(j);
        if (pos < 0 || pos >= static_cast<std::ptrdiff_t>(len)) continue;
        const double v = xv[r * len + static_cast<std::size_t>(pos)];
        if (v > best) {
          best = v;
          best_i = r * len + static_cast<std::size_t>(pos);
        }
      }
      y[r * lout + t] = best;
      (*arg)[r * lout + t] = best_i;
    }
  }
  return make_result(std::move(y), {x}, [arg](Node& n) {
    Tensor* gx = grad_of(n, 0);
    if (!gx) return;
    for (std::size_t i = 0; i < n.grad.size(); ++i) (*gx)[(*arg)[i]] += n.grad[i];
  });
}

Var causal_depthwise_conv(const Var& x, const Var& w, const Var& b) {
  const bool batched = x.rank() == 3;
  if (!batched && x.rank() != 2) throw ShapeError("causal_depthwise_conv: x must be [B, T, C]");
  const std::size_t batch = batched ? x.dim(0) : 1;
  const std::size_t steps = x.dim(batched ? 1 : 0), ch = x.dim(batched ? 2 : 1);
  if (w.rank() != 2 || w.dim(0) != ch || b.rank() != 1 || b.dim(0) != ch) {
    throw ShapeError("causal_depthwise_conv: w must be [C, K], b [C]");
  }
  const std::size_t k = w.dim(1);
  Tensor y(x.shape());
  const double* xv = x.value().data();
  const double* wv = w.value().data();
  for (std::size_t bb = 0; bb < batch; ++bb) {
    for (std::size_t t = 0; t < steps; ++t) {
      for (std::size_t c = 0; c < ch; ++c) {
        double acc = b.value()[c];
        for (std::size_t j = 0; j < k; ++j) {
          const auto src = static_cast<std::ptrdiff_t>(t + j) - static_cast<std::ptrdiff_t>(k - 1);
          if (src < 0) continue;
          acc += wv[c * k + j] * xv[(bb * steps + static_cast<std::size_t>(src)) * ch + c];
        }
        y[(bb * steps + t) * ch + c] = acc;
      }
    }
  }
  return make_result(std::move(y), {x, w, b}, [batch, steps, ch, k](Node& n) {
    Tensor* gx = grad_of(n, 0);
    Tensor* gw = grad_of(n, 1);
    Tensor* gb = grad_of(n, 2);
    const Tensor& xv = value_of(n, 0);
    const Tensor& wv = value_of(n, 1);
    for (std::size_t bb = 0; bb < batch; ++bb) {
      for (std::size_t t = 0; t < steps; ++t) {
        for (std::size_t c = 0; c < ch; ++c) {
          const double g = n.grad[(bb * steps + t) * ch + c];
          if (gb) (*gb)[c] += g;
          for (std::size_t j = 0; j < k; ++j) {
            const auto src =
                static_cast<std::ptrdiff_t>(t + j) - static_cast<std::ptrdiff_t>(k - 1);
            if (src < 0) continue;
            const std::size_t xi = (bb * steps + static_cast<std::size_t>(src)) * ch + c;
            if (gw) (*gw)[c * k + j] += g * xv[xi];
            if (gx) (*gx)[xi] += g * wv[c * k + j];
          }
        }
      }
    }
  });
}

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps) {
  const std::size_t d = last_dim(x);
  if (gamma.rank() != 1 || gamma.dim(0) != d || beta.rank() != 1 || beta.dim(0) != d) {
    throw ShapeError("layer_norm: gamma/beta must be [d]");
  }
  if (!(eps > 0.0)) throw std::invalid_argument("layer_norm: eps must be positive");
  const std::size_t rows = x.value().size() / d;
  auto xhat = std::make_shared<std::vector<double>>(x.value().size());
  auto rstd = std::make_shared<std::vector<double>>(rows);
  Tensor y(x.shape());
  const double* xv = x.value().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = xv + r * d;
    double mean = 0.0;
    for (std::size_t j = 0; j < d; ++j) mean += row[j];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (row[j] - mean) * (row[j] - mean);
    var /= static_cast<double>(d);
    const double rs = 1.0 / std::sqrt(var + eps);
    (*rstd)[r] = rs;
    for (std::size_t j = 0; j < d; ++j) {
      const double h = (row[j] - mean) * rs;
      (*xhat)[r * d + j] = h;
      y[r * d + j] = h * gamma.value()[j] + beta.value()[j];
    }
  }
  return make_result(std::move(y), {x, gamma, beta}, [d, rows, xhat, rstd](Node& n) {
    Tensor* gx = grad_of(n, 0);
    Tensor* gg = grad_of(n, 1);
    Tensor* gb = grad_of(n, 2);
    const Tensor& gamma_v = value_of(n, 1);
    for (std::size_t r = 0; r < rows; ++r) {
      const double* dy = n.grad.data() + r * d;
      const double* h = xhat->data() + r * d;
      double mean_dh = 0.0, mean_dh_h = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        const double dh = dy[j] * gamma_v[j];
        mean_dh += dh;
        mean_dh_h += dh * h[j];
        if (gg) (*gg)[j] += dy[j] * h[j];
        if (gb) (*gb)[j] += dy[j];
      }
      if (!gx) continue;
      mean_dh /= static_cast<double>(d);
      mean_dh_h /= static_cast<double>(d);
      for (std::size_t j = 0; j < d; ++j) {
        const double dh = dy[j] * gamma_v[j];
        (*gx)[r * d + j] += (*rstd)[r] * (dh - mean_dh - h[j] * mean_dh_h);
      }
    }
  });
}

Var channel_norm(const Var& x, const Var& gamma, const Var& beta, double eps) {
  if (x.rank() != 3) throw ShapeError("channel_norm: input must be [N, C, L]");
  const std::size_t batch = x.dim(0), ch = x.dim(1), len = x.dim(2);
  if (gamma.rank() != 1 || gamma.dim(0) != ch || beta.rank() != 1 || beta.dim(0) != ch) {
    throw ShapeError("channel_norm: gamma/beta must be [C]");
  }
  auto xhat = std::make_shared<std::vector<double>>(x.value().size());
  auto rstd = std::make_shared<std::vector<double>>(batch * len);
  Tensor y(x.shape());
  const double* xv = x.value().data();
  const double inv_c = 1.0 / static_cast<double>(ch);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t l = 0; l < len; ++l) {
      double mean = 0.0;
      for (std::size_t c = 0; c < ch; ++c) mean += xv[(b * ch + c) * len + l];
      mean *= inv_c;
      double var = 0.0;
      for (std::size_t c = 0; c < ch; ++c) {
        const double dv = xv[(b * ch + c) * len + l] - mean;
        var += dv * dv;
      }
      var *= inv_c;
      const double rs = 1.0 / std::sqrt(var + eps);
      (*rstd)[b * len + l] = rs;
      for (std::size_t c = 0; c < ch; ++c) {
        const std::size_t i = (b * ch + c) * len + l;
        const double h = (xv[i] - mean) * rs;
        (*xhat)[i] = h;
        y[i] = h * gamma.value()[c] + beta.value()[c];
      }
    }
  }
  return make_result(std::move(y), {x, gamma, beta}, [=](Node& n) {
    Tensor* gx = grad_of(n, 0);
    Tensor* gg = grad_of(n, 1);
    Tensor* gb = grad_of(n, 2);
    const Tensor& gamma_v = value_of(n, 1);
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t l = 0; l < len; ++l) {
        double mean_dh = 0.0, mean_dh_h = 0.0;
        for (std::size_t c = 0; c < ch; ++c) {
          const std::size_t i = (b * ch + c) * len + l;
          const double dh = n.grad[i] * gamma_v[c];
          mean_dh += dh;
          mean_dh_h += dh * (*xhat)[i];
          if (gg) (*gg)[c] += n.grad[i] * (*xhat)[i];
          if (gb) (*gb)[c] += n.grad[i];
        }
        if (!gx) continue;
        mean_dh *= inv_c;
        mean_dh_h *= inv_c;
        for (std::size_t c = 0; c < ch; ++c) {
          const std::size_t i = (b * ch + c) * len + l;
          const double dh = n.grad[i] * gamma_v[c];
          (*gx)[i] += (*rstd)[b * len + l] * (dh - mean_dh - (*xhat)[i] * mean_dh_h);
        }
      }
    }
  });
}

Var softmax(const Var& x) {
  const std::size_t d = last_dim(x);
  if (d == 0) throw ShapeError("softmax: empty last axis");
  const std::size_t rows = x.value().size() / d;
  Tensor y(x.shape());
  const double* xv = x.value().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = xv + r * d;
    const double mx = *std::max_element(row, row + d);
    double total = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double e = std::exp(row[j] - mx);
      y[r * d + j] = e;
      total += e;
    }
    for (std::size_t j = 0; j < d; ++j) y[r * d + j] /= total;
  }
  return make_result(std::move(y), {x}, [d, rows](Node& n) {
    Tensor* gx = grad_of(n, 0);
    if (!gx) return;
    for (std::size_t r = 0; r < rows; ++r) {
      const double* yv = n.value.data() + r * d;
      const double* dy = n.grad.data() + r * d;
      double dot = 0.0;
      for (std::size_t j = 0; j < d; ++j) dot += dy[j] * yv[j];
      for (std::size_t j = 0; j < d; ++j) (*gx)[r * d + j] += yv[j] * (dy[j] - dot);
    }
  });
}

Var relu(const Var& x) {
  return unary(
      x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Var gelu(const Var& x) {
  return unary(
      x, [](double v) { return 0.5 * v * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0)); },
      [](double v, double) {
        const double cdf = 0.5 * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0));
        const double pdf = std::exp(-0.5 * v * v) / std::sqrt(2.0 * std::numbers::pi);
        return cdf + v * pdf;
      });
}

namespace {
double stable_sigmoid(double v) {
  if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}
}  // namespace

Var silu(const Var& x) {
  return unary(
      x, [](double v) { return v * stable_sigmoid(v); },
      [](double v, double) {
        const double s = stable_sigmoid(v);
        return s * (1.0 + v * (1.0 - s));
      });
}

Var sigmoid(const Var& x) {
  return unary(
      x, [](double v) { return stable_sigmoid(v); },
      [](double, double y) { return y * (1.0 - y); });
}

Var softplus(const Var& x) {
  return unary(
      x, [](double v) { return v > 30.0 ? v : std::log1p(std::exp(v)); },
      [](double v, double) { return stable_sigmoid(v); });
}

Var exp(const Var& x) {
  return unary(
      x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Var activation(const Var& x, Activation kind) {
  switch (kind) {
    case Activation::kRelu:
      return relu(x);
    case Activation::kGelu:
      return gelu(x);
    case Activation::kSilu:
      return silu(x);
  }
  throw std::invalid_argument("unknown activation");
}

Var dropout(const Var& x, double p, SeededRng& rng, bool training) {
  if (!training || p <= 0.0) return x;
  if (p >= 1.0) throw std::invalid_argument("dropout: p must be < 1");
  auto mask = std::make_shared<std::vector<double>>(x.value().size());
  const double keep = 1.0 / (1.0 - p);
  for (double& m : *mask) m = rng.uniform() < p ? 0.0 : keep;
  Tensor y = x.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= (*mask)[i];
  return make_result(std::move(y), {x}, [mask](Node& n) {
    Tensor* gx = grad_of(n, 0);
    if (!gx) return;
    for (std::size_t i = 0; i < n.grad.size(); ++i) (*gx)[i] += n.grad[i] * (*mask)[i];
  });
}

Var concat(const std::vector<Var>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: nothing to concatenate");
  Shape out_shape = parts.front().shape();
  const AxisSplit first = split_at(out_shape, axis);
  std::size_t total = 0;
  std::vector<std::size_t> widths;
  for (const auto& p : parts) {
    const AxisSplit s = split_at(p.shape(), axis);
    if (p.rank() != out_shape.size() || s.outer != first.outer || s.inner != first.inner) {
      throw ShapeError("concat: incompatible shape " + shape_to_string(p.shape()));
    }
    widths.push_back(s.n);
    total += s.n;
  }
  out_shape[axis] = total;
  const std::size_t outer = first.outer, inner = first.inner;
  Tensor y(out_shape);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const double* src = parts[k].value().data();
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(src + o * widths[k] * inner, widths[k] * inner,
                  y.data() + (o * total + offset) * inner);
    }
    offset += widths[k];
  }
  return make_result(std::move(y), parts, [outer, inner, total, widths](Node& n) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < widths.size(); ++k) {
      if (Tensor* g = grad_of(n, k)) {
        for (std::size_t o = 0; o < outer; ++o) {
          const double* src = n.grad.data() + (o * total + off) * inner;
          double* dst = g->data() + o * widths[k] * inner;
          for (std::size_t i = 0; i < widths[k] * inner; ++i) dst[i] += src[i];
        }
      }
      off += widths[k];
    }
  });
}

Var slice(const Var& x, std::size_t axis, std::size_t start, std::size_t length) {
  const AxisSplit s = split_at(x.shape(), axis);
  if (start + length > s.n) throw ShapeError("slice: range exceeds axis length");
  Shape out_shape = x.shape();
  out_shape[axis] = length;
  Tensor y(out_shape);
  for (std::size_t o = 0; o < s.outer; ++o) {
    std::copy_n(x.value().data() + (o * s.n + start) * s.inner, length * s.inner,
                y.data() + o * length * s.inner);
  }
  return make_result(std::move(y), {x}, [s, start, length](Node& n) {
    Tensor* gx = grad_of(n, 0);
    if (!gx) return;
    for (std::size_t o = 0; o < s.outer; ++o) {
      const double* src = n.grad.data() + o * length * s.inner;
      double* dst = gx->data() + (o * s.n + start) * s.inner;
      for (std::size_t i = 0; i < length * s.inner; ++i) dst[i] += src[i];
    }
  });
}

Var reshape(const Var& x, Shape shape) {
  Tensor y = x.value().reshaped(std::move(shape));
  return make_result(std::move(y), {x}, [](Node& n) {
    Tensor* gx = grad_of(n, 0);
    if (!gx) return;
    for (std::size_t i = 0; i < n.grad.size(); ++i) (*gx)[i] += n.grad[i];
  });
}

Var mean_axis(const Var& x, std::size_t axis) {
  const AxisSplit s = split_at(x.shape(), axis);
  if (s.n == 0) throw ShapeError("mean_axis: empty axis");
  Shape out_shape = x.shape();
  out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
  Tensor y(out_shape);
  const double inv = 1.0 / static_cast<double>(s.n);
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t j = 0; j < s.n; ++j) {
      for (std::size_t i = 0; i < s.inner; ++i) {
        y[o * s.inner + i] += x.value()[(o * s.n + j) * s.inner + i];
      }
    }
  }
  for (double& v : y.values()) v *= inv;
  return make_result(std::move(y), {x}, [s, inv](Node& n) {
    Tensor* gx = grad_of(n, 0);
    if (!gx) return;
    for (std::size_t o = 0; o < s.outer; ++o) {
      for (std::size_t j = 0; j < s.n; ++j) {
        for (std::size_t i = 0; i < s.inner; ++i) {
          (*gx)[(o * s.n + j) * s.inner + i] += n.grad[o * s.inner + i] * inv;
        }
      }
    }
  });
}

Var reverse_axis(const Var& x, std::size_t axis) {
  const AxisSplit s = split_at(x.shape(), axis);
  auto map = std::make_shared<std::vector<std::size_t>>(x.value().size());
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t j = 0; j < s.n; ++j) {
      for (std::size_t i = 0; i < s.inner; ++i) {
        (*map)[(o * s.n + j) * s.inner + i] = (o * s.n + (s.n - 1 - j)) * s.inner + i;
      }
    }
  }
  return permute(x, x.shape(), std::move(map));
}

Var sum_all(const Var& x) {
  double total = 0.0;
  for (double v : x.value().values()) total += v;
  return make_result(Tensor({1}, {total}), {x}, [](Node& n) {
    Tensor* gx = grad_of(n, 0);
    if (!gx) return;
    for (double& g : gx->values()) g += n.grad[0];
  });
}

Var mean_all(const Var& x) {
  if (x.value().empty()) throw ShapeError("mean_all: empty tensor");
  return scale(sum_all(x), 1.0 / static_cast<double>(x.value().size()));
}

Var split_heads(const Var& x, std::size_t heads) {
  if (x.rank() != 3 || heads == 0 || x.dim(2) % heads != 0) {
    throw ShapeError("split_heads: need [B, T, H*dh]");
  }
  const std::size_t b = x.dim(0), t = x.dim(1), d = x.dim(2), dh = d / heads;
  auto map = std::make_shared<std::vector<std::size_t>>(x.value().size());
  for (std::size_t bi = 0; bi < b; ++bi)
    for (std::size_t h = 0; h < heads; ++h)
      for (std::size_t ti = 0; ti < t; ++ti)
        for (std::size_t j = 0; j < dh; ++j)
          (*map)[((bi * heads + h) * t + ti) * dh + j] = (bi * t + ti) * d + h * dh + j;
  return permute(x, Shape{b * heads, t, dh}, std::move(map));
}

Var merge_heads(const Var& x, std::size_t heads) {
  if (x.rank() != 3 || heads == 0 || x.dim(0) % heads != 0) {
    throw ShapeError("merge_heads: need [B*H, T, dh]");
  }
  const std::size_t b = x.dim(0) / heads, t = x.dim(1), dh = x.dim(2), d = dh * heads;
  auto map = std::make_shared<std::vector<std::size_t>>(x.value().size());
  for (std::size_t bi = 0; bi < b; ++bi)
    for (std::size_t ti = 0; ti < t; ++ti)
      for (std::size_t h = 0; h < heads; ++h)
        for (std::size_t j = 0; j < dh; ++j)
          (*map)[(bi * t + ti) * d + h * dh + j] = ((bi * heads + h) * t + ti) * dh + j;
  return permute(x, Shape{b, t, d}, std::move(map));
}

Var ssm_scan(const Var& u, const Var& delta, const Var& a, const Var& bm, const Var& cm) {
  require_same_shape(u, delta, "ssm_scan(u, delta)");
  require_same_shape(bm, cm, "ssm_scan(B, C)");
  const bool batched = u.rank() == 3;
  if (!batched && u.rank() != 2) throw ShapeError("ssm_scan: u must be [B, T, C]");
  const std::size_t batch = batched ? u.dim(0) : 1;
  const std::size_t steps = u.dim(batched ? 1 : 0), ch = u.dim(batched ? 2 : 1);
  if (a.rank() != 2 || a.dim(0) != ch) throw ShapeError("ssm_scan: A must be [C, N]");
  const std::size_t ns = a.dim(1);
  if (bm.value().size() != batch * steps * ns) throw ShapeError("ssm_scan: B/C must be [B, T, N]");
  for (const Var* v : {&u, &delta, &a, &bm, &cm}) {
    if (!v->value().all_finite()) throw NumericalError("ssm_scan: non-finite input");
  }

  auto states = std::make_shared<std::vector<double>>(batch * steps * ch * ns);
  Tensor y(u.shape());
  const double* uv = u.value().data();
  const double* dv = delta.value().data();
  const double* av = a.value().data();
  const double* bv = bm.value().data();
  const double* cv = cm.value().data();
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t t = 0; t < steps; ++t) {
      const std::size_t bt = b * steps + t;
      double* h = states->data() + bt * ch * ns;
      const double* hp = t > 0 ? h - ch * ns : nullptr;
      for (std::size_t c = 0; c < ch; ++c) {
        const double d = dv[bt * ch + c];
        const double x = uv[bt * ch + c];
        double out = 0.0;
        for (std::size_t s = 0; s < ns; ++s) {
          const double decay = std::exp(d * av[c * ns + s]);
          const double prev = hp ? hp[c * ns + s] : 0.0;
          const double hv = decay * prev + d * bv[bt * ns + s] * x;
          h[c * ns + s] = hv;
          out += cv[bt * ns + s] * hv;
        }
        y[bt * ch + c] = out;
      }
    }
  }
  return make_result(std::move(y), {u, delta, a, bm, cm}, [=](Node& n) {
    Tensor* gu = grad_of(n, 0);
    Tensor* gd = grad_of(n, 1);
    Tensor* ga = grad_of(n, 2);
    Tensor* gbm = grad_of(n, 3);
    Tensor* gcm = grad_of(n, 4);
    const double* uv = value_of(n, 0).data();
    const double* dv = value_of(n, 1).data();
    const double* av = value_of(n, 2).data();
    const double* bv = value_of(n, 3).data();
    const double* cv = value_of(n, 4).data();
    std::vector<double> carry(ch * ns);
    for (std::size_t b = 0; b < batch; ++b) {
      std::fill(carry.begin(), carry.end(), 0.0);
      for (std::size_t t = steps; t-- > 0;) {
        const std::size_t bt = b * steps + t;
        const double* h = states->data() + bt * ch * ns;
        const double* hp = t > 0 ? h - ch * ns : nullptr;
        for (std::size_t c = 0; c < ch; ++c) {
          const double dy = n.grad[bt * ch + c];
          const double d = dv[bt * ch + c];
          const double x = uv[bt * ch + c];
          for (std::size_t s = 0; s < ns; ++s) {
            const std::size_t cs = c * ns + s;
            const double gh = carry[cs] + cv[bt * ns + s] * dy;
            if (gcm) (*gcm)[bt * ns + s] += dy * h[cs];
            const double decay = std::exp(d * av[cs]);
            const double prev = hp ? hp[cs] : 0.0;
            const double gdecay = gh * prev * decay;
            if (gd) (*gd)[bt * ch + c] += gdecay * av[cs] + gh * bv[bt * ns + s] * x;
            if (ga) (*ga)[cs] += gdecay * d;
            if (gbm) (*gbm)[bt * ns + s] += gh * d * x;
            if (gu) (*gu)[bt * ch + c] += gh * d * bv[bt * ns + s];
            carry[cs] = gh * decay;
          }
        }
      }
    }
  });
}

Var focal_loss(const Var& probs, std::span<const int> targets, double gamma) {
  if (probs.rank() != 2) throw ShapeError("focal_loss: probabilities must be [n, K]");
  const std::size_t rows = probs.dim(0), classes = probs.dim(1);
  if (rows != targets.size()) throw ShapeError("focal_loss: target count mismatch");
  if (rows == 0) throw ShapeError("focal_loss: no rows");
  if (gamma < 0.0) throw std::invalid_argument("focal_loss: gamma must be >= 0");
  static constexpr double kFloor = 1e-12;
  auto tgt = std::make_shared<std::vector<int>>(targets.begin(), targets.end());
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    const int t = targets[r];
    if (t < 0 || static_cast<std::size_t>(t) >= classes) {
      throw std::invalid_argument("focal_loss: target " + std::to_string(t) + " out of range");
    }
    const double p = probs.value().at(r, static_cast<std::size_t>(t));
    const double w = gamma == 0.0 ? 1.0 : std::pow(std::max(1.0 - p, 0.0), gamma);
    total += -w * std::log(std::max(p, kFloor));
  }
  const double inv = 1.0 / static_cast<double>(rows);
  return make_result(Tensor({1}, {total * inv}), {probs}, [tgt, classes, gamma, inv](Node& n) {
    Tensor* gp = grad_of(n, 0);
    if (!gp) return;
    const Tensor& pv = value_of(n, 0);
    for (std::size_t r = 0; r < tgt->size(); ++r) {
      const std::size_t idx = r * classes + static_cast<std::size_t>((*tgt)[r]);
      const double p = pv[idx];
      const double q = std::max(1.0 - p, 0.0);
      const double logp = std::log(std::max(p, kFloor));
      double d = 0.0;
      if (gamma != 0.0 && q > 0.0) d += gamma * std::pow(q, gamma - 1.0) * logp;
      const double w = gamma == 0.0 ? 1.0 : std::pow(q, gamma);
      if (p > kFloor) d -= w / p;
      (*gp)[idx] += n.grad[0] * inv * d;
    }
  });
}

}  // namespace sfus::nn
