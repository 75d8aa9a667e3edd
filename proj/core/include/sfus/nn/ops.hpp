#pragma once

#include <span>
#include <vector>

#include "sfus/nn/autograd.hpp"

// Differentiable kernels. Shapes use a leading batch axis where noted;
// rank-2 inputs are treated as a batch of one where a batch is expected.
namespace sfus::nn {

enum class Activation { kRelu, kGelu, kSilu };

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& x, double s);
Var add_scalar(const Var& x, double s);
/// x[..., n] + b[n]
Var add_bias(const Var& x, const Var& b);
/// x[..., n] * v[n]
Var mul_lastdim(const Var& x, const Var& v);
/// x[B, ...] * s[B]: one scalar per leading index.
Var scale_leading(const Var& x, const Var& s);

/// a[..., m, k] @ b[k, n] (b shared), or a[B, m, k] @ b[B, k, n].
Var matmul(const Var& a, const Var& b);
/// a[B, m, k] @ b[B, n, k]^T -> [B, m, n]
Var matmul_nt(const Var& a, const Var& b);
/// x[..., in] @ w[in, out] + b[out]; `b` may be empty.
Var linear(const Var& x, const Var& w, const Var& b = {});
/// Swaps the last two axes.
Var transpose_last2(const Var& x);

struct Conv1dSpec {
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t dilation = 1;
};
/// Cross-correlation. x[N, Cin, L] (or [Cin, L]), w[Cout, Cin, K], bias[Cout] optional.
Var conv1d(const Var& x, const Var& w, const Var& bias, Conv1dSpec spec);
std::size_t conv1d_output_length(std::size_t length, std::size_t kernel, Conv1dSpec spec);

/// x[N, C, L]; padded positions never win.
Var maxpool1d(const Var& x, std::size_t kernel, std::size_t stride, std::size_t padding);
std::size_t maxpool1d_output_length(std::size_t length, std::size_t kernel,
                                    std::size_t stride, std::size_t padding);

/// Per-channel causal filter over time: x[B, T, C], w[C, K], b[C].
/// y[t, c] = b[c] + sum_k w[c, k] * x[t - (K-1) + k, c]
Var causal_depthwise_conv(const Var& x, const Var& w, const Var& b);

/// Normalizes over the last axis, then gamma * xhat + beta.
Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5);
/// Normalizes x[N, C, L] over C at every (n, l).
Var channel_norm(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5);

/// Softmax over the last axis with max subtraction.
Var softmax(const Var& x);

Var relu(const Var& x);
Var gelu(const Var& x);
Var silu(const Var& x);
Var sigmoid(const Var& x);
Var softplus(const Var& x);
Var exp(const Var& x);
Var activation(const Var& x, Activation kind);

/// Inverted dropout; identity when !training or p == 0.
Var dropout(const Var& x, double p, SeededRng& rng, bool training);

Var concat(const std::vector<Var>& parts, std::size_t axis);
Var slice(const Var& x, std::size_t axis, std::size_t start, std::size_t length);
Var reshape(const Var& x, Shape shape);
Var mean_axis(const Var& x, std::size_t axis);
Var reverse_axis(const Var& x, std::size_t axis);
Var sum_all(const Var& x);
Var mean_all(const Var& x);

/// [B, T, H*dh] -> [B*H, T, dh]
Var split_heads(const Var& x, std::size_t heads);
/// [B*H, T, dh] -> [B, T, H*dh]
Var merge_heads(const Var& x, std::size_t heads);

/// Selective scan with diagonal state:
///   h_t = exp(delta_t * A) * h_{t-1} + delta_t * B_t * u_t,  y_t = C_t . h_t
/// u, delta: [B, T, C]; A: [C, N]; Bm, Cm: [B, T, N]. h_0 = 0.
Var ssm_scan(const Var& u, const Var& delta, const Var& a, const Var& bm, const Var& cm);

/// Mean over rows of -(1 - p_t)^gamma * log(max(p_t, 1e-12)).
/// probs[n, K], targets in [0, K).
Var focal_loss(const Var& probs, std::span<const int> targets, double gamma);

}  // namespace sfus::nn
