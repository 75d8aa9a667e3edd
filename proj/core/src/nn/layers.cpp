#include "sfus/nn/layers.hpp"

#include <cmath>

namespace sfus::nn {

Linear::Linear(ParameterSet& ps, const std::string& name, std::size_t in, std::size_t out,
               SeededRng& rng, bool bias)
    : w_(&ps.add_uniform(name + ".weight", {in, out}, in, rng)) {
  if (bias) b_ = &ps.add_uniform(name + ".bias", {out}, in, rng);
}

Var Linear::operator()(const Var& x) const {
  return linear(x, w_->var(), b_ ? b_->var() : Var{});
}

LayerNorm::LayerNorm(ParameterSet& ps, const std::string& name, std::size_t d, double eps)
    : gamma_(&ps.add(name + ".gamma", Tensor({d}, 1.0))),
      beta_(&ps.add(name + ".beta", Tensor({d}, 0.0))),
      eps_(eps) {}

Var LayerNorm::operator()(const Var& x) const {
  return layer_norm(x, gamma_->var(), beta_->var(), eps_);
}

ChannelNorm::ChannelNorm(ParameterSet& ps, const std::string& name, std::size_t channels)
    : gamma_(&ps.add(name + ".gamma", Tensor({channels}, 1.0))),
      beta_(&ps.add(name + ".beta", Tensor({channels}, 0.0))) {}

Var ChannelNorm::operator()(const Var& x) const {
  return channel_norm(x, gamma_->var(), beta_->var());
}

Conv1d::Conv1d(ParameterSet& ps, const std::string& name, std::size_t cin, std::size_t cout,
               std::size_t kernel, Conv1dSpec spec, SeededRng& rng, bool bias)
    : w_(&ps.add_uniform(name + ".weight", {cout, cin, kernel}, cin * kernel, rng)),
      spec_(spec) {
  if (bias) b_ = &ps.add_uniform(name + ".bias", {cout}, cin * kernel, rng);
}

Var Conv1d::operator()(const Var& x) const {
  return conv1d(x, w_->var(), b_ ? b_->var() : Var{}, spec_);
}

std::size_t Conv1d::output_length(std::size_t length) const {
  return conv1d_output_length(length, w_->value().dim(2), spec_);
}

MultiHeadAttention::MultiHeadAttention(ParameterSet& ps, const std::string& name,
                                       std::size_t d, std::size_t heads, SeededRng& rng)
    : q_(ps, name + ".q", d, d, rng),
      k_(ps, name + ".k", d, d, rng),
      v_(ps, name + ".v", d, d, rng),
      o_(ps, name + ".o", d, d, rng),
      heads_(heads) {
  if (heads == 0 || d % heads != 0) {
    throw std::invalid_argument("attention width " + std::to_string(d) +
                                " is not divisible by " + std::to_string(heads) + " heads");
  }
}

Var MultiHeadAttention::operator()(const Var& query, const Var& context) const {
  const bool unbatched = query.rank() == 2;
  Var qin = unbatched ? reshape(query, {1, query.dim(0), query.dim(1)}) : query;
  Var kin = context.rank() == 2 ? reshape(context, {1, context.dim(0), context.dim(1)}) : context;
  if (qin.rank() != 3 || kin.rank() != 3 || qin.dim(0) != kin.dim(0) || qin.dim(2) != kin.dim(2)) {
    throw ShapeError("attention: query " + shape_to_string(query.shape()) + " vs context " +
                     shape_to_string(context.shape()));
  }
  const std::size_t dh = qin.dim(2) / heads_;
  Var q = split_heads(q_(qin), heads_);
  Var k = split_heads(k_(kin), heads_);
  Var v = split_heads(v_(kin), heads_);
  Var weights = softmax(scale(matmul_nt(q, k), 1.0 / std::sqrt(static_cast<double>(dh))));
  Var out = o_(merge_heads(matmul(weights, v), heads_));
  return unbatched ? reshape(out, query.shape()) : out;
}

FeedForward::FeedForward(ParameterSet& ps, const std::string& name, std::size_t d,
                         std::size_t hidden, Activation act, SeededRng& rng)
    : in_(ps, name + ".in", d, hidden, rng), out_(ps, name + ".out", hidden, d, rng), act_(act) {}

Var FeedForward::operator()(const Var& x) const { return out_(activation(in_(x), act_)); }

TransformerLayer::TransformerLayer(ParameterSet& ps, const std::string& name,
                                   const BlockConfig& cfg, SeededRng& rng)
    : norm1_(ps, name + ".norm1", cfg.d),
      norm2_(ps, name + ".norm2", cfg.d),
      attn_(ps, name + ".attn", cfg.d, cfg.heads, rng),
      ffn_(ps, name + ".ffn", cfg.d, cfg.ffn_hidden, cfg.act, rng),
      placement_(cfg.norm) {}

Var TransformerLayer::operator()(const Var& x) const {
  if (placement_ == NormPlacement::kPre) {
    Var n1 = norm1_(x);
    Var h = add(x, attn_(n1, n1));
    return add(h, ffn_(norm2_(h)));
  }
  Var h = norm1_(add(x, attn_(x, x)));
  return norm2_(add(h, ffn_(h)));
}

CrossAttentionPair::CrossAttentionPair(ParameterSet& ps, const std::string& name,
                                       const BlockConfig& cfg, SeededRng& rng)
    : norm_a1_(ps, name + ".a.norm1", cfg.d),
      norm_b1_(ps, name + ".b.norm1", cfg.d),
      norm_a2_(ps, name + ".a.norm2", cfg.d),
      norm_b2_(ps, name + ".b.norm2", cfg.d),
      attn_a_(ps, name + ".a.attn", cfg.d, cfg.heads, rng),
      attn_b_(ps, name + ".b.attn", cfg.d, cfg.heads, rng),
      ffn_a_(ps, name + ".a.ffn", cfg.d, cfg.ffn_hidden, cfg.act, rng),
      ffn_b_(ps, name + ".b.ffn", cfg.d, cfg.ffn_hidden, cfg.act, rng),
      placement_(cfg.norm) {}

std::pair<Var, Var> CrossAttentionPair::operator()(const Var& a, const Var& b) const {
  if (a.shape() != b.shape()) {
    throw ShapeError("cross attention: stream shapes differ " + shape_to_string(a.shape()) +
                     " vs " + shape_to_string(b.shape()));
  }
  if (placement_ == NormPlacement::kPre) {
    Var na = norm_a1_(a);
    Var nb = norm_b1_(b);
    Var a1 = add(a, attn_a_(na, nb));
    Var b1 = add(b, attn_b_(nb, na));
    return {add(a1, ffn_a_(norm_a2_(a1))), add(b1, ffn_b_(norm_b2_(b1)))};
  }
  Var a1 = norm_a1_(add(a, attn_a_(a, b)));
  Var b1 = norm_b1_(add(b, attn_b_(b, a)));
  return {norm_a2_(add(a1, ffn_a_(a1))), norm_b2_(add(b1, ffn_b_(b1)))};
}

}  // namespace sfus::nn
