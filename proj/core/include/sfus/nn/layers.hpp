#pragma once

#include <string>
#include <utility>

#include "sfus/nn/ops.hpp"

namespace sfus::nn {

enum class NormPlacement { kPre, kPost };

class Linear {
 public:
  Linear() = default;
  Linear(ParameterSet& ps, const std::string& name, std::size_t in, std::size_t out,
         SeededRng& rng, bool bias = true);
  Var operator()(const Var& x) const;

  Parameter& weight() const { return *w_; }
  Parameter* bias() const { return b_; }
  std::size_t in_features() const { return w_->value().dim(0); }
  std::size_t out_features() const { return w_->value().dim(1); }

 private:
  Parameter* w_ = nullptr;
  Parameter* b_ = nullptr;
};

class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(ParameterSet& ps, const std::string& name, std::size_t d, double eps = 1e-5);
  Var operator()(const Var& x) const;

 private:
  Parameter* gamma_ = nullptr;
  Parameter* beta_ = nullptr;
  double eps_ = 1e-5;
};

/// Per-position normalization across channels of a [N, C, L] map.
class ChannelNorm {
 public:
  ChannelNorm() = default;
  ChannelNorm(ParameterSet& ps, const std::string& name, std::size_t channels);
  Var operator()(const Var& x) const;

 private:
  Parameter* gamma_ = nullptr;
  Parameter* beta_ = nullptr;
};

class Conv1d {
 public:
  Conv1d() = default;
  Conv1d(ParameterSet& ps, const std::string& name, std::size_t cin, std::size_t cout,
         std::size_t kernel, Conv1dSpec spec, SeededRng& rng, bool bias = true);
  Var operator()(const Var& x) const;
  std::size_t output_length(std::size_t length) const;

 private:
  Parameter* w_ = nullptr;
  Parameter* b_ = nullptr;
  Conv1dSpec spec_;
};

/// Multi-head scaled dot-product attention with input and output projections.
class MultiHeadAttention {
 public:
  MultiHeadAttention() = default;
  MultiHeadAttention(ParameterSet& ps, const std::string& name, std::size_t d,
                     std::size_t heads, SeededRng& rng);
  /// query[B, Tq, d] (or [Tq, d]), context[B, Tk, d] -> [B, Tq, d]
  Var operator()(const Var& query, const Var& context) const;
  std::size_t heads() const { return heads_; }

 private:
  Linear q_, k_, v_, o_;
  std::size_t heads_ = 1;
};

class FeedForward {
 public:
  FeedForward() = default;
  FeedForward(ParameterSet& ps, const std::string& name, std::size_t d, std::size_t hidden,
              Activation act, SeededRng& rng);
  Var operator()(const Var& x) const;

 private:
  Linear in_, out_;
  Activation act_ = Activation::kGelu;
};

struct BlockConfig {
  std::size_t d = 256;
  std::size_t heads = 8;
  std::size_t ffn_hidden = 1024;
  Activation act = Activation::kGelu;
  NormPlacement norm = NormPlacement::kPre;
};

/// Self-attention + feed-forward with residual connections.
class TransformerLayer {
 public:
  TransformerLayer() = default;
  TransformerLayer(ParameterSet& ps, const std::string& name, const BlockConfig& cfg,
                   SeededRng& rng);
  Var operator()(const Var& x) const;

 private:
  LayerNorm norm1_, norm2_;
  MultiHeadAttention attn_;
  FeedForward ffn_;
  NormPlacement placement_ = NormPlacement::kPre;
};

/// Bidirectional cross-attention between two aligned sequences:
///   a' = a + CrossAttn(a, b, b),  b' = b + CrossAttn(b, a, a)
/// each followed by a feed-forward sublayer. Both updates read the
/// pre-block inputs. Parameters of the b-side live under `<name>.b.`.
class CrossAttentionPair {
 public:
  CrossAttentionPair() = default;
  CrossAttentionPair(ParameterSet& ps, const std::string& name, const BlockConfig& cfg,
                     SeededRng& rng);
  std::pair<Var, Var> operator()(const Var& a, const Var& b) const;

 private:
  LayerNorm norm_a1_, norm_b1_, norm_a2_, norm_b2_;
  MultiHeadAttention attn_a_, attn_b_;
  FeedForward ffn_a_, ffn_b_;
  NormPlacement placement_ = NormPlacement::kPre;
};

}  // namespace sfus::nn
