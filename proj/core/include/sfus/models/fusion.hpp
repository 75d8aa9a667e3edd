#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>

#include "sfus/models/common.hpp"
#include "sfus/nn/checkpoint.hpp"
#include "sfus/nn/layers.hpp"

namespace sfus::models {

inline constexpr std::size_t kAlphaGridPoints = 11;

/// alpha * P_ppg + (1 - alpha) * P_sceeg over [..., 4] probability rows.
/// Rows must sum to 1 within 1e-6 and be non-negative.
Tensor score_fusion(const Tensor& p_ppg, const Tensor& p_sceeg, double alpha);

struct AlphaSearch {
  double best_alpha = 0.0;
  std::array<double, kAlphaGridPoints> alphas{};
  std::array<double, kAlphaGridPoints> kappas{};
};

/// Kappa of the fused argmax for alpha in {0, 0.1, ..., 1}; ties go to the
/// smaller alpha. `labels` holds one stage per probability row.
AlphaSearch grid_search_alpha(const Tensor& p_ppg, const Tensor& p_sceeg, std::span<const int> labels);

enum class FusionStrategy { kScore, kCrossAttention, kMamba };
std::string_view strategy_name(FusionStrategy s);
FusionStrategy parse_strategy(std::string_view name);

struct FusionConfig {
  std::size_t d_model = 256;
  std::size_t blocks = 2;
  std::size_t heads = 8;
  std::size_t ffn = 1024;
  nn::Activation activation = nn::Activation::kGelu;
  std::size_t state_size = 16;
  std::size_t expand = 4;
  /// 0 selects ceil(d_model / 16).
  std::size_t dt_rank = 0;
  std::size_t conv_kernel = 4;

  static FusionConfig full();
  static FusionConfig tiny(std::size_t d_model);

  void validate() const;
  std::size_t inner() const { return expand * d_model; }
  std::size_t resolved_dt_rank() const { return dt_rank != 0 ? dt_rank : (d_model + 15) / 16; }
};

std::string fusion_config_to_json(const FusionConfig& cfg);
FusionConfig fusion_config_from_json(std::string_view text);

/// One selective-SSM direction over x [B, T, d]:
///   LayerNorm -> in_proj (u, z) -> causal depthwise conv -> silu -> x_proj
///   (dt, B, C) -> delta = softplus(dt_proj(dt)) -> scan(A = -exp(A_log))
///   -> + D * u -> * silu(z) -> out_proj
class MambaBlock {
 public:
  MambaBlock() = default;
  MambaBlock(nn::ParameterSet& ps, const std::string& name, const FusionConfig& cfg, SeededRng& rng);
  nn::Var operator()(const nn::Var& x) const;

 private:
  nn::LayerNorm norm_;
  nn::Linear in_proj_, x_proj_, dt_proj_, out_proj_;
  nn::Parameter* conv_w_ = nullptr;
  nn::Parameter* conv_b_ = nullptr;
  nn::Parameter* a_log_ = nullptr;
  nn::Parameter* skip_ = nullptr;
  std::size_t inner_ = 0, state_ = 0, dt_rank_ = 0;
};

/// x + Merge([forward(x); reverse(backward(reverse(x)))]), Merge linear 2d -> d.
/// Parameters live under <name>.fwd, <name>.bwd and <name>.merge.
class BidirectionalMamba {
 public:
  BidirectionalMamba() = default;
  BidirectionalMamba(nn::ParameterSet& ps, const std::string& name, const FusionConfig& cfg, SeededRng& rng);
  nn::Var operator()(const nn::Var& x) const;
  nn::Var forward_direction(const nn::Var& x) const { return fwd_(x); }
  nn::Var backward_direction(const nn::Var& x) const;

 private:
  MambaBlock fwd_, bwd_;
  nn::Linear merge_;
};

/// Learned fusion over frozen encoder features F_sceeg, F_ppg [B, T, d]:
/// `blocks` bidirectional cross-attention blocks, concat projection 2d -> d,
/// then (mamba only) the bidirectional SSM, then a softmax head.
/// Parameter prefixes: cross., concat_proj., mamba., head.
class FusionModel {
 public:
  FusionModel(FusionStrategy strategy, const FusionConfig& cfg, std::uint64_t seed);

  FusionStrategy strategy() const { return strategy_; }
  const FusionConfig& config() const { return cfg_; }
  nn::ParameterSet& params() { return params_; }
  const nn::ParameterSet& params() const { return params_; }

  nn::Var fused_features(const nn::Var& f_sceeg, const nn::Var& f_ppg) const;
  const BidirectionalMamba& mamba() const;
  /// features is F_fused (cross attention) or F_temporal (mamba).
  StageOutput forward(const nn::Var& f_sceeg, const nn::Var& f_ppg) const;

  /// Records the content hashes of the encoder checkpoints it was trained on.
  nn::Checkpoint checkpoint(std::uint64_t sceeg_hash, std::uint64_t ppg_hash) const;
  static FusionModel from_checkpoint(const nn::Checkpoint& ckpt);

 private:
  FusionStrategy strategy_;
  FusionConfig cfg_;
  nn::ParameterSet params_;
  std::vector<nn::CrossAttentionPair> cross_;
  nn::Linear concat_proj_;
  BidirectionalMamba mamba_;
  nn::Linear head_;
};

struct EncoderHashes {
  std::uint64_t sceeg = 0;
  std::uint64_t ppg = 0;
};
/// Hashes stored by FusionModel::checkpoint or a score-fusion checkpoint.
EncoderHashes encoder_hashes(const nn::Checkpoint& ckpt);
/// Throws ModelError unless the stored hashes equal `actual`.
void verify_encoder_hashes(const nn::Checkpoint& ckpt, const EncoderHashes& actual);

nn::Checkpoint score_fusion_checkpoint(const AlphaSearch& search, const EncoderHashes& hashes);
/// The selected weight, snapped back onto the {0, 0.1, ..., 1} grid.
double score_fusion_alpha(const nn::Checkpoint& ckpt);
/// Grid with validation kappas as stored (float32 precision).
AlphaSearch score_fusion_search(const nn::Checkpoint& ckpt);

}  // namespace sfus::models
