#pragma once

#include <cstdint>
#include <string>

#include "sfus/models/common.hpp"
#include "sfus/nn/checkpoint.hpp"
#include "sfus/nn/layers.hpp"
#include "sfus/signal.hpp"

namespace sfus::models {

/// conv(kernel, stride, padding) -> pool1 -> 2 x conv(inner_kernel) -> pool2
struct ConvBranchSpec {
  std::size_t kernel = 50, stride = 6, padding = 24;
  std::size_t pool1_kernel = 8, pool1_stride = 2, pool1_padding = 4;
  std::size_t inner_kernel = 8;
  std::size_t pool2_kernel = 4, pool2_stride = 4, pool2_padding = 2;

  std::size_t output_length(std::size_t length) const;
};

struct SceegConfig {
  std::size_t epoch_len = kSceegEpochLen;
  std::size_t window_epochs = 6;
  std::size_t d_model = 256;
  std::size_t channels1 = 64;
  std::size_t channels2 = 128;
  ConvBranchSpec fine{};
  ConvBranchSpec coarse{400, 50, 200, 4, 2, 2, 7, 2, 2, 1};
  bool recalibrate = true;
  std::size_t recalibrate_reduction = 16;
  std::size_t context_layers = 2;
  std::size_t context_heads = 8;
  std::size_t context_ffn = 1024;
  std::size_t temporal_layers = 2;
  std::size_t temporal_heads = 8;
  std::size_t temporal_ffn = 1024;
  std::size_t max_epochs = 60;
  nn::Activation activation = nn::Activation::kGelu;
  bool conv_bias = true;
  bool conv_norm = true;

  static SceegConfig full(std::size_t window_epochs);
  /// Desk-scale widths on full 3000-sample epochs.
  static SceegConfig tiny(std::size_t window_epochs);

  /// Throws ModelError.
  void validate() const;
  std::size_t tokens_per_epoch() const;
  bool uses_temporal() const { return window_epochs > 1; }
};

std::string sceeg_config_to_json(const SceegConfig& cfg);
SceegConfig sceeg_config_from_json(std::string_view text);

/// Multi-resolution CNN over each epoch, self-attention over the epoch's
/// token map, mean pooling to d_model, then a transformer across the T epochs
/// of the window (skipped when T = 1) and a softmax head.
class SceegEncoder {
 public:
  SceegEncoder(const SceegConfig& cfg, std::uint64_t seed);

  const SceegConfig& config() const { return cfg_; }
  nn::ParameterSet& params() { return params_; }
  const nn::ParameterSet& params() const { return params_; }

  /// epochs [N, L] -> tokens [N, tokens_per_epoch, channels2]
  nn::Var tokens(const nn::Var& epochs) const;
  /// Token self-attention; shape preserving, no positional information.
  nn::Var context(const nn::Var& tokens) const;
  /// CNN path alone, pooled and projected: [N, L] -> [N, d_model].
  nn::Var mrcnn_features(const nn::Var& epochs) const;
  /// [N, L] -> [N, d_model]
  nn::Var epoch_features(const nn::Var& epochs) const;
  /// windows [B, T, L] (or [T, L]) -> features [B, T, d], probs [B, T, 4]
  StageOutput forward(const nn::Var& windows) const;

  nn::Checkpoint checkpoint() const;
  static SceegEncoder from_checkpoint(const nn::Checkpoint& ckpt);

 private:
  struct Branch {
    nn::Conv1d conv1, conv2, conv3;
    nn::ChannelNorm norm1, norm2, norm3;
    ConvBranchSpec spec;
  };
  Branch make_branch(const std::string& name, const ConvBranchSpec& spec, SeededRng& rng);
  nn::Var run_branch(const Branch& b, const nn::Var& x) const;
  nn::Var pool_project(const nn::Var& tokens) const;

  SceegConfig cfg_;
  nn::ParameterSet params_;
  Branch fine_, coarse_;
  nn::Linear squeeze_, excite_;
  std::vector<nn::TransformerLayer> context_;
  nn::Linear project_;
  nn::Parameter* positions_ = nullptr;
  std::vector<nn::TransformerLayer> temporal_;
  nn::Linear head_;
};

}  // namespace sfus::models
