#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "sfus/models/common.hpp"
#include "sfus/nn/checkpoint.hpp"
#include "sfus/nn/layers.hpp"
#include "sfus/signal.hpp"

namespace sfus::models {

/// Residual depth per window length: 4, 5, 6, 6, 7, 8 layers for
/// 1, 2, 6, 10, 20, 60 epochs. Throws ModelError for other lengths.
std::size_t ppg_depth_for_window(std::size_t window_epochs);

struct PpgConfig {
  std::size_t epoch_len = kPpgEpochLen;
  std::size_t window_epochs = 6;
  /// 0 selects ppg_depth_for_window(window_epochs).
  std::size_t depth = 0;
  std::size_t channels = 224;
  std::size_t kernel = 7;
  std::size_t cross_blocks = 2;
  std::size_t cross_heads = 8;
  std::size_t cross_ffn = 896;
  std::size_t d_model = 256;
  std::size_t temporal_kernel = 3;
  nn::Activation activation = nn::Activation::kGelu;

  static PpgConfig full(std::size_t window_epochs);
  static PpgConfig tiny(std::size_t window_epochs);

  void validate() const;
  std::size_t resolved_depth() const;
  std::size_t tokens_per_epoch() const { return epoch_len >> resolved_depth(); }
};

std::string ppg_config_to_json(const PpgConfig& cfg);
PpgConfig ppg_config_from_json(std::string_view text);

/// First difference (the first difference repeated at index 0) of each window
/// [B, T, L] flattened over its T*L samples, then standardized per window.
/// Constant windows map to zeros.
Tensor augment_ppg(const Tensor& windows);

/// Two residual conv streams (raw and augmented PPG) over the whole window,
/// bidirectional cross attention between them, a sigmoid gate mixing the
/// streams, per-epoch pooling to d_model, a dilated temporal conv block over
/// the epochs and a softmax head.
class PpgEncoder {
 public:
  PpgEncoder(const PpgConfig& cfg, std::uint64_t seed);

  const PpgConfig& config() const { return cfg_; }
  nn::ParameterSet& params() { return params_; }
  const nn::ParameterSet& params() const { return params_; }

  /// Pins w_raw to a constant in [0, 1]; nullopt restores the learned gate.
  void override_gate(std::optional<double> w_raw);
  /// Learned w_raw per window, [B].
  nn::Var gate(const nn::Var& raw_tokens, const nn::Var& aug_tokens) const;

  /// signal [N, 1, L] -> tokens [N, L >> depth, channels]
  nn::Var encode_stream(const std::string& stream, const nn::Var& signal) const;
  /// One block of cross-stream exchange; `block` < cross_blocks.
  std::pair<nn::Var, nn::Var> cross_stream(std::size_t block, const nn::Var& raw, const nn::Var& aug) const;

  /// windows [B, T, L] (or [T, L]) -> features [B, T, d], probs [B, T, 4]
  StageOutput forward(const nn::Var& windows) const;

  nn::Checkpoint checkpoint() const;
  static PpgEncoder from_checkpoint(const nn::Checkpoint& ckpt);

 private:
  struct ResidualLayer {
    nn::Conv1d down, conv, skip;
    nn::ChannelNorm norm;
  };
  struct Stream {
    std::vector<ResidualLayer> layers;
  };
  Stream make_stream(const std::string& name, SeededRng& rng);
  nn::Var run_stream(const Stream& s, const nn::Var& x) const;

  PpgConfig cfg_;
  nn::ParameterSet params_;
  Stream raw_, aug_;
  std::vector<nn::CrossAttentionPair> cross_;
  nn::Linear gate_;
  std::optional<double> gate_override_;
  nn::Linear project_;
  nn::Conv1d temporal1_, temporal2_;
  nn::ChannelNorm temporal_norm1_, temporal_norm2_;
  nn::Linear head_;
};

}  // namespace sfus::models
