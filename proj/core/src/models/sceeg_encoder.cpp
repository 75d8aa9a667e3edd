#include "sfus/models/sceeg_encoder.hpp"

#include "json_config.hpp"

namespace sfus::models {

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(ConvBranchSpec, kernel, stride, padding, pool1_kernel, pool1_stride,
                                   pool1_padding, inner_kernel, pool2_kernel, pool2_stride, pool2_padding)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(SceegConfig, epoch_len, window_epochs, d_model, channels1, channels2, fine,
                                   coarse, recalibrate, recalibrate_reduction, context_layers, context_heads,
                                   context_ffn, temporal_layers, temporal_heads, temporal_ffn, max_epochs,
                                   activation, conv_bias, conv_norm)

nn::Var as_batched(const nn::Var& windows) {
  if (windows.rank() == 2) return nn::reshape(windows, {1, windows.dim(0), windows.dim(1)});
  if (windows.rank() != 3) throw ShapeError("expected windows [B, T, L], got " + shape_to_string(windows.shape()));
  return windows;
}

std::size_t ConvBranchSpec::output_length(std::size_t length) const {
  std::size_t n = nn::conv1d_output_length(length, kernel, {stride, padding, 1});
  n = nn::maxpool1d_output_length(n, pool1_kernel, pool1_stride, pool1_padding);
  for (int i = 0; i < 2; ++i) n = nn::conv1d_output_length(n, inner_kernel, {1, inner_kernel / 2, 1});
  return nn::maxpool1d_output_length(n, pool2_kernel, pool2_stride, pool2_padding);
}

SceegConfig SceegConfig::full(std::size_t window_epochs) {
  SceegConfig cfg;
  cfg.window_epochs = window_epochs;
  return cfg;
}

SceegConfig SceegConfig::tiny(std::size_t window_epochs) {
  SceegConfig cfg;
  cfg.window_epochs = window_epochs;
  cfg.d_model = 32;
  cfg.channels1 = 8;
  cfg.channels2 = 16;
  cfg.recalibrate_reduction = 4;
  cfg.context_layers = 1;
  cfg.context_heads = 2;
  cfg.context_ffn = 32;
  cfg.temporal_heads = 4;
  cfg.temporal_ffn = 64;
  return cfg;
}

void SceegConfig::validate() const {
  auto fail = [](const std::string& m) { throw ModelError("sceeg config: " + m); };
  if (window_epochs == 0 || window_epochs > max_epochs) fail("window_epochs must lie in [1, max_epochs]");
  if (d_model == 0 || channels1 == 0 || channels2 == 0) fail("widths must be positive");
  if (context_heads == 0 || channels2 % context_heads != 0) fail("channels2 must be divisible by context_heads");
  if (temporal_heads == 0 || d_model % temporal_heads != 0) fail("d_model must be divisible by temporal_heads");
  if (recalibrate && (recalibrate_reduction == 0 || channels2 < recalibrate_reduction)) {
    fail("recalibrate_reduction must lie in [1, channels2]");
  }
  for (const ConvBranchSpec* b : {&fine, &coarse}) {
    if (b->stride == 0 || b->pool1_stride == 0 || b->pool2_stride == 0 || b->inner_kernel == 0) fail("zero stride or kernel");
    if (b->kernel > epoch_len + 2 * b->padding) fail("branch kernel longer than the padded epoch");
    try {
      if (b->output_length(epoch_len) == 0) fail("branch produces no tokens");
    } catch (const ShapeError& e) {
      fail(std::string("branch geometry: ") + e.what());
    }
  }
}

std::size_t SceegConfig::tokens_per_epoch() const {
  return fine.output_length(epoch_len) + coarse.output_length(epoch_len);
}

std::string sceeg_config_to_json(const SceegConfig& cfg) { return nlohmann::json(cfg).dump(2) + "\n"; }

SceegConfig sceeg_config_from_json(std::string_view text) {
  return detail::config_from_json(text, SceegConfig{}, "sceeg config");
}

SceegEncoder::Branch SceegEncoder::make_branch(const std::string& name, const ConvBranchSpec& spec, SeededRng& rng) {
  const std::size_t c1 = cfg_.channels1, c2 = cfg_.channels2;
  const nn::Conv1dSpec inner{1, spec.inner_kernel / 2, 1};
  Branch b;
  b.spec = spec;
  b.conv1 = nn::Conv1d(params_, name + ".conv1", 1, c1, spec.kernel, {spec.stride, spec.padding, 1}, rng, cfg_.conv_bias);
  b.conv2 = nn::Conv1d(params_, name + ".conv2", c1, c2, spec.inner_kernel, inner, rng, cfg_.conv_bias);
  b.conv3 = nn::Conv1d(params_, name + ".conv3", c2, c2, spec.inner_kernel, inner, rng, cfg_.conv_bias);
  if (cfg_.conv_norm) {
    b.norm1 = nn::ChannelNorm(params_, name + ".norm1", c1);
    b.norm2 = nn::ChannelNorm(params_, name + ".norm2", c2);
    b.norm3 = nn::ChannelNorm(params_, name + ".norm3", c2);
  }
  return b;
}

SceegEncoder::SceegEncoder(const SceegConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  SeededRng rng = SeededRng(seed).derive(0x5ee9);
  fine_ = make_branch("mrcnn.fine", cfg_.fine, rng);
  coarse_ = make_branch("mrcnn.coarse", cfg_.coarse, rng);
  const std::size_t c2 = cfg_.channels2;
  if (cfg_.recalibrate) {
    squeeze_ = nn::Linear(params_, "mrcnn.recal.squeeze", c2, c2 / cfg_.recalibrate_reduction, rng);
    excite_ = nn::Linear(params_, "mrcnn.recal.excite", c2 / cfg_.recalibrate_reduction, c2, rng);
  }
  const nn::BlockConfig ctx{c2, cfg_.context_heads, cfg_.context_ffn, cfg_.activation, nn::NormPlacement::kPre};
  for (std::size_t i = 0; i < cfg_.context_layers; ++i) {
    context_.emplace_back(params_, "context." + std::to_string(i), ctx, rng);
  }
  project_ = nn::Linear(params_, "project", c2, cfg_.d_model, rng, cfg_.conv_bias);
  if (cfg_.uses_temporal()) {
    positions_ = &params_.add_uniform("temporal.positions", {cfg_.max_epochs, cfg_.d_model}, cfg_.d_model, rng);
    const nn::BlockConfig tmp{cfg_.d_model, cfg_.temporal_heads, cfg_.temporal_ffn, cfg_.activation,
                              nn::NormPlacement::kPre};
    for (std::size_t i = 0; i < cfg_.temporal_layers; ++i) {
      temporal_.emplace_back(params_, "temporal." + std::to_string(i), tmp, rng);
    }
  }
  head_ = nn::Linear(params_, "head", cfg_.d_model, kNumStages, rng);
}

nn::Var SceegEncoder::run_branch(const Branch& b, const nn::Var& x) const {
  const auto stage = [&](const nn::Conv1d& conv, const nn::ChannelNorm& norm, const nn::Var& in) {
    nn::Var h = conv(in);
    if (cfg_.conv_norm) h = norm(h);
    return nn::activation(h, cfg_.activation);
  };
  const ConvBranchSpec& s = b.spec;
  nn::Var h = stage(b.conv1, b.norm1, x);
  h = nn::maxpool1d(h, s.pool1_kernel, s.pool1_stride, s.pool1_padding);
  h = stage(b.conv2, b.norm2, h);
  h = stage(b.conv3, b.norm3, h);
  return nn::maxpool1d(h, s.pool2_kernel, s.pool2_stride, s.pool2_padding);
}

nn::Var SceegEncoder::tokens(const nn::Var& epochs) const {
  if (epochs.rank() != 2 || epochs.dim(1) != cfg_.epoch_len) {
    throw ShapeError("sceeg encoder: expected epochs [N, " + std::to_string(cfg_.epoch_len) + "], got " +
                     shape_to_string(epochs.shape()));
  }
  const std::size_t n = epochs.dim(0);
  const nn::Var x = nn::reshape(epochs, {n, 1, cfg_.epoch_len});
  nn::Var maps = nn::concat({run_branch(fine_, x), run_branch(coarse_, x)}, 2);  // [N, C, tokens]
  if (cfg_.recalibrate) {
    // squeeze-and-excitation gate per channel
    const std::size_t c = cfg_.channels2, len = maps.dim(2);
    const nn::Var gate = nn::sigmoid(excite_(nn::relu(squeeze_(nn::mean_axis(maps, 2)))));
    maps = nn::reshape(nn::scale_leading(nn::reshape(maps, {n * c, len}), nn::reshape(gate, {n * c})), {n, c, len});
  }
  return nn::transpose_last2(maps);
}

nn::Var SceegEncoder::context(const nn::Var& tokens) const {
  nn::Var h = tokens;
  for (const auto& layer : context_) h = layer(h);
  return h;
}

nn::Var SceegEncoder::pool_project(const nn::Var& tokens) const { return project_(nn::mean_axis(tokens, 1)); }

nn::Var SceegEncoder::mrcnn_features(const nn::Var& epochs) const { return pool_project(tokens(epochs)); }

nn::Var SceegEncoder::epoch_features(const nn::Var& epochs) const { return pool_project(context(tokens(epochs))); }

StageOutput SceegEncoder::forward(const nn::Var& windows) const {
  const nn::Var w = as_batched(windows);
  const std::size_t b = w.dim(0), t = w.dim(1);
  if (w.dim(2) != cfg_.epoch_len) throw ShapeError("sceeg encoder: epoch length " + std::to_string(w.dim(2)));
  if (t == 0 || t > cfg_.max_epochs) throw ShapeError("sceeg encoder: window of " + std::to_string(t) + " epochs");
  if (!cfg_.uses_temporal() && t != 1) {
    throw ShapeError("sceeg encoder: single-epoch model given a window of " + std::to_string(t) + " epochs");
  }
  const std::size_t d = cfg_.d_model;
  nn::Var h = nn::reshape(epoch_features(nn::reshape(w, {b * t, cfg_.epoch_len})), {b, t, d});
  if (cfg_.uses_temporal()) {
    const nn::Var pos = nn::reshape(nn::slice(positions_->var(), 0, 0, t), {t * d});
    h = nn::reshape(nn::add_bias(nn::reshape(h, {b, t * d}), pos), {b, t, d});
    for (const auto& layer : temporal_) h = layer(h);
  }
  nn::Var probs = nn::softmax(head_(h));
  if (windows.rank() == 2) return {nn::reshape(h, {t, d}), nn::reshape(probs, {t, kNumStages})};
  return {h, probs};
}

nn::Checkpoint SceegEncoder::checkpoint() const {
  return nn::make_checkpoint(params_, {{"model", "sceeg"}, {"config", nlohmann::json(cfg_).dump()}});
}

SceegEncoder SceegEncoder::from_checkpoint(const nn::Checkpoint& ckpt) {
  const auto model = ckpt.meta.find("model");
  const auto config = ckpt.meta.find("config");
  if (model == ckpt.meta.end() || model->second != "sceeg" || config == ckpt.meta.end()) {
    throw ModelError("checkpoint does not hold an sceeg encoder");
  }
  SceegEncoder enc(sceeg_config_from_json(config->second), 0);
  try {
    nn::load_parameters(enc.params_, ckpt);
  } catch (const nn::CheckpointError& e) {
    throw ModelError(std::string("sceeg checkpoint: ") + e.what());
  }
  return enc;
}

}  // namespace sfus::models
