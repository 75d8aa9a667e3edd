#include "sfus/models/ppg_encoder.hpp"

#include <cmath>

#include "json_config.hpp"

namespace sfus::models {

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(PpgConfig, epoch_len, window_epochs, depth, channels, kernel, cross_blocks,
                                   cross_heads, cross_ffn, d_model, temporal_kernel, activation)

std::size_t ppg_depth_for_window(std::size_t window_epochs) {
  for (const auto& [label, epochs] : kWindowLengths) {
    if (epochs != window_epochs) continue;
    switch (epochs) {
      case 1: return 4;
      case 2: return 5;
      case 6:
      case 10: return 6;
      case 20: return 7;
      default: return 8;
    }
  }
  throw ModelError("no PPG depth defined for a window of " + std::to_string(window_epochs) +
                   " epochs; set depth explicitly");
}

PpgConfig PpgConfig::full(std::size_t window_epochs) {
  PpgConfig cfg;
  cfg.window_epochs = window_epochs;
  return cfg;
}

PpgConfig PpgConfig::tiny(std::size_t window_epochs) {
  PpgConfig cfg;
  cfg.window_epochs = window_epochs;
  cfg.channels = 16;
  cfg.cross_blocks = 1;
  cfg.cross_heads = 2;
  cfg.cross_ffn = 32;
  cfg.d_model = 32;
  return cfg;
}

std::size_t PpgConfig::resolved_depth() const { return depth != 0 ? depth : ppg_depth_for_window(window_epochs); }

void PpgConfig::validate() const {
  auto fail = [](const std::string& m) { throw ModelError("ppg config: " + m); };
  if (window_epochs == 0) fail("window_epochs must be positive");
  const std::size_t d = resolved_depth();
  if (d == 0 || d >= 31 || epoch_len % (std::size_t{1} << d) != 0) {
    fail("epoch_len must be divisible by 2^depth");
  }
  if (channels == 0 || d_model == 0 || kernel == 0 || kernel % 2 == 0) fail("kernel must be odd and widths positive");
  if (temporal_kernel == 0 || temporal_kernel % 2 == 0) fail("temporal_kernel must be odd");
  if (cross_heads == 0 || channels % cross_heads != 0) fail("channels must be divisible by cross_heads");
}

std::string ppg_config_to_json(const PpgConfig& cfg) { return nlohmann::json(cfg).dump(2) + "\n"; }

PpgConfig ppg_config_from_json(std::string_view text) {
  return detail::config_from_json(text, PpgConfig{}, "ppg config");
}

Tensor augment_ppg(const Tensor& windows) {
  if (windows.rank() != 3) throw ShapeError("augment_ppg: expected [B, T, L], got " + shape_to_string(windows.shape()));
  Tensor out(windows.shape());
  const std::size_t n = windows.dim(1) * windows.dim(2);
  for (std::size_t b = 0; b < windows.dim(0); ++b) {
    const double* x = windows.data() + b * n;
    double* y = out.data() + b * n;
    for (std::size_t i = 1; i < n; ++i) y[i] = x[i] - x[i - 1];
    y[0] = n > 1 ? y[1] : 0.0;
    double mean = 0.0, peak = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += y[i], peak = std::max(peak, std::abs(x[i]));
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) var += (y[i] - mean) * (y[i] - mean);
    var /= static_cast<double>(n);
    // differences of a ramp carry rounding noise of order eps * peak
    if (!(std::sqrt(var) > 1e-9 * peak) || var == 0.0) {
      std::fill(y, y + n, 0.0);
      continue;
    }
    const double inv = 1.0 / std::sqrt(var);
    for (std::size_t i = 0; i < n; ++i) y[i] = (y[i] - mean) * inv;
  }
  return out;
}

PpgEncoder::Stream PpgEncoder::make_stream(const std::string& name, SeededRng& rng) {
  Stream s;
  const std::size_t c = cfg_.channels, k = cfg_.kernel;
  for (std::size_t i = 0; i < cfg_.resolved_depth(); ++i) {
    const std::string p = name + "." + std::to_string(i);
    const std::size_t cin = i == 0 ? 1 : c;
    ResidualLayer layer;
    layer.down = nn::Conv1d(params_, p + ".down", cin, c, k, {2, k / 2, 1}, rng);
    layer.norm = nn::ChannelNorm(params_, p + ".norm", c);
    layer.conv = nn::Conv1d(params_, p + ".conv", c, c, k, {1, k / 2, 1}, rng);
    layer.skip = nn::Conv1d(params_, p + ".skip", cin, c, 1, {2, 0, 1}, rng);
    s.layers.push_back(std::move(layer));
  }
  return s;
}

PpgEncoder::PpgEncoder(const PpgConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  SeededRng rng = SeededRng(seed).derive(0x9b9);
  raw_ = make_stream("stream.raw", rng);
  aug_ = make_stream("stream.aug", rng);
  const nn::BlockConfig block{cfg_.channels, cfg_.cross_heads, cfg_.cross_ffn, cfg_.activation, nn::NormPlacement::kPre};
  for (std::size_t i = 0; i < cfg_.cross_blocks; ++i) cross_.emplace_back(params_, "cross." + std::to_string(i), block, rng);
  gate_ = nn::Linear(params_, "gate", 2 * cfg_.channels, 1, rng);
  project_ = nn::Linear(params_, "project", cfg_.channels, cfg_.d_model, rng);
  const std::size_t d = cfg_.d_model, k = cfg_.temporal_kernel;
  temporal1_ = nn::Conv1d(params_, "temporal.conv1", d, d, k, {1, k / 2, 1}, rng);
  temporal_norm1_ = nn::ChannelNorm(params_, "temporal.norm1", d);
  temporal2_ = nn::Conv1d(params_, "temporal.conv2", d, d, k, {1, 2 * (k / 2), 2}, rng);
  temporal_norm2_ = nn::ChannelNorm(params_, "temporal.norm2", d);
  head_ = nn::Linear(params_, "head", d, kNumStages, rng);
}

void PpgEncoder::override_gate(std::optional<double> w_raw) {
  if (w_raw && !(*w_raw >= 0.0 && *w_raw <= 1.0)) throw ModelError("gate override must lie in [0, 1]");
  gate_override_ = w_raw;
}

nn::Var PpgEncoder::run_stream(const Stream& s, const nn::Var& x) const {
  nn::Var h = x;
  for (const auto& layer : s.layers) {
    const nn::Var inner = layer.conv(nn::silu(layer.norm(layer.down(h))));
    h = nn::add(inner, layer.skip(h));
  }
  return nn::transpose_last2(h);
}

nn::Var PpgEncoder::encode_stream(const std::string& stream, const nn::Var& signal) const {
  if (stream == "raw") return run_stream(raw_, signal);
  if (stream == "aug") return run_stream(aug_, signal);
  throw ModelError("unknown PPG stream '" + stream + "'");
}

std::pair<nn::Var, nn::Var> PpgEncoder::cross_stream(std::size_t block, const nn::Var& raw, const nn::Var& aug) const {
  return cross_.at(block)(raw, aug);
}

nn::Var PpgEncoder::gate(const nn::Var& raw_tokens, const nn::Var& aug_tokens) const {
  const nn::Var pooled = nn::concat({nn::mean_axis(raw_tokens, 1), nn::mean_axis(aug_tokens, 1)}, 1);
  return nn::reshape(nn::sigmoid(gate_(pooled)), {raw_tokens.dim(0)});
}

StageOutput PpgEncoder::forward(const nn::Var& windows) const {
  const nn::Var w = as_batched(windows);
  const std::size_t b = w.dim(0), t = w.dim(1), len = cfg_.epoch_len;
  if (w.dim(2) != len) throw ShapeError("ppg encoder: epoch length " + std::to_string(w.dim(2)));
  const nn::Var raw_signal = nn::reshape(w, {b, 1, t * len});
  const nn::Var aug_signal = nn::Var::constant(augment_ppg(w.value()).reshaped({b, 1, t * len}));
  nn::Var raw = run_stream(raw_, raw_signal);
  nn::Var aug = run_stream(aug_, aug_signal);
  for (const auto& block : cross_) std::tie(raw, aug) = block(raw, aug);

  nn::Var mixed;
  if (gate_override_) {
    const double g = *gate_override_;
    if (g == 1.0) {
      mixed = raw;
    } else if (g == 0.0) {
      mixed = aug;
    } else {
      mixed = nn::add(nn::scale(raw, g), nn::scale(aug, 1.0 - g));
    }
  } else {
    const nn::Var g = gate(raw, aug);
    mixed = nn::add(nn::scale_leading(raw, g), nn::scale_leading(aug, nn::add_scalar(nn::scale(g, -1.0), 1.0)));
  }

  const std::size_t per_epoch = cfg_.tokens_per_epoch(), c = cfg_.channels, d = cfg_.d_model;
  const nn::Var pooled = nn::mean_axis(nn::reshape(mixed, {b * t, per_epoch, c}), 1);
  nn::Var h = nn::transpose_last2(nn::reshape(project_(pooled), {b, t, d}));  // [B, d, T]
  h = nn::add(h, nn::activation(temporal_norm1_(temporal1_(h)), cfg_.activation));
  h = nn::add(h, nn::activation(temporal_norm2_(temporal2_(h)), cfg_.activation));
  h = nn::transpose_last2(h);
  nn::Var probs = nn::softmax(head_(h));
  if (windows.rank() == 2) return {nn::reshape(h, {t, d}), nn::reshape(probs, {t, kNumStages})};
  return {h, probs};
}

nn::Checkpoint PpgEncoder::checkpoint() const {
  return nn::make_checkpoint(params_, {{"model", "ppg"}, {"config", nlohmann::json(cfg_).dump()}});
}

PpgEncoder PpgEncoder::from_checkpoint(const nn::Checkpoint& ckpt) {
  const auto model = ckpt.meta.find("model");
  const auto config = ckpt.meta.find("config");
  if (model == ckpt.meta.end() || model->second != "ppg" || config == ckpt.meta.end()) {
    throw ModelError("checkpoint does not hold a ppg encoder");
  }
  PpgEncoder enc(ppg_config_from_json(config->second), 0);
  try {
    nn::load_parameters(enc.params_, ckpt);
  } catch (const nn::CheckpointError& e) {
    throw ModelError(std::string("ppg checkpoint: ") + e.what());
  }
  return enc;
}

}  // namespace sfus::models
