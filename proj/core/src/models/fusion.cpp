#include "sfus/models/fusion.hpp"

#include <cmath>

#include "json_config.hpp"
#include "sfus/metrics.hpp"

namespace sfus::models {

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(FusionConfig, d_model, blocks, heads, ffn, activation, state_size, expand,
                                   dt_rank, conv_kernel)

namespace {

void require_stochastic(const Tensor& p, const char* what) {
  if (p.rank() == 0 || p.shape().back() != kNumStages) {
    throw ShapeError(std::string(what) + ": expected [..., 4] probabilities, got " + shape_to_string(p.shape()));
  }
  for (std::size_t r = 0; r < p.size(); r += kNumStages) {
    double sum = 0.0;
    for (std::size_t c = 0; c < kNumStages; ++c) {
      if (!(p[r + c] >= 0.0)) throw std::invalid_argument(std::string(what) + ": negative or non-finite probability");
      sum += p[r + c];
    }
    if (std::abs(sum - 1.0) > 1e-6) throw std::invalid_argument(std::string(what) + ": row does not sum to 1");
  }
}

}  // namespace

Tensor score_fusion(const Tensor& p_ppg, const Tensor& p_sceeg, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("score_fusion: alpha must lie in [0, 1]");
  if (p_ppg.shape() != p_sceeg.shape()) throw ShapeError("score_fusion: probability shapes differ");
  require_stochastic(p_ppg, "score_fusion P_ppg");
  require_stochastic(p_sceeg, "score_fusion P_sceeg");
  Tensor out(p_ppg.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = alpha * p_ppg[i] + (1.0 - alpha) * p_sceeg[i];
  return out;
}

AlphaSearch grid_search_alpha(const Tensor& p_ppg, const Tensor& p_sceeg, std::span<const int> labels) {
  if (labels.empty()) throw std::invalid_argument("grid_search_alpha: empty validation set");
  if (p_ppg.size() != labels.size() * kNumStages) {
    throw ShapeError("grid_search_alpha: " + std::to_string(labels.size()) + " labels for probabilities " +
                     shape_to_string(p_ppg.shape()));
  }
  AlphaSearch out;
  double best = -2.0;
  for (std::size_t k = 0; k < kAlphaGridPoints; ++k) {
    const double alpha = static_cast<double>(k) / 10.0;
    const Tensor fused = score_fusion(p_ppg, p_sceeg, alpha);
    const double kappa = metrics::kappa(metrics::confusion(metrics::argmax_rows(fused.values()), labels));
    out.alphas[k] = alpha;
    out.kappas[k] = kappa;
    if (kappa > best) best = kappa, out.best_alpha = alpha;
  }
  return out;
}

std::string_view strategy_name(FusionStrategy s) {
  switch (s) {
    case FusionStrategy::kScore: return "score";
    case FusionStrategy::kCrossAttention: return "xattn";
    case FusionStrategy::kMamba: return "mamba";
  }
  return "?";
}

FusionStrategy parse_strategy(std::string_view name) {
  if (name == "score") return FusionStrategy::kScore;
  if (name == "xattn" || name == "cross-attention") return FusionStrategy::kCrossAttention;
  if (name == "mamba") return FusionStrategy::kMamba;
  throw ModelError("unknown fusion strategy '" + std::string(name) + "' (score|xattn|mamba)");
}

FusionConfig FusionConfig::full() { return {}; }

FusionConfig FusionConfig::tiny(std::size_t d_model) {
  FusionConfig cfg;
  cfg.d_model = d_model;
  cfg.heads = 4;
  cfg.ffn = 2 * d_model;
  cfg.state_size = 8;
  cfg.expand = 2;
  return cfg;
}

void FusionConfig::validate() const {
  auto fail = [](const std::string& m) { throw ModelError("fusion config: " + m); };
  if (d_model == 0 || heads == 0 || d_model % heads != 0) fail("d_model must be divisible by heads");
  if (blocks == 0) fail("need at least one cross-attention block");
  if (state_size == 0 || expand == 0 || conv_kernel == 0 || ffn == 0) fail("sizes must be positive");
}

std::string fusion_config_to_json(const FusionConfig& cfg) { return nlohmann::json(cfg).dump(2) + "\n"; }

FusionConfig fusion_config_from_json(std::string_view text) {
  return detail::config_from_json(text, FusionConfig{}, "fusion config");
}

MambaBlock::MambaBlock(nn::ParameterSet& ps, const std::string& name, const FusionConfig& cfg, SeededRng& rng)
    : norm_(ps, name + ".norm", cfg.d_model),
      in_proj_(ps, name + ".in_proj", cfg.d_model, 2 * cfg.inner(), rng, false),
      x_proj_(ps, name + ".x_proj", cfg.inner(), cfg.resolved_dt_rank() + 2 * cfg.state_size, rng, false),
      dt_proj_(ps, name + ".dt_proj", cfg.resolved_dt_rank(), cfg.inner(), rng),
      out_proj_(ps, name + ".out_proj", cfg.inner(), cfg.d_model, rng, false),
      inner_(cfg.inner()),
      state_(cfg.state_size),
      dt_rank_(cfg.resolved_dt_rank()) {
  conv_w_ = &ps.add_uniform(name + ".conv.weight", {inner_, cfg.conv_kernel}, cfg.conv_kernel, rng);
  conv_b_ = &ps.add_uniform(name + ".conv.bias", {inner_}, cfg.conv_kernel, rng);
  Tensor a_log({inner_, state_});
  for (std::size_t c = 0; c < inner_; ++c)
    for (std::size_t n = 0; n < state_; ++n) a_log.at(c, n) = std::log(static_cast<double>(n + 1));
  a_log_ = &ps.add(name + ".A_log", std::move(a_log));
  skip_ = &ps.add(name + ".D", Tensor({inner_}, 1.0));
  // step sizes start log-uniform in [1e-3, 1e-1]: bias = softplus^-1(dt)
  for (double& b : dt_proj_.bias()->value().values()) {
    const double dt = std::exp(rng.uniform(std::log(1e-3), std::log(1e-1)));
    b = dt + std::log(-std::expm1(-dt));
  }
}

nn::Var MambaBlock::operator()(const nn::Var& x) const {
  const nn::Var xz = in_proj_(norm_(x));
  nn::Var u = nn::slice(xz, 2, 0, inner_);
  const nn::Var z = nn::slice(xz, 2, inner_, inner_);
  u = nn::silu(nn::causal_depthwise_conv(u, conv_w_->var(), conv_b_->var()));
  const nn::Var proj = x_proj_(u);
  const nn::Var delta = nn::softplus(dt_proj_(nn::slice(proj, 2, 0, dt_rank_)));
  const nn::Var bm = nn::slice(proj, 2, dt_rank_, state_);
  const nn::Var cm = nn::slice(proj, 2, dt_rank_ + state_, state_);
  const nn::Var a = nn::scale(nn::exp(a_log_->var()), -1.0);
  nn::Var y = nn::add(nn::ssm_scan(u, delta, a, bm, cm), nn::mul_lastdim(u, skip_->var()));
  y = nn::mul(y, nn::silu(z));
  return out_proj_(y);
}

BidirectionalMamba::BidirectionalMamba(nn::ParameterSet& ps, const std::string& name, const FusionConfig& cfg,
                                       SeededRng& rng)
    : fwd_(ps, name + ".fwd", cfg, rng),
      bwd_(ps, name + ".bwd", cfg, rng),
      merge_(ps, name + ".merge", 2 * cfg.d_model, cfg.d_model, rng) {}

nn::Var BidirectionalMamba::backward_direction(const nn::Var& x) const {
  return nn::reverse_axis(bwd_(nn::reverse_axis(x, 1)), 1);
}

nn::Var BidirectionalMamba::operator()(const nn::Var& x) const {
  if (x.rank() != 3) throw ShapeError("bidirectional mamba: expected [B, T, d], got " + shape_to_string(x.shape()));
  return nn::add(x, merge_(nn::concat({fwd_(x), backward_direction(x)}, 2)));
}

FusionModel::FusionModel(FusionStrategy strategy, const FusionConfig& cfg, std::uint64_t seed)
    : strategy_(strategy), cfg_(cfg) {
  if (strategy == FusionStrategy::kScore) throw ModelError("score fusion has no learned model");
  cfg_.validate();
  SeededRng rng = SeededRng(seed).derive(0xf05e);
  const nn::BlockConfig block{cfg_.d_model, cfg_.heads, cfg_.ffn, cfg_.activation, nn::NormPlacement::kPre};
  for (std::size_t i = 0; i < cfg_.blocks; ++i) cross_.emplace_back(params_, "cross." + std::to_string(i), block, rng);
  concat_proj_ = nn::Linear(params_, "concat_proj", 2 * cfg_.d_model, cfg_.d_model, rng);
  // the head is drawn before the SSM so both strategies share it for a seed
  head_ = nn::Linear(params_, "head", cfg_.d_model, kNumStages, rng);
  if (strategy == FusionStrategy::kMamba) mamba_ = BidirectionalMamba(params_, "mamba", cfg_, rng);
}

nn::Var FusionModel::fused_features(const nn::Var& f_sceeg, const nn::Var& f_ppg) const {
  nn::Var a = as_batched(f_sceeg), b = as_batched(f_ppg);
  if (a.shape() != b.shape() || a.dim(2) != cfg_.d_model) {
    throw ShapeError("fusion: feature shapes " + shape_to_string(f_sceeg.shape()) + " and " +
                     shape_to_string(f_ppg.shape()) + " (d_model " + std::to_string(cfg_.d_model) + ")");
  }
  for (const auto& block : cross_) std::tie(a, b) = block(a, b);
  return concat_proj_(nn::concat({a, b}, 2));
}

const BidirectionalMamba& FusionModel::mamba() const {
  if (strategy_ != FusionStrategy::kMamba) throw ModelError("fusion model has no SSM stage");
  return mamba_;
}

StageOutput FusionModel::forward(const nn::Var& f_sceeg, const nn::Var& f_ppg) const {
  nn::Var h = fused_features(f_sceeg, f_ppg);
  if (strategy_ == FusionStrategy::kMamba) h = mamba_(h);
  nn::Var probs = nn::softmax(head_(h));
  if (f_sceeg.rank() == 2) {
    return {nn::reshape(h, {h.dim(1), h.dim(2)}), nn::reshape(probs, {probs.dim(1), kNumStages})};
  }
  return {h, probs};
}

nn::Checkpoint FusionModel::checkpoint(std::uint64_t sceeg_hash, std::uint64_t ppg_hash) const {
  return nn::make_checkpoint(params_, {{"model", "fusion"},
                                       {"strategy", std::string(strategy_name(strategy_))},
                                       {"config", nlohmann::json(cfg_).dump()},
                                       {"sceeg_hash", nn::hex64(sceeg_hash)},
                                       {"ppg_hash", nn::hex64(ppg_hash)}});
}

FusionModel FusionModel::from_checkpoint(const nn::Checkpoint& ckpt) {
  const auto model = ckpt.meta.find("model");
  const auto strategy = ckpt.meta.find("strategy");
  const auto config = ckpt.meta.find("config");
  if (model == ckpt.meta.end() || model->second != "fusion" || strategy == ckpt.meta.end() ||
      config == ckpt.meta.end()) {
    throw ModelError("checkpoint does not hold a learned fusion model");
  }
  FusionModel m(parse_strategy(strategy->second), fusion_config_from_json(config->second), 0);
  try {
    nn::load_parameters(m.params_, ckpt);
  } catch (const nn::CheckpointError& e) {
    throw ModelError(std::string("fusion checkpoint: ") + e.what());
  }
  return m;
}

EncoderHashes encoder_hashes(const nn::Checkpoint& ckpt) {
  const auto parse = [&](const char* key) {
    const auto it = ckpt.meta.find(key);
    if (it == ckpt.meta.end()) throw ModelError(std::string("fusion checkpoint lacks ") + key);
    try {
      std::size_t used = 0;
      const std::uint64_t v = std::stoull(it->second, &used, 16);
      if (used != it->second.size()) throw std::invalid_argument(it->second);
      return v;
    } catch (const std::exception&) {
      throw ModelError(std::string("fusion checkpoint: malformed ") + key);
    }
  };
  return {parse("sceeg_hash"), parse("ppg_hash")};
}

void verify_encoder_hashes(const nn::Checkpoint& ckpt, const EncoderHashes& actual) {
  const EncoderHashes stored = encoder_hashes(ckpt);
  if (stored.sceeg != actual.sceeg) {
    throw ModelError("scEEG encoder checkpoint " + nn::hex64(actual.sceeg) + " differs from the one this fusion model was trained on (" +
                     nn::hex64(stored.sceeg) + ")");
  }
  if (stored.ppg != actual.ppg) {
    throw ModelError("PPG encoder checkpoint " + nn::hex64(actual.ppg) + " differs from the one this fusion model was trained on (" +
                     nn::hex64(stored.ppg) + ")");
  }
}

nn::Checkpoint score_fusion_checkpoint(const AlphaSearch& search, const EncoderHashes& hashes) {
  nn::Checkpoint ckpt;
  ckpt.tensors.emplace_back("alpha", Tensor({1}, search.best_alpha));
  ckpt.tensors.emplace_back("val_kappa", Tensor({kAlphaGridPoints}, std::vector<double>(search.kappas.begin(), search.kappas.end())));
  ckpt.meta = {{"model", "fusion"},
               {"strategy", "score"},
               {"sceeg_hash", nn::hex64(hashes.sceeg)},
               {"ppg_hash", nn::hex64(hashes.ppg)}};
  return ckpt;
}

double score_fusion_alpha(const nn::Checkpoint& ckpt) {
  const auto strategy = ckpt.meta.find("strategy");
  const Tensor* alpha = ckpt.find("alpha");
  if (strategy == ckpt.meta.end() || strategy->second != "score" || alpha == nullptr || alpha->size() != 1) {
    throw ModelError("checkpoint does not hold a score-fusion weight");
  }
  const double a = (*alpha)[0];
  if (!(a >= 0.0 && a <= 1.0)) throw ModelError("score-fusion weight outside [0, 1]");
  // stored as float32; the weight always sits on the tenth grid
  return std::round(a * 10.0) / 10.0;
}

AlphaSearch score_fusion_search(const nn::Checkpoint& ckpt) {
  AlphaSearch s;
  s.best_alpha = score_fusion_alpha(ckpt);
  const Tensor* kappas = ckpt.find("val_kappa");
  if (kappas == nullptr || kappas->size() != kAlphaGridPoints) throw ModelError("score-fusion checkpoint has no kappa grid");
  for (std::size_t k = 0; k < kAlphaGridPoints; ++k) {
    s.alphas[k] = static_cast<double>(k) / 10.0;
    s.kappas[k] = (*kappas)[k];
  }
  return s;
}

}  // namespace sfus::models
