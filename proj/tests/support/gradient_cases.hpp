#pragma once

#include <functional>
#include <memory>
#include <ostream>
#include <vector>

#include "sfus/models/fusion.hpp"
#include "sfus/models/ppg_encoder.hpp"
#include "sfus/models/sceeg_encoder.hpp"
#include "sfus/nn/layers.hpp"
#include "sfus/nn/ops.hpp"
#include "test_support.hpp"

// Finite-difference cases shared by the unit and acceptance suites.
namespace sfus::testing {

struct OpCase {
  const char* name;
  /// Registers parameters in `ps` and returns the loss closure.
  std::function<std::function<nn::Var()>(nn::ParameterSet& ps, SeededRng& rng)> build;
};

inline void PrintTo(const OpCase& c, std::ostream* os) { *os << c.name; }

inline std::size_t draw(SeededRng& rng, std::size_t lo, std::size_t hi) {
  return lo + static_cast<std::size_t>(rng.below(hi - lo + 1));
}

inline std::vector<OpCase> op_cases() {
  using namespace sfus::nn;
  return {
      {"add_sub_mul", [](ParameterSet& ps, SeededRng& rng) {
      Shape s{draw(rng, 1, 4), draw(rng, 1, 5)};
      Var a = ps.add("a", random_tensor(s, rng)).var();
      Var b = ps.add("b", random_tensor(s, rng)).var();
      return std::function<Var()>([=] { return weighted_sum(mul(add(a, b), sub(a, scale(b, 0.3)))); });
    }},
      {"broadcast", [](ParameterSet& ps, SeededRng& rng) {
      const std::size_t b = draw(rng, 1, 3), n = draw(rng, 1, 5);
      Var x = ps.add("x", random_tensor({b, 2, n}, rng)).var();
      Var v = ps.add("v", random_tensor({n}, rng)).var();
      Var s = ps.add("s", random_tensor({b}, rng)).var();
      return std::function<Var()>(
          [=] { return weighted_sum(scale_leading(mul_lastdim(add_bias(x, v), v), s)); });
    }},
      {"matmul", [](ParameterSet& ps, SeededRng& rng) {
      const std::size_t bt = draw(rng, 1, 3), m = draw(rng, 1, 4), k = draw(rng, 1, 5),
                        n = draw(rng, 1, 4);
      Var a = ps.add("a", random_tensor({bt, m, k}, rng)).var();
      Var b = ps.add("b", random_tensor({bt, k, n}, rng)).var();
      Var w = ps.add("w", random_tensor({k, n}, rng)).var();
      Var c = ps.add("c", random_tensor({bt, n, k}, rng)).var();
      return std::function<Var()>([=] {
        return add(weighted_sum(matmul(a, b)),
                   add(weighted_sum(matmul(a, w)), weighted_sum(matmul_nt(a, c))));
      });
    }},
      {"linear", [](ParameterSet& ps, SeededRng& rng) {
      const std::size_t in = draw(rng, 1, 6), out = draw(rng, 1, 5);
      Var x = ps.add("x", random_tensor({draw(rng, 1, 3), draw(rng, 1, 4), in}, rng)).var();
      Var w = ps.add("w", random_tensor({in, out}, rng)).var();
      Var b = ps.add("b", random_tensor({out}, rng)).var();
      return std::function<Var()>([=] { return weighted_sum(linear(x, w, b)); });
    }},
      {"conv1d", [](ParameterSet& ps, SeededRng& rng) {
      const std::size_t cin = draw(rng, 1, 3), cout = draw(rng, 1, 3), k = draw(rng, 1, 4);
      Conv1dSpec spec{.stride = draw(rng, 1, 3), .padding = draw(rng, 0, 2), .dilation = draw(rng, 1, 2)};
      const std::size_t len = draw(rng, 8, 14);
      Var x = ps.add("x", random_tensor({draw(rng, 1, 2), cin, len}, rng)).var();
      Var w = ps.add("w", random_tensor({cout, cin, k}, rng)).var();
      Var b = ps.add("b", random_tensor({cout}, rng)).var();
      return std::function<Var()>([=] { return weighted_sum(conv1d(x, w, b, spec)); });
    }},
      {"maxpool", [](ParameterSet& ps, SeededRng& rng) {
      const std::size_t k = draw(rng, 2, 4);
      Var x = ps.add("x", random_tensor({draw(rng, 1, 2), draw(rng, 1, 3), draw(rng, 6, 12)}, rng)).var();
      const std::size_t stride = draw(rng, 1, 3), pad = draw(rng, 0, k / 2);
      return std::function<Var()>([=] { return weighted_sum(maxpool1d(x, k, stride, pad)); });
    }},
      {"causal_conv", [](ParameterSet& ps, SeededRng& rng) {
      const std::size_t c = draw(rng, 1, 4), k = draw(rng, 1, 4);
      Var x = ps.add("x", random_tensor({draw(rng, 1, 2), draw(rng, 1, 6), c}, rng)).var();
      Var w = ps.add("w", random_tensor({c, k}, rng)).var();
      Var b = ps.add("b", random_tensor({c}, rng)).var();
      return std::function<Var()>([=] { return weighted_sum(causal_depthwise_conv(x, w, b)); });
    }},
      {"norms", [](ParameterSet& ps, SeededRng& rng) {
      const std::size_t c = draw(rng, 2, 5), l = draw(rng, 1, 4), n = draw(rng, 1, 2);
      Var x = ps.add("x", random_tensor({n, c, l}, rng, -2, 2)).var();
      Var g = ps.add("g", random_tensor({c}, rng)).var();
      Var b = ps.add("b", random_tensor({c}, rng)).var();
      Var g2 = ps.add("g2", random_tensor({l}, rng)).var();
      Var b2 = ps.add("b2", random_tensor({l}, rng)).var();
      return std::function<Var()>([=] {
        return add(weighted_sum(channel_norm(x, g, b)), weighted_sum(layer_norm(x, g2, b2, 1e-5)));
      });
    }},
      {"activations", [](ParameterSet& ps, SeededRng& rng) {
      Shape s{draw(rng, 1, 4), draw(rng, 2, 6)};
      Tensor init = random_tensor(s, rng, -3, 3);
      // keep relu away from its kink
      for (double& v : init.values()) {
        if (std::abs(v) < 0.05) v = 0.1;
      }
      Var x = ps.add("x", init).var();
      return std::function<Var()>([=] {
        Var acc = weighted_sum(softmax(x), 1);
        acc = add(acc, weighted_sum(relu(x), 2));
        acc = add(acc, weighted_sum(gelu(x), 3));
        acc = add(acc, weighted_sum(silu(x), 4));
        acc = add(acc, weighted_sum(sigmoid(x), 5));
        acc = add(acc, weighted_sum(softplus(x), 6));
        return add(acc, weighted_sum(exp(scale(x, 0.5)), 7));
      });
    }},
      {"plumbing", [](ParameterSet& ps, SeededRng& rng) {
      const std::size_t heads = draw(rng, 1, 3), dh = draw(rng, 1, 3), t = draw(rng, 1, 4);
      Var x = ps.add("x", random_tensor({2, t, heads * dh}, rng)).var();
      Var y = ps.add("y", random_tensor({2, t, 3}, rng)).var();
      return std::function<Var()>([=] {
        Var cat = concat({x, y}, 2);
        Var acc = weighted_sum(slice(cat, 2, 1, heads * dh + 1), 1);
        acc = add(acc, weighted_sum(mean_axis(reverse_axis(cat, 1), 1), 2));
        acc = add(acc, weighted_sum(transpose_last2(reshape(x, {2 * t, heads * dh})), 3));
        acc = add(acc, weighted_sum(merge_heads(split_heads(x, heads), heads), 4));
        return add(acc, mean_all(y));
      });
    }},
      {"ssm_scan", [](ParameterSet& ps, SeededRng& rng) {
      const std::size_t b = draw(rng, 1, 2), t = draw(rng, 1, 6), c = draw(rng, 1, 3),
                        n = draw(rng, 1, 4);
      Var u = ps.add("u", random_tensor({b, t, c}, rng)).var();
      Var d = ps.add("d", random_tensor({b, t, c}, rng, 0.05, 1.0)).var();
      Var a = ps.add("a", random_tensor({c, n}, rng, -2.0, -0.1)).var();
      Var bm = ps.add("bm", random_tensor({b, t, n}, rng)).var();
      Var cm = ps.add("cm", random_tensor({b, t, n}, rng)).var();
      return std::function<Var()>([=] { return weighted_sum(ssm_scan(u, d, a, bm, cm)); });
    }},
      {"focal", [](ParameterSet& ps, SeededRng& rng) {
      const std::size_t rows = draw(rng, 1, 6);
      Var logits = ps.add("logits", random_tensor({rows, 4}, rng, -2, 2)).var();
      std::vector<int> targets(rows);
      for (int& t : targets) t = static_cast<int>(rng.below(4));
      const double gamma = rng.uniform() < 0.5 ? 2.0 : 0.0;
      return std::function<Var()>([=] { return focal_loss(softmax(logits), targets, gamma); });
    }},
      {"blocks", [](ParameterSet& ps, SeededRng& rng) {
      const std::size_t heads = draw(rng, 1, 2), d = heads * draw(rng, 1, 3), t = draw(rng, 1, 4);
      BlockConfig cfg{.d = d, .heads = heads, .ffn_hidden = 3,
                      .norm = rng.uniform() < 0.5 ? NormPlacement::kPre : NormPlacement::kPost};
      auto layer = std::make_shared<TransformerLayer>(ps, "self", cfg, rng);
      auto pair = std::make_shared<CrossAttentionPair>(ps, "cross", cfg, rng);
      Var x = ps.add("x", random_tensor({2, t, d}, rng)).var();
      Var y = ps.add("y", random_tensor({2, t, d}, rng)).var();
      return std::function<Var()>([=] {
        auto [a, b] = (*pair)(x, y);
        return add(weighted_sum((*layer)(a), 1), weighted_sum(b, 2));
      });
    }},
  };
}

/// Worst relative error of `c` over `shapes` random draws.
inline GradCheckResult run_op_case(const OpCase& c, int shapes = 10) {
  SeededRng rng(std::hash<std::string>{}(c.name));
  GradCheckResult worst;
  for (int trial = 0; trial < shapes; ++trial) {
    nn::ParameterSet ps;
    const auto loss = c.build(ps, rng);
    const GradCheckResult r = grad_check(ps, loss);
    worst.max_rel_error = std::max(worst.max_rel_error, r.max_rel_error);
    worst.checked += r.checked;
  }
  return worst;
}

// Small enough for an exhaustive finite-difference sweep: 300-sample epochs, d = 32.
inline models::SceegConfig sceeg_grad_config() {
  models::SceegConfig cfg;
  cfg.epoch_len = 300;
  cfg.window_epochs = 2;
  cfg.d_model = 32;
  cfg.channels1 = 4;
  cfg.channels2 = 8;
  cfg.fine = {8, 2, 4, 4, 2, 2, 3, 4, 4, 2};
  cfg.coarse = {40, 5, 20, 4, 2, 2, 3, 2, 2, 1};
  cfg.recalibrate_reduction = 4;
  cfg.context_layers = 1;
  cfg.context_heads = 2;
  cfg.context_ffn = 8;
  cfg.temporal_heads = 4;
  cfg.temporal_ffn = 16;
  cfg.max_epochs = 4;
  return cfg;
}

inline models::PpgConfig ppg_grad_config() {
  models::PpgConfig cfg;
  cfg.epoch_len = 64;
  cfg.window_epochs = 2;
  cfg.depth = 2;
  cfg.channels = 4;
  cfg.kernel = 3;
  cfg.cross_blocks = 1;
  cfg.cross_heads = 2;
  cfg.cross_ffn = 8;
  cfg.d_model = 8;
  return cfg;
}

inline models::FusionConfig fusion_grad_config() {
  models::FusionConfig cfg = models::FusionConfig::tiny(8);
  cfg.heads = 2;
  cfg.ffn = 16;
  cfg.state_size = 4;
  return cfg;
}

/// Exhaustive checks over every parameter of a tiny model.
inline GradCheckResult sceeg_model_check() {
  models::SceegEncoder enc(sceeg_grad_config(), 17);
  SeededRng rng(18);
  const nn::Var x = nn::Var::constant(random_tensor({2, 300}, rng, -2.0, 2.0));
  return grad_check(enc.params(), [&] { return weighted_sum(enc.forward(x).probs); });
}

inline GradCheckResult ppg_model_check() {
  models::PpgEncoder enc(ppg_grad_config(), 11);
  SeededRng rng(12);
  const nn::Var x = nn::Var::constant(random_tensor({2, 2, 64}, rng, -2.0, 2.0));
  return grad_check(enc.params(), [&] { return weighted_sum(enc.forward(x).probs); });
}

inline GradCheckResult fusion_model_check(models::FusionStrategy s) {
  models::FusionModel m(s, fusion_grad_config(), 19);
  SeededRng rng(20);
  const nn::Var fe = nn::Var::constant(random_tensor({2, 3, 8}, rng));
  const nn::Var fp = nn::Var::constant(random_tensor({2, 3, 8}, rng));
  return grad_check(m.params(), [&] { return weighted_sum(m.forward(fe, fp).probs); });
}

}  // namespace sfus::testing
