#include "sfus/train/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <nlohmann/json.hpp>
#include <numeric>
#include <sstream>

#include "../models/json_config.hpp"
#include "sfus/metrics.hpp"
#include "sfus/nn/ops.hpp"
#include "sfus/rng.hpp"

namespace sfus::train {

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{{"learning_rate", c.learning_rate}, {"epochs", c.epochs},   {"batch_size", c.batch_size},
                     {"focal_gamma", c.focal_gamma},     {"patience", c.patience}, {"seed", c.seed},
                     {"freeze", c.freeze},               {"beta1", c.beta1},       {"beta2", c.beta2},
                     {"adam_eps", c.adam_eps}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  j.at("learning_rate").get_to(c.learning_rate);
  j.at("epochs").get_to(c.epochs);
  j.at("batch_size").get_to(c.batch_size);
  j.at("focal_gamma").get_to(c.focal_gamma);
  j.at("patience").get_to(c.patience);
  j.at("seed").get_to(c.seed);
  j.at("freeze").get_to(c.freeze);
  j.at("beta1").get_to(c.beta1);
  j.at("beta2").get_to(c.beta2);
  j.at("adam_eps").get_to(c.adam_eps);
}

TrainConfig TrainConfig::fine_tune() {
  TrainConfig c;
  c.learning_rate = 1e-5;
  c.patience = 5;
  return c;
}

TrainConfig TrainConfig::tiny_encoder() {
  TrainConfig c;
  c.learning_rate = 1e-3;
  c.epochs = 4;
  c.patience = 2;
  return c;
}

void TrainConfig::validate() const {
  if (!std::isfinite(learning_rate) || learning_rate < 0.0) throw std::invalid_argument("train config: learning_rate must be >= 0");
  if (epochs == 0) throw std::invalid_argument("train config: epochs must be >= 1");
  if (batch_size == 0) throw std::invalid_argument("train config: batch_size must be >= 1");
  if (patience == 0) throw std::invalid_argument("train config: patience must be >= 1");
  if (!(focal_gamma >= 0.0)) throw std::invalid_argument("train config: focal_gamma must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) throw std::invalid_argument("train config: betas must lie in [0, 1)");
  if (!(adam_eps > 0.0)) throw std::invalid_argument("train config: adam_eps must be positive");
}

bool TrainConfig::is_frozen(std::string_view name) const {
  return std::any_of(freeze.begin(), freeze.end(), [&](const std::string& p) { return name.starts_with(p); });
}

std::string train_config_to_json(const TrainConfig& cfg) { return nlohmann::json(cfg).dump(2) + "\n"; }

TrainConfig train_config_from_json(std::string_view text, const TrainConfig& defaults) {
  return models::detail::config_from_json(text, defaults, "train config");
}

bool EpochRecord::same_numbers(const EpochRecord& o) const {
  return epoch == o.epoch && steps == o.steps && train_loss == o.train_loss && val_kappa == o.val_kappa &&
         val_accuracy == o.val_accuracy && best == o.best;
}

const EpochRecord& TrainLog::best() const {
  if (best_epoch == 0 || best_epoch > epochs.size()) throw std::logic_error("train log has no best epoch");
  return epochs[best_epoch - 1];
}

std::string TrainLog::to_jsonl(bool with_wall) const {
  std::ostringstream out;
  for (const EpochRecord& r : epochs) {
    nlohmann::ordered_json j{{"epoch", r.epoch},         {"steps", r.steps},
                             {"train_loss", r.train_loss}, {"val_kappa", r.val_kappa},
                             {"val_acc", r.val_accuracy},  {"best", r.best}};
    if (with_wall) j["wall_ms"] = r.wall_ms;
    out << j.dump() << '\n';
  }
  nlohmann::ordered_json tail{{"stop", stop_reason}, {"best_epoch", best_epoch}};
  out << tail.dump() << '\n';
  return out.str();
}

TrainLog TrainLog::from_jsonl(std::string_view text) {
  TrainLog log;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    if (j.contains("stop")) {
      log.stop_reason = j.at("stop").get<std::string>();
      log.best_epoch = j.at("best_epoch").get<std::size_t>();
      continue;
    }
    EpochRecord r;
    r.epoch = j.at("epoch").get<std::size_t>();
    r.steps = j.at("steps").get<std::size_t>();
    r.train_loss = j.at("train_loss").get<double>();
    r.val_kappa = j.at("val_kappa").get<double>();
    r.val_accuracy = j.at("val_acc").get<double>();
    r.best = j.at("best").get<bool>();
    r.wall_ms = j.value("wall_ms", 0.0);
    log.epochs.push_back(r);
  }
  return log;
}

bool TrainLog::same_numbers(const TrainLog& o) const {
  if (epochs.size() != o.epochs.size() || best_epoch != o.best_epoch || stop_reason != o.stop_reason) return false;
  for (std::size_t i = 0; i < epochs.size(); ++i) {
    if (!epochs[i].same_numbers(o.epochs[i])) return false;
  }
  return true;
}

SequenceDataset SequenceDataset::gather(std::span<const std::size_t> rows) const {
  SequenceDataset out;
  const std::size_t t_len = window_epochs();
  for (const Tensor& in : inputs) {
    Shape shape = in.shape();
    const std::size_t row = in.size() / shape[0];
    shape[0] = rows.size();
    Tensor picked(shape);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i] >= size()) throw std::out_of_range("dataset gather: row out of range");
      std::copy_n(in.data() + rows[i] * row, row, picked.data() + i * row);
    }
    out.inputs.push_back(std::move(picked));
  }
  out.labels.reserve(rows.size() * t_len);
  for (std::size_t r : rows) {
    out.labels.insert(out.labels.end(), labels.begin() + static_cast<std::ptrdiff_t>(r * t_len),
                      labels.begin() + static_cast<std::ptrdiff_t>((r + 1) * t_len));
    if (!origins.empty()) out.origins.push_back(origins[r]);
  }
  return out;
}

SequenceDataset SequenceDataset::slice(std::size_t first, std::size_t count) const {
  std::vector<std::size_t> rows(count);
  std::iota(rows.begin(), rows.end(), first);
  return gather(rows);
}

void SequenceDataset::validate() const {
  if (inputs.empty()) throw std::invalid_argument("dataset: no inputs");
  for (const Tensor& in : inputs) {
    if (in.rank() < 2 || in.dim(0) != size() || in.dim(1) != window_epochs()) {
      throw std::invalid_argument("dataset: every input must be [N, T, ...] with shared N and T");
    }
  }
  if (labels.size() != size() * window_epochs()) throw std::invalid_argument("dataset: labels must hold N * T entries");
  for (int l : labels) {
    if (l < 0 || l >= kNumStages) throw std::invalid_argument("dataset: label outside [0, 4)");
  }
  if (!origins.empty() && origins.size() != size()) throw std::invalid_argument("dataset: origins must be empty or N long");
}

Adam::Adam(std::vector<nn::Parameter*> params, double lr, double beta1, double beta2, double eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const nn::Parameter* p : params_) {
    m_.emplace_back(p->value().shape(), 0.0);
    v_.emplace_back(p->value().shape(), 0.0);
  }
}

void Adam::step() {
  ++steps_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(steps_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    nn::Parameter& p = *params_[k];
    if (!p.has_grad()) continue;
    const std::span<const double> g = p.grad().values();
    const std::span<double> w = p.value().values();
    double* m = m_[k].data();
    double* v = v_[k].data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
      w[i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
    }
  }
}

namespace {

std::vector<nn::Var> constants(const SequenceDataset& batch) {
  std::vector<nn::Var> vars;
  for (const Tensor& t : batch.inputs) vars.push_back(nn::Var::constant(t));
  return vars;
}

nn::Var flat_probs(const nn::Var& probs) {
  if (probs.rank() != 3 || probs.dim(2) != kNumStages) {
    throw ShapeError("forward must return [B, T, 4], got " + shape_to_string(probs.shape()));
  }
  return nn::reshape(probs, {probs.dim(0) * probs.dim(1), kNumStages});
}

}  // namespace

Tensor predict(const ForwardFn& forward, const SequenceDataset& data, std::size_t batch_size) {
  data.validate();
  nn::NoGradGuard no_grad;
  Tensor out({data.size() * data.window_epochs(), kNumStages});
  std::size_t row = 0;
  for (std::size_t first = 0; first < data.size(); first += batch_size) {
    const SequenceDataset batch = data.slice(first, std::min(batch_size, data.size() - first));
    const nn::Var probs = flat_probs(forward(constants(batch)));
    std::copy(probs.value().values().begin(), probs.value().values().end(), out.data() + row * kNumStages);
    row += probs.dim(0);
  }
  return out;
}

TrainLog train(nn::ParameterSet& params, const ForwardFn& forward, const SequenceDataset& train_set,
               const SequenceDataset& val_set, const TrainConfig& cfg) {
  cfg.validate();
  train_set.validate();
  val_set.validate();
  if (train_set.size() == 0 || val_set.size() == 0) throw std::invalid_argument("train: empty train or validation set");

  std::vector<nn::Parameter*> trainable;
  for (nn::Parameter* p : params.all()) {
    if (!cfg.is_frozen(p->name())) trainable.push_back(p);
  }
  Adam adam(trainable, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.adam_eps);
  const SeededRng shuffle_rng = SeededRng(cfg.seed).derive(0x7a1);

  TrainLog log;
  double best_kappa = -std::numeric_limits<double>::infinity();
  std::vector<Tensor> best_values = params.snapshot();
  std::size_t since_best = 0;
  std::vector<std::size_t> order(train_set.size());

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    std::iota(order.begin(), order.end(), std::size_t{0});
    SeededRng rng = shuffle_rng.derive(epoch);
    rng.shuffle(std::span(order));

    double loss_sum = 0.0;
    for (std::size_t first = 0; first < order.size(); first += cfg.batch_size) {
      const std::size_t count = std::min(cfg.batch_size, order.size() - first);
      const SequenceDataset batch = train_set.gather(std::span(order).subspan(first, count));
      params.zero_grad();
      const nn::Var loss = nn::focal_loss(flat_probs(forward(constants(batch))), batch.labels, cfg.focal_gamma);
      const double value = loss.value()[0];
      if (!std::isfinite(value)) {
        log.stop_reason = "diverged";
        params.restore(best_values);
        throw TrainError("training diverged at epoch " + std::to_string(epoch) + " (loss " + std::to_string(value) + ")",
                         log);
      }
      nn::backward(loss);
      adam.step();
      loss_sum += value * static_cast<double>(count);
    }

    const Tensor probs = predict(forward, val_set, cfg.batch_size);
    const auto cm = metrics::confusion(metrics::argmax_rows(probs.values()), val_set.labels);
    EpochRecord rec;
    rec.epoch = epoch;
    rec.steps = adam.steps();
    rec.train_loss = loss_sum / static_cast<double>(order.size());
    rec.val_kappa = metrics::kappa(cm);
    rec.val_accuracy = metrics::accuracy(cm);
    rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    log.epochs.push_back(rec);

    if (rec.val_kappa > best_kappa) {
      best_kappa = rec.val_kappa;
      log.best_epoch = epoch;
      best_values = params.snapshot();
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      log.stop_reason = "patience";
      break;
    }
  }
  if (log.stop_reason.empty()) log.stop_reason = "epochs";
  log.epochs[log.best_epoch - 1].best = true;
  params.restore(best_values);
  params.zero_grad();
  return log;
}

}  // namespace sfus::train
