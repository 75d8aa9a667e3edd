#include "sfus/train/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <nlohmann/json.hpp>
#include <variant>

#include "sfus/nn/ops.hpp"
#include "sfus/parallel.hpp"
#include "sfus/rng.hpp"

namespace sfus::train {

namespace {

Tensor first_rows(const Tensor& t, std::size_t rows) {
  if (t.dim(0) == rows) return t;
  const std::size_t row = t.size() / t.dim(0);
  Shape shape = t.shape();
  shape[0] = rows;
  return Tensor(shape, std::vector<double>(t.values().begin(), t.values().begin() + static_cast<std::ptrdiff_t>(rows * row)));
}

std::vector<std::string> row_subjects(const SequenceDataset& data) {
  if (data.origins.size() != data.size()) throw DataError("evaluation needs the subject of every window");
  std::vector<std::string> out;
  out.reserve(data.labels.size());
  for (const WindowOrigin& o : data.origins) out.insert(out.end(), data.window_epochs(), o.subject_id);
  return out;
}

}  // namespace

std::vector<std::string> Cohort::ids() const {
  std::vector<std::string> out;
  for (const auto& s : subjects) out.push_back(s.id);
  return out;
}

const SubjectEpochs& Cohort::subject(std::string_view id) const {
  for (const auto& s : subjects) {
    if (s.id == id) return s;
  }
  throw DataError("cohort has no subject '" + std::string(id) + "'");
}

SubjectEpochs prepare_subject(const data::SubjectRecordings& rec, const dsp::PreprocessConfig& cfg) {
  SubjectEpochs s;
  s.id = rec.hypnogram.subject_id;
  const Tensor sceeg = dsp::preprocess(rec.sceeg, cfg);
  const Tensor ppg = dsp::preprocess(rec.ppg, cfg);
  const std::size_t n = std::min({sceeg.dim(0), ppg.dim(0), rec.hypnogram.stages.size()});
  if (n == 0) throw DataError("subject '" + s.id + "' has no complete epochs");
  s.sceeg = first_rows(sceeg, n);
  s.ppg = first_rows(ppg, n);
  s.stages.assign(rec.hypnogram.stages.begin(), rec.hypnogram.stages.begin() + static_cast<std::ptrdiff_t>(n));
  return s;
}

Cohort prepare_cohort(std::span<const data::SubjectRecordings> recordings, const dsp::PreprocessConfig& cfg) {
  Cohort c;
  c.subjects.resize(recordings.size());
  parallel_for(recordings.size(), [&](std::size_t i) { c.subjects[i] = prepare_subject(recordings[i], cfg); });
  return c;
}

SequenceDataset make_windows(const Cohort& cohort, std::span<const std::string> ids, Inputs inputs, std::size_t T) {
  if (T == 0) throw DataError("window length must be at least one epoch");
  std::vector<const Tensor*> none;
  std::size_t windows = 0;
  for (const auto& id : ids) {
    const SubjectEpochs& s = cohort.subject(id);
    if (s.stages.size() < T) {
      throw DataError("subject '" + id + "' has " + std::to_string(s.stages.size()) + " epochs, fewer than the " +
                      std::to_string(T) + "-epoch window");
    }
    windows += s.stages.size() / T;
  }
  std::vector<Modality> mods;
  if (inputs != Inputs::kPpg) mods.push_back(Modality::kSceeg);
  if (inputs != Inputs::kSceeg) mods.push_back(Modality::kPpg);

  SequenceDataset out;
  for (Modality m : mods) out.inputs.emplace_back(Shape{windows, T, epoch_len(m)});
  out.labels.reserve(windows * T);
  std::size_t w = 0;
  for (const auto& id : ids) {
    const SubjectEpochs& s = cohort.subject(id);
    for (std::size_t start = 0; start + T <= s.stages.size(); start += T, ++w) {
      for (std::size_t k = 0; k < mods.size(); ++k) {
        const Tensor& src = mods[k] == Modality::kSceeg ? s.sceeg : s.ppg;
        const std::size_t len = src.dim(1);
        if (len != out.inputs[k].dim(2)) throw DataError("subject '" + id + "' has the wrong epoch length");
        std::copy_n(src.data() + start * len, T * len, out.inputs[k].data() + w * T * len);
      }
      out.labels.insert(out.labels.end(), s.stages.begin() + static_cast<std::ptrdiff_t>(start),
                        s.stages.begin() + static_cast<std::ptrdiff_t>(start + T));
      out.origins.push_back({id, start});
    }
  }
  return out;
}

SequenceDataset select_input(const SequenceDataset& data, std::size_t index) {
  if (index >= data.inputs.size()) throw DataError("dataset has no input " + std::to_string(index));
  SequenceDataset out;
  out.inputs.push_back(data.inputs[index]);
  out.labels = data.labels;
  out.origins = data.origins;
  return out;
}

struct StageModel::Impl {
  std::variant<models::SceegEncoder, models::PpgEncoder, models::FusionModel> model;
  models::EncoderHashes hashes;
};

StageModel::StageModel(models::SceegEncoder encoder)
    : impl_(new Impl{std::variant<models::SceegEncoder, models::PpgEncoder, models::FusionModel>(std::in_place_index<0>, std::move(encoder)), {}}) {}
StageModel::StageModel(models::PpgEncoder encoder)
    : impl_(new Impl{std::variant<models::SceegEncoder, models::PpgEncoder, models::FusionModel>(std::in_place_index<1>, std::move(encoder)), {}}) {}
StageModel::StageModel(models::FusionModel fusion, models::EncoderHashes hashes)
    : impl_(new Impl{std::variant<models::SceegEncoder, models::PpgEncoder, models::FusionModel>(std::in_place_index<2>, std::move(fusion)), hashes}) {}
StageModel::StageModel(StageModel&&) noexcept = default;
StageModel& StageModel::operator=(StageModel&&) noexcept = default;
StageModel::~StageModel() = default;

StageModel StageModel::from_checkpoint(const nn::Checkpoint& ckpt) {
  const auto it = ckpt.meta.find("model");
  if (it == ckpt.meta.end()) throw models::ModelError("checkpoint carries no model tag");
  if (it->second == "sceeg") return StageModel(models::SceegEncoder::from_checkpoint(ckpt));
  if (it->second == "ppg") return StageModel(models::PpgEncoder::from_checkpoint(ckpt));
  if (it->second == "fusion") return StageModel(models::FusionModel::from_checkpoint(ckpt), models::encoder_hashes(ckpt));
  throw models::ModelError("checkpoint model '" + it->second + "' is not trainable");
}

StageModel StageModel::encoder(Modality modality, std::size_t T, bool tiny, std::uint64_t seed) {
  if (modality == Modality::kSceeg) {
    return StageModel(models::SceegEncoder(tiny ? models::SceegConfig::tiny(T) : models::SceegConfig::full(T), seed));
  }
  return StageModel(models::PpgEncoder(tiny ? models::PpgConfig::tiny(T) : models::PpgConfig::full(T), seed));
}

std::string StageModel::kind() const {
  switch (impl_->model.index()) {
    case 0: return "sceeg";
    case 1: return "ppg";
    default: return std::string(models::strategy_name(std::get<2>(impl_->model).strategy()));
  }
}

std::size_t StageModel::input_count() const { return impl_->model.index() == 2 ? 2 : 1; }

nn::ParameterSet& StageModel::params() {
  return std::visit([](auto& m) -> nn::ParameterSet& { return m.params(); }, impl_->model);
}

const nn::ParameterSet& StageModel::params() const {
  return std::visit([](const auto& m) -> const nn::ParameterSet& { return m.params(); }, impl_->model);
}

ForwardFn StageModel::forward() const {
  const Impl* impl = impl_.get();
  return [impl](std::span<const nn::Var> in) -> nn::Var {
    if (const auto* f = std::get_if<models::FusionModel>(&impl->model)) {
      if (in.size() != 2) throw DataError("fusion models take two inputs");
      return f->forward(in[0], in[1]).probs;
    }
    if (in.size() != 1) throw DataError("encoders take one input");
    if (const auto* s = std::get_if<models::SceegEncoder>(&impl->model)) return s->forward(in[0]).probs;
    return std::get<models::PpgEncoder>(impl->model).forward(in[0]).probs;
  };
}

nn::Var StageModel::features(const nn::Var& windows) const {
  if (const auto* s = std::get_if<models::SceegEncoder>(&impl_->model)) return s->forward(windows).features;
  if (const auto* p = std::get_if<models::PpgEncoder>(&impl_->model)) return p->forward(windows).features;
  throw models::ModelError("fusion models have no encoder features");
}

nn::Checkpoint StageModel::checkpoint() const {
  if (const auto* f = std::get_if<models::FusionModel>(&impl_->model)) {
    return f->checkpoint(impl_->hashes.sceeg, impl_->hashes.ppg);
  }
  if (const auto* s = std::get_if<models::SceegEncoder>(&impl_->model)) return s->checkpoint();
  return std::get<models::PpgEncoder>(impl_->model).checkpoint();
}

Tensor encoder_features(const StageModel& encoder, const Tensor& windows, std::size_t batch_size) {
  if (windows.rank() != 3) throw ShapeError("encoder_features: windows must be [N, T, L]");
  nn::NoGradGuard no_grad;
  const std::size_t n = windows.dim(0), row = windows.size() / std::max<std::size_t>(n, 1);
  Tensor out;
  for (std::size_t first = 0; first < n; first += batch_size) {
    const std::size_t count = std::min(batch_size, n - first);
    Tensor batch({count, windows.dim(1), windows.dim(2)},
                 std::vector<double>(windows.data() + first * row, windows.data() + (first + count) * row));
    const nn::Var f = encoder.features(nn::Var::constant(std::move(batch)));
    if (out.empty()) out = Tensor({n, f.dim(1), f.dim(2)});
    std::copy(f.value().values().begin(), f.value().values().end(), out.data() + first * f.dim(1) * f.dim(2));
  }
  return out;
}

SequenceDataset fusion_dataset(const StageModel& sceeg, const StageModel& ppg, const SequenceDataset& both) {
  if (both.inputs.size() != 2) throw DataError("fusion_dataset needs scEEG and PPG inputs");
  SequenceDataset out;
  out.inputs.push_back(encoder_features(sceeg, both.inputs[0]));
  out.inputs.push_back(encoder_features(ppg, both.inputs[1]));
  out.labels = both.labels;
  out.origins = both.origins;
  return out;
}

TrainLog train_model(StageModel& model, const SequenceDataset& train_set, const SequenceDataset& val_set,
                     const TrainConfig& cfg) {
  if (train_set.inputs.size() != model.input_count() || val_set.inputs.size() != model.input_count()) {
    throw DataError("dataset inputs do not match a '" + model.kind() + "' model");
  }
  return train(model.params(), model.forward(), train_set, val_set, cfg);
}

FineTuneResult fine_tune(const nn::Checkpoint& source, const SequenceDataset& train_set,
                         const SequenceDataset& val_set, const TrainConfig& cfg) {
  StageModel model = StageModel::from_checkpoint(source);
  TrainLog log = train_model(model, train_set, val_set, cfg);
  nn::Checkpoint out = model.checkpoint();
  return {std::move(out), std::move(log)};
}

double inference_ms(const StageModel& model, const SequenceDataset& data, std::size_t reps, std::size_t warmup) {
  if (data.size() == 0 || reps == 0) throw DataError("inference timing needs at least one window and one repetition");
  const SequenceDataset one = data.slice(0, 1);
  std::vector<nn::Var> in;
  for (const Tensor& t : one.inputs) in.push_back(nn::Var::constant(t));
  const ForwardFn forward = model.forward();
  nn::NoGradGuard no_grad;
  for (std::size_t i = 0; i < warmup; ++i) forward(in);
  std::vector<double> ms(reps);
  for (double& m : ms) {
    const auto start = std::chrono::steady_clock::now();
    forward(in);
    m = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  }
  std::nth_element(ms.begin(), ms.begin() + static_cast<std::ptrdiff_t>(reps / 2), ms.end());
  double median = ms[reps / 2];
  if (reps % 2 == 0) median = 0.5 * (median + *std::max_element(ms.begin(), ms.begin() + static_cast<std::ptrdiff_t>(reps / 2)));
  return median;
}

report::Evaluation evaluate_probabilities(std::string name, const Tensor& probs, const SequenceDataset& data) {
  const std::vector<std::string> subjects = row_subjects(data);
  return report::evaluate_probs(std::move(name), probs, data.labels, subjects);
}

report::Evaluation evaluate_model(std::string name, const StageModel& model, const SequenceDataset& data) {
  report::Evaluation e = evaluate_probabilities(std::move(name), predict(model.forward(), data), data);
  e.params = model.params().count();
  return e;
}

std::vector<report::SweepRow> window_sweep(const Cohort& cohort, const data::SplitManifest& split,
                                           const SweepConfig& cfg) {
  const Inputs inputs = cfg.modality == Modality::kSceeg ? Inputs::kSceeg : Inputs::kPpg;
  std::vector<report::SweepRow> rows;
  for (std::size_t T : cfg.windows) {
    const SequenceDataset train_set = make_windows(cohort, split.train, inputs, T);
    const SequenceDataset val_set = make_windows(cohort, split.val, inputs, T);
    const SequenceDataset test_set = make_windows(cohort, split.test, inputs, T);
    StageModel model = StageModel::encoder(cfg.modality, T, cfg.tiny, cfg.train.seed);
    train_model(model, train_set, val_set, cfg.train);
    const report::Evaluation e = evaluate_model(model.kind(), model, test_set);
    report::SweepRow row;
    row.window = T;
    row.label = std::string(window_label(T));
    if (row.label.empty()) row.label = std::to_string(T) + "ep";
    row.kappa = e.kappa;
    row.accuracy = e.accuracy;
    row.params = e.params;
    if (cfg.modality == Modality::kPpg) {
      row.depth = (cfg.tiny ? models::PpgConfig::tiny(T) : models::PpgConfig::full(T)).resolved_depth();
    }
    row.infer_ms = inference_ms(model, test_set, cfg.timing_reps, cfg.timing_warmup);
    rows.push_back(std::move(row));
  }
  return rows;
}

std::uint64_t checkpoint_hash(const nn::Checkpoint& ckpt) {
  const std::vector<std::uint8_t> bytes = nn::encode_checkpoint(ckpt);
  return nn::fnv1a64(bytes.data(), bytes.size());
}

std::string ExperimentResult::numeric_report() const {
  nlohmann::ordered_json j;
  nlohmann::ordered_json evals = nlohmann::ordered_json::array();
  for (const report::Evaluation* e : {&sceeg, &ppg, &score, &xattn, &mamba}) {
    evals.push_back(nlohmann::ordered_json::parse(report::evaluation_to_json(*e, false)));
  }
  j["evaluations"] = evals;
  nlohmann::ordered_json logs;
  const std::pair<const char*, const TrainLog*> named[] = {
      {"sceeg", &sceeg_log}, {"ppg", &ppg_log}, {"xattn", &xattn_log}, {"mamba", &mamba_log}};
  for (const auto& [name, log] : named) {
    nlohmann::ordered_json lines = nlohmann::ordered_json::array();
    const std::string text = log->to_jsonl(false);
    std::size_t pos = 0;
    while (pos < text.size()) {
      const std::size_t end = text.find('\n', pos);
      lines.push_back(nlohmann::ordered_json::parse(text.substr(pos, end - pos)));
      pos = end + 1;
    }
    logs[name] = lines;
  }
  j["train_logs"] = logs;
  j["encoder_hashes"] = {{"sceeg_before", nn::hex64(encoder_hashes_before.sceeg)},
                         {"ppg_before", nn::hex64(encoder_hashes_before.ppg)},
                         {"sceeg_after", nn::hex64(encoder_hashes_after.sceeg)},
                         {"ppg_after", nn::hex64(encoder_hashes_after.ppg)}};
  j["trainable_params"] = {{"xattn", xattn_params}, {"mamba", mamba_params}};
  return j.dump(2) + "\n";
}

ExperimentResult run_experiment(const Cohort& cohort, const data::SplitManifest& split, const ExperimentConfig& cfg) {
  split.validate();
  const std::size_t T = cfg.window;
  const SequenceDataset train_both = make_windows(cohort, split.train, Inputs::kBoth, T);
  const SequenceDataset val_both = make_windows(cohort, split.val, Inputs::kBoth, T);
  const SequenceDataset test_both = make_windows(cohort, split.test, Inputs::kBoth, T);
  SeededRng seeds = SeededRng(cfg.seed).derive(0xe7);

  ExperimentResult r;
  const auto fit_encoder = [&](Modality m, std::size_t input, TrainLog& log) {
    StageModel model = StageModel::encoder(m, T, cfg.tiny, seeds.next_u64());
    TrainConfig tc = cfg.encoder_train;
    tc.seed = seeds.next_u64();
    log = train_model(model, select_input(train_both, input), select_input(val_both, input), tc);
    return model;
  };
  const StageModel sceeg = fit_encoder(Modality::kSceeg, 0, r.sceeg_log);
  const StageModel ppg = fit_encoder(Modality::kPpg, 1, r.ppg_log);
  r.encoder_hashes_before = {checkpoint_hash(sceeg.checkpoint()), checkpoint_hash(ppg.checkpoint())};

  const SequenceDataset test_s = select_input(test_both, 0), test_p = select_input(test_both, 1);
  const Tensor test_prob_s = predict(sceeg.forward(), test_s);
  const Tensor test_prob_p = predict(ppg.forward(), test_p);
  r.sceeg = evaluate_probabilities("scEEG", test_prob_s, test_both);
  r.sceeg.params = sceeg.params().count();
  r.ppg = evaluate_probabilities("PPG", test_prob_p, test_both);
  r.ppg.params = ppg.params().count();

  const Tensor val_prob_s = predict(sceeg.forward(), select_input(val_both, 0));
  const Tensor val_prob_p = predict(ppg.forward(), select_input(val_both, 1));
  r.alpha = models::grid_search_alpha(val_prob_p, val_prob_s, val_both.labels);
  r.score = evaluate_probabilities("Score fusion", models::score_fusion(test_prob_p, test_prob_s, r.alpha.best_alpha), test_both);
  r.score.alpha = r.alpha;
  r.score.params = r.sceeg.params + r.ppg.params;

  const SequenceDataset train_f = fusion_dataset(sceeg, ppg, train_both);
  const SequenceDataset val_f = fusion_dataset(sceeg, ppg, val_both);
  const SequenceDataset test_f = fusion_dataset(sceeg, ppg, test_both);
  const std::size_t d = train_f.inputs[0].dim(2);
  if (train_f.inputs[1].dim(2) != d) throw models::ModelError("encoder feature widths differ");
  const models::FusionConfig fcfg = cfg.tiny ? models::FusionConfig::tiny(d) : models::FusionConfig::full();

  const auto fit_fusion = [&](models::FusionStrategy s, const char* name, TrainLog& log, std::size_t& count) {
    StageModel model(models::FusionModel(s, fcfg, seeds.next_u64()), r.encoder_hashes_before);
    TrainConfig tc = cfg.fusion_train;
    tc.seed = seeds.next_u64();
    log = train_model(model, train_f, val_f, tc);
    count = model.params().count();
    report::Evaluation e = evaluate_model(name, model, test_f);
    e.params = count + r.sceeg.params + r.ppg.params;
    if (cfg.measure_inference) e.infer_ms = inference_ms(model, test_f);
    return e;
  };
  r.xattn = fit_fusion(models::FusionStrategy::kCrossAttention, "Cross-attention fusion", r.xattn_log, r.xattn_params);
  r.mamba = fit_fusion(models::FusionStrategy::kMamba, "Mamba fusion", r.mamba_log, r.mamba_params);
  if (cfg.measure_inference) {
    r.sceeg.infer_ms = inference_ms(sceeg, test_s);
    r.ppg.infer_ms = inference_ms(ppg, test_p);
  }
  r.encoder_hashes_after = {checkpoint_hash(sceeg.checkpoint()), checkpoint_hash(ppg.checkpoint())};
  return r;
}

}  // namespace sfus::train
