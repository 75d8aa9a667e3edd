#include "commands.hpp"

#include <cstdio>
#include <iostream>
#include <nlohmann/json.hpp>

#include "sfus/data/container.hpp"
#include "sfus/data/synth.hpp"
#include "sfus/dsp/preprocess.hpp"
#include "sfus/parallel.hpp"
#include "sfus/report.hpp"

namespace sfus::cli {

namespace {

using train::DataError;

fs::path manifest_for(const fs::path& artifact, const std::string& command) {
  if (fs::is_directory(artifact)) return artifact / (command + ".manifest.json");
  return fs::path(artifact.string() + ".manifest.json");
}

RunManifest start(const std::string& command, const std::vector<std::string>& argv) {
  RunManifest m;
  m.command = command;
  m.argv = argv;
  m.started_at = utc_now();
  return m;
}

train::TrainConfig load_train_config(const std::string& path, const train::TrainConfig& defaults) {
  if (path.empty()) return defaults;
  const std::string text = read_text(path);
  try {
    return train::train_config_from_json(text, defaults);
  } catch (const std::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

bool tiny_scale(const std::string& scale) {
  if (scale == "tiny") return true;
  if (scale == "full") return false;
  throw ConfigError("scale must be tiny or full, got '" + scale + "'");
}

Modality modality_arg(const std::string& name) {
  try {
    return parse_modality(name);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

std::size_t window_arg(const std::string& text) {
  try {
    return parse_window(text);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

fs::path split_file(const std::string& given, const std::string& data) {
  return given.empty() ? default_split_path(data) : fs::path(given);
}

std::size_t encoder_window(const nn::Checkpoint& ckpt) {
  const auto it = ckpt.meta.find("config");
  if (it == ckpt.meta.end()) throw models::ModelError("encoder checkpoint carries no config");
  return nlohmann::json::parse(it->second).at("window_epochs").get<std::size_t>();
}

struct Encoders {
  train::StageModel sceeg;
  train::StageModel ppg;
  models::EncoderHashes hashes;
  std::size_t window;
};

Encoders load_encoders(const std::string& sceeg_path, const std::string& ppg_path) {
  if (sceeg_path.empty() || ppg_path.empty()) throw ConfigError("fusion needs --sceeg and --ppg encoder checkpoints");
  const nn::Checkpoint s = nn::read_checkpoint(sceeg_path), p = nn::read_checkpoint(ppg_path);
  train::StageModel sm = train::StageModel::from_checkpoint(s), pm = train::StageModel::from_checkpoint(p);
  if (sm.kind() != "sceeg") throw models::ModelError(sceeg_path + " is not a scEEG encoder");
  if (pm.kind() != "ppg") throw models::ModelError(ppg_path + " is not a PPG encoder");
  const std::size_t window = encoder_window(s);
  if (encoder_window(p) != window) throw models::ModelError("encoder window lengths differ");
  return {std::move(sm), std::move(pm), {nn::file_hash(sceeg_path), nn::file_hash(ppg_path)}, window};
}

void print_alpha(const models::AlphaSearch& a) {
  std::printf("alpha  val_kappa\n");
  for (std::size_t k = 0; k < a.alphas.size(); ++k) {
    std::printf("%.1f    %.4f%s\n", a.alphas[k], a.kappas[k], a.alphas[k] == a.best_alpha ? "  *" : "");
  }
}

std::string alpha_json(const models::AlphaSearch& a) {
  nlohmann::ordered_json grid = nlohmann::ordered_json::array();
  for (std::size_t k = 0; k < a.alphas.size(); ++k) grid.push_back({{"alpha", a.alphas[k]}, {"kappa", a.kappas[k]}});
  return nlohmann::ordered_json{{"best_alpha", a.best_alpha}, {"grid", grid}}.dump(2) + "\n";
}

}  // namespace

int run_synth(const SynthOptions& o, const std::vector<std::string>& argv) {
  RunManifest m = start("synth", argv);
  data::SynthConfig cfg;
  if (!o.config.empty()) {
    const std::string text = read_text(o.config);
    try {
      cfg = data::synth_config_from_json(text);
    } catch (const std::exception& e) {
      throw ConfigError(o.config + ": " + e.what());
    }
    m.config_path = o.config;
    m.inputs.push_back(o.config);
  }
  if (o.seed) cfg.seed = *o.seed;
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (o.fractions.size() != 3) throw ConfigError("--fractions takes three values");
  m.seed = cfg.seed;
  const fs::path out(o.out);
  fs::create_directories(out);

  std::vector<std::string> ids(cfg.n_subjects);
  parallel_for(cfg.n_subjects, [&](std::size_t i) {
    const data::SubjectRecordings rec = data::synth_subject(cfg, i);
    ids[i] = rec.hypnogram.subject_id;
    data::write_container(recording_path(out, ids[i], Modality::kSceeg), data::RecordingContainer::from_raw(rec.sceeg));
    data::write_container(recording_path(out, ids[i], Modality::kPpg), data::RecordingContainer::from_raw(rec.ppg));
    data::write_hypnogram(hypnogram_path(out, ids[i]), rec.hypnogram);
  });
  data::SplitManifest split;
  try {
    split = data::split_subjects(ids, {o.fractions[0], o.fractions[1], o.fractions[2]}, cfg.seed);
  } catch (const data::LabelError& e) {
    throw ConfigError(e.what());
  }
  write_text(default_split_path(out), data::split_to_json(split));
  write_text(out / "synth_config.json", data::synth_config_to_json(cfg));
  m.outputs = {out.string()};
  write_manifest(manifest_for(out, "synth"), m);
  std::printf("synth: %zu subjects (%zu train / %zu val / %zu test) -> %s\n", ids.size(), split.train.size(),
              split.val.size(), split.test.size(), out.string().c_str());
  return kOk;
}

int run_preprocess(const PreprocessOptions& o, const std::vector<std::string>& argv) {
  RunManifest m = start("preprocess", argv);
  const Modality modality = modality_arg(o.modality);
  const fs::path in(o.in), out(o.out);
  const std::vector<std::string> ids = list_subjects(in);
  if (ids.empty()) throw DataError("no subjects (*.hyp.csv) in " + in.string());
  fs::create_directories(out);
  const dsp::PreprocessConfig cfg;
  const double rate = static_cast<double>(epoch_len(modality)) / cfg.epoch_seconds;
  const bool same_dir = fs::equivalent(in, out);
  parallel_for(ids.size(), [&](std::size_t i) {
    const fs::path src = recording_path(in, ids[i], modality);
    const data::RecordingContainer raw = data::read_container(src);
    if (raw.header.preprocessed) throw DataError(src.string() + " is already preprocessed");
    if (raw.header.modality != modality) throw DataError(src.string() + " has the wrong modality");
    const RawRecording rec = raw.to_raw();
    const Tensor epochs = dsp::preprocess(rec, cfg);
    Hypnogram hyp = data::read_hypnogram(hypnogram_path(in, ids[i]), ids[i]);
    const std::size_t n = std::min(epochs.dim(0), hyp.stages.size());
    const Tensor kept(Shape{n, epochs.dim(1)},
                      std::vector<double>(epochs.values().begin(), epochs.values().begin() + static_cast<std::ptrdiff_t>(n * epochs.dim(1))));
    data::write_container(recording_path(out, ids[i], modality),
                          data::RecordingContainer::from_epochs(rec, kept, rate, cfg.hash()));
    if (!same_dir) {
      hyp.stages.resize(n);
      if (!hyp.aasm.empty()) hyp.aasm.resize(n);
      data::write_hypnogram(hypnogram_path(out, ids[i]), hyp);
    }
  });
  if (!same_dir && fs::exists(default_split_path(in))) {
    fs::copy_file(default_split_path(in), default_split_path(out), fs::copy_options::overwrite_existing);
  }
  m.inputs = {in.string()};
  m.outputs = {out.string()};
  write_manifest(out / ("preprocess." + std::string(modality_name(modality)) + ".manifest.json"), m);
  std::printf("preprocess %s: %zu subjects -> %s (config %s)\n", std::string(modality_name(modality)).c_str(), ids.size(),
              out.string().c_str(), nn::hex64(cfg.hash()).c_str());
  return kOk;
}

int run_train_encoder(const TrainEncoderOptions& o, const std::vector<std::string>& argv) {
  RunManifest m = start("train-encoder", argv);
  const Modality modality = modality_arg(o.modality);
  const std::size_t T = window_arg(o.window);
  const bool tiny = tiny_scale(o.scale);
  train::TrainConfig cfg = load_train_config(o.config, tiny ? train::TrainConfig::tiny_encoder() : train::TrainConfig{});
  if (o.seed) cfg.seed = *o.seed;
  m.config_path = o.config;
  m.seed = cfg.seed;
  const fs::path split_path = split_file(o.split, o.data);
  const data::SplitManifest split = read_split(split_path);
  std::vector<std::string> ids = split.train;
  ids.insert(ids.end(), split.val.begin(), split.val.end());
  const train::Cohort cohort = load_cohort(o.data, ids);
  const train::Inputs inputs = modality == Modality::kSceeg ? train::Inputs::kSceeg : train::Inputs::kPpg;
  const auto train_set = train::make_windows(cohort, split.train, inputs, T);
  const auto val_set = train::make_windows(cohort, split.val, inputs, T);

  train::StageModel model = train::StageModel::encoder(modality, T, tiny, cfg.seed);
  const train::TrainLog log = train::train_model(model, train_set, val_set, cfg);
  nn::write_checkpoint(o.out, model.checkpoint());
  const std::string log_path = o.out + ".log.jsonl";
  write_text(log_path, log.to_jsonl());
  m.inputs = {o.data, split_path.string()};
  m.outputs = {o.out, log_path};
  write_manifest(manifest_for(o.out, "train-encoder"), m);
  std::printf("train-encoder %s %s: %zu params, best epoch %zu of %zu, val kappa %.4f -> %s\n",
              std::string(modality_name(modality)).c_str(), o.window.c_str(), model.params().count(), log.best_epoch,
              log.epochs.size(), log.best().val_kappa, o.out.c_str());
  return kOk;
}

int run_train_fusion(const TrainFusionOptions& o, const std::vector<std::string>& argv) {
  RunManifest m = start("train-fusion", argv);
  const models::FusionStrategy strategy = [&] {
    try {
      return models::parse_strategy(o.strategy);
    } catch (const models::ModelError& e) {
      throw ConfigError(e.what());
    }
  }();
  const bool tiny = tiny_scale(o.scale);
  train::TrainConfig cfg = load_train_config(o.config, train::TrainConfig::fusion());
  if (o.seed) cfg.seed = *o.seed;
  m.config_path = o.config;
  m.seed = cfg.seed;
  Encoders enc = load_encoders(o.sceeg, o.ppg);
  const fs::path split_path = split_file(o.split, o.data);
  const data::SplitManifest split = read_split(split_path);
  m.inputs = {o.sceeg, o.ppg, o.data, split_path.string()};

  std::vector<std::string> ids = split.train;
  ids.insert(ids.end(), split.val.begin(), split.val.end());
  const train::Cohort cohort = load_cohort(o.data, ids);
  const auto val_both = train::make_windows(cohort, split.val, train::Inputs::kBoth, enc.window);

  if (strategy == models::FusionStrategy::kScore) {
    const Tensor ps = train::predict(enc.sceeg.forward(), train::select_input(val_both, 0));
    const Tensor pp = train::predict(enc.ppg.forward(), train::select_input(val_both, 1));
    const models::AlphaSearch search = models::grid_search_alpha(pp, ps, val_both.labels);
    nn::write_checkpoint(o.out, models::score_fusion_checkpoint(search, enc.hashes));
    const std::string alpha_path = o.out + ".alpha.json";
    write_text(alpha_path, alpha_json(search));
    m.outputs = {o.out, alpha_path};
    write_manifest(manifest_for(o.out, "train-fusion"), m);
    print_alpha(search);
    std::printf("train-fusion score: alpha %.1f -> %s\n", search.best_alpha, o.out.c_str());
    return kOk;
  }

  const auto train_both = train::make_windows(cohort, split.train, train::Inputs::kBoth, enc.window);
  const auto train_f = train::fusion_dataset(enc.sceeg, enc.ppg, train_both);
  const auto val_f = train::fusion_dataset(enc.sceeg, enc.ppg, val_both);
  const std::size_t d = train_f.inputs[0].dim(2);
  train::StageModel model(
      models::FusionModel(strategy, tiny ? models::FusionConfig::tiny(d) : models::FusionConfig::full(), cfg.seed),
      enc.hashes);
  const train::TrainLog log = train::train_model(model, train_f, val_f, cfg);
  nn::write_checkpoint(o.out, model.checkpoint());
  const std::string log_path = o.out + ".log.jsonl";
  write_text(log_path, log.to_jsonl());
  m.outputs = {o.out, log_path};
  write_manifest(manifest_for(o.out, "train-fusion"), m);
  std::printf("train-fusion %s: %zu trainable params, best epoch %zu of %zu, val kappa %.4f -> %s\n", o.strategy.c_str(),
              model.params().count(), log.best_epoch, log.epochs.size(), log.best().val_kappa, o.out.c_str());
  return kOk;
}

int run_evaluate(const EvaluateOptions& o, const std::vector<std::string>& argv) {
  RunManifest m = start("evaluate", argv);
  if (o.model.empty() == o.predictions.empty()) throw ConfigError("give exactly one of --model or --predictions");
  const fs::path split_path = split_file(o.splits, o.data);
  const data::SplitManifest split = read_split(split_path);
  const std::vector<std::string>& ids = [&]() -> const std::vector<std::string>& {
    try {
      return split.part(o.split);
    } catch (const data::LabelError& e) {
      throw ConfigError(e.what());
    }
  }();
  m.inputs = {o.data, split_path.string()};
  report::Evaluation e;

  if (!o.predictions.empty()) {
    std::vector<int> pred, truth;
    std::vector<std::string> subjects;
    for (const auto& id : ids) {
      const auto ref = data::read_hypnogram(hypnogram_path(o.data, id), id).stages;
      const auto got = data::read_hypnogram(hypnogram_path(o.predictions, id), id).stages;
      if (got.size() != ref.size()) throw DataError("predicted hypnogram of '" + id + "' has the wrong length");
      pred.insert(pred.end(), got.begin(), got.end());
      truth.insert(truth.end(), ref.begin(), ref.end());
      subjects.insert(subjects.end(), ref.size(), id);
    }
    Tensor probs({pred.size(), static_cast<std::size_t>(kNumStages)}, 0.0);
    for (std::size_t i = 0; i < pred.size(); ++i) probs.at(i, static_cast<std::size_t>(pred[i])) = 1.0;
    e = report::evaluate_probs(o.name.empty() ? "predictions" : o.name, probs, truth, subjects);
    m.inputs.push_back(o.predictions);
  } else {
    const nn::Checkpoint ckpt = nn::read_checkpoint(o.model);
    m.inputs.push_back(o.model);
    std::string tag = ckpt.meta.count("model") ? ckpt.meta.at("model") : "";
    if (tag == "fusion" && ckpt.meta.count("strategy")) tag = ckpt.meta.at("strategy");
    const train::Cohort cohort_for = load_cohort(o.data, ids);
    if (tag == "sceeg" || tag == "ppg") {
      train::StageModel model = train::StageModel::from_checkpoint(ckpt);
      const std::size_t T = encoder_window(ckpt);
      const auto data = train::make_windows(cohort_for, ids, tag == "sceeg" ? train::Inputs::kSceeg : train::Inputs::kPpg, T);
      e = train::evaluate_model(o.name.empty() ? (tag == "sceeg" ? "scEEG" : "PPG") : o.name, model, data);
      if (o.timing) e.infer_ms = train::inference_ms(model, data);
    } else {
      Encoders enc = load_encoders(o.sceeg, o.ppg);
      models::verify_encoder_hashes(ckpt, enc.hashes);
      m.inputs.push_back(o.sceeg);
      m.inputs.push_back(o.ppg);
      const auto both = train::make_windows(cohort_for, ids, train::Inputs::kBoth, enc.window);
      const std::size_t encoder_params = enc.sceeg.params().count() + enc.ppg.params().count();
      if (tag == "score") {
        const double alpha = models::score_fusion_alpha(ckpt);
        const Tensor ps = train::predict(enc.sceeg.forward(), train::select_input(both, 0));
        const Tensor pp = train::predict(enc.ppg.forward(), train::select_input(both, 1));
        e = train::evaluate_probabilities(o.name.empty() ? "Score fusion" : o.name, models::score_fusion(pp, ps, alpha), both);
        e.params = encoder_params;
        e.alpha = models::score_fusion_search(ckpt);
      } else {
        train::StageModel model = train::StageModel::from_checkpoint(ckpt);
        const auto data = train::fusion_dataset(enc.sceeg, enc.ppg, both);
        const std::string fallback = model.kind() == "mamba" ? "Mamba fusion" : "Cross-attention fusion";
        e = train::evaluate_model(o.name.empty() ? fallback : o.name, model, data);
        e.params += encoder_params;
        if (o.timing) e.infer_ms = train::inference_ms(model, data);
      }
    }
  }
  if (!o.report.empty()) {
    write_text(o.report, report::evaluation_to_json(e));
    m.outputs = {o.report};
    write_manifest(manifest_for(o.report, "evaluate"), m);
  }
  const report::Evaluation rows[] = {e};
  std::cout << report::comparison_table(rows);
  return kOk;
}

int run_sweep(const SweepOptions& o, const std::vector<std::string>& argv) {
  RunManifest m = start("sweep-window", argv);
  train::SweepConfig cfg;
  cfg.modality = modality_arg(o.modality);
  cfg.tiny = tiny_scale(o.scale);
  cfg.train = load_train_config(o.config, cfg.tiny ? train::TrainConfig::tiny_encoder() : train::TrainConfig{});
  if (o.seed) cfg.train.seed = *o.seed;
  cfg.windows.clear();
  for (const auto& w : o.windows) cfg.windows.push_back(window_arg(w));
  cfg.timing_reps = o.timing_reps;
  m.config_path = o.config;
  m.seed = cfg.train.seed;
  const fs::path split_path = split_file(o.split, o.data);
  const data::SplitManifest split = read_split(split_path);
  std::vector<std::string> ids = split.train;
  ids.insert(ids.end(), split.val.begin(), split.val.end());
  ids.insert(ids.end(), split.test.begin(), split.test.end());
  const train::Cohort cohort = load_cohort(o.data, ids);
  const auto rows = train::window_sweep(cohort, split, cfg);
  const std::string name(modality_name(cfg.modality));
  const std::string table = report::sweep_table(name, rows);
  write_text(o.out, report::sweep_to_json(name, rows));
  write_text(o.out + ".txt", table);
  m.inputs = {o.data, split_path.string()};
  m.outputs = {o.out, o.out + ".txt"};
  write_manifest(manifest_for(o.out, "sweep-window"), m);
  std::cout << table;
  return kOk;
}

int run_report(const ReportOptions& o, const std::vector<std::string>& argv) {
  RunManifest m = start("report", argv);
  std::vector<report::Evaluation> rows;
  for (const auto& path : o.compare) {
    const std::string text = read_text(path);
    try {
      rows.push_back(report::evaluation_from_json(text));
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path + ": not an evaluation report (" + e.what() + ")");
    }
  }
  const fs::path out(o.out);
  fs::create_directories(out);
  const std::string table = report::comparison_table(rows);
  nlohmann::ordered_json all = nlohmann::ordered_json::array();
  for (const auto& e : rows) all.push_back(nlohmann::ordered_json::parse(report::evaluation_to_json(e)));
  write_text(out / "comparison.txt", table);
  write_text(out / "comparison.json", all.dump(2) + "\n");
  write_text(out / "mae_bars.svg", report::mae_bars_svg(rows));
  m.outputs = {(out / "comparison.txt").string(), (out / "comparison.json").string(), (out / "mae_bars.svg").string()};
  for (const auto& e : rows) {
    if (e.alpha) {
      write_text(out / "alpha_curve.svg", report::alpha_curve_svg(*e.alpha));
      m.outputs.push_back((out / "alpha_curve.svg").string());
      break;
    }
  }
  m.inputs = o.compare;
  write_manifest(out / "report.manifest.json", m);
  std::cout << table;
  return kOk;
}

}  // namespace sfus::cli
