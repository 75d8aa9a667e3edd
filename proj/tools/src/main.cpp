#include <CLI11.hpp>
#include <filesystem>
#include <iostream>

#include "commands.hpp"
#include "sfus/data/container.hpp"
#include "sfus/data/labels.hpp"
#include "sfus/metrics.hpp"
#include "sfus/nn/checkpoint.hpp"

namespace sfus::cli {
namespace {

int dispatch(int argc, const char* const* argv);

int rerun(const std::string& manifest_path) {
  const RunManifest m = RunManifest::from_json(read_text(manifest_path));
  if (m.argv.empty()) throw ConfigError(manifest_path + ": manifest has no argv");
  std::vector<const char*> args;
  for (const auto& a : m.argv) args.push_back(a.c_str());
  return dispatch(static_cast<int>(args.size()), args.data());
}

int dispatch(int argc, const char* const* argv) {
  const std::vector<std::string> args(argv, argv + argc);
  CLI::App app{"Sleep staging from single-channel EEG and PPG: encoders, score / cross-attention / Mamba fusion", "sfus"};
  app.require_subcommand(1);

  SynthOptions synth;
  auto* c_synth = app.add_subcommand("synth", "Generate a synthetic paired scEEG/PPG cohort");
  c_synth->add_option("--config", synth.config, "SynthConfig JSON (defaults if omitted)")->check(CLI::ExistingFile);
  c_synth->add_option("--out", synth.out, "Output directory")->required();
  c_synth->add_option("--seed", synth.seed, "Override the config seed");
  c_synth->add_option("--fractions", synth.fractions, "Train/val/test subject fractions")->expected(3)->delimiter(',');

  PreprocessOptions pre;
  auto* c_pre = app.add_subcommand("preprocess", "Filter, resample, standardize and segment raw recordings");
  c_pre->add_option("--modality", pre.modality, "sceeg or ppg")->required()->check(CLI::IsMember({"sceeg", "ppg"}));
  c_pre->add_option("--in", pre.in, "Directory with raw containers")->required()->check(CLI::ExistingDirectory);
  c_pre->add_option("--out", pre.out, "Output directory")->required();

  TrainEncoderOptions enc;
  auto* c_enc = app.add_subcommand("train-encoder", "Train a unimodal encoder");
  c_enc->add_option("--modality", enc.modality, "sceeg or ppg")->required()->check(CLI::IsMember({"sceeg", "ppg"}));
  c_enc->add_option("--window", enc.window, "30s, 1min, 3min, 5min, 10min, 30min or an epoch count")->capture_default_str();
  c_enc->add_option("--data", enc.data, "Preprocessed cohort directory")->required()->check(CLI::ExistingDirectory);
  c_enc->add_option("--split", enc.split, "Split manifest (default <data>/splits.json)");
  c_enc->add_option("--config", enc.config, "TrainConfig JSON")->check(CLI::ExistingFile);
  c_enc->add_option("--scale", enc.scale, "tiny or full")->capture_default_str()->check(CLI::IsMember({"tiny", "full"}));
  c_enc->add_option("--seed", enc.seed, "Override the config seed");
  c_enc->add_option("--out", enc.out, "Checkpoint path")->required();

  TrainFusionOptions fus;
  auto* c_fus = app.add_subcommand("train-fusion", "Fuse two frozen encoders");
  c_fus->add_option("--strategy", fus.strategy, "score, xattn or mamba")->required()->check(CLI::IsMember({"score", "xattn", "mamba"}));
  c_fus->add_option("--sceeg", fus.sceeg, "scEEG encoder checkpoint")->required()->check(CLI::ExistingFile);
  c_fus->add_option("--ppg", fus.ppg, "PPG encoder checkpoint")->required()->check(CLI::ExistingFile);
  c_fus->add_option("--data", fus.data, "Preprocessed cohort directory")->required()->check(CLI::ExistingDirectory);
  c_fus->add_option("--split", fus.split, "Split manifest (default <data>/splits.json)");
  c_fus->add_option("--config", fus.config, "TrainConfig JSON")->check(CLI::ExistingFile);
  c_fus->add_option("--scale", fus.scale, "tiny or full")->capture_default_str()->check(CLI::IsMember({"tiny", "full"}));
  c_fus->add_option("--seed", fus.seed, "Override the config seed");
  c_fus->add_option("--out", fus.out, "Checkpoint path")->required();

  EvaluateOptions ev;
  auto* c_ev = app.add_subcommand("evaluate", "Score a model or predicted hypnograms on a split partition");
  c_ev->add_option("--model", ev.model, "Encoder or fusion checkpoint")->check(CLI::ExistingFile);
  c_ev->add_option("--predictions", ev.predictions, "Directory of predicted <id>.hyp.csv")->check(CLI::ExistingDirectory);
  c_ev->add_option("--sceeg", ev.sceeg, "scEEG encoder (fusion models)");
  c_ev->add_option("--ppg", ev.ppg, "PPG encoder (fusion models)");
  c_ev->add_option("--data", ev.data, "Preprocessed cohort directory")->required()->check(CLI::ExistingDirectory);
  c_ev->add_option("--splits", ev.splits, "Split manifest (default <data>/splits.json)");
  c_ev->add_option("--split", ev.split, "train, val or test")->capture_default_str()->check(CLI::IsMember({"train", "val", "test"}));
  c_ev->add_option("--report", ev.report, "Write the evaluation JSON here");
  c_ev->add_option("--name", ev.name, "Model name in the report");
  c_ev->add_flag("--timing", ev.timing, "Measure single-window inference time");

  SweepOptions sw;
  auto* c_sw = app.add_subcommand("sweep-window", "Train and score one encoder per window length");
  c_sw->add_option("--modality", sw.modality, "sceeg or ppg")->required()->check(CLI::IsMember({"sceeg", "ppg"}));
  c_sw->add_option("--data", sw.data, "Preprocessed cohort directory")->required()->check(CLI::ExistingDirectory);
  c_sw->add_option("--split", sw.split, "Split manifest (default <data>/splits.json)");
  c_sw->add_option("--config", sw.config, "TrainConfig JSON")->check(CLI::ExistingFile);
  c_sw->add_option("--scale", sw.scale, "tiny or full")->capture_default_str()->check(CLI::IsMember({"tiny", "full"}));
  c_sw->add_option("--windows", sw.windows, "Window lengths")->delimiter(',');
  c_sw->add_option("--timing-reps", sw.timing_reps, "Forward passes per timing")->capture_default_str();
  c_sw->add_option("--seed", sw.seed, "Override the config seed");
  c_sw->add_option("--out", sw.out, "Report JSON path (table goes to <out>.txt)")->required();

  ReportOptions rep;
  auto* c_rep = app.add_subcommand("report", "Compare evaluation reports; write table and SVG plots");
  c_rep->add_option("--compare", rep.compare, "Evaluation JSON files")->required()->check(CLI::ExistingFile);
  c_rep->add_option("--out", rep.out, "Output directory")->required();

  std::string manifest;
  auto* c_rerun = app.add_subcommand("rerun", "Repeat a command from its run manifest");
  c_rerun->add_option("manifest", manifest, "*.manifest.json")->required()->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  if (c_synth->parsed()) return run_synth(synth, args);
  if (c_pre->parsed()) return run_preprocess(pre, args);
  if (c_enc->parsed()) return run_train_encoder(enc, args);
  if (c_fus->parsed()) return run_train_fusion(fus, args);
  if (c_ev->parsed()) return run_evaluate(ev, args);
  if (c_sw->parsed()) return run_sweep(sw, args);
  if (c_rep->parsed()) return run_report(rep, args);
  return rerun(manifest);
}

int guarded(int argc, const char* const* argv) {
  try {
    return dispatch(argc, argv);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const models::ModelError& e) {
    std::cerr << "model error: " << e.what() << '\n';
    return kModelError;
  } catch (const nn::CheckpointError& e) {
    std::cerr << "model error: " << e.what() << '\n';
    return kModelError;
  } catch (const train::DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kDataError;
  } catch (const data::ContainerError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kDataError;
  } catch (const data::LabelError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kDataError;
  } catch (const SignalError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kDataError;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kDataError;
  } catch (const train::TrainError& e) {
    std::cerr << "training failed: " << e.what() << '\n';
    return kFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailure;
  }
}

}  // namespace
}  // namespace sfus::cli

int main(int argc, char** argv) { return sfus::cli::guarded(argc, argv); }
