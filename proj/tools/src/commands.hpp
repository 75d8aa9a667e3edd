#pragma once

#include <optional>
#include <string>
#include <vector>

#include "layout.hpp"

namespace sfus::cli {

struct SynthOptions {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::vector<double> fractions = {0.6, 0.2, 0.2};
};

struct PreprocessOptions {
  std::string modality;
  std::string in;
  std::string out;
};

struct TrainEncoderOptions {
  std::string modality;
  std::string window = "3min";
  std::string data;
  std::string split;
  std::string config;
  std::string scale = "tiny";
  std::optional<std::uint64_t> seed;
  std::string out;
};

struct TrainFusionOptions {
  std::string strategy;
  std::string sceeg;
  std::string ppg;
  std::string data;
  std::string split;
  std::string config;
  std::string scale = "tiny";
  std::optional<std::uint64_t> seed;
  std::string out;
};

struct EvaluateOptions {
  std::string model;
  std::string predictions;
  std::string sceeg;
  std::string ppg;
  std::string data;
  std::string splits;
  std::string split = "test";
  std::string report;
  std::string name;
  bool timing = false;
};

struct SweepOptions {
  std::string modality;
  std::string data;
  std::string split;
  std::string config;
  std::string scale = "tiny";
  std::vector<std::string> windows = {"30s", "1min", "3min", "5min", "10min", "30min"};
  std::size_t timing_reps = 100;
  std::optional<std::uint64_t> seed;
  std::string out;
};

struct ReportOptions {
  std::vector<std::string> compare;
  std::string out;
};

/// Each command receives the full argv for its RunManifest.
int run_synth(const SynthOptions& o, const std::vector<std::string>& argv);
int run_preprocess(const PreprocessOptions& o, const std::vector<std::string>& argv);
int run_train_encoder(const TrainEncoderOptions& o, const std::vector<std::string>& argv);
int run_train_fusion(const TrainFusionOptions& o, const std::vector<std::string>& argv);
int run_evaluate(const EvaluateOptions& o, const std::vector<std::string>& argv);
int run_sweep(const SweepOptions& o, const std::vector<std::string>& argv);
int run_report(const ReportOptions& o, const std::vector<std::string>& argv);

}  // namespace sfus::cli
