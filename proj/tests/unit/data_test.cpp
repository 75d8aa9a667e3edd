#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numbers>
#include <set>

#include "sfus/data/container.hpp"
#include "sfus/data/labels.hpp"
#include "sfus/data/synth.hpp"
#include "sfus/dsp/preprocess.hpp"
#include "sfus/metrics.hpp"
#include "sfus/rng.hpp"

namespace sfus::data {
namespace {

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("sfus_data_" + name);
}

TEST(AasmMapping, FourClassScheme) {
  EXPECT_EQ(map_aasm_to_4class("W"), 0);
  EXPECT_EQ(map_aasm_to_4class("N1"), 1);
  EXPECT_EQ(map_aasm_to_4class("N2"), 1);
  EXPECT_EQ(map_aasm_to_4class("N3"), 2);
  EXPECT_EQ(map_aasm_to_4class("REM"), 3);
  EXPECT_THROW(map_aasm_to_4class("S4"), LabelError);
  EXPECT_EQ(map_aasm_to_4class("S4", true), 2);
  EXPECT_THROW(map_aasm_to_4class("N5"), LabelError);
}

TEST(Container, RandomRoundTripBitExact) {
  SeededRng rng(1);
  RawRecording rec{std::vector<double>(10000), 256.0, Modality::kPpg, "subj-1", "PPG"};
  for (double& v : rec.samples) v = rng.normal();
  const auto path = temp_path("roundtrip.srec");
  const auto c = RecordingContainer::from_raw(rec);
  write_container(path, c);
  const auto bytes = read_file_bytes(path);
  const auto back = read_container(path);
  EXPECT_EQ(back.payload, c.payload);
  EXPECT_EQ(back.header.subject_id, "subj-1");
  EXPECT_EQ(back.header.modality, Modality::kPpg);
  EXPECT_EQ(encode_container(back), bytes);
}

TEST(Container, PreprocessedCarriesFlagAndHash) {
  RawRecording src{{1.0}, 256.0, Modality::kSceeg, "s", "C4-M1"};
  Tensor epochs({2, 3}, std::vector<double>{1, 2, 3, 4, 5, 6});
  const auto c = RecordingContainer::from_epochs(src, epochs, 100.0, 0xabcULL);
  const auto back = decode_container(encode_container(c));
  EXPECT_TRUE(back.header.preprocessed);
  EXPECT_EQ(back.header.config_hash, "0000000000000abc");
  EXPECT_EQ(back.to_epochs(), epochs);
}

TEST(Container, CorruptHeaderIsSchemaError) {
  auto bytes = encode_container(RecordingContainer::from_raw({{1.0, 2.0}, 100.0, Modality::kSceeg, "s", "c"}));
  auto bad_json = bytes;
  bad_json[12] = '[';
  EXPECT_THROW(decode_container(bad_json), ContainerError);
  std::string header = R"({"subject_id":"s","modality":"eeg?","channel":"c","rate_hz":1.0,"preprocessed":false,"config_hash":"","shape":[2]})";
  std::vector<std::uint8_t> manual{'S', 'R', 'E', 'C', 1, 0, 0, 0};
  for (int i = 0; i < 4; ++i) manual.push_back(static_cast<std::uint8_t>(header.size() >> (8 * i)));
  manual.insert(manual.end(), header.begin(), header.end());
  manual.resize(manual.size() + 8, 0);
  EXPECT_THROW(decode_container(manual), ContainerError);
}

TEST(Container, PayloadCountCrossCheck) {
  auto bytes = encode_container(RecordingContainer::from_raw({{1.0, 2.0, 3.0}, 100.0, Modality::kSceeg, "s", "c"}));
  auto truncated = bytes;
  truncated.resize(bytes.size() - 4);
  EXPECT_THROW(decode_container(truncated), ContainerError);
  auto longer = bytes;
  longer.push_back(0);
  EXPECT_THROW(decode_container(longer), ContainerError);
  auto bad_magic = bytes;
  bad_magic[3] = 'X';
  EXPECT_THROW(decode_container(bad_magic), ContainerError);
  auto bad_version = bytes;
  bad_version[4] = 2;
  EXPECT_THROW(decode_container(bad_version), ContainerError);
}

TEST(Hypnogram, CsvRoundTripWithAasm) {
  Hypnogram h{"s1", {0, 1, 1, 2, 3}, LabelScheme::kAasm5, {"W", "N1", "N2", "N3", "REM"}};
  const std::string csv = format_hypnogram_csv(h);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "epoch_index,stage_label,aasm");
  const auto path = temp_path("hyp.csv");
  write_hypnogram(path, h);
  const Hypnogram back = read_hypnogram(path, "s1");
  EXPECT_EQ(back.stages, h.stages);
  EXPECT_EQ(back.aasm, h.aasm);
  EXPECT_EQ(back.source_scheme, LabelScheme::kAasm5);
}

TEST(Hypnogram, RejectsMalformedRows) {
  EXPECT_THROW(parse_hypnogram_csv("epoch,stage\n0,1\n", "s"), LabelError);
  EXPECT_THROW(parse_hypnogram_csv("epoch_index,stage_label\n0,7\n", "s"), LabelError);
  EXPECT_THROW(parse_hypnogram_csv("epoch_index,stage_label\n1,0\n", "s"), LabelError);
  EXPECT_THROW(parse_hypnogram_csv("epoch_index,stage_label,aasm\n0,1,N3\n", "s"), LabelError);
  EXPECT_EQ(parse_hypnogram_csv("epoch_index,stage_label\r\n0,2\r\n1,3\r\n", "s").stages, (std::vector<int>{2, 3}));
}

std::vector<std::string> ids(int n) {
  std::vector<std::string> v;
  for (int i = 0; i < n; ++i) v.push_back("s" + std::to_string(i));
  return v;
}

TEST(SplitSubjects, SizesDisjointDeterministic) {
  const auto all = ids(10);
  const auto m = split_subjects(all, {0.6, 0.2, 0.2}, 5);
  EXPECT_EQ(m.train.size(), 6u);
  EXPECT_EQ(m.val.size(), 2u);
  EXPECT_EQ(m.test.size(), 2u);
  std::set<std::string> u;
  for (const auto* p : {&m.train, &m.val, &m.test}) u.insert(p->begin(), p->end());
  EXPECT_EQ(u, std::set<std::string>(all.begin(), all.end()));
  const auto again = split_subjects(all, {0.6, 0.2, 0.2}, 5);
  EXPECT_EQ(again.train, m.train);
  EXPECT_EQ(again.test, m.test);
  EXPECT_NO_THROW(m.validate());
}

TEST(SplitSubjects, ErrorsAndJson) {
  EXPECT_THROW(split_subjects(ids(2), {0.6, 0.2, 0.2}, 1), LabelError);
  EXPECT_THROW(split_subjects(ids(10), {0.6, 0.2, 0.3}, 1), LabelError);
  const auto m = split_subjects(ids(10), {0.6, 0.2, 0.2}, 1);
  const auto back = split_from_json(split_to_json(m));
  EXPECT_EQ(back.train, m.train);
  EXPECT_EQ(back.val, m.val);
  EXPECT_THROW(split_from_json(R"({"train":["a"],"val":["a"],"test":[]})"), LabelError);
}

TEST(Synth, AbsorbingDeepAfterFirstTransition) {
  SynthConfig cfg;
  for (auto& row : cfg.transitions) row = {0, 0, 1, 0};
  cfg.sceeg_noise = cfg.ppg_noise = 0.0;
  cfg.n_subjects = 3;
  cfg.epochs_per_subject = 10;
  for (const auto& s : synth_generate(cfg)) {
    for (std::size_t i = 1; i < s.hypnogram.stages.size(); ++i) EXPECT_EQ(s.hypnogram.stages[i], kDeep);
  }
}

TEST(Synth, SeedDeterministicAndOrderIndependent) {
  SynthConfig cfg;
  cfg.n_subjects = 3;
  cfg.epochs_per_subject = 4;
  const auto a = synth_generate(cfg);
  const auto b = synth_generate(cfg);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].sceeg.samples, b[i].sceeg.samples);
    EXPECT_EQ(a[i].ppg.samples, b[i].ppg.samples);
    EXPECT_EQ(a[i].hypnogram.stages, b[i].hypnogram.stages);
  }
  EXPECT_EQ(synth_subject(cfg, 2).ppg.samples, a[2].ppg.samples);
  cfg.seed = 8;
  EXPECT_NE(synth_generate(cfg)[0].sceeg.samples, a[0].sceeg.samples);
}

TEST(Synth, ConfigValidationAndJson) {
  SynthConfig cfg;
  cfg.transitions[1] = {0.5, 0.5, 0.5, 0.0};
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  SynthConfig def;
  def.n_subjects = 12;
  const SynthConfig back = synth_config_from_json(synth_config_to_json(def));
  EXPECT_EQ(back.n_subjects, 12u);
  EXPECT_EQ(back.transitions, def.transitions);
  EXPECT_THROW(synth_config_from_json(R"({"bogus": 1})"), std::invalid_argument);
}

TEST(Synth, EpochsExactAfterPreprocessing) {
  SynthConfig cfg;
  cfg.n_subjects = 1;
  cfg.epochs_per_subject = 7;
  const auto s = synth_subject(cfg, 0);
  EXPECT_EQ(dsp::preprocess(s.sceeg).shape(), (Shape{7, kSceegEpochLen}));
  EXPECT_EQ(dsp::preprocess(s.ppg).shape(), (Shape{7, kPpgEpochLen}));
}

// Hand-crafted features for the plug-in oracle: log band power from a direct
// DFT at 0.5 Hz steps.
struct BandPower {
  std::vector<std::pair<std::vector<double>, std::vector<double>>> basis;  // cos, sin per frequency
  std::vector<std::size_t> band_of;

  BandPower(std::size_t n, double rate) {
    const double bands[][2] = {{0.5, 3}, {4, 7}, {8, 12}, {12, 15}, {16, 30}};
    for (std::size_t b = 0; b < 5; ++b) {
      for (double hz = bands[b][0]; hz <= bands[b][1]; hz += 0.5) {
        std::vector<double> c(n), s(n);
        for (std::size_t i = 0; i < n; ++i) {
          c[i] = std::cos(2 * std::numbers::pi * hz * i / rate);
          s[i] = std::sin(2 * std::numbers::pi * hz * i / rate);
        }
        basis.emplace_back(std::move(c), std::move(s));
        band_of.push_back(b);
      }
    }
  }

  std::vector<double> operator()(std::span<const double> epoch) const {
    std::vector<double> power(5, 1e-12);
    for (std::size_t k = 0; k < basis.size(); ++k) {
      double re = 0, im = 0;
      for (std::size_t i = 0; i < epoch.size(); ++i) re += epoch[i] * basis[k].first[i], im += epoch[i] * basis[k].second[i];
      power[band_of[k]] += re * re + im * im;
    }
    for (double& p : power) p = std::log(p);
    return power;
  }
};

std::vector<double> ppg_features(std::span<const double> epoch) {
  const auto m = dsp::moments(epoch);
  // autocorrelation peak over plausible beat periods (0.6 s .. 1.5 s at 34.13 Hz)
  double best = -1e9;
  std::size_t best_lag = 0;
  for (std::size_t lag = 20; lag <= 52; ++lag) {
    double acc = 0;
    for (std::size_t i = 0; i + lag < epoch.size(); ++i) acc += (epoch[i] - m.mean) * (epoch[i + lag] - m.mean);
    acc /= (epoch.size() - lag) * m.stddev * m.stddev + 1e-12;
    if (acc > best) best = acc, best_lag = lag;
  }
  return {std::log(m.stddev + 1e-12), static_cast<double>(best_lag), best};
}

struct GaussianNb {
  std::vector<std::vector<double>> mean, var;
  std::vector<double> log_prior;

  void fit(const std::vector<std::vector<double>>& x, const std::vector<int>& y) {
    const std::size_t d = x[0].size();
    mean.assign(kNumStages, std::vector<double>(d, 0));
    var.assign(kNumStages, std::vector<double>(d, 0));
    std::vector<double> count(kNumStages, 0);
    for (std::size_t i = 0; i < x.size(); ++i) {
      count[y[i]]++;
      for (std::size_t k = 0; k < d; ++k) mean[y[i]][k] += x[i][k];
    }
    for (int c = 0; c < kNumStages; ++c)
      for (auto& m : mean[c]) m /= std::max(1.0, count[c]);
    for (std::size_t i = 0; i < x.size(); ++i)
      for (std::size_t k = 0; k < d; ++k) var[y[i]][k] += std::pow(x[i][k] - mean[y[i]][k], 2);
    log_prior.resize(kNumStages);
    for (int c = 0; c < kNumStages; ++c) {
      for (auto& v : var[c]) v = v / std::max(1.0, count[c]) + 1e-6;
      log_prior[c] = std::log((count[c] + 1) / (x.size() + kNumStages));
    }
  }

  int predict(const std::vector<double>& f) const {
    int best = 0;
    double best_ll = -1e300;
    for (int c = 0; c < kNumStages; ++c) {
      double ll = log_prior[c];
      for (std::size_t k = 0; k < f.size(); ++k) ll -= 0.5 * (std::log(var[c][k]) + std::pow(f[k] - mean[c][k], 2) / var[c][k]);
      if (ll > best_ll) best_ll = ll, best = c;
    }
    return best;
  }
};

TEST(Synth, ComplementarityByPlugInClassifier) {
  SynthConfig cfg;
  cfg.n_subjects = 12;
  cfg.epochs_per_subject = 80;
  std::vector<std::vector<double>> xe_train, xp_train, xe_test, xp_test;
  std::vector<int> y_train, y_test;
  const BandPower eeg_features(kSceegEpochLen, 100.0);
  for (std::size_t i = 0; i < cfg.n_subjects; ++i) {
    const auto s = synth_subject(cfg, i);
    const Tensor eeg = dsp::preprocess(s.sceeg), ppg = dsp::preprocess(s.ppg);
    const bool test = i >= 8;
    for (std::size_t e = 0; e < cfg.epochs_per_subject; ++e) {
      const auto fe = eeg_features(eeg.values().subspan(e * kSceegEpochLen, kSceegEpochLen));
      const auto fp = ppg_features(ppg.values().subspan(e * kPpgEpochLen, kPpgEpochLen));
      (test ? xe_test : xe_train).push_back(fe);
      (test ? xp_test : xp_train).push_back(fp);
      (test ? y_test : y_train).push_back(s.hypnogram.stages[e]);
    }
  }
  GaussianNb eeg_nb, ppg_nb;
  eeg_nb.fit(xe_train, y_train);
  ppg_nb.fit(xp_train, y_train);
  std::vector<int> pe, pp;
  for (std::size_t i = 0; i < y_test.size(); ++i) {
    pe.push_back(eeg_nb.predict(xe_test[i]));
    pp.push_back(ppg_nb.predict(xp_test[i]));
  }
  const auto cm_e = metrics::confusion(pe, y_test), cm_p = metrics::confusion(pp, y_test);
  const double ke = metrics::kappa(cm_e), kp = metrics::kappa(cm_p);
  const auto me = metrics::class_metrics(cm_e), mp = metrics::class_metrics(cm_p);
  EXPECT_GT(ke, 0.3);
  EXPECT_LT(ke, 0.9);
  EXPECT_GT(kp, 0.3);
  EXPECT_LT(kp, 0.9);
  EXPECT_LT(me.per_stage[kLight].recall, mp.per_stage[kLight].recall);
  // Deep/REM are confused with each other, so recall alone depends on which
  // side the classifier leans to; F1 does not.
  EXPECT_LT(mp.per_stage[kDeep].f1, me.per_stage[kDeep].f1);
  EXPECT_LT(mp.per_stage[kRem].f1, me.per_stage[kRem].f1);
  RecordProperty("kappa_sceeg", std::to_string(ke));
  RecordProperty("kappa_ppg", std::to_string(kp));
  std::printf("plug-in kappa sceeg=%.3f ppg=%.3f light recall %.2f/%.2f deep f1 %.2f/%.2f rem f1 %.2f/%.2f\n", ke, kp,
              me.per_stage[kLight].recall, mp.per_stage[kLight].recall, me.per_stage[kDeep].f1,
              mp.per_stage[kDeep].f1, me.per_stage[kRem].f1, mp.per_stage[kRem].f1);
}

}  // namespace
}  // namespace sfus::data
