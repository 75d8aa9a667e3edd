#include "sfus/data/synth.hpp"

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>
#include <numbers>
#include <set>
#include <stdexcept>

#include "sfus/parallel.hpp"
#include "sfus/rng.hpp"

namespace sfus::data {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

struct Band {
  double lo_hz, hi_hz, amp;
};

struct EegRecipe {
  std::vector<Band> bands;
  bool spindles = false;
};

struct PulseRecipe {
  double heart_rate_bpm;
  double ibi_jitter;  // relative sd of inter-beat intervals
  double amplitude;
};

EegRecipe eeg_recipe(int stage, double shift) {
  const double deep_amp = 2.6 * (1.0 - 0.4 * shift);
  switch (stage) {
    case kWake: return {{{8, 12, 1.0}, {16, 25, 0.35}}, false};
    case kLight: return {{{4, 7, 0.9}}, true};
    case kDeep: return {{{0.6, 2.0, deep_amp}, {4, 7, 0.3}}, false};
    default: return {{{4, 7, 0.4}, {16, 25, 0.7}, {2.0, 3.0, 0.6}}, false};
  }
}

PulseRecipe pulse_recipe(int stage, double shift) {
  const double hr_shift = 10.0 * shift;
  switch (stage) {
    case kWake: return {78 + hr_shift, 0.07, 1.6 * (1.0 - 0.3 * shift)};
    case kLight: return {65 + hr_shift, 0.04, 1.0};
    case kDeep: return {57 + hr_shift, 0.012, 0.6};
    default: return {62 + hr_shift, 0.07, 0.6};
  }
}

int draw_categorical(SeededRng& rng, const std::array<double, kNumStages>& p) {
  const double u = rng.uniform();
  double acc = 0.0;
  for (int k = 0; k < kNumStages; ++k) {
    acc += p[k];
    if (u < acc) return k;
  }
  // rounding slack: last class with nonzero mass
  for (int k = kNumStages - 1; k >= 0; --k) {
    if (p[k] > 0.0) return k;
  }
  return 0;
}

std::size_t samples_per_epoch(double rate_hz) {
  return static_cast<std::size_t>(std::llround(kEpochSeconds * rate_hz));
}

void render_eeg_epoch(const EegRecipe& recipe, double shift, double rate, double gain, double noise, SeededRng& rng,
                      std::span<double> out) {
  const double fscale = 1.0 + 0.25 * shift;
  for (const Band& b : recipe.bands) {
    for (int c = 0; c < 4; ++c) {
      const double f = rng.uniform(b.lo_hz, b.hi_hz) * fscale;
      const double phase = rng.uniform(0.0, kTwoPi);
      const double a = 0.5 * b.amp * rng.uniform(0.7, 1.3) * gain;
      for (std::size_t i = 0; i < out.size(); ++i) out[i] += a * std::sin(kTwoPi * f * i / rate + phase);
    }
  }
  if (recipe.spindles) {
    const auto burst = static_cast<std::size_t>(1.5 * rate);
    for (int s = 0; s < 2; ++s) {
      const double f = rng.uniform(12.0, 14.0) * fscale;
      const std::size_t start = rng.below(out.size() - burst);
      for (std::size_t i = 0; i < burst; ++i) {
        const double env = 0.5 - 0.5 * std::cos(kTwoPi * i / burst);
        out[start + i] += 1.2 * gain * env * std::sin(kTwoPi * f * i / rate);
      }
    }
  }
  for (double& v : out) v += noise * gain * rng.normal();
}

}  // namespace

void SynthConfig::validate() const {
  if (n_subjects == 0 || epochs_per_subject == 0) throw std::invalid_argument("synth: need at least one subject and epoch");
  if (!(sceeg_rate_hz > 70.0)) throw std::invalid_argument("synth: sceeg_rate_hz must exceed 70 Hz");
  if (!(ppg_rate_hz > 25.0)) throw std::invalid_argument("synth: ppg_rate_hz must exceed 25 Hz");
  auto check_row = [](const std::array<double, kNumStages>& row, const char* what) {
    double sum = 0.0;
    for (double p : row) {
      if (!(p >= 0.0)) throw std::invalid_argument(std::string("synth: negative probability in ") + what);
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw std::invalid_argument(std::string("synth: ") + what + " row does not sum to 1");
  };
  for (const auto& row : transitions) check_row(row, "transition matrix");
  check_row(initial, "initial distribution");
  for (double k : {sceeg_light_wake_confusability, ppg_deep_rem_confusability}) {
    if (!(k >= 0.0 && k <= 1.0)) throw std::invalid_argument("synth: confusability knobs must lie in [0, 1]");
  }
  if (!(sceeg_noise >= 0.0) || !(ppg_noise >= 0.0)) throw std::invalid_argument("synth: noise levels must be >= 0");
  if (!(domain_shift >= 0.0 && domain_shift <= 1.0)) throw std::invalid_argument("synth: domain_shift must lie in [0, 1]");
}

std::string synth_config_to_json(const SynthConfig& cfg) {
  nlohmann::ordered_json j;
  j["n_subjects"] = cfg.n_subjects;
  j["epochs_per_subject"] = cfg.epochs_per_subject;
  j["sceeg_rate_hz"] = cfg.sceeg_rate_hz;
  j["ppg_rate_hz"] = cfg.ppg_rate_hz;
  j["transitions"] = cfg.transitions;
  j["initial"] = cfg.initial;
  j["sceeg_noise"] = cfg.sceeg_noise;
  j["ppg_noise"] = cfg.ppg_noise;
  j["sceeg_light_wake_confusability"] = cfg.sceeg_light_wake_confusability;
  j["ppg_deep_rem_confusability"] = cfg.ppg_deep_rem_confusability;
  j["domain_shift"] = cfg.domain_shift;
  j["seed"] = cfg.seed;
  j["subject_prefix"] = cfg.subject_prefix;
  return j.dump(2) + "\n";
}

SynthConfig synth_config_from_json(std::string_view text) {
  const nlohmann::json j = nlohmann::json::parse(text);
  if (!j.is_object()) throw std::invalid_argument("synth config must be a JSON object");
  static const std::set<std::string> known = {
      "n_subjects", "epochs_per_subject", "sceeg_rate_hz", "ppg_rate_hz", "transitions", "initial",
      "sceeg_noise", "ppg_noise", "sceeg_light_wake_confusability", "ppg_deep_rem_confusability",
      "domain_shift", "seed", "subject_prefix"};
  for (const auto& [key, _] : j.items()) {
    if (!known.contains(key)) throw std::invalid_argument("synth config: unknown key '" + key + "'");
  }
  SynthConfig cfg;
  auto get = [&](const char* key, auto& dest) {
    if (j.contains(key)) j.at(key).get_to(dest);
  };
  try {
    get("n_subjects", cfg.n_subjects);
    get("epochs_per_subject", cfg.epochs_per_subject);
    get("sceeg_rate_hz", cfg.sceeg_rate_hz);
    get("ppg_rate_hz", cfg.ppg_rate_hz);
    get("transitions", cfg.transitions);
    get("initial", cfg.initial);
    get("sceeg_noise", cfg.sceeg_noise);
    get("ppg_noise", cfg.ppg_noise);
    get("sceeg_light_wake_confusability", cfg.sceeg_light_wake_confusability);
    get("ppg_deep_rem_confusability", cfg.ppg_deep_rem_confusability);
    get("domain_shift", cfg.domain_shift);
    get("seed", cfg.seed);
    get("subject_prefix", cfg.subject_prefix);
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("synth config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

std::vector<int> synth_stages(const SynthConfig& cfg, std::size_t n_epochs, std::uint64_t seed) {
  SeededRng rng(seed);
  std::vector<int> stages(n_epochs);
  if (n_epochs == 0) return stages;
  stages[0] = draw_categorical(rng, cfg.initial);
  for (std::size_t i = 1; i < n_epochs; ++i) stages[i] = draw_categorical(rng, cfg.transitions[stages[i - 1]]);
  return stages;
}

SubjectRecordings synth_subject(const SynthConfig& cfg, std::size_t index) {
  cfg.validate();
  const SeededRng root = SeededRng(cfg.seed).derive(index);
  SeededRng traits = root.derive(3);
  SeededRng eeg_rng = root.derive(1);
  SeededRng ppg_rng = root.derive(2);
  SeededRng swap_rng = root.derive(4);

  SubjectRecordings s;
  const std::string id = cfg.subject_prefix + std::to_string(index);
  const std::size_t n = cfg.epochs_per_subject;
  s.hypnogram = {id, synth_stages(cfg, n, root.derive(0).next_u64()), LabelScheme::kFused4, {}};

  const double eeg_gain = traits.uniform(0.7, 1.4);
  const double ppg_gain = traits.uniform(0.7, 1.4);
  const double hr_offset = 4.0 * traits.normal();
  const double eeg_dc = traits.uniform(-2.0, 2.0);

  // Per-epoch rendering recipes, after the complementarity substitutions.
  std::vector<int> eeg_as(n), ppg_as(n);
  for (std::size_t e = 0; e < n; ++e) {
    const int stage = s.hypnogram.stages[e];
    eeg_as[e] = stage == kLight && swap_rng.uniform() < cfg.sceeg_light_wake_confusability ? kWake : stage;
    const bool swap = swap_rng.uniform() < cfg.ppg_deep_rem_confusability;
    ppg_as[e] = swap && stage == kDeep ? kRem : swap && stage == kRem ? kDeep : stage;
  }

  const std::size_t eeg_len = samples_per_epoch(cfg.sceeg_rate_hz);
  s.sceeg = {std::vector<double>(n * eeg_len, eeg_dc), cfg.sceeg_rate_hz, Modality::kSceeg, id, "C4-M1"};
  for (std::size_t e = 0; e < n; ++e) {
    render_eeg_epoch(eeg_recipe(eeg_as[e], cfg.domain_shift), cfg.domain_shift, cfg.sceeg_rate_hz, eeg_gain,
                     cfg.sceeg_noise, eeg_rng, std::span(s.sceeg.samples).subspan(e * eeg_len, eeg_len));
  }

  const std::size_t ppg_len = samples_per_epoch(cfg.ppg_rate_hz);
  const double rate = cfg.ppg_rate_hz;
  s.ppg = {std::vector<double>(n * ppg_len, 0.0), rate, Modality::kPpg, id, "PPG"};
  const double resp_hz = ppg_rng.uniform(0.2, 0.3);
  const double resp_phase = ppg_rng.uniform(0.0, kTwoPi);
  std::size_t i = 0;
  while (i < s.ppg.samples.size()) {
    const PulseRecipe r = pulse_recipe(ppg_as[i / ppg_len], cfg.domain_shift);
    const double ibi = std::clamp(60.0 / (r.heart_rate_bpm + hr_offset) * (1.0 + r.ibi_jitter * ppg_rng.normal()), 0.35, 2.0);
    const double amp = r.amplitude * ppg_gain * (1.0 + 0.08 * ppg_rng.normal());
    const auto beat_len = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(ibi * rate)));
    for (std::size_t k = 0; k < beat_len && i < s.ppg.samples.size(); ++k, ++i) {
      const double phase = static_cast<double>(k) / static_cast<double>(beat_len);
      const double systolic = std::exp(-std::pow((phase - 0.18) / 0.07, 2));
      const double dicrotic = 0.45 * std::exp(-std::pow((phase - 0.45) / 0.09, 2));
      s.ppg.samples[i] = amp * (systolic + dicrotic);
    }
  }
  for (std::size_t k = 0; k < s.ppg.samples.size(); ++k) {
    s.ppg.samples[k] += 0.15 * ppg_gain * std::sin(kTwoPi * resp_hz * k / rate + resp_phase) +
                        cfg.ppg_noise * ppg_gain * ppg_rng.normal();
  }
  return s;
}

std::vector<SubjectRecordings> synth_generate(const SynthConfig& cfg) {
  cfg.validate();
  std::vector<SubjectRecordings> out(cfg.n_subjects);
  parallel_for(cfg.n_subjects, [&](std::size_t i) { out[i] = synth_subject(cfg, i); });
  return out;
}

}  // namespace sfus::data
