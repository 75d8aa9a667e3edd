#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "sfus/tensor.hpp"

namespace sfus {

enum class Modality { kSceeg, kPpg };

std::string_view modality_name(Modality m);
/// Accepts "sceeg" / "ppg" (case-insensitive).
Modality parse_modality(std::string_view name);

/// Raised for inputs the pipeline cannot process (bad rate, too short, degenerate).
class SignalError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct RawRecording {
  std::vector<double> samples;
  double rate_hz = 0.0;
  Modality modality = Modality::kSceeg;
  std::string subject_id;
  std::string channel;

  /// Throws SignalError unless rate > 0 and samples are non-empty and finite.
  void validate() const;
};

/// T consecutive epochs of one subject; row j is epoch start_epoch + j.
struct EpochWindow {
  Tensor epochs;  // [T, epoch_len]
  Modality modality = Modality::kSceeg;
  std::string subject_id;
  std::size_t start_epoch = 0;

  std::size_t length() const { return epochs.dim(0); }
  std::size_t epoch_len() const { return epochs.dim(1); }
};

/// 4-class staging; argmax ties resolve to the lower index.
enum Stage : int { kWake = 0, kLight = 1, kDeep = 2, kRem = 3 };
inline constexpr int kNumStages = 4;
inline constexpr std::string_view kStageNames[kNumStages] = {"Wake", "Light", "Deep", "REM"};

enum class LabelScheme { kAasm5, kFused4 };

struct Hypnogram {
  std::string subject_id;
  std::vector<int> stages;  // values in [0, kNumStages)
  LabelScheme source_scheme = LabelScheme::kFused4;
  /// Original AASM strings when source_scheme is kAasm5; empty otherwise.
  std::vector<std::string> aasm;
};

inline constexpr double kEpochSeconds = 30.0;
inline constexpr std::size_t kSceegEpochLen = 3000;
inline constexpr std::size_t kPpgEpochLen = 1024;

constexpr std::size_t epoch_len(Modality m) {
  return m == Modality::kSceeg ? kSceegEpochLen : kPpgEpochLen;
}

struct WindowLength {
  std::string_view label;
  std::size_t epochs;
};

inline constexpr WindowLength kWindowLengths[] = {
    {"30s", 1}, {"1min", 2}, {"3min", 6}, {"5min", 10}, {"10min", 20}, {"30min", 60}};

/// "3min" -> 6; a bare integer is taken as an epoch count.
std::size_t parse_window(std::string_view text);
std::string_view window_label(std::size_t epochs);

}  // namespace sfus
