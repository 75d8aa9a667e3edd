#include "sfus/signal.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>

namespace sfus {

std::string_view modality_name(Modality m) { return m == Modality::kSceeg ? "sceeg" : "ppg"; }

Modality parse_modality(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (lower == "sceeg" || lower == "eeg") return Modality::kSceeg;
  if (lower == "ppg") return Modality::kPpg;
  throw std::invalid_argument("unknown modality '" + std::string(name) + "'");
}

void RawRecording::validate() const {
  if (!(rate_hz > 0.0) || !std::isfinite(rate_hz)) {
    throw SignalError("recording '" + subject_id + "': rate must be positive");
  }
  if (samples.empty()) throw SignalError("recording '" + subject_id + "': no samples");
  for (double v : samples) {
    if (!std::isfinite(v)) throw SignalError("recording '" + subject_id + "': non-finite sample");
  }
}

std::size_t parse_window(std::string_view text) {
  for (const auto& w : kWindowLengths) {
    if (w.label == text) return w.epochs;
  }
  std::size_t value = 0;
  const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || end != text.data() + text.size() || value == 0) {
    throw std::invalid_argument("unknown window '" + std::string(text) + "'");
  }
  return value;
}

std::string_view window_label(std::size_t epochs) {
  for (const auto& w : kWindowLengths) {
    if (w.epochs == epochs) return w.label;
  }
  return {};
}

}  // namespace sfus
