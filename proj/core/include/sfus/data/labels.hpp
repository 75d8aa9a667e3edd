#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "sfus/signal.hpp"

namespace sfus::data {

class LabelError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// W->Wake, N1/N2->Light, N3->Deep, REM (or R)->REM. Legacy "S4"/"N4" maps to
/// Deep only when allow_legacy_s4 is set; anything else throws LabelError.
int map_aasm_to_4class(std::string_view label, bool allow_legacy_s4 = false);

/// Header "epoch_index,stage_label[,aasm]"; one row per epoch in order.
std::string format_hypnogram_csv(const Hypnogram& h);
Hypnogram parse_hypnogram_csv(std::string_view text, const std::string& subject_id);
void write_hypnogram(const std::filesystem::path& path, const Hypnogram& h);
Hypnogram read_hypnogram(const std::filesystem::path& path, const std::string& subject_id);

struct SplitManifest {
  std::vector<std::string> train;
  std::vector<std::string> val;
  std::vector<std::string> test;

  /// Throws LabelError if any subject appears twice.
  void validate() const;
  const std::vector<std::string>& part(std::string_view name) const;
};

/// Seeded shuffle, then contiguous slices sized floor(n * f) with the
/// remainder going to train. Needs at least one subject per nonzero fraction.
SplitManifest split_subjects(std::span<const std::string> ids, std::array<double, 3> fractions,
                             std::uint64_t seed);

std::string split_to_json(const SplitManifest& m);
SplitManifest split_from_json(std::string_view text);

}  // namespace sfus::data
