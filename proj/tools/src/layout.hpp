#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "sfus/data/labels.hpp"
#include "sfus/train/pipeline.hpp"

namespace sfus::cli {

namespace fs = std::filesystem;

/// Exit codes.
enum Exit : int { kOk = 0, kFailure = 1, kUsage = 2, kConfigError = 3, kDataError = 4, kModelError = 5 };

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Cohort directory: <id>.sceeg.srec, <id>.ppg.srec, <id>.hyp.csv, splits.json.
fs::path recording_path(const fs::path& dir, const std::string& id, Modality m);
fs::path hypnogram_path(const fs::path& dir, const std::string& id);
fs::path default_split_path(const fs::path& dir);

/// Subject ids with a hypnogram in `dir`, sorted.
std::vector<std::string> list_subjects(const fs::path& dir);

/// Loads preprocessed containers and hypnograms for `ids`. Throws
/// train::DataError when a container is missing or not preprocessed.
train::Cohort load_cohort(const fs::path& dir, const std::vector<std::string>& ids);

data::SplitManifest read_split(const fs::path& path);

std::string read_text(const fs::path& path);
void write_text(const fs::path& path, const std::string& text);

/// Written next to every artifact a command produces.
struct RunManifest {
  std::string command;
  std::vector<std::string> argv;
  std::string config_path;
  std::uint64_t seed = 0;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  std::string git_describe;
  std::string started_at;
  std::string finished_at;

  std::string to_json() const;
  static RunManifest from_json(const std::string& text);
};

std::string utc_now();
void write_manifest(const fs::path& path, RunManifest manifest);

}  // namespace sfus::cli
