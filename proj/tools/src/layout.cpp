#include "layout.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "sfus/data/container.hpp"

#ifndef SFUS_GIT_DESCRIBE
#define SFUS_GIT_DESCRIBE "unknown"
#endif

namespace sfus::cli {

namespace {
constexpr std::string_view kHypSuffix = ".hyp.csv";
}

fs::path recording_path(const fs::path& dir, const std::string& id, Modality m) {
  return dir / (id + "." + std::string(modality_name(m)) + ".srec");
}

fs::path hypnogram_path(const fs::path& dir, const std::string& id) { return dir / (id + std::string(kHypSuffix)); }

fs::path default_split_path(const fs::path& dir) { return dir / "splits.json"; }

std::vector<std::string> list_subjects(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw train::DataError("not a directory: " + dir.string());
  std::vector<std::string> ids;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (name.size() > kHypSuffix.size() && name.ends_with(kHypSuffix)) {
      ids.push_back(name.substr(0, name.size() - kHypSuffix.size()));
    }
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

train::Cohort load_cohort(const fs::path& dir, const std::vector<std::string>& ids) {
  train::Cohort cohort;
  for (const auto& id : ids) {
    train::SubjectEpochs s;
    s.id = id;
    for (Modality m : {Modality::kSceeg, Modality::kPpg}) {
      const fs::path path = recording_path(dir, id, m);
      if (!fs::exists(path)) throw train::DataError("missing " + path.string() + " (run preprocess first)");
      const data::RecordingContainer c = data::read_container(path);
      if (!c.header.preprocessed) throw train::DataError(path.string() + " holds raw samples (run preprocess first)");
      if (c.header.modality != m) throw train::DataError(path.string() + " has the wrong modality");
      (m == Modality::kSceeg ? s.sceeg : s.ppg) = c.to_epochs();
    }
    s.stages = data::read_hypnogram(hypnogram_path(dir, id), id).stages;
    const std::size_t n = std::min({s.sceeg.dim(0), s.ppg.dim(0), s.stages.size()});
    if (s.sceeg.dim(0) != n || s.ppg.dim(0) != n || s.stages.size() != n) {
      throw train::DataError("subject '" + id + "': epoch counts of scEEG, PPG and hypnogram differ");
    }
    cohort.subjects.push_back(std::move(s));
  }
  return cohort;
}

data::SplitManifest read_split(const fs::path& path) { return data::split_from_json(read_text(path)); }

std::string read_text(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw train::DataError("cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  if (!out) throw train::DataError("cannot write " + path.string());
  out << text;
}

std::string RunManifest::to_json() const {
  nlohmann::ordered_json j{{"command", command}, {"argv", argv},       {"config", config_path},
                           {"seed", seed},       {"inputs", inputs},   {"outputs", outputs},
                           {"git_describe", git_describe}, {"started_at", started_at}, {"finished_at", finished_at}};
  return j.dump(2) + "\n";
}

RunManifest RunManifest::from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  RunManifest m;
  m.command = j.at("command").get<std::string>();
  m.argv = j.at("argv").get<std::vector<std::string>>();
  m.config_path = j.value("config", "");
  m.seed = j.value("seed", std::uint64_t{0});
  m.inputs = j.value("inputs", std::vector<std::string>{});
  m.outputs = j.value("outputs", std::vector<std::string>{});
  m.git_describe = j.value("git_describe", "");
  m.started_at = j.value("started_at", "");
  m.finished_at = j.value("finished_at", "");
  return m;
}

std::string utc_now() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_manifest(const fs::path& path, RunManifest manifest) {
  manifest.git_describe = SFUS_GIT_DESCRIBE;
  manifest.finished_at = utc_now();
  write_text(path, manifest.to_json());
}

}  // namespace sfus::cli
