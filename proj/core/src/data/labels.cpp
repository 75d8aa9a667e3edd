#include "sfus/data/labels.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <numeric>
#include <set>
#include <sstream>

#include "sfus/rng.hpp"

namespace sfus::data {

namespace {

std::string upper_trimmed(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
  return out;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = line.find(',', start);
    out.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

int parse_int(std::string_view s, const std::string& what) {
  const std::string t = upper_trimmed(s);
  std::size_t used = 0;
  int v = 0;
  try {
    v = std::stoi(t, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (t.empty() || used != t.size()) throw LabelError(what + ": expected an integer, got '" + std::string(s) + "'");
  return v;
}

}  // namespace

int map_aasm_to_4class(std::string_view label, bool allow_legacy_s4) {
  const std::string l = upper_trimmed(label);
  if (l == "W" || l == "WAKE") return kWake;
  if (l == "N1" || l == "N2") return kLight;
  if (l == "N3") return kDeep;
  if (l == "REM" || l == "R") return kRem;
  if (allow_legacy_s4 && (l == "S4" || l == "N4")) return kDeep;
  throw LabelError("unknown AASM label '" + std::string(label) + "'");
}

std::string format_hypnogram_csv(const Hypnogram& h) {
  const bool with_aasm = !h.aasm.empty();
  if (with_aasm && h.aasm.size() != h.stages.size()) throw LabelError("hypnogram: aasm column length mismatch");
  std::ostringstream out;
  out << "epoch_index,stage_label" << (with_aasm ? ",aasm" : "") << '\n';
  for (std::size_t i = 0; i < h.stages.size(); ++i) {
    out << i << ',' << h.stages[i];
    if (with_aasm) out << ',' << h.aasm[i];
    out << '\n';
  }
  return out.str();
}

Hypnogram parse_hypnogram_csv(std::string_view text, const std::string& subject_id) {
  Hypnogram h;
  h.subject_id = subject_id;
  std::size_t line_no = 0;
  bool has_aasm = false;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    ++line_no;
    if (line.empty()) continue;
    const auto fields = split_fields(line);
    const std::string where = "hypnogram '" + subject_id + "' line " + std::to_string(line_no);
    if (line_no == 1) {
      if (fields.size() < 2 || upper_trimmed(fields[0]) != "EPOCH_INDEX" || upper_trimmed(fields[1]) != "STAGE_LABEL") {
        throw LabelError(where + ": expected header 'epoch_index,stage_label[,aasm]'");
      }
      has_aasm = fields.size() == 3 && upper_trimmed(fields[2]) == "AASM";
      if (fields.size() > 3 || (fields.size() == 3 && !has_aasm)) throw LabelError(where + ": unexpected header columns");
      continue;
    }
    if (fields.size() != (has_aasm ? 3u : 2u)) throw LabelError(where + ": wrong column count");
    if (parse_int(fields[0], where) != static_cast<int>(h.stages.size())) {
      throw LabelError(where + ": epoch_index out of sequence");
    }
    const int stage = parse_int(fields[1], where);
    if (stage < 0 || stage >= kNumStages) throw LabelError(where + ": stage label outside [0, 4)");
    h.stages.push_back(stage);
    if (has_aasm) {
      std::string aasm(fields[2]);
      if (map_aasm_to_4class(aasm, true) != stage) throw LabelError(where + ": aasm column disagrees with stage_label");
      h.aasm.push_back(std::move(aasm));
    }
  }
  if (line_no == 0) throw LabelError("hypnogram '" + subject_id + "': empty file");
  h.source_scheme = has_aasm ? LabelScheme::kAasm5 : LabelScheme::kFused4;
  return h;
}

void write_hypnogram(const std::filesystem::path& path, const Hypnogram& h) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw LabelError("cannot write " + path.string());
  out << format_hypnogram_csv(h);
}

Hypnogram read_hypnogram(const std::filesystem::path& path, const std::string& subject_id) {
  std::ifstream in(path);
  if (!in) throw LabelError("cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_hypnogram_csv(buf.str(), subject_id);
}

void SplitManifest::validate() const {
  std::set<std::string> seen;
  for (const auto* part : {&train, &val, &test}) {
    for (const auto& id : *part) {
      if (!seen.insert(id).second) throw LabelError("split manifest: subject '" + id + "' appears twice");
    }
  }
}

const std::vector<std::string>& SplitManifest::part(std::string_view name) const {
  if (name == "train") return train;
  if (name == "val") return val;
  if (name == "test") return test;
  throw LabelError("unknown split '" + std::string(name) + "'");
}

SplitManifest split_subjects(std::span<const std::string> ids, std::array<double, 3> fractions,
                             std::uint64_t seed) {
  double total = 0.0;
  for (double f : fractions) {
    if (f < 0.0) throw LabelError("split fractions must be non-negative");
    total += f;
  }
  if (std::abs(total - 1.0) > 1e-9) throw LabelError("split fractions must sum to 1");
  std::vector<std::string> shuffled(ids.begin(), ids.end());
  std::sort(shuffled.begin(), shuffled.end());
  if (std::adjacent_find(shuffled.begin(), shuffled.end()) != shuffled.end()) {
    throw LabelError("split_subjects: duplicate subject id");
  }
  SeededRng rng(seed);
  rng.shuffle(std::span(shuffled));
  const std::size_t n = shuffled.size();
  const auto count = [&](double f) { return static_cast<std::size_t>(std::floor(n * f + 1e-9)); };
  const std::size_t n_val = count(fractions[1]);
  const std::size_t n_test = count(fractions[2]);
  if ((fractions[1] > 0 && n_val == 0) || (fractions[2] > 0 && n_test == 0) || n_val + n_test >= n) {
    throw LabelError("split_subjects: too few subjects (" + std::to_string(n) + ") for the requested fractions");
  }
  SplitManifest m;
  m.val.assign(shuffled.begin(), shuffled.begin() + static_cast<std::ptrdiff_t>(n_val));
  m.test.assign(shuffled.begin() + static_cast<std::ptrdiff_t>(n_val),
                shuffled.begin() + static_cast<std::ptrdiff_t>(n_val + n_test));
  m.train.assign(shuffled.begin() + static_cast<std::ptrdiff_t>(n_val + n_test), shuffled.end());
  return m;
}

std::string split_to_json(const SplitManifest& m) {
  nlohmann::ordered_json j;
  j["train"] = m.train;
  j["val"] = m.val;
  j["test"] = m.test;
  return j.dump(2) + "\n";
}

SplitManifest split_from_json(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw LabelError(std::string("split manifest: invalid JSON: ") + e.what());
  }
  SplitManifest m;
  const std::pair<const char*, std::vector<std::string>*> parts[] = {
      {"train", &m.train}, {"val", &m.val}, {"test", &m.test}};
  for (const auto& [key, dest] : parts) {
    if (!j.contains(key) || !j[key].is_array()) throw LabelError(std::string("split manifest: missing array '") + key + "'");
    std::vector<std::string> ids;
    for (const auto& v : j[key]) {
      if (!v.is_string()) throw LabelError("split manifest: subject ids must be strings");
      ids.push_back(v.get<std::string>());
    }
    *dest = std::move(ids);
  }
  m.validate();
  return m;
}

}  // namespace sfus::data
