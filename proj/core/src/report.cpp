#include "sfus/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <nlohmann/json.hpp>
#include <sstream>

namespace sfus::report {

namespace {

using nlohmann::ordered_json;

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string pad(std::string s, std::size_t width, bool right) {
  if (s.size() >= width) return s;
  return right ? std::string(width - s.size(), ' ') + s : s + std::string(width - s.size(), ' ');
}

/// First row is the header; column 0 is left aligned, the rest right aligned.
std::string aligned(const std::vector<std::vector<std::string>>& cells) {
  std::vector<std::size_t> width;
  for (const auto& row : cells) {
    width.resize(std::max(width.size(), row.size()));
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
  }
  std::ostringstream out;
  for (std::size_t r = 0; r < cells.size(); ++r) {
    std::string line;
    for (std::size_t c = 0; c < cells[r].size(); ++c) {
      if (c > 0) line += "  ";
      line += pad(cells[r][c], width[c], c > 0);
    }
    while (!line.empty() && line.back() == ' ') line.pop_back();
    out << line << '\n';
    if (r == 0) {
      std::size_t total = 0;
      for (std::size_t w : width) total += w;
      out << std::string(total + 2 * (width.size() - 1), '-') << '\n';
    }
  }
  return out.str();
}

ordered_json mae_json(const metrics::MeasuresMae& m) {
  return ordered_json{{"tst_min", m.tst_min},       {"se_pct", m.se_pct},         {"fr_light_pct", m.fr_light_pct},
                      {"fr_deep_pct", m.fr_deep_pct}, {"fr_rem_pct", m.fr_rem_pct}, {"subjects", m.subjects}};
}

std::string svg_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

constexpr const char* kPalette[] = {"#4c72b0", "#dd8452", "#55a868", "#c44e52", "#8172b3", "#937860"};

}  // namespace

Evaluation evaluate_probs(std::string name, const Tensor& probs, std::span<const int> labels,
                          std::span<const std::string> subjects) {
  if (probs.rank() != 2 || probs.dim(1) != kNumStages) throw ShapeError("evaluate: probabilities must be [N, 4]");
  if (probs.dim(0) != labels.size()) throw metrics::MetricError("evaluate: one label per probability row required");
  if (!subjects.empty() && subjects.size() != labels.size()) {
    throw metrics::MetricError("evaluate: one subject id per row required");
  }
  Evaluation e;
  e.name = std::move(name);
  const std::vector<int> pred = metrics::argmax_rows(probs.values());
  e.confusion = metrics::confusion(pred, labels);
  e.kappa = metrics::kappa(e.confusion);
  e.accuracy = metrics::accuracy(e.confusion);
  e.classes = metrics::class_metrics(e.confusion);
  if (!subjects.empty()) {
    std::vector<Hypnogram> p, r;
    std::map<std::string, std::size_t, std::less<>> slot;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      auto [it, fresh] = slot.try_emplace(subjects[i], p.size());
      if (fresh) {
        p.push_back({subjects[i], {}, LabelScheme::kFused4, {}});
        r.push_back({subjects[i], {}, LabelScheme::kFused4, {}});
      }
      p[it->second].stages.push_back(pred[i]);
      r[it->second].stages.push_back(labels[i]);
    }
    e.mae = metrics::measures_mae(p, r);
  }
  return e;
}

std::string evaluation_to_json(const Evaluation& e, bool with_timing) {
  ordered_json j;
  j["name"] = e.name;
  j["kappa"] = e.kappa;
  j["accuracy"] = e.accuracy;
  j["macro_f1"] = e.classes.macro_f1;
  j["params"] = e.params;
  if (with_timing && e.infer_ms) j["infer_ms"] = *e.infer_ms;
  ordered_json cm = ordered_json::array();
  for (const auto& row : e.confusion.counts) cm.push_back(row);
  j["confusion"] = cm;
  ordered_json stages = ordered_json::object();
  for (int c = 0; c < kNumStages; ++c) {
    const auto& s = e.classes.per_stage[c];
    stages[std::string(kStageNames[c])] = ordered_json{
        {"recall", s.recall}, {"precision", s.precision}, {"f1", s.f1}, {"degenerate", s.degenerate}};
  }
  j["stages"] = stages;
  j["mae"] = mae_json(e.mae);
  if (e.alpha) {
    ordered_json grid = ordered_json::array();
    for (std::size_t k = 0; k < e.alpha->alphas.size(); ++k) {
      grid.push_back(ordered_json{{"alpha", e.alpha->alphas[k]}, {"kappa", e.alpha->kappas[k]}});
    }
    j["alpha"] = ordered_json{{"best", e.alpha->best_alpha}, {"grid", grid}};
  }
  return j.dump(2) + "\n";
}

Evaluation evaluation_from_json(std::string_view text) {
  const auto j = nlohmann::json::parse(text);
  Evaluation e;
  e.name = j.at("name").get<std::string>();
  e.kappa = j.at("kappa").get<double>();
  e.accuracy = j.at("accuracy").get<double>();
  e.classes.accuracy = e.accuracy;
  e.classes.macro_f1 = j.at("macro_f1").get<double>();
  e.params = j.at("params").get<std::size_t>();
  if (j.contains("infer_ms")) e.infer_ms = j.at("infer_ms").get<double>();
  const auto& cm = j.at("confusion");
  if (!cm.is_array() || cm.size() != kNumStages) throw metrics::MetricError("report: confusion must be 4x4");
  for (int t = 0; t < kNumStages; ++t) {
    if (!cm[t].is_array() || cm[t].size() != kNumStages) throw metrics::MetricError("report: confusion must be 4x4");
    for (int p = 0; p < kNumStages; ++p) e.confusion.counts[t][p] = cm[t][p].get<std::int64_t>();
  }
  for (int c = 0; c < kNumStages; ++c) {
    const auto& s = j.at("stages").at(std::string(kStageNames[c]));
    auto& out = e.classes.per_stage[c];
    out.recall = s.at("recall").get<double>();
    out.precision = s.at("precision").get<double>();
    out.f1 = s.at("f1").get<double>();
    out.degenerate = s.at("degenerate").get<bool>();
  }
  const auto& m = j.at("mae");
  e.mae.tst_min = m.at("tst_min").get<double>();
  e.mae.se_pct = m.at("se_pct").get<double>();
  e.mae.fr_light_pct = m.at("fr_light_pct").get<double>();
  e.mae.fr_deep_pct = m.at("fr_deep_pct").get<double>();
  e.mae.fr_rem_pct = m.at("fr_rem_pct").get<double>();
  e.mae.subjects = m.at("subjects").get<std::size_t>();
  if (j.contains("alpha")) {
    models::AlphaSearch a;
    a.best_alpha = j.at("alpha").at("best").get<double>();
    const auto& grid = j.at("alpha").at("grid");
    if (grid.size() != models::kAlphaGridPoints) throw metrics::MetricError("report: alpha grid must have 11 points");
    for (std::size_t k = 0; k < grid.size(); ++k) {
      a.alphas[k] = grid[k].at("alpha").get<double>();
      a.kappas[k] = grid[k].at("kappa").get<double>();
    }
    e.alpha = a;
  }
  return e;
}

std::string format_size(std::size_t params) {
  if (params >= 1'000'000) return fixed(static_cast<double>(params) / 1e6, 2) + "M";
  if (params >= 1'000) return fixed(static_cast<double>(params) / 1e3, 1) + "K";
  return std::to_string(params);
}

std::string comparison_table(std::span<const Evaluation> rows) {
  std::vector<std::vector<std::string>> cells{
      {"Model", "kappa", "Acc", "Size", "Infer. ms", "F1 Wake", "F1 Light", "F1 Deep", "F1 REM", "TST MAE"}};
  for (const Evaluation& e : rows) {
    std::vector<std::string> row{e.name, fixed(e.kappa, 3), fixed(e.accuracy, 3),
                                 e.params ? format_size(e.params) : "-", e.infer_ms ? fixed(*e.infer_ms, 2) : "-"};
    for (const auto& s : e.classes.per_stage) row.push_back(fixed(s.f1, 3));
    row.push_back(fixed(e.mae.tst_min, 2));
    cells.push_back(std::move(row));
  }
  return aligned(cells);
}

std::string sweep_to_json(std::string_view modality, std::span<const SweepRow> rows, bool with_timing) {
  ordered_json arr = ordered_json::array();
  for (const SweepRow& r : rows) {
    ordered_json j{{"window", r.label}, {"epochs", r.window}, {"kappa", r.kappa},
                   {"accuracy", r.accuracy}, {"params", r.params}};
    if (r.depth != 0) j["depth"] = r.depth;
    if (with_timing) j["infer_ms"] = r.infer_ms;
    arr.push_back(j);
  }
  return ordered_json{{"modality", modality}, {"rows", arr}}.dump(2) + "\n";
}

std::string sweep_table(std::string_view modality, std::span<const SweepRow> rows) {
  const bool ppg = modality == "ppg";
  std::vector<std::vector<std::string>> cells;
  cells.push_back({"Window", "kappa", "Acc", "Size", "Infer. ms"});
  if (ppg) cells[0].push_back("Depth");
  for (const SweepRow& r : rows) {
    std::vector<std::string> row{r.label, fixed(r.kappa, 3), fixed(r.accuracy, 3), format_size(r.params),
                                 fixed(r.infer_ms, 2)};
    if (ppg) row.push_back(std::to_string(r.depth));
    cells.push_back(std::move(row));
  }
  return aligned(cells);
}

std::string alpha_curve_svg(const models::AlphaSearch& search) {
  constexpr double w = 480, h = 320, left = 60, right = 20, top = 30, bottom = 50;
  double lo = *std::min_element(search.kappas.begin(), search.kappas.end());
  double hi = *std::max_element(search.kappas.begin(), search.kappas.end());
  if (hi - lo < 1e-6) lo -= 0.05, hi += 0.05;
  const double margin = 0.05 * (hi - lo);
  lo -= margin, hi += margin;
  const auto x = [&](double a) { return left + a * (w - left - right); };
  const auto y = [&](double k) { return h - bottom - (k - lo) / (hi - lo) * (h - top - bottom); };

  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s << "<text x=\"" << w / 2 << "\" y=\"18\" text-anchor=\"middle\" font-size=\"13\">Validation kappa vs fusion weight</text>\n";
  s << "<line x1=\"" << left << "\" y1=\"" << h - bottom << "\" x2=\"" << w - right << "\" y2=\"" << h - bottom << "\" stroke=\"black\"/>\n";
  s << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << h - bottom << "\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 10; k += 2) {
    const double a = k / 10.0;
    s << "<text x=\"" << fixed(x(a), 1) << "\" y=\"" << h - bottom + 16 << "\" text-anchor=\"middle\">" << fixed(a, 1) << "</text>\n";
  }
  for (int k = 0; k <= 4; ++k) {
    const double v = lo + (hi - lo) * k / 4.0;
    s << "<text x=\"" << left - 6 << "\" y=\"" << fixed(y(v) + 4, 1) << "\" text-anchor=\"end\">" << fixed(v, 3) << "</text>\n";
  }
  s << "<text x=\"" << (left + w - right) / 2 << "\" y=\"" << h - 12 << "\" text-anchor=\"middle\">alpha (PPG weight)</text>\n";
  s << "<text x=\"16\" y=\"" << (top + h - bottom) / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " << (top + h - bottom) / 2 << ")\">kappa</text>\n";
  s << "<polyline fill=\"none\" stroke=\"" << kPalette[0] << "\" stroke-width=\"2\" points=\"";
  for (std::size_t k = 0; k < search.alphas.size(); ++k) {
    s << (k ? " " : "") << fixed(x(search.alphas[k]), 1) << ',' << fixed(y(search.kappas[k]), 1);
  }
  s << "\"/>\n";
  for (std::size_t k = 0; k < search.alphas.size(); ++k) {
    const bool best = search.alphas[k] == search.best_alpha;
    s << "<circle cx=\"" << fixed(x(search.alphas[k]), 1) << "\" cy=\"" << fixed(y(search.kappas[k]), 1) << "\" r=\""
      << (best ? 5 : 3) << "\" fill=\"" << (best ? kPalette[3] : kPalette[0]) << "\"/>\n";
  }
  const auto best = std::find(search.alphas.begin(), search.alphas.end(), search.best_alpha) - search.alphas.begin();
  s << "<text x=\"" << fixed(x(search.best_alpha), 1) << "\" y=\"" << fixed(y(search.kappas[best]) - 10, 1)
    << "\" text-anchor=\"middle\" fill=\"" << kPalette[3] << "\">best " << fixed(search.best_alpha, 1) << "</text>\n";
  s << "</svg>\n";
  return s.str();
}

std::string mae_bars_svg(std::span<const Evaluation> rows) {
  struct Measure {
    const char* label;
    double metrics::MeasuresMae::*field;
  };
  static constexpr Measure kMeasures[] = {{"TST (min)", &metrics::MeasuresMae::tst_min},
                                          {"SE (%)", &metrics::MeasuresMae::se_pct},
                                          {"FR Light (%)", &metrics::MeasuresMae::fr_light_pct},
                                          {"FR Deep (%)", &metrics::MeasuresMae::fr_deep_pct},
                                          {"FR REM (%)", &metrics::MeasuresMae::fr_rem_pct}};
  constexpr double panel = 170, h = 300, top = 40, bottom = 60;
  const double w = panel * std::size(kMeasures) + 20;
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s << "<text x=\"" << w / 2 << "\" y=\"18\" text-anchor=\"middle\" font-size=\"13\">Sleep-measure MAE</text>\n";
  const double n = std::max<double>(1.0, static_cast<double>(rows.size()));
  for (std::size_t m = 0; m < std::size(kMeasures); ++m) {
    double peak = 0.0;
    for (const Evaluation& e : rows) peak = std::max(peak, e.mae.*kMeasures[m].field);
    if (peak <= 0.0) peak = 1.0;
    const double x0 = 20 + panel * static_cast<double>(m), base = h - bottom, bar = (panel - 30) / n;
    s << "<line x1=\"" << x0 << "\" y1=\"" << base << "\" x2=\"" << x0 + panel - 20 << "\" y2=\"" << base << "\" stroke=\"black\"/>\n";
    s << "<text x=\"" << x0 + (panel - 20) / 2 << "\" y=\"" << base + 16 << "\" text-anchor=\"middle\">" << kMeasures[m].label << "</text>\n";
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const double v = rows[i].mae.*kMeasures[m].field;
      const double bh = v / peak * (h - top - bottom);
      const double bx = x0 + 5 + bar * static_cast<double>(i);
      s << "<rect x=\"" << fixed(bx, 1) << "\" y=\"" << fixed(base - bh, 1) << "\" width=\"" << fixed(bar - 2, 1)
        << "\" height=\"" << fixed(bh, 1) << "\" fill=\"" << kPalette[i % std::size(kPalette)] << "\"/>\n";
      s << "<text x=\"" << fixed(bx + (bar - 2) / 2, 1) << "\" y=\"" << fixed(base - bh - 3, 1)
        << "\" text-anchor=\"middle\" font-size=\"9\">" << fixed(v, 1) << "</text>\n";
    }
  }
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const double lx = 20 + 120 * static_cast<double>(i);
    s << "<rect x=\"" << lx << "\" y=\"" << h - 24 << "\" width=\"10\" height=\"10\" fill=\"" << kPalette[i % std::size(kPalette)] << "\"/>\n";
    s << "<text x=\"" << lx + 14 << "\" y=\"" << h - 15 << "\">" << svg_escape(rows[i].name) << "</text>\n";
  }
  s << "</svg>\n";
  return s.str();
}

}  // namespace sfus::report
