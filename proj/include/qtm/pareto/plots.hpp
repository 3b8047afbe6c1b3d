#pragma once

#include "qtm/common/atomic_file.hpp"
#include "qtm/pareto/csv.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace qtm::pareto {

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
  bool points = false;  ///< markers instead of a polyline
};

/// Minimal SVG chart: axes with min/max tick labels, one colour per series,
/// legend in the top-right corner. Non-finite samples are skipped.
inline std::string render_svg(const std::vector<Series>& series, const std::string& title, const std::string& xlabel,
                              const std::string& ylabel) {
  static const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};
  const double w = 640, h = 420, ml = 70, mr = 20, mt = 40, mb = 50;
  double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
  for (const auto& s : series)
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, s.y[i]);
      y1 = std::max(y1, s.y[i]);
    }
  if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (x1 == x0) x0 -= 0.5, x1 += 0.5;
  if (y1 == y0) y0 -= 0.5, y1 += 0.5;
  auto px = [&](double x) { return ml + (x - x0) / (x1 - x0) * (w - ml - mr); };
  auto py = [&](double y) { return h - mb - (y - y0) / (y1 - y0) * (h - mt - mb); };
  auto num = [](double v) {
    char b[32];
    std::snprintf(b, sizeof b, "%.4g", v);
    return std::string(b);
  };
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << w / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">" << title << "</text>\n";
  os << "<line x1=\"" << ml << "\" y1=\"" << h - mb << "\" x2=\"" << w - mr << "\" y2=\"" << h - mb
     << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << h - mb << "\" stroke=\"black\"/>\n";
  os << "<text x=\"" << ml << "\" y=\"" << h - mb + 16 << "\" font-size=\"11\">" << num(x0) << "</text>\n";
  os << "<text x=\"" << w - mr << "\" y=\"" << h - mb + 16 << "\" font-size=\"11\" text-anchor=\"end\">" << num(x1)
     << "</text>\n";
  os << "<text x=\"" << ml - 4 << "\" y=\"" << h - mb << "\" font-size=\"11\" text-anchor=\"end\">" << num(y0)
     << "</text>\n";
  os << "<text x=\"" << ml - 4 << "\" y=\"" << mt + 10 << "\" font-size=\"11\" text-anchor=\"end\">" << num(y1)
     << "</text>\n";
  os << "<text x=\"" << (ml + w - mr) / 2 << "\" y=\"" << h - 12 << "\" text-anchor=\"middle\" font-size=\"13\">"
     << xlabel << "</text>\n";
  os << "<text x=\"16\" y=\"" << (mt + h - mb) / 2 << "\" text-anchor=\"middle\" font-size=\"13\" transform=\"rotate(-90 16 "
     << (mt + h - mb) / 2 << ")\">" << ylabel << "</text>\n";
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    const char* col = kColors[k % 6];
    if (s.points) {
      for (std::size_t i = 0; i < s.x.size(); ++i)
        if (std::isfinite(s.x[i]) && std::isfinite(s.y[i]))
          os << "<circle cx=\"" << px(s.x[i]) << "\" cy=\"" << py(s.y[i]) << "\" r=\"4\" fill=\"" << col << "\"/>\n";
    } else {
      os << "<polyline fill=\"none\" stroke=\"" << col << "\" stroke-width=\"1.2\" points=\"";
      for (std::size_t i = 0; i < s.x.size(); ++i)
        if (std::isfinite(s.x[i]) && std::isfinite(s.y[i])) os << px(s.x[i]) << ',' << py(s.y[i]) << ' ';
      os << "\"/>\n";
    }
    os << "<text x=\"" << w - mr - 4 << "\" y=\"" << mt + 14 * (k + 1) << "\" text-anchor=\"end\" font-size=\"12\" fill=\""
       << col << "\">" << s.label << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

struct PlotOptions {
  std::optional<std::uint64_t> seed;  ///< keep only RL results of this seed
};

struct PlotReport {
  bool no_data = false;
  std::vector<std::filesystem::path> files;
  std::vector<std::string> gaps;
};

/// Writes plot data and SVG renderings for a sweep directory into
/// `dir/plots`: the Pareto scatter, return-vs-step per run (verbatim copy
/// of the training log) and the extracted cycle traces.
inline PlotReport emit_plots(const std::filesystem::path& dir, const PlotOptions& opt = {}) {
  namespace fs = std::filesystem;
  const fs::path out = dir / "plots";
  fs::create_directories(out);
  PlotReport rep;
  auto write = [&](const fs::path& p, const std::string& text) {
    io::write_text_atomic(p, text);
    rep.files.push_back(p);
  };

  // Pareto scatter.
  CsvTable pts;
  if (fs::exists(dir / "pareto.csv")) pts = read_csv(dir / "pareto.csv");
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < pts.rows.size(); ++i) {
    const bool rl = pts.get(i, "source") == "rl";
    if (opt.seed && (!rl || std::stoull(pts.get(i, "seed")) != *opt.seed)) continue;
    keep.push_back(i);
  }

  // Runs with logs.
  std::vector<fs::path> runs;
  if (fs::exists(dir / "runs"))
    for (const auto& e : fs::directory_iterator(dir / "runs"))
      if (e.is_directory()) runs.push_back(e.path());
  std::sort(runs.begin(), runs.end());
  if (opt.seed) {
    const std::string suffix = "_s" + std::to_string(*opt.seed);
    std::erase_if(runs, [&](const fs::path& p) {
      const std::string n = p.filename().string();
      return n.rfind("rl_", 0) != 0 || n.size() < suffix.size() || n.compare(n.size() - suffix.size(), suffix.size(), suffix) != 0;
    });
  }

  if (keep.empty() && runs.empty()) {
    rep.no_data = true;
    write(out / "NO_DATA", opt.seed ? "no data for seed " + std::to_string(*opt.seed) + "\n" : "no data\n");
    return rep;
  }

  if (!keep.empty()) {
    std::ostringstream csv;
    csv << "c,seed,source,power,efficiency,sigma,return\n";
    std::vector<Series> by_source;
    for (const char* src : {"rl", "trapezoid", "otto"}) by_source.push_back({src, {}, {}, true});
    for (std::size_t i : keep) {
      const auto& r = pts.rows[i];
      csv << pts.get(i, "c") << ',' << pts.get(i, "seed") << ',' << pts.get(i, "source") << ','
          << pts.get(i, "power") << ',' << pts.get(i, "efficiency") << ',' << pts.get(i, "sigma") << ','
          << pts.get(i, "return") << '\n';
      const double p = pts.number(i, "power"), e = pts.number(i, "efficiency");
      if (!std::isfinite(p) || !std::isfinite(e)) rep.gaps.push_back("pareto row " + std::to_string(i + 1) + ": " + r[0]);
      for (auto& s : by_source)
        if (s.label == pts.get(i, "source")) {
          s.x.push_back(e);
          s.y.push_back(p);
        }
    }
    std::erase_if(by_source, [](const Series& s) { return s.x.empty(); });
    write(out / "pareto_scatter.csv", csv.str());
    write(out / "pareto_scatter.svg", render_svg(by_source, "Pareto front", "efficiency", "power / P0"));
  }

  // Manifest errors show up as gaps.
  if (fs::exists(dir / "manifest.csv")) {
    const CsvTable m = read_csv(dir / "manifest.csv");
    for (std::size_t i = 0; i < m.rows.size(); ++i)
      if (m.get(i, "status") == "error")
        rep.gaps.push_back(m.get(i, "source") + " c=" + m.get(i, "c") + " seed=" + m.get(i, "seed") + ": " +
                           m.get(i, "message"));
  }

  for (const auto& run : runs) {
    const std::string name = run.filename().string();
    if (fs::exists(run / "train_log.csv")) {
      const std::string text = io::read_text(run / "train_log.csv");
      write(out / ("return_vs_step_" + name + ".csv"), text);
      const CsvTable t = parse_csv(text);
      Series s{"return", {}, {}, false};
      for (std::size_t i = 0; i < t.rows.size(); ++i) {
        s.x.push_back(t.number(i, "step"));
        s.y.push_back(t.number(i, "return"));
      }
      write(out / ("return_vs_step_" + name + ".svg"), render_svg({s}, name, "step", "return"));
    }
    if (fs::exists(run / "cycle_trace.csv")) {
      const std::string text = io::read_text(run / "cycle_trace.csv");
      write(out / ("cycle_" + name + ".csv"), text);
      const CsvTable t = parse_csv(text);
      Series s{"u", {}, {}, false};
      for (std::size_t i = 0; i < t.rows.size(); ++i) {
        s.x.push_back(t.number(i, "t"));
        s.y.push_back(t.number(i, "u"));
      }
      write(out / ("cycle_" + name + ".svg"), render_svg({s}, name, "t", "u"));
    }
  }

  if (!rep.gaps.empty()) {
    std::string g;
    for (const auto& s : rep.gaps) g += s + "\n";
    write(out / "gaps.txt", g);
  }
  return rep;
}

}  // namespace qtm::pareto
