#include "maskmotion/report.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

#include "maskmotion/error.h"
#include "maskmotion/mask_io.h"

namespace maskmotion {

namespace fs = std::filesystem;

namespace {

constexpr double kWidth = 640, kHeight = 400;
constexpr double kLeft = 70, kRight = 160, kTop = 40, kBottom = 50;
constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                    "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};

std::string Escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string Num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

std::string Header(const std::string& title) {
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth
    << "\" height=\"" << kHeight << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
    << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    << "<text x=\"" << kWidth / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">"
    << Escape(title) << "</text>\n";
  return s.str();
}

struct Axis {
  double lo, hi;
  double Map(double v, double a, double b) const {
    return a + (v - lo) / (hi - lo) * (b - a);
  }
};

Axis MakeAxis(double lo, double hi) {
  if (!(hi > lo)) {
    lo -= 0.5;
    hi += 0.5;
  }
  const double pad = 0.05 * (hi - lo);
  return {lo - pad, hi + pad};
}

std::string Frame(const Axis& x, const Axis& y, const std::string& x_label,
                  const std::string& y_label, bool x_ticks) {
  std::ostringstream s;
  const double x0 = kLeft, x1 = kWidth - kRight, y0 = kHeight - kBottom, y1 = kTop;
  s << "<line x1=\"" << x0 << "\" y1=\"" << y0 << "\" x2=\"" << x1 << "\" y2=\"" << y0
    << "\" stroke=\"black\"/>\n"
    << "<line x1=\"" << x0 << "\" y1=\"" << y0 << "\" x2=\"" << x0 << "\" y2=\"" << y1
    << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double v = y.lo + (y.hi - y.lo) * i / 4.0;
    const double py = y.Map(v, y0, y1);
    s << "<text x=\"" << x0 - 6 << "\" y=\"" << py + 4 << "\" text-anchor=\"end\">"
      << Num(v) << "</text>\n";
    if (x_ticks) {
      const double u = x.lo + (x.hi - x.lo) * i / 4.0;
      s << "<text x=\"" << x.Map(u, x0, x1) << "\" y=\"" << y0 + 16
        << "\" text-anchor=\"middle\">" << Num(u) << "</text>\n";
    }
  }
  s << "<text x=\"" << (x0 + x1) / 2 << "\" y=\"" << kHeight - 12
    << "\" text-anchor=\"middle\">" << Escape(x_label) << "</text>\n"
    << "<text x=\"16\" y=\"" << (y0 + y1) / 2 << "\" text-anchor=\"middle\" "
    << "transform=\"rotate(-90 16 " << (y0 + y1) / 2 << ")\">" << Escape(y_label)
    << "</text>\n";
  return s.str();
}

double JsonNumber(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || !j.at(key).is_number()) return std::nan("");
  return j.at(key).get<double>();
}

std::string Cell(double v) { return std::isnan(v) ? "-" : Num(v); }

}  // namespace

std::string LineChartSvg(const std::string& title, const std::string& x_label,
                         const std::string& y_label,
                         const std::vector<PlotSeries>& series) {
  double xl = 1e300, xh = -1e300, yl = 1e300, yh = -1e300;
  for (const auto& s : series)
    for (const auto& [x, y] : s.points) {
      xl = std::min(xl, x), xh = std::max(xh, x);
      yl = std::min(yl, y), yh = std::max(yh, y);
    }
  if (xl > xh) xl = xh = yl = yh = 0.0;
  const Axis x = MakeAxis(xl, xh), y = MakeAxis(yl, yh);
  std::ostringstream out;
  out << Header(title) << Frame(x, y, x_label, y_label, true);
  for (size_t k = 0; k < series.size(); ++k) {
    const char* color = kPalette[k % std::size(kPalette)];
    out << "<g class=\"series\" data-name=\"" << Escape(series[k].name) << "\">\n";
    out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (const auto& [px, py] : series[k].points) {
      out << x.Map(px, kLeft, kWidth - kRight) << ","
          << y.Map(py, kHeight - kBottom, kTop) << " ";
    }
    out << "\"/>\n";
    if (series[k].points.size() < 30) {
      for (const auto& [px, py] : series[k].points) {
        out << "<circle r=\"3\" fill=\"" << color << "\" cx=\""
            << x.Map(px, kLeft, kWidth - kRight) << "\" cy=\""
            << y.Map(py, kHeight - kBottom, kTop) << "\"/>\n";
      }
    }
    const double ly = kTop + 16 * k + 10;
    out << "<line x1=\"" << kWidth - kRight + 10 << "\" y1=\"" << ly << "\" x2=\""
        << kWidth - kRight + 30 << "\" y2=\"" << ly << "\" stroke=\"" << color
        << "\" stroke-width=\"2\"/>\n"
        << "<text x=\"" << kWidth - kRight + 35 << "\" y=\"" << ly + 4 << "\">"
        << Escape(series[k].name) << "</text>\n</g>\n";
  }
  out << "</svg>\n";
  return out.str();
}

std::string BarChartSvg(const std::string& title, const std::string& y_label,
                        const std::vector<std::pair<std::string, double>>& bars) {
  double hi = 0.0;
  for (const auto& b : bars) hi = std::max(hi, b.second);
  const Axis y{0.0, hi > 0 ? hi * 1.1 : 1.0};
  const Axis x{0.0, 1.0};
  std::ostringstream out;
  out << Header(title) << Frame(x, y, "", y_label, false);
  const double span = kWidth - kRight - kLeft;
  const double slot = bars.empty() ? span : span / bars.size();
  for (size_t k = 0; k < bars.size(); ++k) {
    const double top = y.Map(bars[k].second, kHeight - kBottom, kTop);
    const double left = kLeft + slot * k + slot * 0.15;
    out << "<rect class=\"bar\" x=\"" << left << "\" y=\"" << top << "\" width=\""
        << slot * 0.7 << "\" height=\"" << kHeight - kBottom - top << "\" fill=\""
        << kPalette[k % std::size(kPalette)] << "\"/>\n"
        << "<text x=\"" << left + slot * 0.35 << "\" y=\"" << kHeight - kBottom + 16
        << "\" text-anchor=\"middle\">" << Escape(bars[k].first) << "</text>\n"
        << "<text x=\"" << left + slot * 0.35 << "\" y=\"" << top - 4
        << "\" text-anchor=\"middle\">" << Num(bars[k].second) << "</text>\n";
  }
  out << "</svg>\n";
  return out.str();
}

std::vector<IterationReport> ParseLossCurveCsv(std::string_view text) {
  std::vector<IterationReport> out;
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1 || line.empty()) continue;
    IterationReport r;
    char tail = 0;
    if (std::sscanf(line.c_str(), "%d,%lf,%lf,%lf,%lf%c", &r.iteration,
                    &r.step1_loss, &r.step2_loss, &r.dice, &r.focal, &tail) != 5) {
      throw Error(ErrorCategory::kFormat,
                  "line " + std::to_string(line_no) + ": expected 5 comma-separated numbers");
    }
    out.push_back(r);
  }
  return out;
}

RunSummary LoadRunSummary(const fs::path& dir) {
  RunSummary s;
  fs::path normal = fs::absolute(dir).lexically_normal();
  if (normal.filename().empty()) normal = normal.parent_path();
  s.name = normal.filename().string();
  const fs::path metrics = dir / "metrics.json";
  if (!fs::exists(metrics)) {
    throw Error(ErrorCategory::kIo, metrics.string() + ": metrics file not found");
  }
  try {
    s.metrics = nlohmann::json::parse(ReadFileBytes(metrics));
    s.kind = s.metrics.at("kind").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCategory::kFormat, metrics.string() + ": " + e.what());
  }
  if (s.kind == "train") {
    const fs::path csv = dir / "loss.csv";
    try {
      s.curve = ParseLossCurveCsv(ReadFileBytes(csv));
    } catch (const Error& e) {
      if (e.category() == ErrorCategory::kIo) throw;
      throw Error(e.category(), csv.string() + ": " + e.what());
    }
  } else if (s.kind != "track") {
    throw Error(ErrorCategory::kFormat,
                metrics.string() + ": unknown run kind '" + s.kind + "'");
  }
  return s;
}

std::string ComparisonTable(const std::vector<RunSummary>& runs) {
  const std::vector<std::string> header = {
      "run", "kind", "scorer", "stride", "IDSw", "IDF1", "MOTSA", "mean_iou",
      "forecast_iou", "val_iou", "copy_last_iou", "step2_loss"};
  std::vector<std::vector<std::string>> rows;
  for (const auto& r : runs) {
    const auto& m = r.metrics;
    std::vector<std::string> row(header.size(), "-");
    row[0] = r.name;
    row[1] = r.kind;
    if (r.kind == "track") {
      row[2] = m.value("scorer", "-");
      row[3] = Cell(JsonNumber(m, "sample_stride"));
      row[4] = Cell(JsonNumber(m, "IDSw"));
      row[5] = Cell(JsonNumber(m, "IDF1"));
      row[6] = Cell(JsonNumber(m, "MOTSA"));
      row[7] = Cell(JsonNumber(m, "mean_iou"));
      row[8] = Cell(JsonNumber(m, "forecast_iou"));
    } else {
      if (m.contains("val")) {
        row[9] = Cell(JsonNumber(m.at("val"), "model_iou"));
        row[10] = Cell(JsonNumber(m.at("val"), "copy_last_iou"));
      }
      if (!r.curve.empty()) row[11] = Cell(r.curve.back().step2_loss);
    }
    rows.push_back(std::move(row));
  }
  std::vector<size_t> width(header.size());
  for (size_t c = 0; c < header.size(); ++c) {
    width[c] = header[c].size();
    for (const auto& row : rows) width[c] = std::max(width[c], row[c].size());
  }
  auto emit = [&](const std::vector<std::string>& row) {
    std::string line;
    for (size_t c = 0; c < row.size(); ++c) {
      line += row[c];
      if (c + 1 < row.size()) line += std::string(width[c] - row[c].size() + 2, ' ');
    }
    return line + "\n";
  };
  std::string out = emit(header);
  for (const auto& row : rows) out += emit(row);
  return out;
}

ReportFiles WriteReport(const std::vector<fs::path>& run_dirs, const fs::path& out_dir) {
  if (run_dirs.empty()) {
    throw Error(ErrorCategory::kUsage, "report needs at least one run directory");
  }
  std::vector<RunSummary> runs;
  for (const auto& d : run_dirs) runs.push_back(LoadRunSummary(d));

  ReportFiles result;
  result.table = ComparisonTable(runs);
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw Error(ErrorCategory::kIo, out_dir.string() + ": " + ec.message());
  auto write = [&](const std::string& name, const std::string& body) {
    WriteFileBytes(out_dir / name, body);
    result.files.push_back(out_dir / name);
  };
  write("report.txt", result.table);

  std::vector<PlotSeries> losses;
  std::vector<std::pair<std::string, double>> idsw;
  std::map<std::string, PlotSeries> sweep_iou, sweep_idsw;
  for (const auto& r : runs) {
    if (r.kind == "train") {
      PlotSeries s{r.name, {}};
      for (const auto& it : r.curve) s.points.emplace_back(it.iteration, it.step2_loss);
      losses.push_back(std::move(s));
      continue;
    }
    idsw.emplace_back(r.name, JsonNumber(r.metrics, "IDSw"));
    const double stride = JsonNumber(r.metrics, "sample_stride");
    if (std::isnan(stride)) continue;
    const std::string scorer = r.metrics.value("scorer", "unknown");
    sweep_iou[scorer].name = scorer;
    sweep_iou[scorer].points.emplace_back(stride, JsonNumber(r.metrics, "forecast_iou"));
    sweep_idsw[scorer].name = scorer;
    sweep_idsw[scorer].points.emplace_back(stride, JsonNumber(r.metrics, "IDSw"));
  }
  if (!losses.empty()) {
    write("loss_curves.svg", LineChartSvg("Step-2 loss", "iteration", "loss", losses));
  }
  if (!idsw.empty()) {
    write("idsw_bars.svg", BarChartSvg("Identity switches", "IDSw", idsw));
    auto flatten = [](std::map<std::string, PlotSeries>& m) {
      std::vector<PlotSeries> v;
      for (auto& [k, s] : m) {
        std::sort(s.points.begin(), s.points.end());
        v.push_back(s);
      }
      return v;
    };
    write("stride_sweep.svg", LineChartSvg("Forecast IoU vs. sample stride", "stride",
                                           "forecast IoU", flatten(sweep_iou)));
    write("stride_idsw.svg", LineChartSvg("IDSw vs. sample stride", "stride", "IDSw",
                                          flatten(sweep_idsw)));
  }
  return result;
}

}  // namespace maskmotion
