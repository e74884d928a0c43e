#ifndef MASKMOTION_REPORT_H_
#define MASKMOTION_REPORT_H_

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "maskmotion/training.h"

namespace maskmotion {

struct PlotSeries {
  std::string name;
  std::vector<std::pair<double, double>> points;
};

// Self-contained SVG documents.
std::string LineChartSvg(const std::string& title, const std::string& x_label,
                         const std::string& y_label,
                         const std::vector<PlotSeries>& series);
std::string BarChartSvg(const std::string& title, const std::string& y_label,
                        const std::vector<std::pair<std::string, double>>& bars);

std::vector<IterationReport> ParseLossCurveCsv(std::string_view text);

// What `report` needs from one run directory. Every run directory holds a
// metrics.json whose "kind" is "train" or "track"; train runs also hold
// loss.csv.
struct RunSummary {
  std::string name;  // directory name
  std::string kind;
  nlohmann::json metrics;
  std::vector<IterationReport> curve;
};

RunSummary LoadRunSummary(const std::filesystem::path& dir);

// Fixed-width comparison table, one row per run.
std::string ComparisonTable(const std::vector<RunSummary>& runs);

struct ReportFiles {
  std::string table;
  std::vector<std::filesystem::path> files;
};

// Writes report.txt, loss_curves.svg (train runs), idsw_bars.svg and
// stride_sweep.svg / stride_idsw.svg (track runs, one series per scorer)
// into out_dir.
ReportFiles WriteReport(const std::vector<std::filesystem::path>& run_dirs,
                        const std::filesystem::path& out_dir);

}  // namespace maskmotion

#endif  // MASKMOTION_REPORT_H_
