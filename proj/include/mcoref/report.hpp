#pragma once

#include <string>
#include <vector>

#include "mcoref/metrics.hpp"
#include "mcoref/training.hpp"

namespace mcoref {

// One completed run: its resolved config and reports, as found on disk.
struct RunSummary {
  std::string name;
  std::string config_json;  // resolved run config
  bool has_train_report = false;
  TrainReport train_report;
  bool has_metric_report = false;
  MetricReport metric_report;
};

RunSummary load_run_summary(const std::string& run_dir);

// Markdown comparison table over the runs (arch x reg x traces axes plus
// metrics); fields whose values differ across runs are marked.
std::string comparison_table(const std::vector<RunSummary>& runs);

// Static SVG polyline plot of one or more named series.
struct Series {
  std::string label;
  std::vector<double> values;
};
std::string svg_line_plot(const std::vector<Series>& series, const std::string& title);

void write_text_file(const std::string& path, const std::string& content);

}  // namespace mcoref
