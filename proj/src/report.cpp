#include "mcoref/report.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

namespace mcoref {

namespace fs = std::filesystem;
using nlohmann::json;

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write file: " + path);
  out << content;
}

RunSummary load_run_summary(const std::string& run_dir) {
  RunSummary run;
  run.name = fs::path(run_dir).filename().string();
  if (run.name.empty()) run.name = run_dir;
  const fs::path dir(run_dir);
  if (!fs::is_directory(dir)) throw std::runtime_error("not a run directory: " + run_dir);
  const fs::path cfg = dir / "resolved_config.json";
  if (fs::exists(cfg)) {
    std::ifstream in(cfg);
    run.config_json.assign((std::istreambuf_iterator<char>(in)),
                           std::istreambuf_iterator<char>());
  }
  const fs::path train = dir / "train_report.json";
  if (fs::exists(train)) {
    run.train_report = TrainReport::load(train.string());
    run.has_train_report = true;
  }
  const fs::path metrics = dir / "metric_report.json";
  if (fs::exists(metrics)) {
    std::ifstream in(metrics);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    run.metric_report = MetricReport::from_json(text);
    run.has_metric_report = true;
  }
  return run;
}

namespace {

std::string config_field(const std::string& config_json, const std::string& key) {
  if (config_json.empty()) return "-";
  json j = json::parse(config_json, nullptr, false);
  if (j.is_discarded() || !j.contains(key)) return "-";
  const json& v = j.at(key);
  return v.is_string() ? v.get<std::string>() : v.dump();
}

std::string fmt(double v) {
  std::ostringstream ss;
  ss.precision(4);
  ss << std::fixed << v;
  return ss.str();
}

}  // namespace

std::string comparison_table(const std::vector<RunSummary>& runs) {
  const std::vector<std::string> axes = {"arch", "reg", "use_traces", "attention", "lambda",
                                         "lr", "seed"};
  // mark config fields that differ between runs
  std::set<std::string> differing;
  for (const std::string& key : axes) {
    std::set<std::string> values;
    for (const RunSummary& r : runs) values.insert(config_field(r.config_json, key));
    if (values.size() > 1) differing.insert(key);
  }
  std::ostringstream out;
  out << "| run |";
  for (const std::string& key : axes) out << ' ' << key << (differing.count(key) ? "*" : "") << " |";
  out << " MUC-F1 | BLANC-F1 | grounding |\n";
  out << "|---|";
  for (size_t i = 0; i < axes.size(); ++i) out << "---|";
  out << "---|---|---|\n";
  for (const RunSummary& r : runs) {
    out << "| " << r.name << " |";
    for (const std::string& key : axes) out << ' ' << config_field(r.config_json, key) << " |";
    if (r.has_metric_report) {
      out << ' ' << fmt(r.metric_report.muc.f1) << " | " << fmt(r.metric_report.blanc.f1)
          << " | " << fmt(r.metric_report.grounding.overall) << " |\n";
    } else if (r.has_train_report && r.train_report.best_epoch >= 0 &&
               r.train_report.has_validation) {
      const MetricReport& m =
          r.train_report.val_metrics[static_cast<size_t>(r.train_report.best_epoch)];
      out << ' ' << fmt(m.muc.f1) << " | " << fmt(m.blanc.f1) << " | "
          << fmt(m.grounding.overall) << " |\n";
    } else {
      out << " - | - | - |\n";
    }
  }
  if (!differing.empty()) out << "\nfields marked * differ across the compared runs\n";
  return out.str();
}

std::string svg_line_plot(const std::vector<Series>& series, const std::string& title) {
  const int width = 720, height = 420, margin = 50;
  double lo = 0, hi = 1e-9;
  size_t n = 0;
  for (const Series& s : series) {
    n = std::max(n, s.values.size());
    for (double v : s.values) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  if (n < 2) n = 2;
  if (hi <= lo) hi = lo + 1;
  const std::vector<std::string> colors = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                           "#ff7f0e", "#8c564b"};
  auto x_at = [&](size_t i) {
    return margin + static_cast<double>(i) * (width - 2 * margin) / static_cast<double>(n - 1);
  };
  auto y_at = [&](double v) {
    return height - margin - (v - lo) / (hi - lo) * (height - 2 * margin);
  };
  std::ostringstream svg;
  svg << "<svg xmlns='http://www.w3.org/2000/svg' width='" << width << "' height='" << height
      << "'>\n";
  svg << "<rect width='100%' height='100%' fill='white'/>\n";
  svg << "<text x='" << width / 2 << "' y='24' text-anchor='middle' font-size='16'>" << title
      << "</text>\n";
  svg << "<line x1='" << margin << "' y1='" << height - margin << "' x2='" << width - margin
      << "' y2='" << height - margin << "' stroke='black'/>\n";
  svg << "<line x1='" << margin << "' y1='" << margin << "' x2='" << margin << "' y2='"
      << height - margin << "' stroke='black'/>\n";
  svg << "<text x='" << margin - 8 << "' y='" << y_at(lo) << "' text-anchor='end' font-size='11'>"
      << fmt(lo) << "</text>\n";
  svg << "<text x='" << margin - 8 << "' y='" << y_at(hi) << "' text-anchor='end' font-size='11'>"
      << fmt(hi) << "</text>\n";
  for (size_t s = 0; s < series.size(); ++s) {
    const std::string& color = colors[s % colors.size()];
    svg << "<polyline fill='none' stroke='" << color << "' stroke-width='1.5' points='";
    for (size_t i = 0; i < series[s].values.size(); ++i)
      svg << x_at(i) << ',' << y_at(series[s].values[i]) << ' ';
    svg << "'/>\n";
    svg << "<text x='" << width - margin + 4 << "' y='" << margin + 16 * static_cast<int>(s)
        << "' font-size='11' fill='" << color << "'>" << series[s].label << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace mcoref
