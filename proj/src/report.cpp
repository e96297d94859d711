// SPDX-License-Identifier: Apache-2.0
#include "hafx/report.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace hafx {

std::vector<ReportRow> report_rows(const std::string& run_id, const EvalReport& r) {
  std::vector<ReportRow> out;
  for (const auto& e : r.rows) out.push_back({run_id, e.stage, e.mode, e.task, e.metric, e.value});
  return out;
}

std::string report_csv_line(const ReportRow& r) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", r.value);
  return r.run_id + "," + r.stage + "," + r.mode + "," + r.task + "," + r.metric + "," + buf;
}

void append_report(const std::string& path, const std::vector<ReportRow>& rows) {
  const std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  const bool fresh = !std::filesystem::exists(p) || std::filesystem::file_size(p) == 0;
  std::ofstream out(path, std::ios::app);
  if (!out) throw std::runtime_error("cannot open report " + path);
  if (fresh) out << kReportCsvHeader << "\n";
  for (const auto& r : rows) out << report_csv_line(r) << "\n";
}

std::vector<ReportRow> read_report(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open report " + path);
  std::string line;
  if (!std::getline(in, line) || line != kReportCsvHeader) throw std::runtime_error(path + ": bad report header");
  std::vector<ReportRow> rows;
  std::size_t n = 1;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string item; std::getline(ss, item, ',');) f.push_back(item);
    if (f.size() != 6) throw std::runtime_error(path + ":" + std::to_string(n) + ": expected 6 fields");
    try {
      rows.push_back({f[0], f[1], f[2], f[3], f[4], std::stod(f[5])});
    } catch (const std::exception&) {
      throw std::runtime_error(path + ":" + std::to_string(n) + ": bad value '" + f[5] + "'");
    }
  }
  return rows;
}

std::string summarize_report(const std::vector<ReportRow>& rows) {
  // (run, stage) -> mode -> task -> accuracy, keeping first-seen order
  std::vector<std::pair<std::string, std::string>> groups;
  std::map<std::pair<std::string, std::string>, std::vector<std::string>> modes, tasks;
  std::map<std::tuple<std::string, std::string, std::string, std::string>, double> acc;
  auto add_unique = [](std::vector<std::string>& v, const std::string& x) {
    for (const auto& y : v)
      if (y == x) return;
    v.push_back(x);
  };
  for (const auto& r : rows) {
    if (r.metric != "accuracy") continue;
    const auto g = std::make_pair(r.run_id, r.stage);
    if (!modes.count(g)) groups.push_back(g);
    add_unique(modes[g], r.mode);
    add_unique(tasks[g], r.task);
    acc[{r.run_id, r.stage, r.mode, r.task}] = r.value;
  }
  std::string out;
  char buf[64];
  for (const auto& g : groups) {
    out += "run " + g.first + ", stage " + g.second + "\n";
    out += "mode";
    for (const auto& t : tasks[g]) out += "\t" + t;
    out += "\trec%\n";
    const auto base = acc.find({g.first, g.second, "base", "avg"});
    for (const auto& m : modes[g]) {
      out += m;
      for (const auto& t : tasks[g]) {
        const auto it = acc.find({g.first, g.second, m, t});
        if (it == acc.end()) {
          out += "\t-";
          continue;
        }
        std::snprintf(buf, sizeof buf, "\t%.2f", 100.0 * it->second);
        out += buf;
      }
      const auto avg = acc.find({g.first, g.second, m, "avg"});
      if (avg != acc.end() && base != acc.end() && base->second > 0.0) {
        std::snprintf(buf, sizeof buf, "\t%.2f", recovered_performance(avg->second, base->second));
        out += buf;
      } else {
        out += "\t-";
      }
      out += "\n";
    }
  }
  return out;
}

}  // namespace hafx
