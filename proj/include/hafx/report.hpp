// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "hafx/eval.hpp"

namespace hafx {

struct ReportRow {
  std::string run_id;
  std::string stage;
  std::string mode;
  std::string task;
  std::string metric;
  double value = 0.0;
  bool operator==(const ReportRow&) const = default;
};

inline constexpr const char* kReportCsvHeader = "run_id,stage,mode,task,metric,value";

std::vector<ReportRow> report_rows(const std::string& run_id, const EvalReport& r);
std::string report_csv_line(const ReportRow& r);

/// Appends rows to a CSV file, writing the header first when the file is new.
void append_report(const std::string& path, const std::vector<ReportRow>& rows);
/// Throws std::runtime_error on a missing file or a bad header or row.
std::vector<ReportRow> read_report(const std::string& path);

/// Mode x task accuracy table with recovered % per (run, stage).
std::string summarize_report(const std::vector<ReportRow>& rows);

}  // namespace hafx
