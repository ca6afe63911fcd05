#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "teleguard/eval/experiment.hpp"
#include "teleguard/eval/separation.hpp"

namespace teleguard::eval {

// One "aggregate" record per report followed by its "episode" records.
std::string report_jsonl(std::span<const ExperimentReport> reports);
std::string report_table(std::span<const ExperimentReport> reports);

// Writes report.jsonl, report.txt, success_rate.png, q_trace.png, g_trace.png.
// Returns the written paths.
std::vector<std::filesystem::path> render_reports(std::span<const ExperimentReport> reports,
                                                  const std::filesystem::path& dir);

struct OrderingCheck {
  bool complete = false;  // off, static and value reports all present
  bool value_over_static = false;
  bool static_over_off = false;
  bool value_off_disjoint = false;  // 95% intervals do not overlap
  bool holds() const { return complete && value_over_static && static_over_off && value_off_disjoint; }
};

OrderingCheck check_ordering(std::span<const ExperimentReport> reports);

std::string separation_jsonl(const SeparationReport& report);

}  // namespace teleguard::eval
