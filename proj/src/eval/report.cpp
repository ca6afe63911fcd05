#include "teleguard/eval/report.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "teleguard/eval/plot.hpp"

namespace teleguard::eval {
namespace {

using Json = nlohmann::ordered_json;

Json interval_json(const Interval& i) { return Json{{"mean", i.mean}, {"lo", i.lo}, {"hi", i.hi}}; }

std::string cause_name(sim::FailureCause c) {
  switch (c) {
    case sim::FailureCause::kNone: return "none";
    case sim::FailureCause::kJam: return "jam";
    case sim::FailureCause::kTimeout: return "timeout";
  }
  return "none";
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("error writing " + path.string());
}

const ExperimentReport* find_mode(std::span<const ExperimentReport> reports, const char* mode) {
  for (const auto& r : reports)
    if (r.mode == mode) return &r;
  return nullptr;
}

}  // namespace

std::string report_jsonl(std::span<const ExperimentReport> reports) {
  std::string out;
  for (const auto& r : reports) {
    const auto& a = r.aggregates;
    Json agg = {{"type", "aggregate"},
                {"mode", r.mode},
                {"operator", r.operator_kind},
                {"seed", r.seed},
                {"epsilon", r.epsilon},
                {"episodes", a.episodes},
                {"successes", a.successes},
                {"failures", a.failures},
                {"success_rate", interval_json(a.success_rate)},
                {"completion_time", interval_json(a.completion_time)},
                {"mean_deviation", interval_json(a.mean_deviation)},
                {"mean_g", interval_json(a.mean_g)},
                {"transparent_fraction", a.transparent_fraction},
                {"max_abs_torque", a.max_abs_torque},
                {"within_epsilon", a.within_epsilon}};
    out += agg.dump() + "\n";
    for (std::size_t i = 0; i < r.episodes.size(); ++i) {
      const auto& e = r.episodes[i];
      Json row = {{"type", "episode"},
                  {"mode", r.mode},
                  {"index", i},
                  {"seed", e.seed},
                  {"outcome", e.success ? "success" : "failure"},
                  {"cause", cause_name(e.cause)},
                  {"steps", e.steps},
                  {"duration", e.duration},
                  {"mean_deviation", e.mean_deviation},
                  {"max_deviation", e.max_deviation},
                  {"mean_g", e.mean_g},
                  {"lambda_mean", e.mean_g},
                  {"transparent_fraction", e.transparent_fraction},
                  {"max_abs_torque", e.max_abs_torque}};
      out += row.dump() + "\n";
    }
  }
  return out;
}

std::string report_table(std::span<const ExperimentReport> reports) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(3);
  s << std::left << std::setw(8) << "mode" << std::setw(9) << "operator" << std::right
    << std::setw(6) << "N" << std::setw(10) << "success" << std::setw(18) << "95% CI"
    << std::setw(11) << "time[s]" << std::setw(11) << "deviation" << std::setw(9) << "mean g"
    << std::setw(12) << "g<=0.05" << "\n";
  for (const auto& r : reports) {
    const auto& a = r.aggregates;
    std::ostringstream ci;
    ci << std::fixed << std::setprecision(3) << "[" << a.success_rate.lo << ", " << a.success_rate.hi
       << "]";
    s << std::left << std::setw(8) << r.mode << std::setw(9) << r.operator_kind << std::right
      << std::setw(6) << a.episodes << std::setw(10) << a.success_rate.mean << std::setw(18)
      << ci.str() << std::setw(11) << a.completion_time.mean << std::setw(11)
      << a.mean_deviation.mean << std::setw(9) << a.mean_g.mean << std::setw(12)
      << a.transparent_fraction << "\n";
  }
  return s.str();
}

std::vector<std::filesystem::path> render_reports(std::span<const ExperimentReport> reports,
                                                  const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create " + dir.string() + ": " + ec.message());
  std::vector<std::filesystem::path> written;
  auto emit = [&](const std::string& name, const std::string& text) {
    write_text(dir / name, text);
    written.push_back(dir / name);
  };
  emit("report.jsonl", report_jsonl(reports));
  emit("report.txt", report_table(reports));

  std::vector<Bar> bars;
  std::vector<Series> q_series, g_series;
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const auto& a = reports[i].aggregates;
    bars.push_back({a.success_rate.mean, a.success_rate.lo, a.success_rate.hi, palette(i)});
    for (const auto& t : reports[i].traces) {
      q_series.push_back({t.q_normalized, palette(i)});
      g_series.push_back({t.g, palette(i)});
    }
  }
  write_png(bar_chart(bars, 0.0, 1.0), dir / "success_rate.png");
  written.push_back(dir / "success_rate.png");
  write_png(line_chart(q_series, 0.0, 1.0), dir / "q_trace.png");
  written.push_back(dir / "q_trace.png");
  write_png(line_chart(g_series, 0.0, 1.0), dir / "g_trace.png");
  written.push_back(dir / "g_trace.png");
  return written;
}

OrderingCheck check_ordering(std::span<const ExperimentReport> reports) {
  OrderingCheck c;
  const auto* off = find_mode(reports, "off");
  const auto* stat = find_mode(reports, "static");
  const auto* value = find_mode(reports, "value");
  c.complete = off && stat && value;
  if (!c.complete) return c;
  const auto& v = value->aggregates.success_rate;
  const auto& s = stat->aggregates.success_rate;
  const auto& o = off->aggregates.success_rate;
  c.value_over_static = v.mean > s.mean;
  c.static_over_off = s.mean > o.mean;
  c.value_off_disjoint = v.lo > o.hi;
  return c;
}

std::string separation_jsonl(const SeparationReport& r) {
  Json j = {{"type", "separation"},
            {"success_states", r.success_states},
            {"failure_tail_states", r.failure_tail_states},
            {"mean_q_success", r.mean_q_success},
            {"mean_q_failure_tail", r.mean_q_failure_tail},
            {"auc", r.auc},
            {"aligned_q", r.aligned_q},
            {"aligned_count", r.aligned_count}};
  return j.dump() + "\n";
}

}  // namespace teleguard::eval
