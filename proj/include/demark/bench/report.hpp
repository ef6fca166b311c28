#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace demark::bench {

struct Metric {
  double value = 0.0;
  std::size_t samples = 0;
};

struct MetricSet {
  std::optional<Metric> er;
  std::optional<Metric> ber;
  std::optional<Metric> tp;
  std::optional<Metric> fp;
};

struct ConditionResult {
  std::string scheme;     ///< whitebox, blackbox, rainbow, swirl
  std::string condition;  ///< undefended or defended
  std::size_t n = 0;      ///< model window length, 0 when not applicable
  MetricSet metrics;
  nlohmann::json extra = nlohmann::json::object();
};

struct TimingStats {
  std::size_t n = 0;
  std::size_t iterations = 0;
  double mean_ms = 0.0;
  double p50_ms = 0.0;
  double p95_ms = 0.0;
  double p99_ms = 0.0;
  double max_ms = 0.0;
};

struct RainbowPoint {
  std::size_t length = 0;
  double tp_undefended = 0.0;
  double tp_defended = 0.0;
  std::size_t flows = 0;
};

struct ExperimentReport {
  std::string scenario;
  nlohmann::json config = nlohmann::json::object();
  std::map<std::string, std::uint64_t> seeds;
  std::map<std::string, std::string> checksums;
  std::vector<ConditionResult> results;
  std::vector<TimingStats> timing;
  std::vector<RainbowPoint> rainbow_curve;
  std::vector<std::string> notes;

  /// First result matching scheme/condition/n (n = 0 matches any).
  const ConditionResult* find(const std::string& scheme, const std::string& condition, std::size_t n = 0) const;
};

nlohmann::json to_json(const ExperimentReport& report);
ExperimentReport report_from_json(const nlohmann::json& j);

/// ER/BER table with one row per n, TP/FP table, timing table, provenance.
std::string render_markdown(const ExperimentReport& report);

/// Writes columns length,tp_undefended,tp_defended.
void write_rainbow_csv(const std::filesystem::path& path, const std::vector<RainbowPoint>& curve);

enum class ReportFormat { Json, Markdown, Both };

/// report.json and/or report.md inside `dir` (created if missing), plus
/// rainbow_tp_by_length.csv when the report has a RAINBOW curve.
void emit_report(const ExperimentReport& report, const std::filesystem::path& dir,
                 ReportFormat format = ReportFormat::Both);

/// Concatenates results, timing and provenance; the scenario names are joined.
ExperimentReport merge_reports(const std::vector<ExperimentReport>& reports);

}  // namespace demark::bench
