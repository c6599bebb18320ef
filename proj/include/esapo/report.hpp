#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace esapo {

/// Raw integer tallies behind every metric.
struct Counters {
  std::uint64_t n = 0;
  std::uint64_t n_correct = 0;
  std::uint64_t n_refused = 0;
  std::uint64_t n_refused_unknown = 0;
  std::uint64_t n_answered = 0;

  Counters& operator+=(const Counters& o);
  friend bool operator==(const Counters&, const Counters&) = default;
};

/// Exact percentage 100·num/den.
struct Ratio {
  std::uint64_t num = 0;
  std::uint64_t den = 0;

  std::optional<double> percent() const;
  friend bool operator==(const Ratio&, const Ratio&) = default;
};

Ratio score_cc_ratio(const Counters& c);
Ratio score_rc_ratio(const Counters& c);
Ratio score_sa_ratio(const Counters& c);  // numerator = cc numerator + rc numerator
Ratio answer_accuracy_ratio(const Counters& c);
Ratio sa_rate_ratio(const Counters& c);

/// Refusal-aware evaluation summary. Metrics are derived from `counters` and
/// are null when their denominator is zero (also for an empty category).
struct MetricsReport {
  std::string label = "Total";
  Counters counters;
  std::optional<double> score_cc;
  std::optional<double> score_rc;
  std::optional<double> score_sa;
  std::optional<double> answer_accuracy;
  std::optional<double> sa_rate;
  std::vector<MetricsReport> breakdowns;
  // Free-form run metadata written in the report header, in order.
  std::vector<std::pair<std::string, std::string>> header;

  static MetricsReport from_counters(std::string label, const Counters& c);
};

enum class ReportFormat { Json, Csv };

/// Byte-stable serialization: fixed key order, reals with 6 decimals,
/// null metrics as JSON null / empty CSV cells.
std::string format_report(const MetricsReport& report, ReportFormat format);
void write_report(const MetricsReport& report, const std::filesystem::path& path,
                  ReportFormat format);

/// Per-category metric values read back from a JSON report, in file order
/// (breakdowns first, then the overall row).
struct ReportTable {
  struct Row {
    std::string category;
    std::optional<double> metrics[5];
  };
  std::vector<Row> rows;
};

inline constexpr const char* kMetricNames[5] = {"score_cc", "score_rc", "score_sa",
                                                "answer_accuracy", "sa_rate"};

ReportTable read_report_table(const std::filesystem::path& path);

/// Side-by-side CSV with one row per category of the first table, the metric
/// values of every input, then deltas of inputs 2..n against input 1.
/// Throws ValidationError naming a category absent from any input.
std::string compare_reports(const std::vector<std::string>& labels,
                            const std::vector<ReportTable>& tables);

}  // namespace esapo
