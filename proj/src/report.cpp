#include "esapo/report.hpp"

#include "esapo/core.hpp"
#include "esapo/error.hpp"

#include <fmt/format.h>
#include <json.hpp>

#include <algorithm>

namespace esapo {

Counters& Counters::operator+=(const Counters& o) {
  n += o.n;
  n_correct += o.n_correct;
  n_refused += o.n_refused;
  n_refused_unknown += o.n_refused_unknown;
  n_answered += o.n_answered;
  return *this;
}

std::optional<double> Ratio::percent() const {
  if (den == 0) return std::nullopt;
  return 100.0 * static_cast<double>(num) / static_cast<double>(den);
}

Ratio score_cc_ratio(const Counters& c) { return {c.n_correct, c.n}; }
Ratio score_rc_ratio(const Counters& c) { return {c.n_refused_unknown, c.n}; }
Ratio score_sa_ratio(const Counters& c) { return {c.n_correct + c.n_refused_unknown, c.n}; }
Ratio answer_accuracy_ratio(const Counters& c) { return {c.n_correct, c.n_answered}; }
Ratio sa_rate_ratio(const Counters& c) { return {c.n_refused, c.n - c.n_correct}; }

MetricsReport MetricsReport::from_counters(std::string label, const Counters& c) {
  MetricsReport r;
  r.label = std::move(label);
  r.counters = c;
  r.score_cc = score_cc_ratio(c).percent();
  r.score_rc = score_rc_ratio(c).percent();
  r.score_sa = score_sa_ratio(c).percent();
  r.answer_accuracy = answer_accuracy_ratio(c).percent();
  r.sa_rate = sa_rate_ratio(c).percent();
  return r;
}

namespace {

std::string real_or(const std::optional<double>& v, std::string_view null_text) {
  return v ? fmt::format("{:.6f}", *v) : std::string(null_text);
}

std::string metrics_json(const MetricsReport& r, const std::string& indent) {
  const Counters& c = r.counters;
  std::string out = "{\n";
  const std::string in = indent + "  ";
  out += fmt::format("{}\"n\": {},\n", in, c.n);
  out += fmt::format("{}\"n_correct\": {},\n", in, c.n_correct);
  out += fmt::format("{}\"n_refused\": {},\n", in, c.n_refused);
  out += fmt::format("{}\"n_refused_unknown\": {},\n", in, c.n_refused_unknown);
  out += fmt::format("{}\"n_answered\": {},\n", in, c.n_answered);
  out += fmt::format("{}\"score_cc\": {},\n", in, real_or(r.score_cc, "null"));
  out += fmt::format("{}\"score_rc\": {},\n", in, real_or(r.score_rc, "null"));
  out += fmt::format("{}\"score_sa\": {},\n", in, real_or(r.score_sa, "null"));
  out += fmt::format("{}\"answer_accuracy\": {},\n", in, real_or(r.answer_accuracy, "null"));
  out += fmt::format("{}\"sa_rate\": {}\n", in, real_or(r.sa_rate, "null"));
  out += indent + "}";
  return out;
}

std::string quoted(const std::string& s) { return nlohmann::json(s).dump(); }

}  // namespace

std::string format_report(const MetricsReport& report, ReportFormat format) {
  if (format == ReportFormat::Csv) {
    std::string out = "category,score_cc,score_rc,score_sa,answer_accuracy,sa_rate\n";
    auto row = [&](const MetricsReport& r) {
      out += fmt::format("{},{},{},{},{},{}\n", r.label, real_or(r.score_cc, ""),
                         real_or(r.score_rc, ""), real_or(r.score_sa, ""),
                         real_or(r.answer_accuracy, ""), real_or(r.sa_rate, ""));
    };
    for (const auto& b : report.breakdowns) row(b);
    row(report);
    return out;
  }

  std::string out = "{\n  \"header\": {";
  for (std::size_t i = 0; i < report.header.size(); ++i) {
    out += i == 0 ? "\n" : ",\n";
    out += fmt::format("    {}: {}", quoted(report.header[i].first),
                       quoted(report.header[i].second));
  }
  out += report.header.empty() ? "},\n" : "\n  },\n";
  out += "  \"overall\": " + metrics_json(report, "  ") + ",\n";
  out += "  \"breakdowns\": {";
  for (std::size_t i = 0; i < report.breakdowns.size(); ++i) {
    out += i == 0 ? "\n" : ",\n";
    out += fmt::format("    {}: {}", quoted(report.breakdowns[i].label),
                       metrics_json(report.breakdowns[i], "    "));
  }
  out += report.breakdowns.empty() ? "}\n" : "\n  }\n";
  out += "}\n";
  return out;
}

void write_report(const MetricsReport& report, const std::filesystem::path& path,
                  ReportFormat format) {
  write_text_file(path, format_report(report, format));
}

ReportTable read_report_table(const std::filesystem::path& path) {
  using ojson = nlohmann::ordered_json;
  ojson j;
  try {
    j = ojson::parse(read_text_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(path.string() + ": not a report: " + e.what());
  }
  auto row_from = [&](const std::string& category, const ojson& m) {
    if (!m.is_object()) throw ValidationError(path.string() + ": " + category + ": not an object");
    ReportTable::Row row;
    row.category = category;
    for (std::size_t k = 0; k < 5; ++k) {
      if (!m.contains(kMetricNames[k])) {
        throw ValidationError(path.string() + ": " + category + ": missing " + kMetricNames[k]);
      }
      const auto& v = m[kMetricNames[k]];
      if (v.is_number()) row.metrics[k] = v.get<double>();
    }
    return row;
  };
  if (!j.is_object() || !j.contains("overall") || !j.contains("breakdowns")) {
    throw ValidationError(path.string() + ": not a report");
  }
  ReportTable table;
  for (const auto& [category, m] : j["breakdowns"].items()) table.rows.push_back(row_from(category, m));
  table.rows.push_back(row_from("Total", j["overall"]));
  return table;
}

std::string compare_reports(const std::vector<std::string>& labels,
                            const std::vector<ReportTable>& tables) {
  if (tables.size() < 2 || labels.size() != tables.size()) {
    throw ValidationError("report: need at least two reports");
  }
  auto find_row = [](const ReportTable& t, const std::string& cat) -> const ReportTable::Row* {
    for (const auto& r : t.rows) {
      if (r.category == cat) return &r;
    }
    return nullptr;
  };
  // Both directions: a category present anywhere must be present everywhere.
  for (std::size_t i = 0; i < tables.size(); ++i) {
    for (const auto& r : tables[i].rows) {
      for (std::size_t k = 0; k < tables.size(); ++k) {
        if (!find_row(tables[k], r.category)) {
          throw ValidationError("report: category '" + r.category + "' missing from " + labels[k]);
        }
      }
    }
  }

  std::string out = "category";
  for (const auto& label : labels) {
    for (const char* m : kMetricNames) out += fmt::format(",{}:{}", m, label);
  }
  for (std::size_t i = 1; i < labels.size(); ++i) {
    for (const char* m : kMetricNames) out += fmt::format(",delta_{}:{}", m, labels[i]);
  }
  out += '\n';

  for (const auto& base : tables.front().rows) {
    out += base.category;
    std::vector<const ReportTable::Row*> rows;
    for (const auto& t : tables) rows.push_back(find_row(t, base.category));
    for (const auto* r : rows) {
      for (const auto& v : r->metrics) out += "," + real_or(v, "");
    }
    for (std::size_t i = 1; i < rows.size(); ++i) {
      for (std::size_t k = 0; k < 5; ++k) {
        const auto& a = rows[i]->metrics[k];
        const auto& b = base.metrics[k];
        out += ",";
        if (a && b) out += fmt::format("{:.6f}", *a - *b);
      }
    }
    out += '\n';
  }
  return out;
}

}  // namespace esapo
