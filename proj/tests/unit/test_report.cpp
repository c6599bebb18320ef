#include "doctest.h"
#include "test_util.hpp"

#include "esapo/core.hpp"
#include "esapo/error.hpp"
#include "esapo/report.hpp"

#include <json.hpp>

#include <sstream>

using namespace esapo;
using esapo::testing::TempDir;

namespace {

Counters make_counters(std::uint64_t n, std::uint64_t correct, std::uint64_t refused,
                       std::uint64_t unknown) {
  return {n, correct, refused, unknown, n - refused};
}

MetricsReport table_shaped() {
  MetricsReport r = MetricsReport::from_counters("Total", make_counters(12, 7, 2, 1));
  r.breakdowns.push_back(MetricsReport::from_counters("YesOrNo", make_counters(4, 4, 0, 0)));
  r.breakdowns.push_back(MetricsReport::from_counters("What", make_counters(4, 2, 0, 0)));
  r.breakdowns.push_back(MetricsReport::from_counters("How", make_counters(4, 1, 2, 1)));
  return r;
}

}  // namespace

TEST_CASE("ratios are exact integer fractions") {
  const Counters c = make_counters(10, 6, 2, 1);
  CHECK(score_cc_ratio(c) == Ratio{6, 10});
  CHECK(score_rc_ratio(c) == Ratio{1, 10});
  CHECK(score_sa_ratio(c) == Ratio{7, 10});
  CHECK(answer_accuracy_ratio(c) == Ratio{6, 8});
  CHECK(sa_rate_ratio(c) == Ratio{2, 4});
  CHECK_FALSE(Ratio{3, 0}.percent().has_value());
  CHECK(*Ratio{1, 4}.percent() == 25.0);
}

TEST_CASE("counters accumulate") {
  Counters a = make_counters(3, 1, 1, 0);
  a += make_counters(5, 2, 2, 1);
  CHECK(a == make_counters(8, 3, 3, 1));
}

TEST_CASE("golden csv for a table-shaped report") {
  const std::string expected =
      "category,score_cc,score_rc,score_sa,answer_accuracy,sa_rate\n"
      "YesOrNo,100.000000,0.000000,100.000000,100.000000,\n"
      "What,50.000000,0.000000,50.000000,50.000000,0.000000\n"
      "How,25.000000,25.000000,50.000000,50.000000,66.666667\n"
      "Total,58.333333,8.333333,66.666667,70.000000,40.000000\n";
  CHECK(format_report(table_shaped(), ReportFormat::Csv) == expected);
}

TEST_CASE("null metrics") {
  // Every record refused: no answered records.
  const MetricsReport r = MetricsReport::from_counters("Total", make_counters(4, 0, 4, 3));
  CHECK_FALSE(r.answer_accuracy.has_value());
  const std::string json = format_report(r, ReportFormat::Json);
  CHECK(json.find("\"answer_accuracy\": null") != std::string::npos);
  const std::string csv = format_report(r, ReportFormat::Csv);
  CHECK(csv.find("Total,0.000000,75.000000,75.000000,,100.000000\n") != std::string::npos);

  const MetricsReport empty = MetricsReport::from_counters("How", {});
  CHECK_FALSE(empty.score_cc.has_value());
  CHECK_FALSE(empty.score_sa.has_value());
  CHECK_FALSE(empty.sa_rate.has_value());
}

TEST_CASE("json layout") {
  MetricsReport r = table_shaped();
  r.header.emplace_back("checkpoint", "a \"quoted\" path");
  const auto j = nlohmann::ordered_json::parse(format_report(r, ReportFormat::Json));
  CHECK(j["header"]["checkpoint"] == "a \"quoted\" path");
  CHECK(j["overall"]["n"] == 12);
  CHECK(j["overall"]["n_refused_unknown"] == 1);
  CHECK(j["breakdowns"]["YesOrNo"]["sa_rate"].is_null());
  std::vector<std::string> keys;
  for (const auto& [k, _] : j["breakdowns"].items()) keys.push_back(k);
  CHECK(keys == std::vector<std::string>{"YesOrNo", "What", "How"});
}

TEST_CASE("same report written twice is byte-identical") {
  TempDir dir("report");
  const MetricsReport r = table_shaped();
  for (ReportFormat f : {ReportFormat::Json, ReportFormat::Csv}) {
    write_report(r, dir.file("a"), f);
    write_report(r, dir.file("b"), f);
    CHECK(read_text_file(dir.file("a")) == read_text_file(dir.file("b")));
  }
}

TEST_CASE("report tables read back in file order") {
  TempDir dir("report");
  write_report(table_shaped(), dir.file("r.json"), ReportFormat::Json);
  const ReportTable t = read_report_table(dir.file("r.json"));
  REQUIRE(t.rows.size() == 4);
  CHECK(t.rows[0].category == "YesOrNo");
  CHECK(t.rows[3].category == "Total");
  CHECK_FALSE(t.rows[0].metrics[4].has_value());
  CHECK(*t.rows[2].metrics[1] == doctest::Approx(25.0));

  write_text_file(dir.file("junk.json"), "[1, 2]");
  CHECK_THROWS_AS(read_report_table(dir.file("junk.json")), ValidationError);
}

TEST_CASE("identical reports compare with zero deltas") {
  TempDir dir("report");
  write_report(table_shaped(), dir.file("r.json"), ReportFormat::Json);
  const ReportTable t = read_report_table(dir.file("r.json"));
  const std::string csv = compare_reports({"a", "b"}, {t, t});
  std::istringstream in(csv);
  std::string header;
  std::getline(in, header);
  CHECK(header.starts_with("category,score_cc:a,"));
  CHECK(header.find("delta_sa_rate:b") != std::string::npos);
  std::string line;
  int rows = 0;
  while (std::getline(in, line)) {
    ++rows;
    std::vector<std::string> cells;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (line.back() == ',') cells.emplace_back();
    REQUIRE(cells.size() == 16);
    for (std::size_t k = 11; k < 16; ++k) {
      CHECK((cells[k].empty() || cells[k] == "0.000000"));
    }
  }
  CHECK(rows == 4);
}

TEST_CASE("deltas are against the first input") {
  MetricsReport a = MetricsReport::from_counters("Total", make_counters(10, 5, 0, 0));
  MetricsReport b = MetricsReport::from_counters("Total", make_counters(10, 6, 2, 1));
  TempDir dir("report");
  write_report(a, dir.file("a.json"), ReportFormat::Json);
  write_report(b, dir.file("b.json"), ReportFormat::Json);
  const std::string csv = compare_reports(
      {"a", "b"}, {read_report_table(dir.file("a.json")), read_report_table(dir.file("b.json"))});
  CHECK(csv.find("\nTotal,50.000000,0.000000,50.000000,50.000000,0.000000,"
                 "60.000000,10.000000,70.000000,75.000000,50.000000,"
                 "10.000000,10.000000,20.000000,25.000000,50.000000\n") != std::string::npos);
}

TEST_CASE("missing category is named") {
  ReportTable a, b;
  a.rows = {{"YesOrNo", {}}, {"Total", {}}};
  b.rows = {{"Total", {}}};
  try {
    compare_reports({"first", "second"}, {a, b});
    FAIL("expected an error");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("'YesOrNo' missing from second") != std::string::npos);
  }
  CHECK_THROWS_AS(compare_reports({"a", "b"}, {b, a}), ValidationError);
}
