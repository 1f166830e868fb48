#include <random>
#include <sstream>

#include "doctest.h"
#include "nsaudit/report.hpp"
#include "reference_tables.hpp"

using namespace nsaudit;

namespace {

AuditReport make_report(std::string name, double alpha, double beta) {
  const AngleRecord rec[] = {{0, alpha, beta, 0, 0}};
  return summarize_records(std::move(name), rec);
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

}  // namespace

TEST_SUITE("report") {

TEST_CASE("fixed-width rendering") {
  CHECK(format_fixed4(32.33) == "32.3300");
  CHECK(format_fixed4(-27.28) == "-27.2800");
  CHECK(format_fixed4(-0.0) == "0.0000");
  CHECK(format_fixed4(-0.00001) == "0.0000");
  CHECK(format_fixed4(0.99995) == "1.0000");
}

TEST_CASE("audit CSV row for the first published model") {
  AuditReport r = make_report("model1", 59.61, -27.28);
  r.mean_softmax_true = 0.5;
  r.mean_logit_true = 2.25;
  const auto lines = lines_of(write_report({r}, ReportFormat::Csv));
  REQUIRE(lines.size() == 2);
  CHECK(lines[0] == kAuditCsvHeader);
  CHECK(lines[1] == "model1,59.6100,-27.2800,32.3300,0.5000,2.2500,1");
}

TEST_CASE("empty inputs produce a header only") {
  CHECK(write_report(std::vector<AuditReport>{}, ReportFormat::Csv) == std::string(kAuditCsvHeader) + "\n");
  CHECK(write_report(CohortReport{}, ReportFormat::Csv) == std::string(kCohortCsvHeader) + "\n");
  CHECK(read_cohort_report_json(write_report(CohortReport{}, ReportFormat::Json)).cohort_size() == 0);
}

TEST_CASE("JSON round trip is exact") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> a(0.0, 180.0), b(-90.0, 90.0);
  std::vector<AuditReport> reports;
  for (int i = 0; i < 12; ++i) {
    const std::vector<AngleRecord> recs = {{0, a(rng), b(rng), 0, 0}, {1, a(rng), b(rng), 1, 1}};
    AuditReport r = summarize_records("m\"," + std::to_string(i), recs,
                                      i % 2 ? SampleFilter::All : SampleFilter::MisclassifiedOnly);
    r.mean_softmax_true = a(rng) / 180.0;
    r.mean_logit_true = b(rng);
    if (i % 3 == 0) r.per_class_breakdown.reset();
    reports.push_back(r);
  }
  const auto back = read_audit_reports_json(write_report(reports, ReportFormat::Json));
  REQUIRE(back.size() == reports.size());
  for (std::size_t i = 0; i < reports.size(); ++i) {
    CHECK(back[i].model_name == reports[i].model_name);
    CHECK(back[i].mean_alpha == reports[i].mean_alpha);
    CHECK(back[i].mean_beta == reports[i].mean_beta);
    CHECK(back[i].score_O == reports[i].score_O);
    CHECK(back[i].mean_softmax_true == reports[i].mean_softmax_true);
    CHECK(back[i].mean_logit_true == reports[i].mean_logit_true);
    CHECK(back[i].n_used == reports[i].n_used);
    CHECK(back[i].filter == reports[i].filter);
    CHECK(back[i].per_class_breakdown.has_value() == reports[i].per_class_breakdown.has_value());
    if (reports[i].per_class_breakdown) {
      REQUIRE(back[i].per_class_breakdown->size() == reports[i].per_class_breakdown->size());
      for (std::size_t k = 0; k < back[i].per_class_breakdown->size(); ++k) {
        CHECK((*back[i].per_class_breakdown)[k].mean_alpha == (*reports[i].per_class_breakdown)[k].mean_alpha);
        CHECK((*back[i].per_class_breakdown)[k].count == (*reports[i].per_class_breakdown)[k].count);
      }
    }
  }

  for (auto& r : reports) r.filter = SampleFilter::All;
  const CohortReport cohort = cohort_generalization(reports);
  const CohortReport cback = read_cohort_report_json(write_report(cohort, ReportFormat::Json));
  REQUIRE(cback.cohort_size() == cohort.cohort_size());
  for (std::size_t i = 0; i < cohort.entries.size(); ++i) {
    CHECK(cback.entries[i].model_name == cohort.entries[i].model_name);
    CHECK(cback.entries[i].alpha_prime == cohort.entries[i].alpha_prime);
    CHECK(cback.entries[i].beta_prime == cohort.entries[i].beta_prime);
    CHECK(cback.entries[i].score_G == cohort.entries[i].score_G);
    CHECK(cback.entries[i].mean_alpha == cohort.entries[i].mean_alpha);
    CHECK(cback.entries[i].mean_beta == cohort.entries[i].mean_beta);
  }
}

TEST_CASE("CSV round trip holds to the printed precision") {
  std::vector<AuditReport> reports;
  for (std::size_t i = 0; i < reference::kOverfit.size(); ++i)
    reports.push_back(
        make_report("model" + std::to_string(i + 1), reference::kOverfit[i].alpha, reference::kOverfit[i].beta));
  reports.push_back(make_report("quoted, \"name\"", 10.123456, -0.00003));
  const auto back = read_audit_reports_csv(write_report(reports, ReportFormat::Csv));
  REQUIRE(back.size() == reports.size());
  for (std::size_t i = 0; i < reports.size(); ++i) {
    CHECK(back[i].model_name == reports[i].model_name);
    CHECK(std::abs(back[i].mean_alpha - reports[i].mean_alpha) <= 5e-5);
    CHECK(std::abs(back[i].mean_beta - reports[i].mean_beta) <= 5e-5);
    CHECK(std::abs(back[i].score_O - reports[i].score_O) <= 5e-5);
    CHECK(back[i].n_used == reports[i].n_used);
  }

  const CohortReport cohort = cohort_generalization(std::span(reports).first(11));
  const CohortReport cback = read_cohort_report_csv(write_report(cohort, ReportFormat::Csv));
  REQUIRE(cback.cohort_size() == 11);
  for (std::size_t i = 0; i < 11; ++i) {
    CHECK(std::abs(cback.entries[i].score_G - reference::kGeneralization[i].G) <= 0.001);
    CHECK(std::abs(cback.entries[i].alpha_prime - cohort.entries[i].alpha_prime) <= 5e-5);
  }
}

TEST_CASE("malformed reports are rejected as invalid parameters") {
  auto code_of = [](auto&& fn) {
    try {
      fn();
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::IoFailure;
  };
  CHECK(code_of([] { read_audit_reports_csv("model,alpha\n"); }) == ErrorCode::InvalidParam);
  CHECK(code_of([] { read_audit_reports_csv(""); }) == ErrorCode::InvalidParam);
  const std::string h(kAuditCsvHeader);
  CHECK(code_of([&] { read_audit_reports_csv(h + "\nm,x,1,1,1,1,1\n"); }) == ErrorCode::InvalidParam);
  CHECK(code_of([&] { read_audit_reports_csv(h + "\nm,1,1,1,1,1\n"); }) == ErrorCode::InvalidParam);
  CHECK(code_of([&] { read_audit_reports_csv(h + "\nm,1,1,1,1,1,-2\n"); }) == ErrorCode::InvalidParam);
  CHECK(code_of([] { read_audit_reports_json("{not json"); }) == ErrorCode::InvalidParam);
  CHECK(code_of([] { read_cohort_report_json("[]"); }) == ErrorCode::InvalidParam);
  CHECK(code_of([] { parse_report_format("xml"); }) == ErrorCode::InvalidParam);
}

}  // TEST_SUITE
