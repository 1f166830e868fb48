#include "nsaudit/report.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace nsaudit {

namespace {

using ojson = nlohmann::ordered_json;

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> fields(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        fields.back() += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        fields.back() += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.emplace_back();
    } else {
      fields.back() += c;
    }
  }
  return fields;
}

std::vector<std::vector<std::string>> csv_rows(std::string_view text, std::string_view header) {
  std::vector<std::vector<std::string>> rows;
  std::size_t pos = 0;
  bool first = true;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    const std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    if (first) {
      if (line != header) throw Error(ErrorCode::InvalidParam, "unexpected CSV header");
      first = false;
      continue;
    }
    if (line.empty()) continue;
    rows.push_back(split_csv_line(line));
  }
  if (first) throw Error(ErrorCode::InvalidParam, "missing CSV header");
  return rows;
}

double to_double(const std::string& s) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::logic_error&) {
    used = std::string::npos;
  }
  if (used != s.size()) throw Error(ErrorCode::InvalidParam, "bad number '" + s + "'");
  return v;
}

Index to_count(const std::string& s) {
  const double v = to_double(s);
  if (v < 0 || v != std::floor(v)) throw Error(ErrorCode::InvalidParam, "bad count '" + s + "'");
  return static_cast<Index>(v);
}

ojson audit_to_json(const AuditReport& r) {
  ojson j;
  j["model"] = r.model_name;
  j["alpha"] = r.mean_alpha;
  j["beta"] = r.mean_beta;
  j["O"] = r.score_O;
  j["softmax_true"] = r.mean_softmax_true;
  j["logit_true"] = r.mean_logit_true;
  j["n_used"] = r.n_used;
  j["filter"] = to_string(r.filter);
  if (r.per_class_breakdown) {
    ojson classes = ojson::array();
    for (const auto& c : *r.per_class_breakdown)
      classes.push_back(
          {{"class", c.class_index}, {"alpha", c.mean_alpha}, {"beta", c.mean_beta}, {"count", c.count}});
    j["per_class"] = std::move(classes);
  } else {
    j["per_class"] = nullptr;
  }
  return j;
}

AuditReport audit_from_json(const ojson& j) {
  AuditReport r;
  r.model_name = j.at("model").get<std::string>();
  r.mean_alpha = j.at("alpha").get<double>();
  r.mean_beta = j.at("beta").get<double>();
  r.score_O = j.at("O").get<double>();
  r.mean_softmax_true = j.at("softmax_true").get<double>();
  r.mean_logit_true = j.at("logit_true").get<double>();
  r.n_used = j.at("n_used").get<Index>();
  r.filter = parse_sample_filter(j.at("filter").get<std::string>());
  if (const auto& pc = j.at("per_class"); !pc.is_null()) {
    std::vector<ClassBreakdown> classes;
    for (const auto& c : pc)
      classes.push_back({c.at("class").get<Index>(), c.at("alpha").get<double>(),
                         c.at("beta").get<double>(), c.at("count").get<Index>()});
    r.per_class_breakdown = std::move(classes);
  }
  return r;
}

}  // namespace

ReportFormat parse_report_format(std::string_view text) {
  if (text == "json") return ReportFormat::Json;
  if (text == "csv") return ReportFormat::Csv;
  throw Error(ErrorCode::InvalidParam, "unknown format '" + std::string(text) + "'");
}

std::string format_fixed4(double value) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", value);
  std::string s(buf);
  if (s == "-0.0000") s = "0.0000";
  return s;
}

std::string write_report(const std::vector<AuditReport>& reports, ReportFormat format) {
  if (format == ReportFormat::Json) {
    ojson arr = ojson::array();
    for (const auto& r : reports) arr.push_back(audit_to_json(r));
    return arr.dump(2) + "\n";
  }
  std::ostringstream out;
  out << kAuditCsvHeader << '\n';
  for (const auto& r : reports)
    out << csv_field(r.model_name) << ',' << format_fixed4(r.mean_alpha) << ','
        << format_fixed4(r.mean_beta) << ',' << format_fixed4(r.score_O) << ','
        << format_fixed4(r.mean_softmax_true) << ',' << format_fixed4(r.mean_logit_true) << ','
        << r.n_used << '\n';
  return out.str();
}

std::string write_report(const CohortReport& cohort, ReportFormat format) {
  if (format == ReportFormat::Json) {
    ojson j;
    j["cohort_size"] = cohort.cohort_size();
    ojson arr = ojson::array();
    for (const auto& e : cohort.entries)
      arr.push_back({{"model", e.model_name},
                     {"alpha_prime", e.alpha_prime},
                     {"beta_prime", e.beta_prime},
                     {"G", e.score_G},
                     {"alpha", e.mean_alpha},
                     {"beta", e.mean_beta}});
    j["entries"] = std::move(arr);
    return j.dump(2) + "\n";
  }
  std::ostringstream out;
  out << kCohortCsvHeader << '\n';
  for (const auto& e : cohort.entries)
    out << csv_field(e.model_name) << ',' << format_fixed4(e.alpha_prime) << ','
        << format_fixed4(e.beta_prime) << ',' << format_fixed4(e.score_G) << ','
        << format_fixed4(e.mean_alpha) << ',' << format_fixed4(e.mean_beta) << '\n';
  return out.str();
}

std::vector<AuditReport> read_audit_reports_json(std::string_view text) {
  try {
    const ojson arr = ojson::parse(text);
    std::vector<AuditReport> out;
    for (const auto& j : arr) out.push_back(audit_from_json(j));
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidParam, std::string("audit report json: ") + e.what());
  }
}

CohortReport read_cohort_report_json(std::string_view text) {
  try {
    const ojson j = ojson::parse(text);
    CohortReport cohort;
    for (const auto& e : j.at("entries"))
      cohort.entries.push_back({e.at("model").get<std::string>(), e.at("alpha_prime").get<double>(),
                                e.at("beta_prime").get<double>(), e.at("G").get<double>(),
                                e.at("alpha").get<double>(), e.at("beta").get<double>()});
    if (j.at("cohort_size").get<std::size_t>() != cohort.entries.size())
      throw Error(ErrorCode::DimensionMismatch, "cohort_size vs entries");
    return cohort;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidParam, std::string("cohort report json: ") + e.what());
  }
}

std::vector<AuditReport> read_audit_reports_csv(std::string_view text) {
  std::vector<AuditReport> out;
  for (const auto& f : csv_rows(text, kAuditCsvHeader)) {
    if (f.size() != 7) throw Error(ErrorCode::InvalidParam, "audit CSV row needs 7 fields");
    AuditReport r;
    r.model_name = f[0];
    r.mean_alpha = to_double(f[1]);
    r.mean_beta = to_double(f[2]);
    r.score_O = to_double(f[3]);
    r.mean_softmax_true = to_double(f[4]);
    r.mean_logit_true = to_double(f[5]);
    r.n_used = to_count(f[6]);
    out.push_back(std::move(r));
  }
  return out;
}

CohortReport read_cohort_report_csv(std::string_view text) {
  CohortReport cohort;
  for (const auto& f : csv_rows(text, kCohortCsvHeader)) {
    if (f.size() != 6) throw Error(ErrorCode::InvalidParam, "cohort CSV row needs 6 fields");
    cohort.entries.push_back(
        {f[0], to_double(f[1]), to_double(f[2]), to_double(f[3]), to_double(f[4]), to_double(f[5])});
  }
  return cohort;
}

}  // namespace nsaudit
