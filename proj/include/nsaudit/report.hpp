#pragma once

// Report serialization. CSV mirrors the printed tables (4 decimals); JSON keeps
// every double at round-trip precision so it can be read back losslessly.

#include <string>
#include <string_view>
#include <vector>

#include "nsaudit/audit.hpp"

namespace nsaudit {

enum class ReportFormat { Json, Csv };

ReportFormat parse_report_format(std::string_view text);

inline constexpr std::string_view kAuditCsvHeader =
    "model,alpha,beta,O,softmax_true,logit_true,n_used";
inline constexpr std::string_view kCohortCsvHeader = "model,alpha_prime,beta_prime,G,alpha,beta";

/// Fixed 4-decimal rendering; negative zero prints as 0.0000.
std::string format_fixed4(double value);

std::string write_report(const std::vector<AuditReport>& reports, ReportFormat format);
std::string write_report(const CohortReport& cohort, ReportFormat format);

std::vector<AuditReport> read_audit_reports_json(std::string_view text);
CohortReport read_cohort_report_json(std::string_view text);

/// Parses the CSV produced by write_report (values at CSV precision).
std::vector<AuditReport> read_audit_reports_csv(std::string_view text);
CohortReport read_cohort_report_csv(std::string_view text);

}  // namespace nsaudit
