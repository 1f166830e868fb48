// nsaudit: overfitting / generalization audit of a classifier head from test
// representations alone.
//
// Exit codes: 0 success, 1 validation or domain error, 2 I/O error,
// 3 internal invariant violation.

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "nsaudit/audit.hpp"
#include "nsaudit/naf.hpp"
#include "nsaudit/parallel.hpp"
#include "nsaudit/report.hpp"
#include "nsaudit/sweep.hpp"

namespace fs = std::filesystem;
using namespace nsaudit;

namespace {

enum ExitCode { kOk = 0, kDomainError = 1, kIoError = 2, kInternalError = 3 };

struct InvariantViolation : std::logic_error {
  using std::logic_error::logic_error;
};

int exit_code_for(const Error& e) { return e.code() == ErrorCode::IoFailure ? kIoError : kDomainError; }

RankTolerance parse_rank_tol(const std::string& text) {
  if (text.empty() || text == "auto") return RankTolerance::automatic();
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != text.size()) throw Error(ErrorCode::ToleranceInvalid, "'" + text + "'");
  return RankTolerance::fixed(v);
}

double parse_fixture_number(const std::string& path, const std::string& text) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != text.size() || !std::isfinite(v))
    throw Error(ErrorCode::InvalidParam, path + ": bad fixture value '" + text + "'");
  return v;
}

RankTolerance resolve_rank_tol(const std::string& flag) {
  if (!flag.empty()) return parse_rank_tol(flag);
  if (const char* env = std::getenv("NSAUDIT_RANK_TOL"); env && *env) return parse_rank_tol(env);
  return RankTolerance::automatic();
}

void emit(const std::string& out_path, const std::string& text) {
  if (out_path.empty() || out_path == "-") {
    std::cout << text << std::flush;
    return;
  }
  std::ofstream out(out_path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot open " + out_path + " for writing");
  out << text;
  if (!out) throw Error(ErrorCode::IoFailure, "cannot write " + out_path);
}

std::ostream& summary_stream(const std::string& out_path) {
  return (out_path.empty() || out_path == "-") ? std::cerr : std::cout;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// Reads and audits each bundle, naming the file on failure.
// Bundles are audited concurrently; reports keep input order.
std::vector<AuditReport> audit_inputs(const std::vector<std::string>& inputs, SampleFilter filter,
                                      RankTolerance tol, int jobs) {
  std::vector<AuditReport> reports(inputs.size());
  parallel_for(inputs.size(), jobs, [&](std::size_t i) {
    try {
      const NafBundle bundle = read_naf(fs::path(inputs[i]));
      reports[i] = audit_model(bundle, filter, tol);
    } catch (const Error& e) {
      throw e.with_context(inputs[i]);
    }
  });
  return reports;
}

// Fixture rows "model,alpha,beta": pre-aggregated means that bypass bundle
// auditing so published tables can be replayed through the aggregation path.
std::vector<AuditReport> reports_from_fixture(const std::string& path, SampleFilter filter) {
  const std::string text = read_text(path);
  std::istringstream lines(text);
  std::string line;
  if (!std::getline(lines, line) || line != "model,alpha,beta")
    throw Error(ErrorCode::InvalidParam, path + ": fixture header must be 'model,alpha,beta'");
  std::vector<AuditReport> reports;
  while (std::getline(lines, line)) {
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string name, alpha, beta;
    if (!std::getline(fields, name, ',') || !std::getline(fields, alpha, ',') ||
        !std::getline(fields, beta))
      throw Error(ErrorCode::InvalidParam, path + ": bad fixture row '" + line + "'");
    AngleRecord rec;
    rec.alpha_deg = parse_fixture_number(path, alpha);
    rec.beta_deg = parse_fixture_number(path, beta);
    const AngleRecord one[] = {rec};
    reports.push_back(summarize_records(name, one, filter));
  }
  return reports;
}

void check_O_invariant(const std::vector<AuditReport>& reports) {
  for (const auto& r : reports)
    if (r.score_O != r.mean_alpha + r.mean_beta)
      throw InvariantViolation("O != alpha + beta for " + r.model_name);
}

struct CommonOptions {
  std::vector<std::string> inputs;
  std::string filter = "all";
  std::string rank_tol;
  std::string format = "csv";
  std::string out = "-";
  std::string fixture;
  int jobs = default_jobs();
};

void add_audit_flags(CLI::App* cmd, CommonOptions& o, bool with_format) {
  cmd->add_option("--filter", o.filter, "Samples to average: all | misclassified")
      ->check(CLI::IsMember({"all", "misclassified", "misclassified_only"}));
  cmd->add_option("--rank-tol", o.rank_tol,
                  "Singular-value cutoff: auto | <float> (env NSAUDIT_RANK_TOL)");
  if (with_format)
    cmd->add_option("--format", o.format, "Report format: json | csv")
        ->check(CLI::IsMember({"json", "csv"}));
  cmd->add_option("--out", o.out, "Output path, '-' for stdout");
  cmd->add_option("--jobs", o.jobs, "Bundles audited in parallel")->check(CLI::PositiveNumber);
  // Hidden: replay pre-aggregated (alpha, beta) means.
  cmd->add_option("--means-fixture", o.fixture)->group("");
}

std::vector<AuditReport> collect_reports(const CommonOptions& o) {
  const SampleFilter filter = parse_sample_filter(o.filter);
  std::vector<AuditReport> reports =
      o.fixture.empty() ? audit_inputs(o.inputs, filter, resolve_rank_tol(o.rank_tol), o.jobs)
                        : reports_from_fixture(o.fixture, filter);
  check_O_invariant(reports);
  return reports;
}

int run_audit(const CommonOptions& o) {
  if (o.inputs.empty() && o.fixture.empty())
    throw Error(ErrorCode::InvalidParam, "audit needs at least one --input");
  const auto reports = collect_reports(o);
  emit(o.out, write_report(reports, parse_report_format(o.format)));
  std::ostream& s = summary_stream(o.out);
  const auto order = rank_by_overfitting(reports);
  for (std::size_t k = 0; k < order.size(); ++k)
    s << "rank " << k + 1 << ": " << reports[order[k]].model_name
      << " O=" << format_fixed4(reports[order[k]].score_O) << '\n';
  return kOk;
}

int run_cohort(const CommonOptions& o) {
  const auto reports = collect_reports(o);
  if (reports.size() < 2)
    throw Error(ErrorCode::CohortTooSmall, "cohort needs at least 2 models, got " +
                                               std::to_string(reports.size()));
  const CohortReport cohort = cohort_generalization(reports);
  emit(o.out, write_report(cohort, parse_report_format(o.format)));
  std::ostream& s = summary_stream(o.out);
  const auto order = rank_by_generalization(cohort);
  for (std::size_t k = 0; k < order.size(); ++k)
    s << "rank " << k + 1 << ": " << cohort.entries[order[k]].model_name
      << " G=" << format_fixed4(cohort.entries[order[k]].score_G) << '\n';
  return kOk;
}

int run_rank(const CommonOptions& o) {
  if (o.inputs.empty() && o.fixture.empty())
    throw Error(ErrorCode::InvalidParam, "rank needs at least one --input");
  const auto reports = collect_reports(o);
  const auto by_O = rank_by_overfitting(reports);
  std::optional<CohortReport> cohort;
  std::vector<std::size_t> g_rank(reports.size(), 0);
  if (reports.size() >= 2) {
    cohort = cohort_generalization(reports);
    const auto by_G = rank_by_generalization(*cohort);
    for (std::size_t k = 0; k < by_G.size(); ++k) g_rank[by_G[k]] = k + 1;
  }
  std::ostringstream out;
  out << "rank_O,model,O,G,rank_G\n";
  for (std::size_t k = 0; k < by_O.size(); ++k) {
    const std::size_t i = by_O[k];
    out << k + 1 << ',' << reports[i].model_name << ',' << format_fixed4(reports[i].score_O) << ',';
    if (cohort) out << format_fixed4(cohort->entries[i].score_G) << ',' << g_rank[i];
    else out << ',';
    out << '\n';
  }
  emit(o.out, out.str());
  return kOk;
}

std::string bundle_path_for(const fs::path& dir, const std::string& name) {
  return (dir / (name + ".naf")).string();
}

int run_toy_train(const std::string& sweep, std::uint64_t seed, const std::vector<std::string>& only,
                  const std::string& out_dir, int jobs) {
  toy::SweepConfig cfg = toy::load_sweep_config(sweep);
  if (!only.empty()) {
    std::vector<toy::TrainConfig> picked;
    for (const auto& name : only) picked.push_back(cfg.model(name));
    cfg.models = std::move(picked);
  }
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw Error(ErrorCode::IoFailure, "cannot create " + out_dir);

  toy::SweepOptions opts;
  opts.jobs = jobs;
  opts.with_corruption = false;
  const toy::SeedOutcome outcome = toy::run_sweep_seed(cfg, seed, opts);
  std::vector<std::string> paths;
  for (const auto& m : outcome.models) {
    paths.push_back(bundle_path_for(out_dir, m.name));
    write_naf(m.bundle, fs::path(paths.back()));
    std::cout << m.name << ": train_acc=" << format_fixed4(m.train_acc)
              << " test_acc=" << format_fixed4(m.clean_acc) << " -> " << paths.back() << '\n';
  }
  emit((fs::path(out_dir) / "manifest.json").string(), toy::manifest_json({outcome}, paths));
  return kOk;
}

int run_toy_bench(const std::string& sweep, int seeds, const std::string& out_dir, int jobs) {
  const toy::SweepConfig cfg = toy::load_sweep_config(sweep);
  if (seeds < 1) throw Error(ErrorCode::InvalidParam, "--seeds must be >= 1");
  if (cfg.models.size() < 2)
    std::cerr << "notice: sweep has a single config; cohort step skipped\n";

  toy::SweepOptions opts;
  opts.jobs = jobs;
  std::vector<toy::SeedOutcome> outcomes;
  std::vector<std::string> paths;
  for (int s = 0; s < seeds; ++s) {
    outcomes.push_back(toy::run_sweep_seed(cfg, static_cast<std::uint64_t>(s), opts));
    const fs::path dir = fs::path(out_dir) / ("seed" + std::to_string(s));
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw Error(ErrorCode::IoFailure, "cannot create " + dir.string());
    for (const auto& m : outcomes.back().models) {
      paths.push_back(bundle_path_for(dir, m.name));
      write_naf(m.bundle, fs::path(paths.back()));
    }
  }

  const std::string summary = toy::summary_csv(outcomes);
  emit((fs::path(out_dir) / "summary.csv").string(), summary);
  emit((fs::path(out_dir) / "manifest.json").string(), toy::manifest_json(outcomes, paths));
  std::vector<AuditReport> first;
  for (const auto& m : outcomes.front().models) first.push_back(m.audit);
  emit((fs::path(out_dir) / "audit_seed0.csv").string(), write_report(first, ReportFormat::Csv));

  std::cout << summary;
  std::vector<double> rho;
  for (const auto& o : outcomes)
    if (o.spearman_G_corruption) {
      rho.push_back(*o.spearman_G_corruption);
      std::cout << "seed " << o.seed << " spearman(G, corruption_acc)="
                << format_fixed4(*o.spearman_G_corruption) << '\n';
    }
  if (!rho.empty())
    std::cout << "median spearman(G, corruption_acc)=" << format_fixed4(toy::median(rho)) << '\n';
  return kOk;
}

int run_inspect(const std::string& input, bool quick) {
  NafHeader h;
  try {
    h = read_naf_header(input);
    if (!quick && !verify_naf_checksum(input)) throw Error(ErrorCode::ChecksumMismatch);
  } catch (const Error& e) {
    throw e.with_context(input);
  }
  std::cout << "C=" << h.num_classes << " d=" << h.feature_dim << " n=" << h.num_samples
            << " dtype=" << to_string(h.dtype) << " bias=" << (h.has_bias ? "yes" : "no") << '\n';
  std::cout << "name=" << h.model_name << '\n';
  for (const auto& [k, v] : h.metadata) std::cout << "meta." << k << '=' << v << '\n';
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Null-space overfitting audit for classifier heads"};
  app.require_subcommand(1);

  CommonOptions audit_opts;
  auto* audit = app.add_subcommand("audit", "Per-model alpha, beta and overfitting score O");
  audit->add_option("--input", audit_opts.inputs, "NAF bundle(s)");
  add_audit_flags(audit, audit_opts, true);

  CommonOptions cohort_opts;
  auto* cohort = app.add_subcommand("cohort", "Cohort-normalized generalization score G");
  cohort->add_option("--input", cohort_opts.inputs, "NAF bundles (at least 2)");
  add_audit_flags(cohort, cohort_opts, true);

  CommonOptions rank_opts;
  auto* rank = app.add_subcommand("rank", "Rank models by O (ascending) and G (descending)");
  rank->add_option("--input", rank_opts.inputs, "NAF bundle(s)");
  add_audit_flags(rank, rank_opts, false);

  std::string sweep_path, out_dir;
  std::uint64_t seed = 0;
  int seeds = 1;
  int jobs = 1;
  std::vector<std::string> only;
  auto* toy_train = app.add_subcommand("toy-train", "Train sweep configs on one seed, write bundles");
  toy_train->add_option("--sweep", sweep_path, "Sweep config JSON")->required();
  toy_train->add_option("--seed", seed, "Sweep seed");
  toy_train->add_option("--model", only, "Only these config names");
  toy_train->add_option("--out", out_dir, "Output directory")->required();
  toy_train->add_option("--jobs", jobs, "Parallel trainings")->check(CLI::PositiveNumber);

  auto* toy_bench = app.add_subcommand("toy-bench", "Full sweep: train, audit, corrupt, correlate");
  toy_bench->add_option("--sweep", sweep_path, "Sweep config JSON")->required();
  toy_bench->add_option("--seeds", seeds, "Number of sweep seeds (0..k-1)");
  toy_bench->add_option("--out", out_dir, "Output directory")->required();
  toy_bench->add_option("--jobs", jobs, "Parallel trainings")->check(CLI::PositiveNumber);

  std::string inspect_input;
  bool quick = false;
  auto* inspect = app.add_subcommand("inspect", "Print a bundle header");
  inspect->add_option("--input", inspect_input, "NAF bundle")->required();
  inspect->add_flag("--quick", quick, "Skip checksum verification of the payload");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kDomainError;
  }

  try {
    if (*audit) return run_audit(audit_opts);
    if (*cohort) return run_cohort(cohort_opts);
    if (*rank) return run_rank(rank_opts);
    if (*toy_train) return run_toy_train(sweep_path, seed, only, out_dir, jobs);
    if (*toy_bench) return run_toy_bench(sweep_path, seeds, out_dir, jobs);
    if (*inspect) return run_inspect(inspect_input, quick);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(e);
  } catch (const InvariantViolation& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return kInternalError;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return kInternalError;
  }
  return kInternalError;
}
