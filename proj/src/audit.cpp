#include "nsaudit/audit.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

namespace nsaudit {

namespace {

void check_class(Index y, Index num_classes) {
  if (y < 0 || y >= num_classes)
    throw Error(ErrorCode::ClassOutOfRange,
                "class " + std::to_string(y) + " with C=" + std::to_string(num_classes));
}

Matrix false_rows(const WeightHead& head, Index target) {
  const Index c = head.num_classes();
  if (c < 2) throw Error(ErrorCode::DimensionMismatch, "head needs at least two classes");
  check_class(target, c);
  Matrix out(c - 1, head.feature_dim());
  for (Index i = 0, k = 0; i < c; ++i)
    if (i != target) out.row(k++) = head.weights.row(i);
  if ((out.array() == 0.0).all())
    throw Error(ErrorCode::DegenerateHead,
                "all false-class weights are zero for class " + std::to_string(target));
  return out;
}

Matrix unit_rows(Matrix rows) {
  for (Index i = 0; i < rows.rows(); ++i) {
    const double n = rows.row(i).norm();
    if (n > 0.0) rows.row(i) /= n;
  }
  return rows;
}

Index argmax(const Vector& z) {
  Index best = 0;
  for (Index i = 1; i < z.size(); ++i)
    if (z(i) > z(best)) best = i;
  return best;
}

}  // namespace

std::string_view to_string(SampleFilter f) {
  return f == SampleFilter::All ? "all" : "misclassified_only";
}

SampleFilter parse_sample_filter(std::string_view text) {
  if (text == "all") return SampleFilter::All;
  if (text == "misclassified" || text == "misclassified_only") return SampleFilter::MisclassifiedOnly;
  throw Error(ErrorCode::InvalidParam, "unknown filter '" + std::string(text) + "'");
}

FalseClassGeometry::FalseClassGeometry(const WeightHead& head, Index target, RankTolerance tol)
    : FalseClassGeometry(target, false_rows(head, target), tol) {}

FalseClassGeometry::FalseClassGeometry(Index target, Matrix rows, RankTolerance tol)
    : target_(target), row_space_(rowspace_basis(rows, tol)) {
  unit_false_rows_ = unit_rows(std::move(rows));
}

double FalseClassGeometry::signed_beta(const Eigen::Ref<const Vector>& r) const {
  // |beta| is the angle to Nul(W_{-y}), the orthogonal complement of Row(W_{-y})
  const double magnitude = angle_vector_complement(r, row_space_);
  const double cosine_sum = (unit_false_rows_ * r).sum() / r.norm();
  return cosine_sum > 0.0 ? magnitude : -magnitude;
}

HeadGeometry::HeadGeometry(WeightHead head, RankTolerance tol)
    : head_(std::move(head)), classes_(static_cast<std::size_t>(head_.num_classes())) {
  for (Index y = 0; y < head_.num_classes(); ++y)
    classes_[static_cast<std::size_t>(y)].emplace(head_, y, tol);
}

HeadGeometry::HeadGeometry(WeightHead head, RankTolerance tol,
                           std::span<const std::uint32_t> labels)
    : head_(std::move(head)), classes_(static_cast<std::size_t>(head_.num_classes())) {
  for (std::uint32_t y : labels) {
    check_class(static_cast<Index>(y), head_.num_classes());
    if (!classes_[y]) classes_[y].emplace(head_, static_cast<Index>(y), tol);
  }
}

const FalseClassGeometry& HeadGeometry::for_class(Index y) const {
  check_class(y, head_.num_classes());
  const auto& g = classes_[static_cast<std::size_t>(y)];
  if (!g) throw Error(ErrorCode::ClassOutOfRange, "no geometry built for class " + std::to_string(y));
  return *g;
}

namespace {

AngleRecord angles_with(const WeightHead& head, const FalseClassGeometry& geometry,
                        const Eigen::Ref<const Vector>& r) {
  if (r.size() != head.feature_dim())
    throw Error(ErrorCode::DimensionMismatch, "representation length " + std::to_string(r.size()) +
                                                  " vs feature_dim " +
                                                  std::to_string(head.feature_dim()));
  const Index y = geometry.target();
  AngleRecord rec;
  rec.true_class = y;
  rec.alpha_deg = angle_between_vectors(r, head.weights.row(y).transpose());
  rec.beta_deg = geometry.signed_beta(r);
  rec.predicted_class = argmax(head.logits(r));
  return rec;
}

}  // namespace

AngleRecord per_sample_angles(const WeightHead& head, const Eigen::Ref<const Vector>& r, Index y,
                              RankTolerance tol) {
  const FalseClassGeometry geometry(head, y, tol);
  return angles_with(head, geometry, r);
}

AngleRecord per_sample_angles(const HeadGeometry& geometry, const Eigen::Ref<const Vector>& r,
                              Index y) {
  return angles_with(geometry.head(), geometry.for_class(y), r);
}

AuditReport summarize_records(std::string model_name, std::span<const AngleRecord> records,
                              SampleFilter filter) {
  if (records.empty()) throw Error(ErrorCode::EmptyAfterFilter);

  struct Sums {
    double alpha = 0.0;
    double beta = 0.0;
    Index count = 0;
  };
  Sums total;
  std::map<Index, Sums> by_class;
  for (const auto& rec : records) {
    total.alpha += rec.alpha_deg;
    total.beta += rec.beta_deg;
    ++total.count;
    auto& c = by_class[rec.true_class];
    c.alpha += rec.alpha_deg;
    c.beta += rec.beta_deg;
    ++c.count;
  }

  AuditReport report;
  report.model_name = std::move(model_name);
  report.filter = filter;
  report.n_used = total.count;
  report.mean_alpha = total.alpha / static_cast<double>(total.count);
  report.mean_beta = total.beta / static_cast<double>(total.count);
  report.score_O = report.mean_alpha + report.mean_beta;

  std::vector<ClassBreakdown> breakdown;
  breakdown.reserve(by_class.size());
  for (const auto& [cls, s] : by_class)
    breakdown.push_back({cls, s.alpha / static_cast<double>(s.count),
                         s.beta / static_cast<double>(s.count), s.count});
  report.per_class_breakdown = std::move(breakdown);
  return report;
}

ConfidenceBaselines confidence_baselines(const WeightHead& head, const Matrix& reps,
                                         std::span<const std::uint32_t> labels) {
  if (reps.cols() != head.feature_dim())
    throw Error(ErrorCode::DimensionMismatch, "representation dim " + std::to_string(reps.cols()) +
                                                  " vs head dim " +
                                                  std::to_string(head.feature_dim()));
  if (static_cast<Index>(labels.size()) != reps.rows())
    throw Error(ErrorCode::DimensionMismatch, "label count vs representation rows");
  if (labels.empty()) throw Error(ErrorCode::EmptyAfterFilter);

  double softmax_sum = 0.0;
  double logit_sum = 0.0;
  for (Index i = 0; i < reps.rows(); ++i) {
    const Index y = labels[static_cast<std::size_t>(i)];
    check_class(y, head.num_classes());
    const Vector z = head.logits(reps.row(i).transpose());
    const double top = z.maxCoeff();
    const double denom = (z.array() - top).exp().sum();
    softmax_sum += std::exp(z(y) - top) / denom;
    logit_sum += z(y);
  }
  const auto n = static_cast<double>(reps.rows());
  return {softmax_sum / n, logit_sum / n};
}

std::vector<AngleRecord> audit_samples(const NafBundle& bundle, RankTolerance tol) {
  bundle.validate();
  const HeadGeometry geometry(bundle.head, tol, bundle.reps.labels);
  const Matrix& reps = bundle.reps.representations;

  std::vector<AngleRecord> records;
  records.reserve(static_cast<std::size_t>(reps.rows()));
  for (Index i = 0; i < reps.rows(); ++i) {
    try {
      AngleRecord rec = per_sample_angles(geometry, reps.row(i).transpose(),
                                          bundle.reps.labels[static_cast<std::size_t>(i)]);
      rec.sample_index = i;
      records.push_back(rec);
    } catch (const Error& e) {
      throw e.with_context("sample " + std::to_string(i));
    }
  }
  return records;
}

AuditReport audit_model(const NafBundle& bundle, SampleFilter filter, RankTolerance tol) {
  std::vector<AngleRecord> records = audit_samples(bundle, tol);
  if (filter == SampleFilter::MisclassifiedOnly)
    std::erase_if(records, [](const AngleRecord& r) { return r.predicted_class == r.true_class; });
  if (records.empty())
    throw Error(ErrorCode::EmptyAfterFilter, "model '" + bundle.model_name + "'");

  AuditReport report = summarize_records(bundle.model_name, records, filter);

  Matrix used(static_cast<Index>(records.size()), bundle.head.feature_dim());
  std::vector<std::uint32_t> labels(records.size());
  for (std::size_t k = 0; k < records.size(); ++k) {
    used.row(static_cast<Index>(k)) = bundle.reps.representations.row(records[k].sample_index);
    labels[k] = bundle.reps.labels[static_cast<std::size_t>(records[k].sample_index)];
  }
  const ConfidenceBaselines base = confidence_baselines(bundle.head, used, labels);
  report.mean_softmax_true = base.mean_softmax_true;
  report.mean_logit_true = base.mean_logit_true;
  return report;
}

CohortReport cohort_generalization(std::span<const AuditReport> reports) {
  if (reports.size() < 2)
    throw Error(ErrorCode::CohortTooSmall, "need at least 2 models, got " +
                                               std::to_string(reports.size()));
  for (const auto& r : reports)
    if (r.filter != reports.front().filter)
      throw Error(ErrorCode::InvalidParam, "cohort mixes sample filters");

  double max_alpha = 0.0;
  double max_beta = 0.0;
  for (const auto& r : reports) {
    max_alpha = std::max(max_alpha, r.mean_alpha);
    max_beta = std::max(max_beta, std::abs(r.mean_beta));
  }
  if (max_alpha == 0.0) throw Error(ErrorCode::ZeroDenominator, "max mean alpha is 0");
  if (max_beta == 0.0) throw Error(ErrorCode::ZeroDenominator, "max |mean beta| is 0");

  CohortReport cohort;
  cohort.entries.reserve(reports.size());
  for (const auto& r : reports) {
    CohortEntry e;
    e.model_name = r.model_name;
    e.mean_alpha = r.mean_alpha;
    e.mean_beta = r.mean_beta;
    e.alpha_prime = r.mean_alpha / max_alpha;
    e.beta_prime = std::abs(r.mean_beta) / max_beta;
    e.score_G = e.alpha_prime + e.beta_prime;
    cohort.entries.push_back(std::move(e));
  }
  return cohort;
}

std::vector<std::size_t> rank_by_overfitting(std::span<const AuditReport> reports) {
  std::vector<std::size_t> order(reports.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (reports[a].score_O != reports[b].score_O) return reports[a].score_O < reports[b].score_O;
    return reports[a].model_name < reports[b].model_name;
  });
  return order;
}

std::vector<std::size_t> rank_by_generalization(const CohortReport& cohort) {
  const auto& e = cohort.entries;
  std::vector<std::size_t> order(e.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (e[a].score_G != e[b].score_G) return e[a].score_G > e[b].score_G;
    return e[a].model_name < e[b].model_name;
  });
  return order;
}

}  // namespace nsaudit
