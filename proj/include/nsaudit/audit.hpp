#pragma once

// Overfitting (O) and generalization (G) scores from a classifier head and a
// batch of test representations.
//
// For a representation r with true class y:
//   alpha = angle(r, w_y)
//   beta  = +/- angle(r, Nul(W_{-y})), W_{-y} the stacked false-class rows.
// beta is negative when the summed cosine of r with the false-class weights is
// <= 0, i.e. r sits on the far side of the false classes on average.
//   O = mean(alpha) + mean(beta)
//   G_i = mean_alpha_i / max_j mean_alpha_j + |mean_beta_i| / max_j |mean_beta_j|

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "nsaudit/linalg.hpp"
#include "nsaudit/naf.hpp"

namespace nsaudit {

enum class SampleFilter { All, MisclassifiedOnly };

std::string_view to_string(SampleFilter f);
SampleFilter parse_sample_filter(std::string_view text);

struct AngleRecord {
  Index sample_index = 0;
  double alpha_deg = 0.0;  // [0, 180]
  double beta_deg = 0.0;   // [-90, 90]
  Index predicted_class = 0;
  Index true_class = 0;
};

struct ClassBreakdown {
  Index class_index = 0;
  double mean_alpha = 0.0;
  double mean_beta = 0.0;
  Index count = 0;
};

struct AuditReport {
  std::string model_name;
  double mean_alpha = 0.0;
  double mean_beta = 0.0;
  double score_O = 0.0;
  double mean_softmax_true = 0.0;
  double mean_logit_true = 0.0;
  Index n_used = 0;
  SampleFilter filter = SampleFilter::All;
  std::optional<std::vector<ClassBreakdown>> per_class_breakdown;
};

struct CohortEntry {
  std::string model_name;
  double alpha_prime = 0.0;
  double beta_prime = 0.0;
  double score_G = 0.0;
  double mean_alpha = 0.0;
  double mean_beta = 0.0;
};

struct CohortReport {
  std::vector<CohortEntry> entries;
  std::size_t cohort_size() const { return entries.size(); }
};

struct ConfidenceBaselines {
  double mean_softmax_true = 0.0;
  double mean_logit_true = 0.0;
};

/// False-class geometry for one target class: unit false-class weight rows
/// and the row space of W_{-y}, whose orthogonal complement is the null space.
class FalseClassGeometry {
 public:
  FalseClassGeometry(const WeightHead& head, Index target, RankTolerance tol);

  Index target() const { return target_; }
  const SubspaceBasis& false_row_space() const { return row_space_; }
  Index null_space_dim() const { return row_space_.ambient_dim() - row_space_.dim(); }

  /// Signed beta in degrees.
  double signed_beta(const Eigen::Ref<const Vector>& r) const;

 private:
  FalseClassGeometry(Index target, Matrix false_rows, RankTolerance tol);

  Index target_;
  Matrix unit_false_rows_;  // zero rows stay zero and contribute no cosine
  SubspaceBasis row_space_;
};

/// One FalseClassGeometry per class, built once and then shared read-only.
class HeadGeometry {
 public:
  /// Geometry for every class.
  HeadGeometry(WeightHead head, RankTolerance tol);
  /// Geometry only for the classes that occur in `labels`.
  HeadGeometry(WeightHead head, RankTolerance tol, std::span<const std::uint32_t> labels);

  const WeightHead& head() const { return head_; }
  const FalseClassGeometry& for_class(Index y) const;

 private:
  WeightHead head_;
  std::vector<std::optional<FalseClassGeometry>> classes_;
};

AngleRecord per_sample_angles(const WeightHead& head, const Eigen::Ref<const Vector>& r, Index y,
                              RankTolerance tol = RankTolerance::automatic());
AngleRecord per_sample_angles(const HeadGeometry& geometry, const Eigen::Ref<const Vector>& r,
                              Index y);

/// Mean alpha / beta, O and a per-class breakdown over the given records,
/// accumulated in record order. Baseline fields are left at zero.
AuditReport summarize_records(std::string model_name, std::span<const AngleRecord> records,
                              SampleFilter filter = SampleFilter::All);

ConfidenceBaselines confidence_baselines(const WeightHead& head, const Matrix& reps,
                                         std::span<const std::uint32_t> labels);

AuditReport audit_model(const NafBundle& bundle, SampleFilter filter = SampleFilter::All,
                        RankTolerance tol = RankTolerance::automatic());

/// Per-sample records for every sample of the bundle, in sample order.
std::vector<AngleRecord> audit_samples(const NafBundle& bundle,
                                       RankTolerance tol = RankTolerance::automatic());

CohortReport cohort_generalization(std::span<const AuditReport> reports);

/// Indices into reports, least overfit (smallest O) first; ties by model name.
std::vector<std::size_t> rank_by_overfitting(std::span<const AuditReport> reports);
/// Indices into cohort.entries, largest G first; ties by model name.
std::vector<std::size_t> rank_by_generalization(const CohortReport& cohort);

}  // namespace nsaudit
