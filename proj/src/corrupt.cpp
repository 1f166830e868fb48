#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "nsaudit/toy.hpp"

namespace nsaudit::toy {

namespace {

Vector column_std(const Matrix& x) {
  const Eigen::RowVectorXd mean = x.colwise().mean();
  const Matrix centered = x.rowwise() - mean;
  Vector sd = (centered.colwise().squaredNorm() / static_cast<double>(x.rows())).cwiseSqrt().transpose();
  return sd;
}

// Exactly `count` distinct column indices per row, seeded.
template <typename Fn>
void for_random_coordinates(Index rows, Index cols, Index count, std::mt19937_64& rng, Fn&& fn) {
  std::vector<Index> idx(static_cast<std::size_t>(cols));
  for (Index i = 0; i < rows; ++i) {
    std::iota(idx.begin(), idx.end(), Index{0});
    // partial Fisher-Yates: first `count` entries are a uniform sample
    for (Index k = 0; k < count; ++k) {
      std::uniform_int_distribution<Index> pick(k, cols - 1);
      std::swap(idx[static_cast<std::size_t>(k)], idx[static_cast<std::size_t>(pick(rng))]);
      fn(i, idx[static_cast<std::size_t>(k)]);
    }
  }
}

}  // namespace

std::string_view to_string(CorruptionKind kind) {
  switch (kind) {
    case CorruptionKind::GaussianNoise: return "gaussian_noise";
    case CorruptionKind::FeatureScale: return "feature_scale";
    case CorruptionKind::FeatureDropout: return "feature_dropout";
    case CorruptionKind::MeanShift: return "mean_shift";
    case CorruptionKind::Salt: return "salt";
  }
  return "unknown";
}

CorruptionKind parse_corruption_kind(std::string_view text) {
  for (CorruptionKind k : all_corruption_kinds())
    if (to_string(k) == text) return k;
  throw Error(ErrorCode::InvalidParam, "unknown corruption '" + std::string(text) + "'");
}

const std::vector<CorruptionKind>& all_corruption_kinds() {
  static const std::vector<CorruptionKind> kinds = {
      CorruptionKind::GaussianNoise, CorruptionKind::FeatureScale, CorruptionKind::FeatureDropout,
      CorruptionKind::MeanShift, CorruptionKind::Salt};
  return kinds;
}

Matrix scale_features(const Matrix& features, double factor) { return features * factor; }

Matrix corrupt(const Matrix& features, CorruptionKind kind, int severity, std::uint64_t seed) {
  if (severity < 0 || severity > kMaxSeverity)
    throw Error(ErrorCode::InvalidParam, "severity " + std::to_string(severity) + " outside [0, 5]");
  if (features.rows() < 1 || features.cols() < 1)
    throw Error(ErrorCode::InvalidParam, "empty feature matrix");
  if (severity == 0) return features;

  const double s = severity;
  const Index d = features.cols();
  std::mt19937_64 rng(mix_seed(seed, static_cast<std::uint64_t>(kind) * 16 + severity));
  Matrix out = features;

  switch (kind) {
    case CorruptionKind::GaussianNoise: {
      const Vector sd = column_std(features);
      std::normal_distribution<double> normal(0.0, 1.0);
      for (Index i = 0; i < out.rows(); ++i)
        for (Index j = 0; j < d; ++j) out(i, j) += 0.3 * s * sd(j) * normal(rng);
      break;
    }
    case CorruptionKind::FeatureScale:
      out = scale_features(features, 1.0 - 0.15 * s);
      break;
    case CorruptionKind::FeatureDropout: {
      const auto count = static_cast<Index>(std::llround(0.1 * s * static_cast<double>(d)));
      for_random_coordinates(out.rows(), d, count, rng, [&](Index i, Index j) { out(i, j) = 0.0; });
      break;
    }
    case CorruptionKind::MeanShift: {
      const Vector sd = column_std(features);
      std::bernoulli_distribution coin(0.5);
      Eigen::RowVectorXd shift(d);
      for (Index j = 0; j < d; ++j) shift(j) = (coin(rng) ? 1.0 : -1.0) * 0.3 * s * sd(j);
      out.rowwise() += shift;
      break;
    }
    case CorruptionKind::Salt: {
      const Vector sd = column_std(features);
      const Eigen::RowVectorXd mean = features.colwise().mean();
      const auto count = static_cast<Index>(std::llround(0.04 * s * static_cast<double>(d)));
      std::bernoulli_distribution coin(0.5);
      for_random_coordinates(out.rows(), d, count, rng, [&](Index i, Index j) {
        out(i, j) = mean(j) + (coin(rng) ? 3.0 : -3.0) * sd(j);
      });
      break;
    }
  }
  return out;
}

CorruptionResult corruption_accuracy(const MlpModel& model, const BlobDataset& test,
                                     std::span<const CorruptionKind> kinds,
                                     std::span<const int> severities,
                                     std::span<const std::uint64_t> seeds) {
  CorruptionResult result;
  double total = 0.0;
  for (CorruptionKind kind : kinds)
    for (int severity : severities)
      for (std::uint64_t seed : seeds) {
        const Matrix x = corrupt(test.features, kind, severity, seed);
        const double acc = model.accuracy(x, test.labels);
        result.grid.push_back({kind, severity, seed, acc});
        total += acc;
      }
  if (!result.grid.empty()) result.mean_accuracy = total / static_cast<double>(result.grid.size());
  return result;
}

namespace {

std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2)
    throw Error(ErrorCode::InvalidParam, "spearman needs two equal-length series of length >= 2");
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  const auto n = static_cast<double>(x.size());
  const double mean = (n + 1.0) / 2.0;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mean) * (ry[i] - mean);
    sxx += (rx[i] - mean) * (rx[i] - mean);
    syy += (ry[i] - mean) * (ry[i] - mean);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

double median(std::vector<double> values) {
  if (values.empty()) throw Error(ErrorCode::InvalidParam, "median of empty set");
  std::sort(values.begin(), values.end());
  const std::size_t m = values.size() / 2;
  return values.size() % 2 ? values[m] : 0.5 * (values[m - 1] + values[m]);
}

}  // namespace nsaudit::toy
