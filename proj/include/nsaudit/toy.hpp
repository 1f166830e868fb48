#pragma once

// Desk-scale substrate for exercising the auditor: Gaussian blob data, a
// two-layer ReLU MLP trained by mini-batch SGD, and vector-space corruptions.

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "nsaudit/linalg.hpp"
#include "nsaudit/naf.hpp"

namespace nsaudit::toy {

struct BlobDataset {
  Matrix features;  // n x d_in
  std::vector<std::uint32_t> labels;
  Matrix class_means;  // K x d_in
  double sigma = 1.0;
  std::uint64_t seed = 0;

  Index num_classes() const { return class_means.rows(); }
  Index num_samples() const { return features.rows(); }
  Index input_dim() const { return features.cols(); }
};

/// Samples are interleaved by class: sample i has label i % K.
/// Means sit at separation * e_k when K <= d_in, otherwise at separation times
/// seeded random unit directions.
BlobDataset make_blobs(Index num_classes, Index input_dim, Index n_per_class, double separation,
                       double sigma, std::uint64_t seed);

struct BlobSplit {
  BlobDataset train;
  BlobDataset test;
};

/// First `train_per_class` samples of each class go to train, the rest to test.
BlobSplit split_per_class(const BlobDataset& data, Index train_per_class);

/// Keeps the first `per_class` samples of each class.
BlobDataset take_per_class(const BlobDataset& data, Index per_class);

struct TrainConfig {
  std::string name;
  int epochs = 100;
  double learning_rate = 0.05;
  Index batch_size = 32;  // 0 = full batch
  std::uint64_t seed = 0;
  double weight_decay = 0.0;
  double label_noise_fraction = 0.0;
  Index train_size_per_class = 0;  // 0 = use every sample given
  Index hidden_units = 64;

  void validate() const;
};

struct EpochLog {
  double train_loss = 0.0;
  double train_acc = 0.0;
};

struct Gradients {
  Matrix w1;
  Vector b1;
  Matrix w2;
  Vector b2;
};

struct MlpModel {
  Matrix w1;  // h x d_in
  Vector b1;
  Matrix w2;  // K x h, the audited head
  Vector b2;
  std::vector<EpochLog> training_log;

  Index input_dim() const { return w1.cols(); }
  Index hidden_units() const { return w1.rows(); }
  Index num_classes() const { return w2.rows(); }

  /// ReLU(X W1^T + b1), one row per sample.
  Matrix hidden(const Matrix& x) const;
  Matrix logits(const Matrix& x) const;
  std::vector<std::uint32_t> predict(const Matrix& x) const;
  double accuracy(const Matrix& x, std::span<const std::uint32_t> labels) const;

  bool operator==(const MlpModel& other) const;
};

/// He-initialised weights, zero biases.
MlpModel init_mlp(Index input_dim, Index hidden_units, Index num_classes, std::uint64_t seed);

/// Mean softmax cross-entropy plus weight_decay / 2 * (|W1|^2 + |W2|^2).
double training_loss(const MlpModel& model, const Matrix& x, std::span<const std::uint32_t> labels,
                     double weight_decay);

struct LossAndGradients {
  double loss = 0.0;
  Gradients grad;
};

LossAndGradients loss_and_gradients(const MlpModel& model, const Matrix& x,
                                    std::span<const std::uint32_t> labels, double weight_decay);

/// Labels after flipping round(fraction * n) seeded-random entries to a
/// different, uniformly chosen class.
std::vector<std::uint32_t> apply_label_noise(std::span<const std::uint32_t> labels, Index num_classes,
                                             double fraction, std::uint64_t seed);

/// Trains on `data` (subsampled to cfg.train_size_per_class, then label-noised).
/// Throws DivergenceDetected if the loss becomes non-finite.
MlpModel train_mlp(const BlobDataset& data, const TrainConfig& cfg);

/// Head = layer 2, representations = post-ReLU hidden activations of `data`.
NafBundle extract_bundle(const MlpModel& model, const BlobDataset& data, std::string name);

enum class CorruptionKind { GaussianNoise, FeatureScale, FeatureDropout, MeanShift, Salt };

std::string_view to_string(CorruptionKind kind);
CorruptionKind parse_corruption_kind(std::string_view text);
const std::vector<CorruptionKind>& all_corruption_kinds();

inline constexpr int kMaxSeverity = 5;

/// Severity 0 is the identity; strengths grow linearly with severity s and are
/// relative to each column's standard deviation std_j over `features`:
///   gaussian_noise   x + N(0, (0.3 s std_j)^2)
///   feature_scale    x * (1 - 0.15 s)
///   feature_dropout  exactly round(0.1 s d) coordinates per row set to 0
///   mean_shift       x_j + 0.3 s std_j sign_j, one random sign per column
///   salt             exactly round(0.04 s d) coordinates per row set to mean_j +/- 3 std_j
Matrix corrupt(const Matrix& features, CorruptionKind kind, int severity, std::uint64_t seed);

/// x * factor.
Matrix scale_features(const Matrix& features, double factor);

struct CorruptionCell {
  CorruptionKind kind;
  int severity;
  std::uint64_t seed;
  double accuracy;
};

struct CorruptionResult {
  double mean_accuracy = 0.0;
  std::vector<CorruptionCell> grid;  // kind-major, then severity, then seed
};

CorruptionResult corruption_accuracy(const MlpModel& model, const BlobDataset& test,
                                     std::span<const CorruptionKind> kinds,
                                     std::span<const int> severities,
                                     std::span<const std::uint64_t> seeds);

/// Spearman rank correlation with average ranks for ties.
double spearman(std::span<const double> x, std::span<const double> y);
double median(std::vector<double> values);

/// splitmix64 finaliser, used to derive independent sub-seeds.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

}  // namespace nsaudit::toy
