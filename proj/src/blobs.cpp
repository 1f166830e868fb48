#include <random>

#include "nsaudit/toy.hpp"

namespace nsaudit::toy {

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9E3779B97F4A7C15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

BlobDataset make_blobs(Index num_classes, Index input_dim, Index n_per_class, double separation,
                       double sigma, std::uint64_t seed) {
  if (num_classes < 2) throw Error(ErrorCode::InvalidParam, "need K >= 2");
  if (input_dim < 1) throw Error(ErrorCode::InvalidParam, "need d_in >= 1");
  if (n_per_class < 1) throw Error(ErrorCode::InvalidParam, "need n_per_class >= 1");
  if (!(separation > 0.0)) throw Error(ErrorCode::InvalidParam, "separation must be > 0");
  if (!(sigma > 0.0)) throw Error(ErrorCode::InvalidParam, "sigma must be > 0");

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  BlobDataset data;
  data.sigma = sigma;
  data.seed = seed;
  data.class_means = Matrix::Zero(num_classes, input_dim);
  if (num_classes <= input_dim) {
    for (Index k = 0; k < num_classes; ++k) data.class_means(k, k) = separation;
  } else {
    for (Index k = 0; k < num_classes; ++k) {
      Vector dir(input_dim);
      for (Index j = 0; j < input_dim; ++j) dir(j) = normal(rng);
      data.class_means.row(k) = separation * dir.normalized().transpose();
    }
  }

  const Index n = num_classes * n_per_class;
  data.features.resize(n, input_dim);
  data.labels.resize(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    const Index k = i % num_classes;
    data.labels[static_cast<std::size_t>(i)] = static_cast<std::uint32_t>(k);
    for (Index j = 0; j < input_dim; ++j)
      data.features(i, j) = data.class_means(k, j) + sigma * normal(rng);
  }
  return data;
}

namespace {

BlobDataset subset(const BlobDataset& data, const std::vector<Index>& rows) {
  BlobDataset out;
  out.class_means = data.class_means;
  out.sigma = data.sigma;
  out.seed = data.seed;
  out.features.resize(static_cast<Index>(rows.size()), data.input_dim());
  out.labels.reserve(rows.size());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    out.features.row(static_cast<Index>(k)) = data.features.row(rows[k]);
    out.labels.push_back(data.labels[static_cast<std::size_t>(rows[k])]);
  }
  return out;
}

}  // namespace

BlobSplit split_per_class(const BlobDataset& data, Index train_per_class) {
  if (train_per_class < 0) throw Error(ErrorCode::InvalidParam, "train_per_class < 0");
  std::vector<Index> seen(static_cast<std::size_t>(data.num_classes()), 0);
  std::vector<Index> train, test;
  for (Index i = 0; i < data.num_samples(); ++i) {
    auto& count = seen[data.labels[static_cast<std::size_t>(i)]];
    (count++ < train_per_class ? train : test).push_back(i);
  }
  return {subset(data, train), subset(data, test)};
}

BlobDataset take_per_class(const BlobDataset& data, Index per_class) {
  return split_per_class(data, per_class).train;
}

}  // namespace nsaudit::toy
