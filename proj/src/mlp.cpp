#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "nsaudit/toy.hpp"

namespace nsaudit::toy {

namespace {

void check_inputs(const MlpModel& m, const Matrix& x, std::span<const std::uint32_t> labels) {
  if (x.cols() != m.input_dim())
    throw Error(ErrorCode::DimensionMismatch, "input dim " + std::to_string(x.cols()) + " vs " +
                                                  std::to_string(m.input_dim()));
  if (static_cast<Index>(labels.size()) != x.rows())
    throw Error(ErrorCode::DimensionMismatch, "label count vs rows");
  for (auto y : labels)
    if (y >= static_cast<std::uint32_t>(m.num_classes()))
      throw Error(ErrorCode::LabelOutOfRange, std::to_string(y));
}

// Row-wise softmax, max-subtracted.
Matrix softmax_rows(Matrix z) {
  for (Index i = 0; i < z.rows(); ++i) {
    const double top = z.row(i).maxCoeff();
    z.row(i) = (z.row(i).array() - top).exp();
    z.row(i) /= z.row(i).sum();
  }
  return z;
}

double mean_cross_entropy(const Matrix& logits, std::span<const std::uint32_t> labels) {
  double total = 0.0;
  for (Index i = 0; i < logits.rows(); ++i) {
    const double top = logits.row(i).maxCoeff();
    const double lse = top + std::log((logits.row(i).array() - top).exp().sum());
    total += lse - logits(i, labels[static_cast<std::size_t>(i)]);
  }
  return total / static_cast<double>(logits.rows());
}

double decay_term(const MlpModel& m, double weight_decay) {
  if (weight_decay == 0.0) return 0.0;
  return 0.5 * weight_decay * (m.w1.squaredNorm() + m.w2.squaredNorm());
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs < 1) throw Error(ErrorCode::InvalidParam, name + ": epochs must be >= 1");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
    throw Error(ErrorCode::InvalidParam, name + ": learning_rate must be > 0");
  if (batch_size < 0) throw Error(ErrorCode::InvalidParam, name + ": batch_size must be >= 0");
  if (!(weight_decay >= 0.0)) throw Error(ErrorCode::InvalidParam, name + ": weight_decay < 0");
  if (!(label_noise_fraction >= 0.0 && label_noise_fraction <= 0.5))
    throw Error(ErrorCode::InvalidParam, name + ": label_noise_fraction outside [0, 0.5]");
  if (train_size_per_class < 0)
    throw Error(ErrorCode::InvalidParam, name + ": train_size_per_class < 0");
  if (hidden_units < 1) throw Error(ErrorCode::InvalidParam, name + ": hidden_units < 1");
}

Matrix MlpModel::hidden(const Matrix& x) const {
  if (x.cols() != input_dim())
    throw Error(ErrorCode::DimensionMismatch, "input dim " + std::to_string(x.cols()) + " vs " +
                                                  std::to_string(input_dim()));
  Matrix z = x * w1.transpose();
  z.rowwise() += b1.transpose();
  return z.cwiseMax(0.0);
}

Matrix MlpModel::logits(const Matrix& x) const {
  Matrix z = hidden(x) * w2.transpose();
  z.rowwise() += b2.transpose();
  return z;
}

std::vector<std::uint32_t> MlpModel::predict(const Matrix& x) const {
  const Matrix z = logits(x);
  std::vector<std::uint32_t> out(static_cast<std::size_t>(z.rows()));
  for (Index i = 0; i < z.rows(); ++i) {
    Index best = 0;
    for (Index k = 1; k < z.cols(); ++k)
      if (z(i, k) > z(i, best)) best = k;
    out[static_cast<std::size_t>(i)] = static_cast<std::uint32_t>(best);
  }
  return out;
}

double MlpModel::accuracy(const Matrix& x, std::span<const std::uint32_t> labels) const {
  if (static_cast<Index>(labels.size()) != x.rows())
    throw Error(ErrorCode::DimensionMismatch, "label count vs rows");
  if (labels.empty()) return 0.0;
  const auto pred = predict(x);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == labels[i];
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

bool MlpModel::operator==(const MlpModel& o) const {
  return w1 == o.w1 && b1 == o.b1 && w2 == o.w2 && b2 == o.b2;
}

MlpModel init_mlp(Index input_dim, Index hidden_units, Index num_classes, std::uint64_t seed) {
  if (input_dim < 1 || hidden_units < 1 || num_classes < 2)
    throw Error(ErrorCode::InvalidParam, "bad MLP shape");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  MlpModel m;
  const double s1 = std::sqrt(2.0 / static_cast<double>(input_dim));
  const double s2 = std::sqrt(1.0 / static_cast<double>(hidden_units));
  m.w1 = Matrix::NullaryExpr(hidden_units, input_dim, [&] { return s1 * normal(rng); });
  m.b1 = Vector::Zero(hidden_units);
  m.w2 = Matrix::NullaryExpr(num_classes, hidden_units, [&] { return s2 * normal(rng); });
  m.b2 = Vector::Zero(num_classes);
  return m;
}

double training_loss(const MlpModel& model, const Matrix& x, std::span<const std::uint32_t> labels,
                     double weight_decay) {
  check_inputs(model, x, labels);
  return mean_cross_entropy(model.logits(x), labels) + decay_term(model, weight_decay);
}

LossAndGradients loss_and_gradients(const MlpModel& m, const Matrix& x,
                                    std::span<const std::uint32_t> labels, double weight_decay) {
  check_inputs(m, x, labels);
  const auto n = static_cast<double>(x.rows());

  Matrix z1 = x * m.w1.transpose();
  z1.rowwise() += m.b1.transpose();
  const Matrix h = z1.cwiseMax(0.0);
  Matrix z2 = h * m.w2.transpose();
  z2.rowwise() += m.b2.transpose();

  LossAndGradients out;
  out.loss = mean_cross_entropy(z2, labels) + decay_term(m, weight_decay);

  // dL/dz2 = (softmax - onehot) / n
  Matrix dz2 = softmax_rows(z2);
  for (Index i = 0; i < dz2.rows(); ++i) dz2(i, labels[static_cast<std::size_t>(i)]) -= 1.0;
  dz2 /= n;

  out.grad.w2 = dz2.transpose() * h + weight_decay * m.w2;
  out.grad.b2 = dz2.colwise().sum().transpose();
  const Matrix dz1 = ((dz2 * m.w2).array() * (z1.array() > 0.0).cast<double>()).matrix();
  out.grad.w1 = dz1.transpose() * x + weight_decay * m.w1;
  out.grad.b1 = dz1.colwise().sum().transpose();
  return out;
}

std::vector<std::uint32_t> apply_label_noise(std::span<const std::uint32_t> labels, Index num_classes,
                                             double fraction, std::uint64_t seed) {
  std::vector<std::uint32_t> out(labels.begin(), labels.end());
  const auto flips = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(out.size())));
  if (flips == 0) return out;
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> order(out.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  std::uniform_int_distribution<std::uint32_t> offset(1, static_cast<std::uint32_t>(num_classes - 1));
  for (std::size_t k = 0; k < flips; ++k) {
    auto& y = out[order[k]];
    y = static_cast<std::uint32_t>((y + offset(rng)) % static_cast<std::uint32_t>(num_classes));
  }
  return out;
}

MlpModel train_mlp(const BlobDataset& data, const TrainConfig& cfg) {
  cfg.validate();
  const BlobDataset train =
      cfg.train_size_per_class > 0 ? take_per_class(data, cfg.train_size_per_class) : data;
  const Index k = train.num_classes();
  const std::vector<std::uint32_t> labels = apply_label_noise(
      train.labels, k, cfg.label_noise_fraction, mix_seed(cfg.seed, 0x6e6f697365));

  MlpModel model = init_mlp(train.input_dim(), cfg.hidden_units, k, mix_seed(cfg.seed, 1));
  std::mt19937_64 shuffle_rng(mix_seed(cfg.seed, 2));

  const Index n = train.num_samples();
  const Index batch = cfg.batch_size == 0 ? n : std::min(cfg.batch_size, n);
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});

  Matrix xb;
  std::vector<std::uint32_t> yb;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (batch < n) std::shuffle(order.begin(), order.end(), shuffle_rng);
    for (Index start = 0; start < n; start += batch) {
      const Index len = std::min(batch, n - start);
      xb.resize(len, train.input_dim());
      yb.resize(static_cast<std::size_t>(len));
      for (Index i = 0; i < len; ++i) {
        const Index src = order[static_cast<std::size_t>(start + i)];
        xb.row(i) = train.features.row(src);
        yb[static_cast<std::size_t>(i)] = labels[static_cast<std::size_t>(src)];
      }
      const LossAndGradients lg = loss_and_gradients(model, xb, yb, cfg.weight_decay);
      if (!std::isfinite(lg.loss))
        throw Error(ErrorCode::DivergenceDetected,
                    cfg.name + " at epoch " + std::to_string(epoch + 1));
      model.w1 -= cfg.learning_rate * lg.grad.w1;
      model.b1 -= cfg.learning_rate * lg.grad.b1;
      model.w2 -= cfg.learning_rate * lg.grad.w2;
      model.b2 -= cfg.learning_rate * lg.grad.b2;
    }
    EpochLog log;
    log.train_loss = training_loss(model, train.features, labels, cfg.weight_decay);
    log.train_acc = model.accuracy(train.features, labels);
    if (!std::isfinite(log.train_loss))
      throw Error(ErrorCode::DivergenceDetected, cfg.name + " at epoch " + std::to_string(epoch + 1));
    model.training_log.push_back(log);
  }
  return model;
}

NafBundle extract_bundle(const MlpModel& model, const BlobDataset& data, std::string name) {
  if (data.input_dim() != model.input_dim())
    throw Error(ErrorCode::DimensionMismatch, "dataset input dim " +
                                                  std::to_string(data.input_dim()) + " vs model " +
                                                  std::to_string(model.input_dim()));
  NafBundle b;
  b.model_name = std::move(name);
  b.head.weights = model.w2;
  b.head.bias = model.b2;
  b.reps.representations = model.hidden(data.features);
  b.reps.labels = data.labels;
  b.dtype = StorageType::Float64;
  return b;
}

}  // namespace nsaudit::toy
