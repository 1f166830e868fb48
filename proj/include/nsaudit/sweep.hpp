#pragma once

// Sweep: train a set of configs on shared blobs, audit each head, and compare
// the cohort G score against accuracy under corruption.
//
// Config file (JSON):
// {
//   "blobs": {"classes": 5, "input_dim": 20, "separation": 3.0, "sigma": 1.0,
//             "train_pool_per_class": 200, "test_per_class": 100},
//   "corruption": {"kinds": ["gaussian_noise", ...], "severities": [1,2,3,4,5],
//                  "seeds": [0, 1]},
//   "models": [{"name": "...", "epochs": 200, "learning_rate": 0.05,
//               "batch_size": 32, "seed": 0, "weight_decay": 0.0,
//               "label_noise_fraction": 0.0, "train_size_per_class": 50,
//               "hidden_units": 64}, ...]
// }
//
// For sweep seed s the blobs use seed s, and each model trains with seed
// mix_seed(s, model.seed), so models sharing "seed" see identical noise,
// initialisation and batch order.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "nsaudit/audit.hpp"
#include "nsaudit/toy.hpp"

namespace nsaudit::toy {

struct BlobSpec {
  Index classes = 5;
  Index input_dim = 20;
  double separation = 3.0;
  double sigma = 1.0;
  Index train_pool_per_class = 200;
  Index test_per_class = 100;
};

struct CorruptionGrid {
  std::vector<CorruptionKind> kinds;
  std::vector<int> severities;
  std::vector<std::uint64_t> seeds;
};

struct SweepConfig {
  BlobSpec blobs;
  CorruptionGrid corruption;
  std::vector<TrainConfig> models;

  const TrainConfig& model(std::string_view name) const;
};

SweepConfig parse_sweep_config(std::string_view json_text);
SweepConfig load_sweep_config(const std::filesystem::path& path);

struct ModelOutcome {
  std::string name;
  NafBundle bundle;
  AuditReport audit;
  double train_acc = 0.0;  // against the (possibly noisy) training labels
  double clean_acc = 0.0;
  double corruption_acc = 0.0;
};

struct SeedOutcome {
  std::uint64_t seed = 0;
  std::vector<ModelOutcome> models;  // config order
  std::optional<CohortReport> cohort;
  std::optional<double> spearman_G_corruption;
};

/// Blobs for sweep seed s, split into train pool and test set.
BlobSplit sweep_data(const BlobSpec& spec, std::uint64_t seed);

/// Config with its effective per-seed training seed filled in.
TrainConfig seeded_config(const TrainConfig& cfg, std::uint64_t sweep_seed);

struct SweepOptions {
  int jobs = 1;
  bool with_corruption = true;
  RankTolerance rank_tol = RankTolerance::automatic();
};

/// Trains every model (in parallel up to `jobs`), audits, corrupts and builds
/// the cohort. Results do not depend on `jobs`.
SeedOutcome run_sweep_seed(const SweepConfig& config, std::uint64_t seed,
                           const SweepOptions& options = {});

/// summary.csv: seed,model,O,G,clean_acc,corruption_acc (G empty when no cohort).
std::string summary_csv(const std::vector<SeedOutcome>& seeds);
/// Manifest JSON listing bundles, audit numbers and per-seed correlations.
std::string manifest_json(const std::vector<SeedOutcome>& seeds,
                          const std::vector<std::string>& bundle_paths);

}  // namespace nsaudit::toy
