#include <set>

#include "doctest.h"
#include "nsaudit/sweep.hpp"

using namespace nsaudit;
using namespace nsaudit::toy;

namespace {

ErrorCode parse_error(const std::string& text) {
  try {
    (void)parse_sweep_config(text);
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("config accepted: " << text);
  return ErrorCode::IoFailure;
}

// Small enough to train in well under a second.
const char* kTinySweep = R"({
  "blobs": {"classes": 3, "input_dim": 4, "separation": 3.0, "sigma": 1.0,
            "train_pool_per_class": 30, "test_per_class": 20},
  "corruption": {"kinds": ["gaussian_noise", "salt"], "severities": [1, 3], "seeds": [0]},
  "models": [
    {"name": "a", "epochs": 5, "hidden_units": 16},
    {"name": "b", "epochs": 30, "hidden_units": 16, "label_noise_fraction": 0.2,
     "train_size_per_class": 10},
    {"name": "c", "epochs": 10, "hidden_units": 16, "weight_decay": 0.01, "seed": 3}
  ]
})";

}  // namespace

TEST_SUITE("sweep") {

TEST_CASE("shipped sweep parses to 11 named configs including the overfit pair") {
  const SweepConfig cfg = load_sweep_config(NSAUDIT_SWEEP_CONFIG);
  CHECK(cfg.models.size() == 11);
  std::set<std::string> names;
  for (const auto& m : cfg.models) names.insert(m.name);
  CHECK(names.size() == 11);
  const TrainConfig& over = cfg.model("overfit");
  CHECK(over.label_noise_fraction == 0.2);
  CHECK(over.train_size_per_class == 50);
  CHECK(over.epochs == 2000);
  CHECK(over.weight_decay == 0.0);
  const TrainConfig& early = cfg.model("early_stopped");
  CHECK(early.epochs < over.epochs);
  CHECK(early.label_noise_fraction == over.label_noise_fraction);
  CHECK(early.train_size_per_class == over.train_size_per_class);
  CHECK(early.hidden_units == over.hidden_units);
  CHECK(early.seed == over.seed);
  CHECK(cfg.corruption.kinds.size() == 5);
}

TEST_CASE("defaults and overrides") {
  const SweepConfig cfg = parse_sweep_config(R"({"models": [{"name": "x", "epochs": 7}]})");
  CHECK(cfg.blobs.classes == BlobSpec{}.classes);
  CHECK(cfg.corruption.severities == std::vector<int>{1, 2, 3, 4, 5});
  CHECK(cfg.models[0].epochs == 7);
  CHECK(cfg.models[0].learning_rate == TrainConfig{}.learning_rate);
  CHECK_THROWS_AS(cfg.model("y"), Error);
}

TEST_CASE("invalid configs") {
  CHECK(parse_error("{") == ErrorCode::InvalidParam);
  CHECK(parse_error(R"({"models": []})") == ErrorCode::InvalidParam);
  CHECK(parse_error(R"({"models": [{"name": "x", "epoch": 3}]})") == ErrorCode::InvalidParam);
  CHECK(parse_error(R"({"model": [{"name": "x"}]})") == ErrorCode::InvalidParam);
  CHECK(parse_error(R"({"models": [{"name": "x"}, {"name": "x"}]})") == ErrorCode::InvalidParam);
  CHECK(parse_error(R"({"models": [{"name": "x", "train_size_per_class": 500}]})") ==
        ErrorCode::InvalidParam);
  CHECK(parse_error(R"({"models": [{"name": "x", "label_noise_fraction": 0.9}]})") ==
        ErrorCode::InvalidParam);
  CHECK(parse_error(R"({"corruption": {"severities": [6]}, "models": [{"name": "x"}]})") ==
        ErrorCode::InvalidParam);
  CHECK(parse_error(R"({"corruption": {"kinds": ["blur"]}, "models": [{"name": "x"}]})") ==
        ErrorCode::InvalidParam);
  CHECK(parse_error(R"({"models": [{"epochs": 3}]})") == ErrorCode::InvalidParam);
  try {
    (void)load_sweep_config("/nonexistent/sweep.json");
    FAIL("missing file accepted");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::IoFailure);
  }
}

TEST_CASE("seeded configs: shared seed means shared sub-seed") {
  TrainConfig a, b;
  a.seed = b.seed = 4;
  CHECK(seeded_config(a, 2).seed == seeded_config(b, 2).seed);
  CHECK(seeded_config(a, 2).seed != seeded_config(a, 3).seed);
  CHECK(sweep_data(BlobSpec{}, 1).train.features == sweep_data(BlobSpec{}, 1).train.features);
}

TEST_CASE("run_sweep_seed is deterministic and independent of the job count") {
  const SweepConfig cfg = parse_sweep_config(kTinySweep);
  SweepOptions serial, threaded;
  threaded.jobs = 3;
  const SeedOutcome x = run_sweep_seed(cfg, 1, serial);
  const SeedOutcome y = run_sweep_seed(cfg, 1, threaded);
  REQUIRE(x.models.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(x.models[i].name == cfg.models[i].name);
    CHECK(x.models[i].bundle == y.models[i].bundle);
    CHECK(x.models[i].audit.score_O == y.models[i].audit.score_O);
    CHECK(x.models[i].corruption_acc == y.models[i].corruption_acc);
    CHECK(x.models[i].bundle.metadata.at("sweep_seed") == "1");
  }
  REQUIRE(x.cohort.has_value());
  REQUIRE(x.spearman_G_corruption.has_value());
  CHECK(*x.spearman_G_corruption == *y.spearman_G_corruption);
  CHECK(summary_csv({x}) == summary_csv({y}));
  CHECK(summary_csv({x}).rfind("seed,model,O,G,clean_acc,corruption_acc\n", 0) == 0);

  // representations always come from the test split, 20 per class
  CHECK(x.models[1].bundle.reps.num_samples() == 60);

  const SeedOutcome other = run_sweep_seed(cfg, 2, serial);
  CHECK_FALSE(other.models[0].bundle == x.models[0].bundle);
}

TEST_CASE("a single-config sweep skips the cohort") {
  const SweepConfig cfg =
      parse_sweep_config(R"({"blobs": {"classes": 3, "input_dim": 4, "train_pool_per_class": 10,
                                       "test_per_class": 5},
                             "models": [{"name": "solo", "epochs": 3, "hidden_units": 16}]})");
  const SeedOutcome o = run_sweep_seed(cfg, 0);
  CHECK_FALSE(o.cohort.has_value());
  CHECK_FALSE(o.spearman_G_corruption.has_value());
  CHECK(o.models.size() == 1);
  CHECK(summary_csv({o}).find("0,solo,") != std::string::npos);
}

TEST_CASE("divergent configs are reported by name") {
  const SweepConfig cfg = parse_sweep_config(
      R"({"blobs": {"classes": 3, "input_dim": 4, "train_pool_per_class": 10, "test_per_class": 5},
          "models": [{"name": "ok", "epochs": 2}, {"name": "boom", "epochs": 5, "learning_rate": 1e300}]})");
  try {
    (void)run_sweep_seed(cfg, 0);
    FAIL("divergence not reported");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::DivergenceDetected);
    CHECK(std::string(e.what()).find("boom") != std::string::npos);
  }
}

}  // TEST_SUITE
