#include "nsaudit/sweep.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "nsaudit/parallel.hpp"
#include "nsaudit/report.hpp"

namespace nsaudit::toy {

namespace {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  return j.contains(key) ? j.at(key).get<T>() : fallback;
}

void reject_unknown_keys(const json& j, std::initializer_list<std::string_view> allowed,
                         std::string_view where) {
  for (const auto& [key, _] : j.items())
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
      throw Error(ErrorCode::InvalidParam,
                  "unknown key '" + key + "' in " + std::string(where));
}

TrainConfig parse_train_config(const json& j) {
  reject_unknown_keys(j,
                      {"name", "epochs", "learning_rate", "batch_size", "seed", "weight_decay",
                       "label_noise_fraction", "train_size_per_class", "hidden_units"},
                      "model");
  TrainConfig c;
  c.name = j.at("name").get<std::string>();
  c.epochs = get_or(j, "epochs", c.epochs);
  c.learning_rate = get_or(j, "learning_rate", c.learning_rate);
  c.batch_size = get_or(j, "batch_size", c.batch_size);
  c.seed = get_or(j, "seed", c.seed);
  c.weight_decay = get_or(j, "weight_decay", c.weight_decay);
  c.label_noise_fraction = get_or(j, "label_noise_fraction", c.label_noise_fraction);
  c.train_size_per_class = get_or(j, "train_size_per_class", c.train_size_per_class);
  c.hidden_units = get_or(j, "hidden_units", c.hidden_units);
  c.validate();
  return c;
}

}  // namespace

const TrainConfig& SweepConfig::model(std::string_view name) const {
  for (const auto& m : models)
    if (m.name == name) return m;
  throw Error(ErrorCode::InvalidParam, "no model named '" + std::string(name) + "' in sweep");
}

SweepConfig parse_sweep_config(std::string_view json_text) {
  try {
    const json root = json::parse(json_text);
    reject_unknown_keys(root, {"blobs", "corruption", "models"}, "sweep");
    SweepConfig cfg;

    if (root.contains("blobs")) {
      const json& b = root.at("blobs");
      reject_unknown_keys(b,
                          {"classes", "input_dim", "separation", "sigma", "train_pool_per_class",
                           "test_per_class"},
                          "blobs");
      cfg.blobs.classes = get_or(b, "classes", cfg.blobs.classes);
      cfg.blobs.input_dim = get_or(b, "input_dim", cfg.blobs.input_dim);
      cfg.blobs.separation = get_or(b, "separation", cfg.blobs.separation);
      cfg.blobs.sigma = get_or(b, "sigma", cfg.blobs.sigma);
      cfg.blobs.train_pool_per_class = get_or(b, "train_pool_per_class", cfg.blobs.train_pool_per_class);
      cfg.blobs.test_per_class = get_or(b, "test_per_class", cfg.blobs.test_per_class);
    }
    if (cfg.blobs.train_pool_per_class < 1 || cfg.blobs.test_per_class < 1)
      throw Error(ErrorCode::InvalidParam, "blobs need train_pool_per_class and test_per_class >= 1");

    cfg.corruption.kinds = all_corruption_kinds();
    cfg.corruption.severities = {1, 2, 3, 4, 5};
    cfg.corruption.seeds = {0};
    if (root.contains("corruption")) {
      const json& c = root.at("corruption");
      reject_unknown_keys(c, {"kinds", "severities", "seeds"}, "corruption");
      if (c.contains("kinds")) {
        cfg.corruption.kinds.clear();
        for (const auto& k : c.at("kinds"))
          cfg.corruption.kinds.push_back(parse_corruption_kind(k.get<std::string>()));
      }
      if (c.contains("severities")) cfg.corruption.severities = c.at("severities").get<std::vector<int>>();
      if (c.contains("seeds")) cfg.corruption.seeds = c.at("seeds").get<std::vector<std::uint64_t>>();
    }
    for (int s : cfg.corruption.severities)
      if (s < 0 || s > kMaxSeverity)
        throw Error(ErrorCode::InvalidParam, "severity " + std::to_string(s) + " outside [0, 5]");

    for (const auto& m : root.at("models")) {
      TrainConfig c = parse_train_config(m);
      if (c.train_size_per_class > cfg.blobs.train_pool_per_class)
        throw Error(ErrorCode::InvalidParam, c.name + ": train_size_per_class exceeds pool");
      for (const auto& prev : cfg.models)
        if (prev.name == c.name) throw Error(ErrorCode::InvalidParam, "duplicate model name " + c.name);
      cfg.models.push_back(std::move(c));
    }
    if (cfg.models.empty()) throw Error(ErrorCode::InvalidParam, "sweep has no models");
    return cfg;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidParam, std::string("sweep config: ") + e.what());
  }
}

SweepConfig load_sweep_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_sweep_config(buf.str());
}

BlobSplit sweep_data(const BlobSpec& spec, std::uint64_t seed) {
  const BlobDataset all = make_blobs(spec.classes, spec.input_dim,
                                     spec.train_pool_per_class + spec.test_per_class,
                                     spec.separation, spec.sigma, seed);
  return split_per_class(all, spec.train_pool_per_class);
}

TrainConfig seeded_config(const TrainConfig& cfg, std::uint64_t sweep_seed) {
  TrainConfig out = cfg;
  out.seed = mix_seed(sweep_seed, cfg.seed);
  return out;
}

namespace {

void run_model(const TrainConfig& cfg, const BlobSplit& data, std::uint64_t seed,
               const CorruptionGrid& grid, const SweepOptions& options, ModelOutcome& out) {
  const MlpModel model = train_mlp(data.train, cfg);
  out.name = cfg.name;
  out.train_acc = model.training_log.back().train_acc;
  out.clean_acc = model.accuracy(data.test.features, data.test.labels);
  out.bundle = extract_bundle(model, data.test, cfg.name);
  out.bundle.metadata = {{"sweep_seed", std::to_string(seed)},
                         {"train_seed", std::to_string(cfg.seed)},
                         {"epochs", std::to_string(cfg.epochs)},
                         {"source", "toy_pipeline"}};
  out.audit = audit_model(out.bundle, SampleFilter::All, options.rank_tol);
  if (options.with_corruption) {
    std::vector<std::uint64_t> grid_seeds;
    for (auto s : grid.seeds) grid_seeds.push_back(mix_seed(seed, s));
    out.corruption_acc =
        corruption_accuracy(model, data.test, grid.kinds, grid.severities, grid_seeds).mean_accuracy;
  }
}

}  // namespace

SeedOutcome run_sweep_seed(const SweepConfig& config, std::uint64_t seed,
                           const SweepOptions& options) {
  const BlobSplit data = sweep_data(config.blobs, seed);

  std::vector<ModelOutcome> models(config.models.size());
  parallel_for(config.models.size(), options.jobs, [&](std::size_t i) {
    const TrainConfig cfg = seeded_config(config.models[i], seed);
    try {
      run_model(cfg, data, seed, config.corruption, options, models[i]);
    } catch (const Error& e) {
      // divergence messages already name the config
      if (e.code() == ErrorCode::DivergenceDetected) throw;
      throw e.with_context(cfg.name);
    }
  });

  SeedOutcome outcome;
  outcome.seed = seed;
  outcome.models = std::move(models);
  if (outcome.models.size() >= 2) {
    std::vector<AuditReport> reports;
    for (const auto& m : outcome.models) reports.push_back(m.audit);
    outcome.cohort = cohort_generalization(reports);
    if (options.with_corruption) {
      std::vector<double> g, acc;
      for (std::size_t i = 0; i < outcome.models.size(); ++i) {
        g.push_back(outcome.cohort->entries[i].score_G);
        acc.push_back(outcome.models[i].corruption_acc);
      }
      outcome.spearman_G_corruption = spearman(g, acc);
    }
  }
  return outcome;
}

std::string summary_csv(const std::vector<SeedOutcome>& seeds) {
  std::ostringstream out;
  out << "seed,model,O,G,clean_acc,corruption_acc\n";
  for (const auto& s : seeds)
    for (std::size_t i = 0; i < s.models.size(); ++i) {
      const auto& m = s.models[i];
      out << s.seed << ',' << m.name << ',' << format_fixed4(m.audit.score_O) << ','
          << (s.cohort ? format_fixed4(s.cohort->entries[i].score_G) : std::string()) << ','
          << format_fixed4(m.clean_acc) << ',' << format_fixed4(m.corruption_acc) << '\n';
    }
  return out.str();
}

std::string manifest_json(const std::vector<SeedOutcome>& seeds,
                          const std::vector<std::string>& bundle_paths) {
  ojson root;
  ojson runs = ojson::array();
  std::size_t path_index = 0;
  std::vector<double> correlations;
  for (const auto& s : seeds) {
    ojson run;
    run["seed"] = s.seed;
    ojson models = ojson::array();
    for (std::size_t i = 0; i < s.models.size(); ++i) {
      const auto& m = s.models[i];
      ojson jm;
      jm["name"] = m.name;
      jm["bundle"] = path_index < bundle_paths.size() ? bundle_paths[path_index] : "";
      ++path_index;
      jm["alpha"] = m.audit.mean_alpha;
      jm["beta"] = m.audit.mean_beta;
      jm["O"] = m.audit.score_O;
      jm["G"] = s.cohort ? ojson(s.cohort->entries[i].score_G) : ojson(nullptr);
      jm["train_acc"] = m.train_acc;
      jm["clean_acc"] = m.clean_acc;
      jm["corruption_acc"] = m.corruption_acc;
      models.push_back(std::move(jm));
    }
    run["models"] = std::move(models);
    if (s.spearman_G_corruption) {
      run["spearman_G_corruption"] = *s.spearman_G_corruption;
      correlations.push_back(*s.spearman_G_corruption);
    } else {
      run["spearman_G_corruption"] = nullptr;
    }
    runs.push_back(std::move(run));
  }
  root["runs"] = std::move(runs);
  root["median_spearman_G_corruption"] =
      correlations.empty() ? ojson(nullptr) : ojson(median(correlations));
  return root.dump(2) + "\n";
}

}  // namespace nsaudit::toy
