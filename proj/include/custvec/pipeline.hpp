#pragma once

#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "custvec/clustering.hpp"
#include "custvec/common.hpp"
#include "custvec/dataset.hpp"
#include "custvec/embedding.hpp"
#include "custvec/evaluation.hpp"
#include "custvec/network.hpp"
#include "custvec/rng.hpp"

namespace custvec {

namespace fs = std::filesystem;

struct FilterRule {
  std::string column;
  double min = -std::numeric_limits<double>::infinity();
  double max = std::numeric_limits<double>::infinity();
};

struct JoinSpec {
  std::string csv;
  std::vector<std::string> columns;  // feature columns carried in from the right file
  std::vector<std::string> keys;
};

struct PipelineConfig {
  std::string input_csv;
  std::string output_dir;
  FeatureSchema schema;
  std::optional<JoinSpec> join;
  std::vector<FilterRule> filters;
  double train_ratio = 0.6, validation_ratio = 0.2, test_ratio = 0.2;
  bool smote = false;
  int smote_k = 5;
  std::uint64_t seed = 0;

  std::size_t hidden1_dim = 3;
  std::size_t hidden2_dim = 10;
  std::string activation = "leaky_relu";
  double alpha = 0.01;
  bool use_bias = true;

  TrainConfig train;

  bool embed_pre_activation = false;
  bool fig6_mode = false;
  std::string embed_split = "all";

  std::vector<std::string> cluster_methods = {"kmeans_modified", "som", "gmm", "mean_shift"};
  std::vector<std::size_t> cluster_ks = {2, 3, 4, 5, 6};
  int cluster_max_iter = 300;
  double cluster_tol = 1e-6;
  double cluster_bandwidth = 0.0;
  int cluster_max_restarts = 20;

  std::string similarity_metric = "cosine";
  double similarity_threshold = 0.9;
  std::size_t similarity_k = 5;

  std::string config_hash;

  LayerSpec layer_spec() const {
    LayerSpec s;
    s.input_dim = schema.size();
    s.hidden1_dim = fig6_mode ? 30 : hidden1_dim;
    s.hidden2_dim = hidden2_dim;
    s.hidden_activation = ActivationKind::from_name(activation, alpha);
    s.use_bias = use_bias;
    return s;
  }
};

namespace detail {

inline void check_keys(const nlohmann::json& obj, const std::set<std::string>& allowed,
                       const std::string& where) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (!allowed.count(it.key())) {
      throw ValidationError("unknown key '" + it.key() + "' in " + where);
    }
  }
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write file: " + path);
  out << content;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline std::string resolve_from(const std::string& base_dir, const std::string& path) {
  fs::path p(path);
  if (p.is_absolute()) return p.string();
  return (fs::path(base_dir) / p).lexically_normal().string();
}

}  // namespace detail

/// Parse and validate the pipeline configuration. Relative paths inside the
/// file resolve against the file's own directory; CUSTVEC_OUT overrides the
/// output directory; an explicit seed argument overrides the file's seed.
inline PipelineConfig load_config(const std::string& path,
                                  std::optional<std::uint64_t> seed_override = std::nullopt) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(detail::read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ValidationError("config root must be a JSON object");
  detail::check_keys(j, {"input_csv", "output_dir", "schema", "schema_file", "join", "filters",
                         "split", "smote", "smote_k", "seed", "network", "train", "embedding",
                         "cluster", "similarity"},
                     "config");

  const std::string base = fs::path(path).parent_path().string();
  PipelineConfig cfg;
  if (!j.contains("input_csv")) throw ValidationError("config needs 'input_csv'");
  if (!j.contains("output_dir")) throw ValidationError("config needs 'output_dir'");
  cfg.input_csv = detail::resolve_from(base, j.at("input_csv").get<std::string>());
  cfg.output_dir = detail::resolve_from(base, j.at("output_dir").get<std::string>());
  if (const char* env_out = std::getenv("CUSTVEC_OUT"); env_out && *env_out) {
    cfg.output_dir = env_out;
  }

  if (j.contains("schema") == j.contains("schema_file")) {
    throw ValidationError("config needs exactly one of 'schema' or 'schema_file'");
  }
  if (j.contains("schema")) {
    cfg.schema = FeatureSchema::from_json(j.at("schema"));
  } else {
    const std::string spath = detail::resolve_from(base, j.at("schema_file").get<std::string>());
    cfg.schema = FeatureSchema::from_json(nlohmann::json::parse(detail::read_file(spath)));
  }

  if (j.contains("join")) {
    const auto& jj = j.at("join");
    detail::check_keys(jj, {"csv", "columns", "keys"}, "config.join");
    JoinSpec js;
    js.csv = detail::resolve_from(base, jj.at("csv").get<std::string>());
    js.columns = jj.at("columns").get<std::vector<std::string>>();
    js.keys = jj.at("keys").get<std::vector<std::string>>();
    if (js.keys.empty()) throw ValidationError("config.join needs at least one key");
    cfg.join = std::move(js);
  }

  if (j.contains("filters")) {
    for (const auto& f : j.at("filters")) {
      detail::check_keys(f, {"column", "min", "max"}, "config.filters");
      FilterRule rule;
      rule.column = f.at("column").get<std::string>();
      if (f.contains("min")) rule.min = f.at("min").get<double>();
      if (f.contains("max")) rule.max = f.at("max").get<double>();
      if (!(rule.min <= rule.max)) throw ValidationError("filter on '" + rule.column + "' has min > max");
      cfg.filters.push_back(std::move(rule));
    }
  }

  if (j.contains("split")) {
    const auto& js = j.at("split");
    detail::check_keys(js, {"train", "validation", "test"}, "config.split");
    cfg.train_ratio = js.value("train", 0.6);
    cfg.validation_ratio = js.value("validation", 0.2);
    cfg.test_ratio = js.value("test", 0.2);
  }
  cfg.smote = j.value("smote", false);
  cfg.smote_k = j.value("smote_k", 5);
  cfg.seed = j.value("seed", std::uint64_t{0});
  if (seed_override) cfg.seed = *seed_override;

  if (j.contains("network")) {
    const auto& jn = j.at("network");
    detail::check_keys(jn, {"hidden1_dim", "hidden2_dim", "activation", "alpha", "use_bias"},
                       "config.network");
    cfg.hidden1_dim = jn.value("hidden1_dim", std::size_t{3});
    cfg.hidden2_dim = jn.value("hidden2_dim", std::size_t{10});
    cfg.activation = jn.value("activation", std::string("leaky_relu"));
    cfg.alpha = jn.value("alpha", 0.01);
    cfg.use_bias = jn.value("use_bias", true);
  }
  if (j.contains("train")) {
    const auto& jt = j.at("train");
    detail::check_keys(jt, {"epochs", "batch_size", "lr", "beta1", "beta2", "eps", "patience"},
                       "config.train");
    cfg.train.epochs = jt.value("epochs", 50);
    cfg.train.batch_size = jt.value("batch_size", 50);
    cfg.train.adam.lr = jt.value("lr", 0.001);
    cfg.train.adam.beta1 = jt.value("beta1", 0.9);
    cfg.train.adam.beta2 = jt.value("beta2", 0.999);
    cfg.train.adam.eps = jt.value("eps", 1e-8);
    cfg.train.early_stop_patience = jt.value("patience", 5);
  }
  if (j.contains("embedding")) {
    const auto& je = j.at("embedding");
    detail::check_keys(je, {"pre_activation", "fig6_mode", "split"}, "config.embedding");
    cfg.embed_pre_activation = je.value("pre_activation", false);
    cfg.fig6_mode = je.value("fig6_mode", false);
    cfg.embed_split = je.value("split", std::string("all"));
  }
  if (j.contains("cluster")) {
    const auto& jc = j.at("cluster");
    detail::check_keys(jc, {"methods", "ks", "max_iter", "tol", "bandwidth", "max_restarts"},
                       "config.cluster");
    if (jc.contains("methods")) cfg.cluster_methods = jc.at("methods").get<std::vector<std::string>>();
    if (jc.contains("ks")) cfg.cluster_ks = jc.at("ks").get<std::vector<std::size_t>>();
    cfg.cluster_max_iter = jc.value("max_iter", 300);
    cfg.cluster_tol = jc.value("tol", 1e-6);
    cfg.cluster_bandwidth = jc.value("bandwidth", 0.0);
    cfg.cluster_max_restarts = jc.value("max_restarts", 20);
  }
  if (j.contains("similarity")) {
    const auto& js = j.at("similarity");
    detail::check_keys(js, {"metric", "threshold", "k"}, "config.similarity");
    cfg.similarity_metric = js.value("metric", std::string("cosine"));
    cfg.similarity_threshold = js.value("threshold", 0.9);
    cfg.similarity_k = js.value("k", std::size_t{5});
  }

  cfg.schema.validate();
  cfg.train.validate();
  ActivationKind::from_name(cfg.activation, cfg.alpha);
  if (cfg.hidden1_dim < 1 || cfg.hidden2_dim < 1) {
    throw ValidationError("network dimensions must be >= 1");
  }
  if (std::abs(cfg.train_ratio + cfg.validation_ratio + cfg.test_ratio - 1.0) > 1e-9 ||
      cfg.train_ratio <= 0 || cfg.validation_ratio <= 0 || cfg.test_ratio <= 0) {
    throw ValidationError("split ratios must be positive and sum to 1");
  }
  if (cfg.embed_split != "train" && cfg.embed_split != "validation" && cfg.embed_split != "test" &&
      cfg.embed_split != "all") {
    throw ValidationError("embedding split must be train, validation, test, or all");
  }
  for (const auto& m : cfg.cluster_methods) method_from_name(m);
  std::set<std::string> uniq_m(cfg.cluster_methods.begin(), cfg.cluster_methods.end());
  if (uniq_m.size() != cfg.cluster_methods.size()) {
    throw ValidationError("cluster methods must be unique");
  }
  std::set<std::size_t> uniq_k(cfg.cluster_ks.begin(), cfg.cluster_ks.end());
  if (uniq_k.size() != cfg.cluster_ks.size() || cfg.cluster_ks.empty()) {
    throw ValidationError("cluster ks must be a non-empty unique list");
  }
  for (std::size_t kv : cfg.cluster_ks) {
    if (kv < 2) throw ValidationError("cluster ks must be >= 2");
  }
  if (cfg.cluster_max_iter < 1 || cfg.cluster_tol <= 0 || cfg.cluster_bandwidth < 0 ||
      cfg.cluster_max_restarts < 1) {
    throw ValidationError("invalid cluster settings");
  }
  metric_from_name(cfg.similarity_metric);
  if (cfg.similarity_k < 1) throw ValidationError("similarity k must be >= 1");
  if (cfg.smote_k < 1) throw ValidationError("smote_k must be >= 1");

  nlohmann::json canonical = j;
  canonical["seed"] = cfg.seed;
  cfg.config_hash = detail::hex64(fnv1a(canonical.dump()));
  return cfg;
}

// ---------------------------------------------------------------------------
// Run manifest
// ---------------------------------------------------------------------------

struct RunManifest {
  std::string version = kVersion;
  std::string config_hash;
  std::uint64_t master_seed = 0;
  std::map<std::string, std::uint64_t> stage_seeds;
  std::set<std::string> artifacts;  // paths relative to the output directory
  std::map<std::string, double> timings_ms;

  static std::string path_in(const std::string& out_dir) {
    return (fs::path(out_dir) / "manifest.json").string();
  }

  static RunManifest load_or_create(const PipelineConfig& cfg) {
    RunManifest m;
    const std::string p = path_in(cfg.output_dir);
    if (fs::exists(p)) {
      nlohmann::json j = nlohmann::json::parse(detail::read_file(p));
      m.version = j.value("version", std::string(kVersion));
      m.config_hash = j.value("config_hash", std::string());
      m.master_seed = j.value("master_seed", std::uint64_t{0});
      if (j.contains("stage_seeds")) {
        for (auto it = j["stage_seeds"].begin(); it != j["stage_seeds"].end(); ++it) {
          m.stage_seeds[it.key()] = it.value().get<std::uint64_t>();
        }
      }
      if (j.contains("artifacts")) {
        for (const auto& a : j["artifacts"]) m.artifacts.insert(a.get<std::string>());
      }
      if (j.contains("timings_ms")) {
        for (auto it = j["timings_ms"].begin(); it != j["timings_ms"].end(); ++it) {
          m.timings_ms[it.key()] = it.value().get<double>();
        }
      }
    }
    m.version = kVersion;
    m.config_hash = cfg.config_hash;
    m.master_seed = cfg.seed;
    return m;
  }

  void save(const std::string& out_dir) const {
    nlohmann::json j;
    j["version"] = version;
    j["config_hash"] = config_hash;
    j["master_seed"] = master_seed;
    j["stage_seeds"] = stage_seeds;
    j["artifacts"] = artifacts;
    j["timings_ms"] = timings_ms;
    detail::write_file(path_in(out_dir), j.dump(2) + "\n");
  }

  void check_artifacts_exist(const std::string& out_dir, std::vector<std::string>* missing) const {
    for (const auto& a : artifacts) {
      if (!fs::exists(fs::path(out_dir) / a)) {
        if (missing) missing->push_back(a);
      }
    }
  }
};

namespace detail {

class StageTimer {
 public:
  StageTimer(RunManifest& manifest, std::string stage)
      : manifest_(manifest), stage_(std::move(stage)),
        start_(std::chrono::steady_clock::now()) {}

  // Must run before the manifest is saved; the elapsed time is part of it.
  void stop() {
    auto end = std::chrono::steady_clock::now();
    manifest_.timings_ms[stage_] =
        std::chrono::duration<double, std::milli>(end - start_).count();
  }

 private:
  RunManifest& manifest_;
  std::string stage_;
  std::chrono::steady_clock::time_point start_;
};

inline void add_artifact(RunManifest& m, const PipelineConfig& cfg, const std::string& rel,
                         const std::string& content) {
  fs::path full = fs::path(cfg.output_dir) / rel;
  fs::create_directories(full.parent_path());
  write_file(full.string(), content);
  m.artifacts.insert(rel);
}

inline std::string artifact_path(const PipelineConfig& cfg, const std::string& rel) {
  return (fs::path(cfg.output_dir) / rel).string();
}

inline void require_artifact(const PipelineConfig& cfg, const std::string& rel,
                             const std::string& producer) {
  if (!fs::exists(artifact_path(cfg, rel))) {
    throw ValidationError("missing artifact '" + rel + "': run `custvec " + producer + "` first");
  }
}

/// A prepared split re-loaded with the persisted scaler attached, so later
/// stages see it as standardized data.
inline Dataset load_prepared(const PipelineConfig& cfg, const std::string& name,
                             const std::vector<ColumnStats>& scaler) {
  Dataset d = load_csv(artifact_path(cfg, "prepared/" + name), cfg.schema);
  d.standardized = true;
  d.scaler = scaler;
  return d;
}

inline std::vector<ColumnStats> load_scaler(const PipelineConfig& cfg) {
  require_artifact(cfg, "prepared/scaler.json", "prepare");
  return scaler_from_json(nlohmann::json::parse(read_file(artifact_path(cfg, "prepared/scaler.json"))));
}

inline std::string scaler_file_hash(const PipelineConfig& cfg) {
  return hex64(fnv1a(read_file(artifact_path(cfg, "prepared/scaler.json"))));
}

inline std::string csv_of(const Dataset& ds) {
  std::ostringstream out;
  out << "id";
  for (const auto& n : ds.schema.names) out << ',' << n;
  if (ds.schema.label_name) out << ',' << *ds.schema.label_name;
  out << '\n';
  for (const auto& r : ds.records) {
    out << r.id;
    for (double v : r.features) out << ',' << (is_missing(v) ? "" : format_double(v));
    if (ds.schema.label_name) {
      out << ',';
      if (r.label) out << *r.label;
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace detail

// ---------------------------------------------------------------------------
// prepare
// ---------------------------------------------------------------------------

/// Load, join, impute, filter, split, standardize on the train split only,
/// carry that scaler onto validation/test, and optionally SMOTE-balance the
/// train split. The scaler never sees validation or test rows.
inline void cmd_prepare(const PipelineConfig& cfg) {
  RunManifest manifest = RunManifest::load_or_create(cfg);
  detail::StageTimer timer(manifest, "prepare");
  const std::uint64_t split_seed = stage_seed(cfg.seed, "prepare:split");
  const std::uint64_t smote_seed = stage_seed(cfg.seed, "prepare:smote");
  manifest.stage_seeds["prepare:split"] = split_seed;
  manifest.stage_seeds["prepare:smote"] = smote_seed;

  Dataset data = load_csv(cfg.input_csv, cfg.schema);
  if (cfg.join) {
    FeatureSchema right_schema;
    right_schema.names = cfg.join->keys;
    for (const auto& c : cfg.join->columns) right_schema.names.push_back(c);
    Dataset right = load_csv(cfg.join->csv, right_schema);
    data = join_on_keys(data, right, cfg.join->keys);
  }
  data = impute_missing(data);

  std::size_t before_filter = data.size();
  for (const auto& rule : cfg.filters) {
    std::size_t col = data.schema.index_of(rule.column);
    Dataset kept;
    kept.schema = data.schema;
    for (auto& r : data.records) {
      double v = r.features[col];
      if (v >= rule.min && v <= rule.max) kept.records.push_back(std::move(r));
    }
    data = std::move(kept);
  }
  if (data.size() < 3) throw ValidationError("fewer than 3 rows survive the filters");

  SplitSet splits = split(data, cfg.train_ratio, cfg.validation_ratio, cfg.test_ratio, split_seed);
  Dataset train = standardize(splits.train);
  Dataset validation = apply_scaler(splits.validation, train.scaler);
  Dataset test = apply_scaler(splits.test, train.scaler);

  detail::add_artifact(manifest, cfg, "prepared/schema.json", cfg.schema.to_json().dump(2) + "\n");
  detail::add_artifact(manifest, cfg, "prepared/scaler.json",
                       scaler_to_json(train.scaler).dump(2) + "\n");
  detail::add_artifact(manifest, cfg, "prepared/train.csv", detail::csv_of(train));
  detail::add_artifact(manifest, cfg, "prepared/validation.csv", detail::csv_of(validation));
  detail::add_artifact(manifest, cfg, "prepared/test.csv", detail::csv_of(test));

  nlohmann::json meta;
  meta["rows_loaded"] = before_filter;
  meta["rows_after_filter"] = data.size();
  meta["train_rows"] = train.size();
  meta["validation_rows"] = validation.size();
  meta["test_rows"] = test.size();
  meta["features"] = cfg.schema.size();
  auto label_counts = [](const Dataset& d) {
    std::size_t pos = 0, neg = 0, unlabeled = 0;
    for (const auto& r : d.records) {
      if (!r.label) ++unlabeled;
      else if (*r.label == 1) ++pos;
      else ++neg;
    }
    return nlohmann::json{{"positive", pos}, {"negative", neg}, {"unlabeled", unlabeled}};
  };
  meta["labels"] = {{"train", label_counts(train)},
                    {"validation", label_counts(validation)},
                    {"test", label_counts(test)}};

  if (cfg.smote) {
    std::vector<std::pair<std::string, std::string>> parentage;
    Dataset augmented = smote_augment(train, smote_seed, cfg.smote_k, &parentage);
    detail::add_artifact(manifest, cfg, "prepared/train_augmented.csv", detail::csv_of(augmented));

    std::set<std::string> train_ids;
    for (const auto& r : train.records) train_ids.insert(r.id);
    bool parents_ok = true;
    for (const auto& [synth, parent] : parentage) {
      (void)synth;
      if (!train_ids.count(parent)) parents_ok = false;
    }
    meta["smote"] = {{"augmented_rows", augmented.size()},
                     {"synthetic_rows", augmented.size() - train.size()},
                     {"k_neighbors", cfg.smote_k},
                     {"parents_subset_of_train", parents_ok},
                     {"labels", label_counts(augmented)}};
    if (!parents_ok) throw std::runtime_error("SMOTE parent outside the train split");
  }
  detail::add_artifact(manifest, cfg, "prepared/prepare_meta.json", meta.dump(2) + "\n");
  timer.stop();
  manifest.save(cfg.output_dir);
  std::cout << "[prepare] train=" << train.size() << " validation=" << validation.size()
            << " test=" << test.size()
            << (cfg.smote ? " (train SMOTE-balanced, see prepared/train_augmented.csv)" : "")
            << "\n";
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

inline void cmd_train(const PipelineConfig& cfg) {
  RunManifest manifest = RunManifest::load_or_create(cfg);
  detail::StageTimer timer(manifest, "train");
  const std::uint64_t seed = stage_seed(cfg.seed, "train");
  manifest.stage_seeds["train"] = seed;

  detail::require_artifact(cfg, "prepared/train.csv", "prepare");
  detail::require_artifact(cfg, "prepared/validation.csv", "prepare");
  std::vector<ColumnStats> scaler = detail::load_scaler(cfg);

  SplitSet data;
  const bool augmented = fs::exists(detail::artifact_path(cfg, "prepared/train_augmented.csv"));
  data.train = detail::load_prepared(cfg, augmented ? "train_augmented.csv" : "train.csv", scaler);
  data.validation = detail::load_prepared(cfg, "validation.csv", scaler);

  LayerSpec spec = cfg.layer_spec();
  TrainConfig train_cfg = cfg.train;
  train_cfg.seed = seed;
  TrainReport report = train(data, spec, train_cfg);

  nlohmann::json params =
      params_to_json(report.best_params, spec, detail::scaler_file_hash(cfg));
  detail::add_artifact(manifest, cfg, "model/params.json", params.dump(2) + "\n");

  std::ostringstream hist;
  hist << "epoch,train_loss,train_acc,val_loss,val_acc\n";
  for (std::size_t e = 0; e < report.train_loss.size(); ++e) {
    hist << (e + 1) << ',' << format_double(report.train_loss[e]) << ','
         << format_double(report.train_acc[e]) << ',' << format_double(report.val_loss[e]) << ','
         << format_double(report.val_acc[e]) << '\n';
  }
  detail::add_artifact(manifest, cfg, "model/history.csv", hist.str());

  ClassificationReport val_metrics =
      evaluate_classifier(report.best_params, spec, data.validation);
  detail::add_artifact(manifest, cfg, "model/metrics_validation.json",
                       val_metrics.to_json().dump(2) + "\n");
  std::cout << "[train] epochs_run=" << report.stopped_epoch << " best_epoch=" << report.best_epoch
            << " val_loss=" << format_double(val_metrics.loss)
            << " val_acc=" << format_double(val_metrics.accuracy) << "\n";

  if (fs::exists(detail::artifact_path(cfg, "prepared/test.csv"))) {
    Dataset test = detail::load_prepared(cfg, "test.csv", scaler);
    ClassificationReport test_metrics = evaluate_classifier(report.best_params, spec, test);
    detail::add_artifact(manifest, cfg, "model/metrics_test.json",
                         test_metrics.to_json().dump(2) + "\n");
    std::cout << "[train] test_acc=" << format_double(test_metrics.accuracy)
              << " precision=" << format_double(test_metrics.precision)
              << " recall=" << format_double(test_metrics.recall)
              << " f1=" << format_double(test_metrics.f1) << "\n";
  }
  timer.stop();
  manifest.save(cfg.output_dir);
}

// ---------------------------------------------------------------------------
// embed
// ---------------------------------------------------------------------------

inline void cmd_embed(const PipelineConfig& cfg) {
  RunManifest manifest = RunManifest::load_or_create(cfg);
  detail::StageTimer timer(manifest, "embed");
  const std::uint64_t seed = stage_seed(cfg.seed, "embed");
  manifest.stage_seeds["embed"] = seed;

  detail::require_artifact(cfg, "model/params.json", "train");
  auto [params, spec] = params_from_json(
      nlohmann::json::parse(detail::read_file(detail::artifact_path(cfg, "model/params.json"))));

  std::vector<ColumnStats> scaler = detail::load_scaler(cfg);
  nlohmann::json params_json =
      nlohmann::json::parse(detail::read_file(detail::artifact_path(cfg, "model/params.json")));
  std::string stored_hash = params_json.value("scaler_hash", std::string());
  if (stored_hash != detail::scaler_file_hash(cfg)) {
    throw ValidationError("model was trained against a different scaler; rerun `custvec train`");
  }

  Dataset data;
  if (cfg.embed_split == "all") {
    data = detail::load_prepared(cfg, "train.csv", scaler);
    for (const char* name : {"validation.csv", "test.csv"}) {
      if (fs::exists(detail::artifact_path(cfg, std::string("prepared/") + name))) {
        Dataset part = detail::load_prepared(cfg, name, scaler);
        for (auto& r : part.records) data.records.push_back(std::move(r));
      }
    }
  } else {
    data = detail::load_prepared(cfg, cfg.embed_split + ".csv", scaler);
  }

  EmbeddingSet vectors;
  if (cfg.fig6_mode) {
    if (spec.hidden1_dim != 30) {
      throw ValidationError("fig6 mode expects a model with a 30-unit embedding layer");
    }
    EmbeddingSet wide = embed_all(params, spec, data, cfg.embed_pre_activation);
    CompressionResult compressed = compress_30_to_3(wide, seed);
    vectors = std::move(compressed.codes);
    nlohmann::json cj = {{"input_dim", 30},
                         {"code_dim", 3},
                         {"reconstruction_mse", compressed.reconstruction_mse},
                         {"epochs_run", compressed.epochs_run}};
    detail::add_artifact(manifest, cfg, "vectors/compression.json", cj.dump(2) + "\n");
  } else {
    vectors = embed_all(params, spec, data, cfg.embed_pre_activation);
  }

  std::ostringstream csv;
  csv << "id";
  for (std::size_t jcol = 0; jcol < vectors.dim; ++jcol) csv << ",v" << (jcol + 1);
  csv << ",label\n";
  for (const auto& v : vectors.vectors) {
    csv << v.id;
    for (double x : v.values) csv << ',' << format_double(x);
    csv << ',';
    if (v.label) csv << *v.label;
    csv << '\n';
  }
  detail::add_artifact(manifest, cfg, "vectors/vectors.csv", csv.str());
  timer.stop();
  manifest.save(cfg.output_dir);
  std::cout << "[embed] wrote " << vectors.size() << " vectors of dimension " << vectors.dim
            << " (split=" << cfg.embed_split << (cfg.fig6_mode ? ", fig6 compression" : "")
            << ")\n";
}

// ---------------------------------------------------------------------------
// cluster
// ---------------------------------------------------------------------------

inline void cmd_cluster(const PipelineConfig& cfg) {
  RunManifest manifest = RunManifest::load_or_create(cfg);
  detail::StageTimer timer(manifest, "cluster");
  detail::require_artifact(cfg, "vectors/vectors.csv", "embed");
  EmbeddingSet set = read_vectors_csv(detail::artifact_path(cfg, "vectors/vectors.csv"));
  if (set.size() < 2) throw ValidationError("need at least 2 vectors to cluster");

  PointSet points;
  std::vector<std::string> ids;
  points.reserve(set.size());
  for (const auto& v : set.vectors) {
    points.push_back(v.values);
    ids.push_back(v.id);
  }

  struct Run {
    std::string label;   // file stem, e.g. kmeans_modified_k3
    ClusterConfig config;
  };
  std::vector<Run> runs;
  for (const auto& mname : cfg.cluster_methods) {
    ClusterMethod method = method_from_name(mname);
    ClusterConfig base;
    base.method = method;
    base.max_iter = cfg.cluster_max_iter;
    base.tol = cfg.cluster_tol;
    base.bandwidth = cfg.cluster_bandwidth;
    base.max_restarts = cfg.cluster_max_restarts;
    if (method == ClusterMethod::kMeanShift) {
      base.seed = stage_seed(cfg.seed, "cluster:mean_shift");
      manifest.stage_seeds["cluster:mean_shift"] = base.seed;
      runs.push_back({mname, base});
    } else {
      for (std::size_t kv : cfg.cluster_ks) {
        ClusterConfig c = base;
        c.k = kv;
        std::string stage = "cluster:" + mname + ":k" + std::to_string(kv);
        c.seed = stage_seed(cfg.seed, stage);
        manifest.stage_seeds[stage] = c.seed;
        runs.push_back({mname + "_k" + std::to_string(kv), c});
      }
    }
  }

  std::vector<std::future<ClusterModel>> futures;
  futures.reserve(runs.size());
  for (const auto& run : runs) {
    futures.push_back(std::async(std::launch::async,
                                 [&points, config = run.config] { return fit_clusters(points, config); }));
  }

  nlohmann::json comparison = nlohmann::json::array();
  std::ostringstream table;
  table << "method,k,sse,silhouette,calinski_harabasz,davies_bouldin\n";
  std::map<std::string, std::pair<std::vector<std::size_t>, std::vector<double>>> sse_curves;
  std::size_t mean_shift_k = 0;

  for (std::size_t i = 0; i < runs.size(); ++i) {
    ClusterModel model = futures[i].get();
    const Run& run = runs[i];
    detail::add_artifact(manifest, cfg, "clusters/" + run.label + ".json",
                         cluster_model_to_json(model, ids).dump(2) + "\n");
    std::ostringstream csv;
    csv << "id";
    for (std::size_t d = 0; d < set.dim; ++d) csv << ",v" << (d + 1);
    csv << ",cluster\n";
    for (std::size_t r = 0; r < ids.size(); ++r) {
      csv << ids[r];
      for (double v : points[r]) csv << ',' << format_double(v);
      csv << ',' << model.assignments[r] << '\n';
    }
    detail::add_artifact(manifest, cfg, "clusters/" + run.label + ".csv", csv.str());

    nlohmann::json row;
    row["method"] = model.method;
    row["k"] = model.k();
    row["sse"] = model.sse;
    if (model.k() >= 2 && model.k() < points.size()) {
      ClusterValidityReport v = evaluate_clustering(points, model);
      row["silhouette"] = v.silhouette;
      row["calinski_harabasz"] = v.calinski_harabasz;
      row["davies_bouldin"] = v.davies_bouldin;
      table << model.method << ',' << model.k() << ',' << format_double(model.sse) << ','
            << format_double(v.silhouette) << ',' << format_double(v.calinski_harabasz) << ','
            << format_double(v.davies_bouldin) << '\n';
    } else {
      row["silhouette"] = nullptr;
      row["calinski_harabasz"] = nullptr;
      row["davies_bouldin"] = nullptr;
      table << model.method << ',' << model.k() << ',' << format_double(model.sse) << ",,,\n";
    }
    comparison.push_back(row);

    if (run.config.method == ClusterMethod::kMeanShift) {
      mean_shift_k = model.k();
      std::cout << "[cluster] mean_shift discovered k=" << model.k() << "\n";
    } else {
      auto& curve = sse_curves[model.method];
      curve.first.push_back(model.k());
      curve.second.push_back(model.sse);
    }
  }

  detail::add_artifact(manifest, cfg, "clusters/comparison.csv", table.str());
  detail::add_artifact(manifest, cfg, "clusters/comparison.json", comparison.dump(2) + "\n");

  nlohmann::json knee_json;
  knee_json["per_method"] = nlohmann::json::object();
  for (auto& [mname, curve] : sse_curves) {
    if (curve.first.size() < 3) continue;
    KneeResult knee = knee_select_k(curve.first, curve.second);
    knee_json["per_method"][mname] = knee.to_json();
    std::cout << "[cluster] " << mname << " knee at k=" << knee.chosen_k << "\n";
  }
  if (mean_shift_k > 0) knee_json["mean_shift_discovered_k"] = mean_shift_k;
  detail::add_artifact(manifest, cfg, "clusters/knee.json", knee_json.dump(2) + "\n");
  timer.stop();
  manifest.save(cfg.output_dir);
}

// ---------------------------------------------------------------------------
// similar
// ---------------------------------------------------------------------------

struct SimilarArgs {
  std::optional<std::string> query_id;
  bool defaulters = false;
  std::optional<std::size_t> k;
  std::optional<double> threshold;
  std::optional<std::string> metric;
};

inline void cmd_similar(const PipelineConfig& cfg, const SimilarArgs& args) {
  RunManifest manifest = RunManifest::load_or_create(cfg);
  detail::StageTimer timer(manifest, "similar");
  detail::require_artifact(cfg, "vectors/vectors.csv", "embed");

  if (args.query_id.has_value() == args.defaulters) {
    throw ValidationError("pass exactly one of --id or --defaulters");
  }
  SimilarityMetric metric = metric_from_name(args.metric.value_or(cfg.similarity_metric));
  EmbeddingSet set = read_vectors_csv(detail::artifact_path(cfg, "vectors/vectors.csv"));

  if (args.query_id) {
    std::size_t k = args.k.value_or(cfg.similarity_k);
    std::vector<SimilarityHit> hits = top_k_similar(set, *args.query_id, k, metric);
    nlohmann::json j;
    j["query_id"] = *args.query_id;
    j["metric"] = metric_name(metric);
    j["k"] = k;
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& h : hits) rows.push_back({{"id", h.id}, {"score", h.score}});
    j["results"] = rows;
    detail::add_artifact(manifest, cfg, "report/similar.json", j.dump(2) + "\n");
    std::cout << "[similar] top " << hits.size() << " by " << metric_name(metric) << " for id "
              << *args.query_id << ":\n";
    for (const auto& h : hits) {
      std::cout << "  " << h.id << "  " << format_double(h.score) << "\n";
    }
  } else {
    double threshold = args.threshold.value_or(cfg.similarity_threshold);
    if (metric == SimilarityMetric::kCosine && (threshold < -1.0 || threshold > 1.0)) {
      throw ValidationError("cosine threshold must lie in [-1, 1]");
    }
    if (metric == SimilarityMetric::kEuclidean && threshold < 0.0) {
      throw ValidationError("euclidean threshold must be non-negative");
    }
    std::vector<DefaulterScreenResult> hits = similar_to_defaulters(set, threshold, metric);
    nlohmann::json j;
    j["metric"] = metric_name(metric);
    j["threshold"] = threshold;
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& h : hits) {
      rows.push_back({{"id", h.id}, {"score", h.score}, {"witness_id", h.witness_id}});
    }
    j["hits"] = rows;
    detail::add_artifact(manifest, cfg, "report/defaulter_screen.json", j.dump(2) + "\n");
    std::cout << "[similar] " << hits.size() << " non-defaulters within threshold "
              << format_double(threshold) << " of a defaulter\n";
  }
  timer.stop();
  manifest.save(cfg.output_dir);
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

inline void cmd_report(const PipelineConfig& cfg) {
  RunManifest manifest = RunManifest::load_or_create(cfg);
  if (!fs::exists(RunManifest::path_in(cfg.output_dir))) {
    throw ValidationError("no manifest found: run at least one pipeline stage first");
  }
  detail::StageTimer timer(manifest, "report");

  nlohmann::json report;
  report["version"] = kVersion;
  report["config_hash"] = manifest.config_hash;
  std::vector<std::string> missing;
  manifest.check_artifacts_exist(cfg.output_dir, &missing);

  auto read_json_if = [&](const std::string& rel) -> std::optional<nlohmann::json> {
    const std::string p = detail::artifact_path(cfg, rel);
    if (!fs::exists(p)) return std::nullopt;
    return nlohmann::json::parse(detail::read_file(p));
  };

  if (auto meta = read_json_if("prepared/prepare_meta.json")) {
    report["data"] = *meta;
  } else {
    report["data"] = nullptr;
  }

  nlohmann::json training = nullptr;
  const std::string hist_path = detail::artifact_path(cfg, "model/history.csv");
  if (fs::exists(hist_path)) {
    std::ifstream in(hist_path);
    std::string line;
    std::getline(in, line);  // header
    std::vector<std::vector<double>> rows;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      auto cells = detail::split_line(line);
      std::vector<double> row;
      for (const auto& c : cells) row.push_back(parse_double(c));
      rows.push_back(std::move(row));
    }
    if (!rows.empty()) {
      training = {{"epochs_run", rows.size()},
                  {"final_train_loss", rows.back()[1]},
                  {"final_train_acc", rows.back()[2]},
                  {"final_val_loss", rows.back()[3]},
                  {"final_val_acc", rows.back()[4]}};
    }
  }
  report["training"] = training;

  nlohmann::json classification = nullptr;
  auto vm = read_json_if("model/metrics_validation.json");
  auto tm = read_json_if("model/metrics_test.json");
  if (vm || tm) {
    classification = nlohmann::json::object();
    classification["validation"] = vm ? *vm : nlohmann::json(nullptr);
    classification["test"] = tm ? *tm : nlohmann::json(nullptr);
  }
  report["classification"] = classification;

  nlohmann::json clustering = nullptr;
  auto comparison = read_json_if("clusters/comparison.json");
  if (comparison) {
    clustering = nlohmann::json::object();
    clustering["comparison"] = *comparison;
    auto knee = read_json_if("clusters/knee.json");
    clustering["knee"] = knee ? *knee : nlohmann::json(nullptr);
  }
  report["clustering"] = clustering;

  report["files"] = manifest.artifacts;
  report["missing"] = missing;

  // Text rendering
  std::ostringstream txt;
  txt << "customer2vec run report (version " << kVersion << ")\n";
  txt << "config hash: " << manifest.config_hash << "\n\n";
  if (!report["data"].is_null()) {
    const auto& d = report["data"];
    txt << "data\n";
    txt << "  rows: train=" << d["train_rows"] << " validation=" << d["validation_rows"]
        << " test=" << d["test_rows"] << " features=" << d["features"] << "\n";
    if (d.contains("smote")) {
      txt << "  smote: augmented train to " << d["smote"]["augmented_rows"] << " rows\n";
    }
  } else {
    txt << "data: absent (prepare has not run)\n";
  }
  if (!report["training"].is_null()) {
    const auto& t = report["training"];
    txt << "training\n  epochs run: " << t["epochs_run"]
        << "  final val loss: " << t["final_val_loss"].get<double>()
        << "  final val acc: " << t["final_val_acc"].get<double>() << "\n";
  } else {
    txt << "training: absent\n";
  }
  if (!report["classification"].is_null()) {
    txt << "classification\n";
    txt << "  split        accuracy   mse      loss     precision  recall   f1\n";
    for (const char* split_name : {"validation", "test"}) {
      const auto& m = report["classification"][split_name];
      if (m.is_null()) continue;
      char buf[160];
      std::snprintf(buf, sizeof(buf), "  %-12s %-10.4f %-8.4f %-8.4f %-10.4f %-8.4f %-8.4f\n",
                    split_name, m["accuracy"].get<double>(), m["mse"].get<double>(),
                    m["loss"].get<double>(), m["precision"].get<double>(),
                    m["recall"].get<double>(), m["f1"].get<double>());
      txt << buf;
    }
  } else {
    txt << "classification: absent\n";
  }
  if (!report["clustering"].is_null()) {
    txt << "clustering\n";
    txt << "  method            k   sse          silhouette  ch          dbi\n";
    for (const auto& row : report["clustering"]["comparison"]) {
      char buf[200];
      if (row["silhouette"].is_null()) {
        std::snprintf(buf, sizeof(buf), "  %-16s %-3d %-12.5g -           -           -\n",
                      row["method"].get<std::string>().c_str(), static_cast<int>(row["k"].get<std::size_t>()),
                      row["sse"].get<double>());
      } else {
        std::snprintf(buf, sizeof(buf), "  %-16s %-3d %-12.5g %-11.4f %-11.5g %-11.4f\n",
                      row["method"].get<std::string>().c_str(), static_cast<int>(row["k"].get<std::size_t>()),
                      row["sse"].get<double>(), row["silhouette"].get<double>(),
                      row["calinski_harabasz"].get<double>(), row["davies_bouldin"].get<double>());
      }
      txt << buf;
    }
    const auto& knee = report["clustering"]["knee"];
    if (!knee.is_null() && knee.contains("per_method")) {
      for (auto it = knee["per_method"].begin(); it != knee["per_method"].end(); ++it) {
        txt << "  knee(" << it.key() << "): k=" << it.value()["chosen_k"] << "\n";
      }
      if (knee.contains("mean_shift_discovered_k")) {
        txt << "  mean_shift discovered k=" << knee["mean_shift_discovered_k"] << "\n";
      }
    }
  } else {
    txt << "clustering: absent\n";
  }
  if (!missing.empty()) {
    txt << "missing artifacts\n";
    for (const auto& m : missing) txt << "  " << m << "\n";
  }
  txt << "files\n";
  for (const auto& a : manifest.artifacts) txt << "  " << a << "\n";

  detail::add_artifact(manifest, cfg, "report/report.json", report.dump(2) + "\n");
  detail::add_artifact(manifest, cfg, "report/report.txt", txt.str());
  timer.stop();
  manifest.save(cfg.output_dir);
  std::cout << txt.str();
}

}  // namespace custvec
