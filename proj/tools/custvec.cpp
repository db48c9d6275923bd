#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "custvec/custvec.hpp"

namespace {

struct CommonArgs {
  std::string config_path;
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "pipeline configuration JSON")
      ->required()
      ->check(CLI::ExistingFile);
  cmd->add_option_function<std::uint64_t>(
      "--seed", [&args](std::uint64_t v) { args.seed = v; },
      "override the manifest seed from the config file");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"customer2vec: embed tabular customers and segment them by credit risk"};
  app.require_subcommand(1);

  CommonArgs prepare_args, train_args, embed_args, cluster_args, similar_args, report_args;

  CLI::App* prepare = app.add_subcommand("prepare", "load, clean, split, and scale the input data");
  add_common(prepare, prepare_args);

  CLI::App* train = app.add_subcommand("train", "train the classifier on the prepared splits");
  add_common(train, train_args);
  std::string activation_override;
  train->add_option("--activation", activation_override,
                    "hidden activation: sigmoid, tanh, relu, or leaky_relu");

  CLI::App* embed = app.add_subcommand("embed", "write per-customer embedding vectors");
  add_common(embed, embed_args);
  std::string embed_split_override;
  bool fig6 = false, pre_activation = false;
  embed->add_option("--split", embed_split_override, "train, validation, test, or all");
  embed->add_flag("--fig6", fig6, "use the 30-unit layer plus autoencoder compression path");
  embed->add_flag("--pre-activation", pre_activation, "export pre-activation embedding values");

  CLI::App* cluster = app.add_subcommand("cluster", "cluster the embedded vectors");
  add_common(cluster, cluster_args);

  CLI::App* similar = app.add_subcommand("similar", "similarity queries over the vectors");
  add_common(similar, similar_args);
  custvec::SimilarArgs sim;
  std::string sim_id, sim_metric;
  std::size_t sim_k = 0;
  double sim_threshold = 0.0;
  auto* id_opt = similar->add_option("--id", sim_id, "query customer id");
  auto* def_opt = similar->add_flag("--defaulters", sim.defaulters,
                                    "screen all non-defaulters against the defaulter cohort");
  auto* k_opt = similar->add_option("--k", sim_k, "number of neighbours to return");
  auto* thr_opt = similar->add_option("--threshold", sim_threshold, "similarity threshold");
  auto* metric_opt = similar->add_option("--metric", sim_metric, "cosine or euclidean");
  id_opt->excludes(def_opt);

  CLI::App* report = app.add_subcommand("report", "render a consolidated run report");
  add_common(report, report_args);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (prepare->parsed()) {
      custvec::cmd_prepare(custvec::load_config(prepare_args.config_path, prepare_args.seed));
    } else if (train->parsed()) {
      custvec::PipelineConfig cfg = custvec::load_config(train_args.config_path, train_args.seed);
      if (!activation_override.empty()) {
        custvec::ActivationKind::from_name(activation_override, cfg.alpha);
        cfg.activation = activation_override;
      }
      custvec::cmd_train(cfg);
    } else if (embed->parsed()) {
      custvec::PipelineConfig cfg = custvec::load_config(embed_args.config_path, embed_args.seed);
      if (!embed_split_override.empty()) cfg.embed_split = embed_split_override;
      if (fig6) cfg.fig6_mode = true;
      if (pre_activation) cfg.embed_pre_activation = true;
      if (cfg.embed_split != "train" && cfg.embed_split != "validation" &&
          cfg.embed_split != "test" && cfg.embed_split != "all") {
        throw custvec::ValidationError("embedding split must be train, validation, test, or all");
      }
      custvec::cmd_embed(cfg);
    } else if (cluster->parsed()) {
      custvec::cmd_cluster(custvec::load_config(cluster_args.config_path, cluster_args.seed));
    } else if (similar->parsed()) {
      if (id_opt->count() > 0) sim.query_id = sim_id;
      if (k_opt->count() > 0) sim.k = sim_k;
      if (thr_opt->count() > 0) sim.threshold = sim_threshold;
      if (metric_opt->count() > 0) sim.metric = sim_metric;
      custvec::cmd_similar(custvec::load_config(similar_args.config_path, similar_args.seed), sim);
    } else if (report->parsed()) {
      custvec::cmd_report(custvec::load_config(report_args.config_path, report_args.seed));
    }
  } catch (const custvec::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
