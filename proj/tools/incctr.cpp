#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"

#include "incctr/experiment.hpp"
#include "incctr/rng.hpp"
#include "incctr/serialize.hpp"

namespace {

incctr::ExperimentConfig load_config(const std::string& config_path, long long seed_override,
                                     const std::string& out_override, int jobs_override) {
  incctr::ExperimentConfig cfg = config_path.empty()
                                     ? incctr::ExperimentConfig::defaults()
                                     : incctr::ExperimentConfig::from_file(config_path);
  if (seed_override >= 0) {
    // Re-derive every seed the config did not pin explicitly.
    incctr::KvConfig kv = config_path.empty() ? incctr::KvConfig{}
                                              : incctr::KvConfig::parse_file(config_path);
    cfg.seed = static_cast<std::uint64_t>(seed_override);
    if (!kv.has("synth", "seed")) cfg.synth.seed = incctr::splitmix64(cfg.seed ^ 0x73796eULL);
    if (!kv.has("pipeline", "seed"))
      cfg.pipeline.seed = incctr::splitmix64(cfg.seed ^ 0x706970ULL);
    if (!kv.has("warm", "seed"))
      cfg.warm_train.seed = incctr::splitmix64(cfg.seed ^ 0x7761726dULL);
    for (auto& arm : cfg.arms)
      if (!kv.has("arm." + arm.name, "seed"))
        arm.train.seed =
            incctr::splitmix64(cfg.seed ^ incctr::fnv1a64(arm.name.data(), arm.name.size()));
  }
  if (!out_override.empty()) cfg.out_dir = out_override;
  if (jobs_override > 0) cfg.jobs = jobs_override;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"incctr: incremental CTR training engine"};
  app.require_subcommand(0, 1);

  bool print_defaults = false;
  app.add_flag("--print-defaults", print_defaults, "print the default configuration and exit");

  std::string config_path, out_dir, raw_dir, checkpoint_path, block_path, metrics_path;
  long long seed_override = -1;
  int jobs_override = 0;

  CLI::App* synth = app.add_subcommand("synth-gen", "generate a synthetic day-block stream");
  synth->add_option("--config", config_path, "experiment config file");
  synth->add_option("--out", out_dir, "output directory")->required();
  synth->add_option("--seed", seed_override, "override the global seed");

  CLI::App* ingest = app.add_subcommand("ingest", "convert Criteo day_<i>.tsv files to blocks");
  ingest->add_option("--raw", raw_dir, "directory of day_<i>.tsv files")->required();
  ingest->add_option("--config", config_path, "experiment config file");
  ingest->add_option("--out", out_dir, "output directory")->required();
  ingest->add_option("--seed", seed_override, "override the global seed");

  CLI::App* run = app.add_subcommand("run", "execute the configured experiment arms");
  run->add_option("--config", config_path, "experiment config file");
  run->add_option("--out", out_dir, "override the output directory");
  run->add_option("--seed", seed_override, "override the global seed");
  run->add_option("--jobs", jobs_override, "max concurrent arms");

  CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint on one block");
  eval->add_option("--checkpoint", checkpoint_path, "checkpoint file")->required();
  eval->add_option("--block", block_path, "block file")->required();

  CLI::App* report = app.add_subcommand("report", "summarize a metrics log");
  report->add_option("--metrics", metrics_path, "metrics.tsv produced by run")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (print_defaults) {
      std::cout << incctr::default_config_text();
      return 0;
    }
    if (synth->parsed()) {
      auto cfg = load_config(config_path, seed_override, "", 0);
      auto paths = incctr::cmd_synth_gen(cfg, out_dir);
      std::cout << "wrote " << paths.size() << " blocks to " << out_dir << "\n";
      return 0;
    }
    if (ingest->parsed()) {
      auto cfg = load_config(config_path, seed_override, "", 0);
      auto paths = incctr::cmd_ingest(raw_dir, cfg, out_dir);
      std::cout << "wrote " << paths.size() << " blocks to " << out_dir << "\n";
      return 0;
    }
    if (run->parsed()) {
      auto cfg = load_config(config_path, seed_override, out_dir, jobs_override);
      auto artifacts = incctr::cmd_run(cfg);
      std::cout << "metrics: " << artifacts.metrics_path << "\n";
      std::cout << "report:  " << artifacts.report_tsv_path << "\n";
      bool any_failed = false;
      for (const auto& arm : artifacts.schedule.arms)
        if (arm.failed) {
          any_failed = true;
          std::cerr << "arm " << arm.name << " failed: " << arm.error << "\n";
        }
      return any_failed ? 4 : 0;
    }
    if (eval->parsed()) {
      incctr::EvalReport rep = incctr::cmd_eval(checkpoint_path, block_path);
      std::printf("auc=%.6f logloss=%.6f n=%zu positives=%zu\n", rep.auc, rep.logloss,
                  rep.n_samples, rep.positives);
      return 0;
    }
    if (report->parsed()) {
      std::ifstream in(metrics_path);
      if (!in) throw incctr::DataError("cannot open: " + metrics_path);
      std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
      auto rows = incctr::parse_metrics_log(text);
      std::cout << incctr::report_tsv(rows);
      return 0;
    }
    std::cout << app.help();
    return 0;
  } catch (const incctr::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const incctr::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const incctr::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
