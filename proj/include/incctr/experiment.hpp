#pragma once

#include <map>
#include <string>
#include <vector>

#include "incctr/data_pipeline.hpp"
#include "incctr/trainer.hpp"
#include "incctr/types.hpp"

namespace incctr {

// Plain-text key=value configuration with [section] headers, '#' comments.
class KvConfig {
 public:
  static KvConfig parse_file(const std::string& path);
  static KvConfig parse_string(const std::string& text);

  bool has(const std::string& section, const std::string& key) const;
  std::string get(const std::string& section, const std::string& key,
                  const std::string& fallback) const;
  long long get_int(const std::string& section, const std::string& key, long long fallback) const;
  std::uint64_t get_uint64(const std::string& section, const std::string& key,
                           std::uint64_t fallback) const;
  double get_double(const std::string& section, const std::string& key, double fallback) const;
  bool get_bool(const std::string& section, const std::string& key, bool fallback) const;
  std::vector<std::string> get_list(const std::string& section, const std::string& key) const;

  std::vector<std::string> sections() const;
  std::vector<std::string> keys(const std::string& section) const;

 private:
  std::map<std::string, std::map<std::string, std::string>> sections_;
};

struct ExperimentConfig {
  std::string out_dir;
  std::uint64_t seed = 42;
  int w = 7;
  int T = 23;
  std::string data = "synth";  // synth | blocks
  std::string stream_dir;
  int jobs = 1;
  int delay_max_gap = 5;  // 0 disables the delay curve
  bool save_checkpoints = true;

  BuildInputs build;
  TrainConfig warm_train;  // warm-start model and shared window checkpoints
  std::vector<ArmSpec> arms;
  SynthConfig synth;
  PipelineConfig pipeline;
  bool ingest_apply_filter = false;

  static ExperimentConfig defaults();
  static ExperimentConfig from_file(const std::string& path);
  static ExperimentConfig from_kv(const KvConfig& kv);

  // Full resolved configuration in config-file syntax.
  std::string echo() const;
};

// Default config text (the --print-defaults output).
std::string default_config_text();

struct RunArtifacts {
  ExperimentConfig config;
  ScheduleResult schedule;
  std::string metrics_path;
  std::string report_tsv_path;
  std::string report_json_path;
  std::string delay_curve_path;  // empty when disabled
  std::map<std::string, std::string> checkpoint_paths;
};

// Writes per-day block containers plus a provenance sidecar.
std::vector<std::string> cmd_synth_gen(const ExperimentConfig& cfg, const std::string& out_dir);

// Reads day_<i>.tsv Criteo files, applies discretization, downsampling and
// (optionally) infrequent-feature filtering, writes block containers.
std::vector<std::string> cmd_ingest(const std::string& raw_dir, const ExperimentConfig& cfg,
                                    const std::string& out_dir);

// Executes every configured arm over the schedule and writes metrics log,
// report, delay curve and final checkpoints into cfg.out_dir.
RunArtifacts cmd_run(const ExperimentConfig& cfg);

EvalReport cmd_eval(const std::string& checkpoint_path, const std::string& block_path);

// Renders the Table-style comparison report for a metrics log.
std::string report_tsv(const std::vector<MetricsRow>& rows);
std::string report_json(const std::vector<MetricsRow>& rows);

// Loads a block stream (block_*.blk) from a directory, sorted by day.
std::vector<DayBlock> load_stream(const std::string& dir);

}  // namespace incctr
