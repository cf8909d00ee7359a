#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"

#include "incctr/experiment.hpp"
#include "incctr/serialize.hpp"

using namespace incctr;
namespace fs = std::filesystem;

namespace {

std::string tmp_dir(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir.string();
}

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  REQUIRE(in);
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

// Tiny but complete experiment: 10 days, three arms, two updates.
std::string tiny_config_text(const std::string& out_dir, int seed = 42) {
  std::ostringstream cfg;
  cfg << "[experiment]\n"
      << "out = " << out_dir << "\n"
      << "seed = " << seed << "\n"
      << "w = 7\nT = 9\n"
      << "arms = ft, kd_self, batch0\n"
      << "delay_max_gap = 2\n"
      << "[model]\nk = 4\ncross_layers = 1\nmlp_hidden = 8\n"
      << "[registry]\nthreshold = 4\n"
      << "[synth]\ndays = 10\nsamples_per_day = 150\nfields = 4\n"
      << "base_vocab_per_field = 15\nnew_rate_first = 0.1\nnew_rate_last = 0.05\n"
      << "drift_rate = 0.1\n";
  return cfg.str();
}

// Strips the wall_ms column: timing is the one non-deterministic field.
std::string strip_wall(const std::string& metrics_text) {
  std::istringstream in(metrics_text);
  std::ostringstream out;
  std::string line;
  while (std::getline(in, line)) {
    std::size_t cut = line.rfind('\t');
    out << (cut == std::string::npos ? line : line.substr(0, cut)) << "\n";
  }
  return out.str();
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(INCCTR_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

}  // namespace

TEST_CASE("kv config parses sections, comments and lists") {
  KvConfig kv = KvConfig::parse_string(
      "# comment\n[experiment]\nw = 7\narms = ft, kd_self , batch0\n\n[synth]\ndays=5\n");
  CHECK(kv.get_int("experiment", "w", 0) == 7);
  CHECK(kv.get_list("experiment", "arms") ==
        std::vector<std::string>{"ft", "kd_self", "batch0"});
  CHECK(kv.get_int("synth", "days", 0) == 5);
  CHECK(kv.get_int("synth", "missing", 9) == 9);

  CHECK_THROWS_AS(KvConfig::parse_string("w = 7\n"), ConfigError);       // key outside section
  CHECK_THROWS_AS(KvConfig::parse_string("[x]\nbad line\n"), ConfigError);
  CHECK_THROWS_AS(KvConfig::parse_string("[unterminated\n"), ConfigError);
}

TEST_CASE("experiment config validates and echoes every setting") {
  const std::string out = tmp_dir("incctr_cfg_echo");
  ExperimentConfig cfg =
      ExperimentConfig::from_kv(KvConfig::parse_string(tiny_config_text(out)));
  CHECK(cfg.w == 7);
  CHECK(cfg.T == 9);
  REQUIRE(cfg.arms.size() == 3);
  CHECK(cfg.arms[0].train.mode == TrainMode::ft);
  CHECK(cfg.arms[1].train.mode == TrainMode::kd_self);
  CHECK(cfg.arms[2].train.mode == TrainMode::batch);
  CHECK(cfg.arms[2].batch_delay == 0);

  // Echo round-trips to an equivalent config.
  ExperimentConfig back = ExperimentConfig::from_kv(KvConfig::parse_string(cfg.echo()));
  CHECK(back.seed == cfg.seed);
  CHECK(back.arms.size() == cfg.arms.size());
  CHECK(back.synth.seed == cfg.synth.seed);
  CHECK(back.arms[0].train.seed == cfg.arms[0].train.seed);

  CHECK_THROWS_AS(
      ExperimentConfig::from_kv(KvConfig::parse_string("[experiment]\nbogus_key = 1\n")),
      ConfigError);
  CHECK_THROWS_AS(
      ExperimentConfig::from_kv(KvConfig::parse_string("[experiment]\nw = 9\nT = 3\n")),
      ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::from_kv(KvConfig::parse_string("[nonsense]\nx = 1\n")),
                  ConfigError);
  CHECK_THROWS_AS(
      ExperimentConfig::from_kv(KvConfig::parse_string("[pipeline]\nlog_base = decimal\n")),
      ConfigError);
}

TEST_CASE("arm names infer modes and delays") {
  KvConfig kv = KvConfig::parse_string(
      "[experiment]\narms = batch3, ft_nx, kd_batch\n[arm.ft_nx]\nexpand_features = false\n");
  ExperimentConfig cfg = ExperimentConfig::from_kv(kv);
  REQUIRE(cfg.arms.size() == 3);
  CHECK(cfg.arms[0].train.mode == TrainMode::batch);
  CHECK(cfg.arms[0].batch_delay == 3);
  CHECK(cfg.arms[1].train.mode == TrainMode::ft);
  CHECK_FALSE(cfg.arms[1].train.expand_features);
  CHECK(cfg.arms[2].train.mode == TrainMode::kd_batch);
}

TEST_CASE("cmd_run writes the full artifact set and is reproducible") {
  const std::string out1 = tmp_dir("incctr_run_a");
  ExperimentConfig cfg =
      ExperimentConfig::from_kv(KvConfig::parse_string(tiny_config_text(out1)));
  RunArtifacts a = cmd_run(cfg);

  for (const auto& outcome : a.schedule.arms) {
    INFO(outcome.name, ": ", outcome.error);
    CHECK_FALSE(outcome.failed);
  }
  CHECK(fs::exists(a.metrics_path));
  CHECK(fs::exists(a.report_tsv_path));
  CHECK(fs::exists(a.report_json_path));
  CHECK(fs::exists(a.delay_curve_path));
  CHECK(fs::exists(fs::path(out1) / "config.txt"));
  CHECK(a.checkpoint_paths.count("warm") == 1);
  CHECK(a.checkpoint_paths.count("ft") == 1);
  // Policy snapshots sit next to each checkpoint and round-trip losslessly.
  const std::string snap = read_file(out1 + "/checkpoints/ft.policy.json");
  auto [policy, freq] = AssignmentPolicy::from_json(snap);
  CHECK(policy.to_json(freq) == snap);
  CHECK(policy.size() > 0);

  // 3 arms x 2 updates (s = 7, 8).
  auto rows = parse_metrics_log(read_file(a.metrics_path));
  CHECK(rows.size() == 6);

  // Same config + seed into a fresh directory: identical metrics minus wall.
  const std::string out2 = tmp_dir("incctr_run_b");
  ExperimentConfig cfg2 =
      ExperimentConfig::from_kv(KvConfig::parse_string(tiny_config_text(out2)));
  RunArtifacts b = cmd_run(cfg2);
  CHECK(strip_wall(read_file(a.metrics_path)) == strip_wall(read_file(b.metrics_path)));

  // Checkpoint loads back and reproduces evaluation through cmd_eval.
  const std::string blocks = tmp_dir("incctr_run_blocks");
  auto block_paths = cmd_synth_gen(cfg, blocks);
  REQUIRE(block_paths.size() == 10);
  EvalReport rep = cmd_eval(a.checkpoint_paths.at("ft"), block_paths.back());
  CHECK(rep.n_samples == 150);
  CHECK(rep.auc > 0.0);

  fs::remove_all(out1);
  fs::remove_all(out2);
  fs::remove_all(blocks);
}

TEST_CASE("synth-gen writes blocks plus provenance sidecar") {
  const std::string out = tmp_dir("incctr_synthgen");
  ExperimentConfig cfg = ExperimentConfig::from_kv(
      KvConfig::parse_string("[experiment]\narms = ft\n[synth]\ndays = 4\nsamples_per_day = "
                             "50\nfields = 3\nbase_vocab_per_field = 8\n"));
  auto paths = cmd_synth_gen(cfg, out);
  CHECK(paths.size() == 4);
  CHECK(fs::exists(fs::path(out) / "synth_provenance.json"));
  SynthConfig side = synth_config_from_json(read_file((fs::path(out) / "synth_provenance.json").string()));
  CHECK(side.days == 4);
  CHECK(side.seed == cfg.synth.seed);

  auto stream = load_stream(out);
  CHECK(stream.size() == 4);
  CHECK(stream[0].day_index == 0);
  fs::remove_all(out);
}

TEST_CASE("ingest parses fixture day files, downsamples and is deterministic") {
  const std::string raw = tmp_dir("incctr_raw");
  // 100-line fixture with ~3% positives and one frequent categorical value.
  {
    std::ofstream day(fs::path(raw) / "day_0.tsv");
    for (int i = 0; i < 100; ++i) {
      day << (i % 33 == 0 ? 1 : 0);
      for (int n = 0; n < 13; ++n) day << '\t' << (n == 0 ? std::to_string(i) : "");
      for (int c = 0; c < 26; ++c) day << '\t' << (c == 0 ? "vA" : "");
      day << "\n";
    }
  }

  ExperimentConfig cfg = ExperimentConfig::defaults();
  const std::string out1 = tmp_dir("incctr_ingest_a");
  auto paths = cmd_ingest(raw, cfg, out1);
  REQUIRE(paths.size() == 1);
  DayBlock block = read_block(paths[0]);
  CHECK(block.num_fields == kCriteoFields);
  // All 4 positives kept, negatives thinned toward a balanced block.
  std::size_t pos = 0;
  for (auto y : block.labels) pos += y;
  CHECK(pos == 4);
  CHECK(block.size() < 100);

  const std::string out2 = tmp_dir("incctr_ingest_b");
  auto paths2 = cmd_ingest(raw, cfg, out2);
  CHECK(read_file(paths[0]) == read_file(paths2[0]));  // byte-identical blocks

  // A malformed line aborts with a counted parse failure.
  {
    std::ofstream day(fs::path(raw) / "day_1.tsv");
    day << "1\tnot-enough-columns\n";
  }
  CHECK_THROWS_AS(cmd_ingest(raw, cfg, out1), DataError);

  fs::remove_all(raw);
  fs::remove_all(out1);
  fs::remove_all(out2);
}

TEST_CASE("delayed batch arms show the staleness trend on drifting data") {
  const std::string out = tmp_dir("incctr_staleness");
  std::ostringstream text;
  text << "[experiment]\nout = " << out << "\nseed = 512\nw = 5\nT = 19\n"
       << "arms = batch0, batch1, batch2, batch3, batch4, batch5\n"
       << "delay_max_gap = 0\nsave_checkpoints = false\n"
       << "[model]\nk = 4\ncross_layers = 1\nmlp_hidden = 8\n"
       << "[registry]\nthreshold = 9\n"
       << "[synth]\ndays = 20\nsamples_per_day = 2500\nfields = 4\n"
       << "base_vocab_per_field = 25\nnew_rate_first = 0.05\nnew_rate_last = 0.03\n"
       << "drift_rate = 0.2\n";
  ExperimentConfig cfg = ExperimentConfig::from_kv(KvConfig::parse_string(text.str()));
  RunArtifacts art = cmd_run(cfg);
  for (const auto& outcome : art.schedule.arms) {
    INFO(outcome.name, ": ", outcome.error);
    CHECK_FALSE(outcome.failed);
  }

  auto rows = parse_metrics_log(read_file(art.metrics_path));
  std::map<std::string, std::pair<double, int>> agg;
  for (const auto& row : rows) {
    agg[row.arm].first += row.auc;
    agg[row.arm].second += 1;
  }
  REQUIRE(agg.size() == 6);
  // batch-i rows exist only once the delayed checkpoint exists: s >= w-1+i.
  CHECK(agg["batch0"].second == 14);
  CHECK(agg["batch5"].second == 10);

  std::vector<double> mean_auc;
  for (int i = 0; i <= 5; ++i) {
    auto& [sum, n] = agg["batch" + std::to_string(i)];
    mean_auc.push_back(sum / n);
  }
  // Staleness monotone trend, with slack for day-level noise.
  for (int i = 1; i < 5; ++i) CHECK(mean_auc[i + 1] <= mean_auc[i] + 0.004);
  CHECK(mean_auc[5] < mean_auc[1]);

  fs::remove_all(out);
}

TEST_CASE("report renders per-arm rows from a metrics log") {
  std::vector<MetricsRow> rows = {{7, "batch0", 0.70, 0.60, 2, 9000.0},
                                  {7, "ft", 0.71, 0.59, 1, 900.0}};
  std::string tsv = report_tsv(rows);
  CHECK(tsv.find("batch0") != std::string::npos);
  CHECK(tsv.find("ft") != std::string::npos);
  CHECK(tsv.rfind("arm\tupdates\tauc\tlogloss\tavg_epochs\tavg_time_s\tspeedup_x\timpr_abs"
                  "\timpr_rel_pct\n",
                  0) == 0);
  std::string json = report_json(rows);
  CHECK(json.find("\"best_incremental\": \"ft\"") != std::string::npos);
}

TEST_CASE("cli subcommands succeed and map error classes to exit codes") {
  const std::string out = tmp_dir("incctr_cli_out");
  const std::string cfg_path = (fs::path(out) / "exp.cfg").string();
  {
    std::ofstream cfg(cfg_path);
    cfg << tiny_config_text((fs::path(out) / "run").string());
  }

  CHECK(run_cli("--print-defaults") == 0);
  CHECK(run_cli("run --config " + cfg_path) == 0);
  CHECK(fs::exists(fs::path(out) / "run" / "metrics.tsv"));
  CHECK(run_cli("report --metrics " + (fs::path(out) / "run" / "metrics.tsv").string()) == 0);

  // eval: checkpoint against a generated block.
  CHECK(run_cli("synth-gen --config " + cfg_path + " --out " + out + "/blocks") == 0);
  CHECK(run_cli("eval --checkpoint " + out + "/run/checkpoints/ft.ckpt --block " + out +
                "/blocks/block_009.blk") == 0);

  // Config error -> 2.
  const std::string bad_cfg = (fs::path(out) / "bad.cfg").string();
  {
    std::ofstream cfg(bad_cfg);
    cfg << "[experiment]\nunknown_option = 1\n";
  }
  CHECK(run_cli("run --config " + bad_cfg) == 2);

  // Data error -> 3 (missing stream directory).
  const std::string no_stream = (fs::path(out) / "nostream.cfg").string();
  {
    std::ofstream cfg(no_stream);
    cfg << "[experiment]\ndata = blocks\nstream_dir = " << out << "/does_not_exist\nout = " << out
        << "/run2\narms = ft\nw = 2\nT = 3\n";
  }
  CHECK(run_cli("run --config " + no_stream) == 3);

  // Corrupted checkpoint -> checksum error -> 3, nonzero.
  {
    std::fstream f(out + "/run/checkpoints/ft.ckpt",
                   std::ios::in | std::ios::out | std::ios::binary);
    f.seekg(100);
    char c = 0;
    f.get(c);
    f.seekp(100);
    f.put(static_cast<char>(c ^ 0x77));
  }
  CHECK(run_cli("eval --checkpoint " + out + "/run/checkpoints/ft.ckpt --block " + out +
                "/blocks/block_009.blk") == 3);

  fs::remove_all(out);
}
