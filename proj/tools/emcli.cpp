#include <cstdint>
#include <cstdio>
#include <exception>
#include <string>

#include <CLI11.hpp>

#include "emsim/harness.hpp"

using namespace emsim;

int main(int argc, char** argv) {
  CLI::App app{"Electromagnetic emanation side-channel experiment harness"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir = "runs/default";
  std::string profile = "desk";
  std::int64_t seed_override = -1;
  app.add_option("--config", config_path, "Experiment plan JSON (default: the built-in profile)");
  app.add_option("--seed", seed_override, "Override the plan's master seed")
      ->check(CLI::NonNegativeNumber);
  app.add_option("--out", out_dir, "Run directory for all artifacts");
  app.add_option("--profile", profile, "Built-in plan when --config is absent: desk or paper")
      ->check(CLI::IsMember({"desk", "paper"}));

  auto* synth = app.add_subcommand("synth", "Write Active/Idle IQ pairs for the plan's scenes");
  std::size_t max_captures = 1;
  synth->add_option("--max-captures", max_captures,
                    "How many captures to write (0 = the whole grid)");

  auto* process = app.add_subcommand("process", "Spike/USNR report for one Active/Idle pair");
  std::string active_path, idle_path;
  bool with_stft = false;
  process->add_option("active", active_path, "Active IQ data file")->required();
  process->add_option("idle", idle_path, "Idle IQ data file")->required();
  process->add_flag("--stft", with_stft, "Also write a spectrogram CSV of the Active capture");

  auto* dataset = app.add_subcommand("dataset", "Build feature tables and the split manifest");
  auto* train = app.add_subcommand("train", "Train both classifiers (builds the dataset first)");
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate the test split and write metrics");

  auto* sweep = app.add_subcommand("sweep", "Run one study sweep and write its curve CSV");
  std::string kind;
  sweep->add_option("--kind", kind, "bands, duration, distance, orientation or obfuscation")
      ->required()
      ->check(CLI::IsMember({"bands", "duration", "distance", "orientation", "obfuscation"}));

  auto* report = app.add_subcommand("report", "Bundle run artifacts into report.json");

  CLI11_PARSE(app, argc, argv);

  try {
    ExperimentPlan plan =
        config_path.empty() ? default_plan(profile) : plan_from_json(read_text(config_path));
    if (seed_override >= 0) plan.master_seed = static_cast<std::uint64_t>(seed_override);
    const RunPaths paths = run_paths(out_dir);

    if (synth->parsed()) {
      const auto files = run_synth(plan, out_dir, max_captures);
      std::printf("wrote %zu IQ files under %s\n", files.size(), paths.captures_dir.c_str());
    } else if (process->parsed()) {
      run_process(active_path, idle_path, plan.pipeline, out_dir, with_stft);
      std::printf("wrote %s/spikes.json and residual.csv\n", out_dir.c_str());
    } else if (dataset->parsed()) {
      run_dataset(plan, out_dir);
      std::printf("dataset ready: %s\n", paths.manifest.c_str());
    } else if (train->parsed()) {
      run_train(plan, out_dir);
      std::printf("checkpoints: %s, %s\n", paths.appid_ckpt.c_str(),
                  paths.activity_ckpt.c_str());
    } else if (eval_cmd->parsed()) {
      run_eval(plan, out_dir);
      std::printf("metrics: %s, %s\n", paths.appid_metrics.c_str(),
                  paths.activity_metrics.c_str());
    } else if (sweep->parsed()) {
      run_sweep(plan, out_dir, kind);
      std::printf("sweep curve: %s/%s.csv\n", paths.sweeps_dir.c_str(), kind.c_str());
    } else if (report->parsed()) {
      run_report(out_dir);
      std::printf("report: %s\n", paths.report.c_str());
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
