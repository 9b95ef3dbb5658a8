// Command-line front end: train, eval, infer, proposals, synth.
// JSON results go to stdout, progress and warnings to stderr.

#include <CLI11.hpp>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <json.hpp>

#include "lpnet/checkpoint.hpp"
#include "lpnet/config.hpp"
#include "lpnet/data.hpp"
#include "lpnet/eval.hpp"
#include "lpnet/training.hpp"

namespace fs = std::filesystem;
using namespace lpnet;

namespace {

constexpr int kUsageExit = 2;
constexpr int kRuntimeExit = 1;

void report_load(const std::string& label, const LoadedDataset& ds) {
  for (const auto& w : ds.warnings) std::cerr << "warning: " << w << "\n";
  std::cerr << label << ": " << ds.samples.size() << " samples (" << ds.skipped << " skipped, " << ds.clamped
            << " clamped)\n";
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

int run_train(const std::string& config_path, const std::string& out_dir) {
  RunConfig rc = load_run_config(config_path);
  if (rc.train_data.empty()) throw std::invalid_argument(config_path + ": train_data is required");
  const EmbeddingTable table = rc.embedding.open();
  const LoadedDataset train_ds = load_dataset(rc.train_data);
  report_load("train", train_ds);
  if (train_ds.samples.empty()) throw std::runtime_error("no usable training samples");
  if (!rc.video_dim_given) rc.model.video_dim = train_ds.samples.front().features.dim(1);

  std::vector<ModelInput> train = prepare_inputs(train_ds.samples, table, rc.max_frames);
  std::vector<ModelInput> validation;
  if (!rc.val_data.empty()) {
    const LoadedDataset val_ds = load_dataset(rc.val_data);
    report_load("validation", val_ds);
    validation = prepare_inputs(val_ds.samples, table, rc.max_frames);
  } else {
    Split split = split_validation(train, rc.train.val_fraction, rc.train.seed);
    train = std::move(split.train);
    validation = std::move(split.validation);
  }

  fs::create_directories(out_dir);
  std::ofstream metrics(fs::path(out_dir) / "metrics.jsonl", std::ios::binary);
  FitResult result = fit(rc.model, train, validation, rc.train, [&](const EpochMetrics& m) {
    metrics << m.to_json_line() << "\n";
    metrics.flush();
    std::fprintf(stderr, "epoch %zu  loss %.5f  l_kl %.5f  l_reg %.5f  val mIoU %.4f  val R@1,0.5 %.4f\n", m.epoch,
                 m.loss, m.l_kl, m.l_reg, m.val_miou, m.val_r1_05);
  });
  save_checkpoint(out_dir, result.model, CheckpointInfo{rc.embedding, rc.max_frames});
  if (rc.train.trace_proposals) {
    const fs::path trace_dir = fs::path(out_dir) / "proposal_trace";
    fs::create_directories(trace_dir);
    for (std::size_t e = 0; e < result.proposal_trace.size(); ++e) {
      char name[32];
      std::snprintf(name, sizeof name, "epoch_%03zu.csv", e);
      write_text(trace_dir / name, format_proposal_csv(result.proposal_trace[e]));
    }
  }
  nlohmann::ordered_json summary;
  summary["checkpoint"] = out_dir;
  summary["epochs_run"] = result.log.size();
  summary["best_epoch"] = result.best_epoch;
  summary["stopped_early"] = result.stopped_early;
  summary["best_val_miou"] = result.best_epoch ? result.log[result.best_epoch - 1].val_miou : 0.0;
  std::cout << summary.dump() << std::endl;
  return 0;
}

int run_eval(const std::string& ckpt, const std::string& data) {
  const LoadedCheckpoint loaded = load_checkpoint(ckpt);
  const EmbeddingTable table = loaded.info.embedding.open();
  const LoadedDataset ds = load_dataset(data);
  report_load("eval", ds);
  const auto inputs = prepare_inputs(ds.samples, table, loaded.info.max_frames);
  std::cout << to_json(evaluate(loaded.model, inputs)) << std::endl;
  return 0;
}

int run_infer(const std::string& ckpt, const std::string& features, const std::string& query, double duration) {
  const LoadedCheckpoint loaded = load_checkpoint(ckpt);
  const EmbeddingTable table = loaded.info.embedding.open();
  const auto tokens = tokenize(query);
  if (tokens.empty()) throw std::invalid_argument("the query is empty");
  const nd::Tensor video = downsample(read_feature_file(features), loaded.info.max_frames);
  const bool have_duration = duration > 0.0;
  const Prediction p = infer(loaded.model, video, table.embed(tokens), have_duration ? duration : 1.0);
  nlohmann::ordered_json j;
  if (have_duration) {
    j["start"] = p.seconds.start;
    j["end"] = p.seconds.end;
  }
  j["start_norm"] = p.normalized.start;
  j["end_norm"] = p.normalized.end;
  j["score"] = p.score;
  j["proposal"] = p.index;
  std::cout << j.dump() << std::endl;
  return 0;
}

int run_proposals(const std::string& ckpt, const std::string& out) {
  const LoadedCheckpoint loaded = load_checkpoint(ckpt);
  const auto rows = proposal_rows(loaded.model.proposals().bank());
  write_text(out, format_proposal_csv(rows));
  nlohmann::ordered_json j;
  j["proposals"] = rows.size();
  j["out"] = out;
  std::cout << j.dump() << std::endl;
  return 0;
}

int run_synth(const std::string& spec_path, const std::string& out) {
  const SynthSpec spec = load_synth_spec(spec_path);
  const auto samples = synth_generate(spec);
  write_dataset(out, samples);
  nlohmann::ordered_json j;
  j["samples"] = samples.size();
  j["out"] = out;
  std::cout << j.dump() << std::endl;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"lpnet: proposal-based temporal moment localization"};
  app.require_subcommand(1);

  std::string config, out, ckpt, data, features, query, spec;
  double duration = 0.0;

  auto* train = app.add_subcommand("train", "Fit a model and write checkpoint plus metrics log");
  train->add_option("--config", config, "Flat key = value training config")->required()->check(CLI::ExistingFile);
  train->add_option("--out", out, "Output directory")->required();

  auto* eval = app.add_subcommand("eval", "Print R@1 and mIoU of a checkpoint on a dataset");
  eval->add_option("--ckpt", ckpt, "Checkpoint directory")->required();
  eval->add_option("--data", data, "Dataset location")->required();

  auto* inf = app.add_subcommand("infer", "Localize one query in one video");
  inf->add_option("--ckpt", ckpt, "Checkpoint directory")->required();
  inf->add_option("--features", features, "Feature file (LPFT)")->required();
  inf->add_option("--query", query, "Query sentence")->required();
  inf->add_option("--duration", duration, "Video duration in seconds");

  auto* props = app.add_subcommand("proposals", "Dump the learned proposal boxes as CSV");
  props->add_option("--ckpt", ckpt, "Checkpoint directory")->required();
  props->add_option("--out", out, "CSV path")->required();

  auto* synth = app.add_subcommand("synth", "Materialize a synthetic dataset");
  synth->add_option("--spec", spec, "Synthetic spec file")->required()->check(CLI::ExistingFile);
  synth->add_option("--out", out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return kUsageExit;
  }

  try {
    if (*train) return run_train(config, out);
    if (*eval) return run_eval(ckpt, data);
    if (*inf) return run_infer(ckpt, features, query, duration);
    if (*props) return run_proposals(ckpt, out);
    if (*synth) return run_synth(spec, out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntimeExit;
  }
  return kUsageExit;
}
