#include <gtest/gtest.h>

#include <array>
#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <sstream>
#include <sys/wait.h>

#include "lpnet/checkpoint.hpp"
#include "lpnet/config.hpp"
#include "lpnet/eval.hpp"
#include "test_util.hpp"

using namespace lpnet;
namespace fs = std::filesystem;
using lpnet::testing::tiny_inputs;
using lpnet::testing::tiny_model_config;

namespace {

class TempDir {
 public:
  TempDir() {
    path_ = fs::temp_directory_path() / (std::string("lpnet_cli_") + ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void spit(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

struct CliResult {
  int code = -1;
  std::string out, err;
};

CliResult run_cli(const std::string& args, const fs::path& scratch) {
  const fs::path err_file = scratch / "stderr.txt";
  const std::string cmd = std::string("'") + LPNET_CLI_PATH + "' " + args + " 2>'" + err_file.string() + "'";
  CliResult r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  std::array<char, 4096> buf;
  std::size_t n;
  while ((n = std::fread(buf.data(), 1, buf.size(), pipe)) > 0) r.out.append(buf.data(), n);
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.err = slurp(err_file);
  return r;
}

}  // namespace

TEST(Checkpoint, SaveLoadSaveIsByteIdentical) {
  TempDir dir;
  LpNet model(tiny_model_config(), 1);
  const CheckpointInfo info{EmbeddingSpec{"hash", 5}, 32};
  save_checkpoint(dir.path() / "a", model, info);
  LoadedCheckpoint loaded = load_checkpoint(dir.path() / "a");
  save_checkpoint(dir.path() / "b", loaded.model, loaded.info);
  EXPECT_EQ(slurp(dir.path() / "a" / kManifestFile), slurp(dir.path() / "b" / kManifestFile));
  EXPECT_EQ(slurp(dir.path() / "a" / kBlobFile), slurp(dir.path() / "b" / kBlobFile));
  EXPECT_EQ(loaded.info.max_frames, 32u);
  EXPECT_EQ(loaded.info.embedding.dim, 5u);
  EXPECT_EQ(encode_parameters(loaded.model.params()), encode_parameters(model.params()));
}

TEST(Checkpoint, ValuesAreStoredAsFloat32) {
  TempDir dir;
  LpNet model(tiny_model_config(), 2);
  save_checkpoint(dir.path(), model, CheckpointInfo{EmbeddingSpec{"hash", 5}, 64});
  LoadedCheckpoint loaded = load_checkpoint(dir.path());
  const auto& a = model.params().entries();
  const auto& b = loaded.model.params().entries();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].name, b[i].name);
    for (std::size_t k = 0; k < a[i].tensor.size(); ++k)
      ASSERT_EQ(b[i].tensor[k], static_cast<double>(static_cast<float>(a[i].tensor[k])));
  }
  const auto manifest = nlohmann::json::parse(slurp(dir.path() / kManifestFile));
  EXPECT_EQ(manifest["version"], kCheckpointVersion);
  EXPECT_EQ(manifest["params"]["proposals.box_logits"]["shape"], nlohmann::json::array({6, 2}));
}

TEST(Checkpoint, MismatchesAreRejected) {
  TempDir dir;
  LpNet model(tiny_model_config(), 3);
  save_checkpoint(dir.path(), model, CheckpointInfo{EmbeddingSpec{"hash", 5}, 64});
  const std::string manifest = slurp(dir.path() / kManifestFile);

  auto j = nlohmann::ordered_json::parse(manifest);
  j["model"]["num_proposals"] = 7;
  spit(dir.path() / kManifestFile, j.dump(2));
  EXPECT_THROW(load_checkpoint(dir.path()), CheckpointError);

  j = nlohmann::ordered_json::parse(manifest);
  j["embedding"]["dim"] = 9;
  spit(dir.path() / kManifestFile, j.dump(2));
  EXPECT_THROW(load_checkpoint(dir.path()), CheckpointError);

  j = nlohmann::ordered_json::parse(manifest);
  j["version"] = "lpnet-ckpt-v0";
  spit(dir.path() / kManifestFile, j.dump(2));
  EXPECT_THROW(load_checkpoint(dir.path()), CheckpointError);

  spit(dir.path() / kManifestFile, manifest);
  const std::string blob = slurp(dir.path() / kBlobFile);
  spit(dir.path() / kBlobFile, blob.substr(0, blob.size() - 4));
  EXPECT_THROW(load_checkpoint(dir.path()), CheckpointError);
  EXPECT_THROW(load_checkpoint(dir.path() / "nowhere"), CheckpointError);
}

TEST(Config, KeyValueSyntax) {
  const auto kvs = parse_key_values("# comment\n a = 1 \n\nb=two # trailing\n");
  ASSERT_EQ(kvs.size(), 2u);
  EXPECT_EQ(kvs[0].key, "a");
  EXPECT_EQ(kvs[0].value, "1");
  EXPECT_EQ(kvs[1].value, "two");
  EXPECT_EQ(kvs[1].line, 4u);
  EXPECT_THROW(parse_key_values("a 1\n"), ParseError);
  EXPECT_THROW(parse_key_values("= 1\n"), ParseError);
  try {
    parse_key_values("a = 1\na = 2\n");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
}

TEST(Config, RunConfigFields) {
  const RunConfig rc = parse_run_config(
      "lambda = 50\nlr = 0.001\nepochs = 3\ndisable_mhsa = true\nd = 32\nheads = 4\n"
      "num_proposals = 30\nmax_length = 0.5\ntrain_data = /tmp/x\nembedding_dim = 64\n");
  EXPECT_EQ(rc.train.lambda, 50.0);
  EXPECT_EQ(rc.train.lr, 0.001);
  EXPECT_EQ(rc.train.epochs, 3u);
  EXPECT_TRUE(rc.train.disable_mhsa);
  EXPECT_EQ(rc.model.encoder.d, 32u);
  EXPECT_EQ(rc.model.proposals.num_proposals, 30u);
  EXPECT_EQ(rc.model.query_dim, 64u);
  EXPECT_FALSE(rc.video_dim_given);
  EXPECT_EQ(rc.train_data, "/tmp/x");
}

TEST(Config, UnknownKeysAndBadValuesCarryTheLine) {
  try {
    parse_run_config("lr = 0.1\nlearning_rate = 0.1\n", "cfg");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
    EXPECT_NE(std::string(e.what()).find("learning_rate"), std::string::npos);
  }
  try {
    parse_run_config("epochs = many\n", "cfg");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 1u);
  }
  EXPECT_THROW(parse_run_config("disable_mhsa = maybe\n"), ParseError);
}

TEST(Config, SynthSpecRoundTrip) {
  SynthSpec spec;
  spec.num_samples = 12;
  spec.modes = {{0.25, 0.2, 0.5}, {0.75, 0.2, 0.5}};
  spec.signal_strength = 2.5;
  spec.seed = 9;
  const std::string text = format_synth_spec(spec);
  const SynthSpec back = parse_synth_spec(text);
  EXPECT_EQ(format_synth_spec(back), text);
  EXPECT_EQ(back.modes.size(), 2u);
  EXPECT_EQ(back.modes[1].center, 0.75);
  EXPECT_THROW(parse_synth_spec("modes = 0.5,0.2\n"), ParseError);
  EXPECT_THROW(parse_synth_spec("modes = 0.5,0.2,0.4\n"), ParseError);
  EXPECT_THROW(parse_synth_spec("colour = red\n"), ParseError);
}

TEST(Cli, UsageErrorsExitTwo) {
  TempDir dir;
  EXPECT_EQ(run_cli("", dir.path()).code, 2);
  EXPECT_EQ(run_cli("frobnicate", dir.path()).code, 2);
  const CliResult r = run_cli("eval --data somewhere", dir.path());
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("--ckpt"), std::string::npos);
  EXPECT_NE(r.err.find("Usage"), std::string::npos);
  EXPECT_EQ(run_cli("train --config /nonexistent.cfg --out x", dir.path()).code, 2);
  EXPECT_EQ(run_cli("--help", dir.path()).code, 0);
}

TEST(Cli, RuntimeFailuresExitOne) {
  TempDir dir;
  const CliResult r = run_cli("eval --ckpt '" + (dir.path() / "missing").string() + "' --data x", dir.path());
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("error:"), std::string::npos);
  spit(dir.path() / "bad.cfg", "lr = 0.1\nwhat = 1\n");
  EXPECT_EQ(run_cli("train --config '" + (dir.path() / "bad.cfg").string() + "' --out x", dir.path()).code, 1);
}

TEST(Cli, SynthTrainEvalInferProposals) {
  TempDir dir;
  const fs::path root = dir.path();
  spit(root / "spec.txt", "num_samples = 24\nframes = 12\nfeature_dim = 6\nvocab_size = 5\nseed = 3\n");
  CliResult r = run_cli("synth --spec '" + (root / "spec.txt").string() + "' --out '" + (root / "data").string() + "'", root);
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(nlohmann::json::parse(r.out)["samples"], 24);

  spit(root / "train.cfg",
       "train_data = " + (root / "data").string() +
           "\nepochs = 2\nbatch_size = 8\nd = 8\nconv_blocks = 1\nkernel = 3\nheads = 2\nnum_proposals = 5\n"
           "roi_bins = 4\nembedding_dim = 5\nmax_length = 0.5\nlr = 0.001\ntrace_proposals = true\nval_fraction = 0.25\n");
  r = run_cli("train --config '" + (root / "train.cfg").string() + "' --out '" + (root / "ckpt").string() + "'", root);
  ASSERT_EQ(r.code, 0) << r.err;
  const auto summary = nlohmann::json::parse(r.out);
  EXPECT_EQ(summary["epochs_run"], 2);
  EXPECT_TRUE(fs::exists(root / "ckpt" / kManifestFile));
  EXPECT_TRUE(fs::exists(root / "ckpt" / "proposal_trace" / "epoch_002.csv"));
  std::istringstream metrics(slurp(root / "ckpt" / "metrics.jsonl"));
  std::string line;
  std::size_t lines = 0;
  while (std::getline(metrics, line)) {
    EXPECT_TRUE(nlohmann::json::parse(line).contains("val_miou"));
    ++lines;
  }
  EXPECT_EQ(lines, 2u);

  r = run_cli("eval --ckpt '" + (root / "ckpt").string() + "' --data '" + (root / "data").string() + "'", root);
  ASSERT_EQ(r.code, 0) << r.err;
  const auto report = nlohmann::ordered_json::parse(r.out);
  for (const char* key : {"R@1,IoU=0.3", "R@1,IoU=0.5", "R@1,IoU=0.7", "mIoU"}) EXPECT_TRUE(report.contains(key)) << key;
  EXPECT_EQ(report["n"], 24);

  // The CLI result agrees with the library on the same checkpoint.
  const LoadedCheckpoint ckpt = load_checkpoint(root / "ckpt");
  const LoadedDataset ds = load_dataset((root / "data").string());
  const auto inputs = prepare_inputs(ds.samples, ckpt.info.embedding.open(), ckpt.info.max_frames);
  EXPECT_DOUBLE_EQ(report["mIoU"].get<double>(), evaluate(ckpt.model, inputs).miou);

  const fs::path features = root / "data" / "features" / (ds.samples[0].video_id + ".lpft");
  std::string query;
  for (const auto& t : ds.samples[0].tokens) query += t + " ";
  r = run_cli("infer --ckpt '" + (root / "ckpt").string() + "' --features '" + features.string() + "' --query '" + query +
                  "' --duration 30",
              root);
  ASSERT_EQ(r.code, 0) << r.err;
  const auto pred = nlohmann::json::parse(r.out);
  const Prediction expected = infer(ckpt.model, inputs[0].video, inputs[0].query, 30.0);
  EXPECT_DOUBLE_EQ(pred["start"].get<double>(), expected.seconds.start);
  EXPECT_DOUBLE_EQ(pred["end"].get<double>(), expected.seconds.end);
  EXPECT_LE(pred["end"].get<double>(), 30.0);

  r = run_cli("proposals --ckpt '" + (root / "ckpt").string() + "' --out '" + (root / "p.csv").string() + "'", root);
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rows = parse_proposal_csv(slurp(root / "p.csv"));
  EXPECT_EQ(rows.size(), 5u);
  EXPECT_EQ(format_proposal_csv(rows), slurp(root / "p.csv"));
}
