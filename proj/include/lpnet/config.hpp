#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "lpnet/checkpoint.hpp"
#include "lpnet/data.hpp"
#include "lpnet/model.hpp"
#include "lpnet/training.hpp"

namespace lpnet {

// `key = value` per line; `#` starts a comment. Duplicate keys and lines
// without `=` raise ParseError.
struct KeyValue {
  std::string key, value;
  std::size_t line = 0;
};
using KeyValues = std::vector<KeyValue>;
KeyValues parse_key_values(std::string_view text, const std::string& source = "<config>");

// Everything `train` needs.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  std::string train_data;
  std::string val_data;  // empty: hold out train.val_fraction of train_data
  EmbeddingSpec embedding;
  std::size_t max_frames = kDefaultMaxFrames;
  bool video_dim_given = false;  // otherwise taken from the training features
};

// Unknown keys are rejected with the line that carries them.
RunConfig parse_run_config(std::string_view text, const std::string& source = "<config>");
RunConfig load_run_config(const std::filesystem::path& path);

// Mixture modes are written `center,length,weight;center,length,weight`.
SynthSpec parse_synth_spec(std::string_view text, const std::string& source = "<spec>");
SynthSpec load_synth_spec(const std::filesystem::path& path);
std::string format_synth_spec(const SynthSpec& spec);

}  // namespace lpnet
