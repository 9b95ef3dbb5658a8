#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>

#include "lpnet/data.hpp"
#include "lpnet/model.hpp"

namespace lpnet {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr const char* kCheckpointVersion = "lpnet-ckpt-v1";
inline constexpr const char* kManifestFile = "manifest.json";
inline constexpr const char* kBlobFile = "params.bin";

// "hash" selects the hashed table of width `dim`; anything else is a path to
// a text embedding file.
struct EmbeddingSpec {
  std::string source = "hash";
  std::size_t dim = 300;

  EmbeddingTable open() const;
};

// Everything besides the weights that inference needs to rebuild inputs.
struct CheckpointInfo {
  EmbeddingSpec embedding;
  std::size_t max_frames = kDefaultMaxFrames;
};

// manifest.json (config, and name -> shape, dtype, byte offset for every
// parameter) plus params.bin, little-endian float32 in registration order.
void save_checkpoint(const std::filesystem::path& dir, const LpNet& model, const CheckpointInfo& info);

struct LoadedCheckpoint {
  LpNet model;
  CheckpointInfo info;
};
LoadedCheckpoint load_checkpoint(const std::filesystem::path& dir);

// Parameter values rounded through float32, as stored in a checkpoint.
std::string encode_parameters(const ParamSet& params);

}  // namespace lpnet
