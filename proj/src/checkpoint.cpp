#include "lpnet/checkpoint.hpp"

#include <bit>
#include <fstream>
#include <json.hpp>
#include <sstream>

namespace lpnet {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

EmbeddingTable EmbeddingSpec::open() const {
  if (source == "hash") return EmbeddingTable::hashed(dim);
  EmbeddingTable table = EmbeddingTable::from_file(source);
  if (table.dim() != dim) {
    throw CheckpointError("embedding file " + source + " has width " + std::to_string(table.dim()) + ", expected " +
                          std::to_string(dim));
  }
  return table;
}

namespace {

ordered_json model_to_json(const ModelConfig& c) {
  ordered_json j;
  j["video_dim"] = c.video_dim;
  j["query_dim"] = c.query_dim;
  j["d"] = c.encoder.d;
  j["conv_blocks"] = c.encoder.conv_blocks;
  j["kernel"] = c.encoder.kernel;
  j["heads"] = c.encoder.heads;
  j["num_proposals"] = c.proposals.num_proposals;
  j["roi_bins"] = c.proposals.roi.bins;
  j["samples_per_bin"] = c.proposals.roi.samples_per_bin;
  j["max_length"] = c.proposals.max_length;
  j["use_mhsa"] = c.proposals.use_mhsa;
  j["box_init_std"] = c.proposals.box_init_std;
  j["feature_init_std"] = c.proposals.feature_init_std;
  j["lstm_hidden"] = c.lstm_hidden;
  return j;
}

ModelConfig model_from_json(const ordered_json& j) {
  ModelConfig c;
  c.video_dim = j.at("video_dim").get<std::size_t>();
  c.query_dim = j.at("query_dim").get<std::size_t>();
  c.encoder.d = j.at("d").get<std::size_t>();
  c.encoder.conv_blocks = j.at("conv_blocks").get<std::size_t>();
  c.encoder.kernel = j.at("kernel").get<std::size_t>();
  c.encoder.heads = j.at("heads").get<std::size_t>();
  c.proposals.num_proposals = j.at("num_proposals").get<std::size_t>();
  c.proposals.roi.bins = j.at("roi_bins").get<std::size_t>();
  c.proposals.roi.samples_per_bin = j.at("samples_per_bin").get<std::size_t>();
  c.proposals.max_length = j.at("max_length").get<double>();
  c.proposals.use_mhsa = j.at("use_mhsa").get<bool>();
  c.proposals.box_init_std = j.at("box_init_std").get<double>();
  c.proposals.feature_init_std = j.at("feature_init_std").get<double>();
  c.lstm_hidden = j.at("lstm_hidden").get<std::size_t>();
  return c;
}

void write_file(const fs::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace

std::string encode_parameters(const ParamSet& params) {
  std::string blob;
  blob.reserve(4 * params.scalar_count());
  for (const auto& e : params.entries()) {
    for (double v : e.tensor.data()) {
      const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
      for (int i = 0; i < 4; ++i) blob.push_back(static_cast<char>((bits >> (8 * i)) & 0xffu));
    }
  }
  return blob;
}

void save_checkpoint(const fs::path& dir, const LpNet& model, const CheckpointInfo& info) {
  fs::create_directories(dir);
  ordered_json manifest;
  manifest["version"] = kCheckpointVersion;
  manifest["model"] = model_to_json(model.config());
  manifest["embedding"] = {{"source", info.embedding.source}, {"dim", info.embedding.dim}};
  manifest["max_frames"] = info.max_frames;
  manifest["blob"] = kBlobFile;
  ordered_json params = ordered_json::object();
  std::size_t offset = 0;
  for (const auto& e : model.params().entries()) {
    params[e.name] = {{"shape", e.tensor.shape()}, {"dtype", "f32"}, {"offset", offset}};
    offset += 4 * e.tensor.size();
  }
  manifest["params"] = params;
  write_file(dir / kManifestFile, manifest.dump(2) + "\n");
  write_file(dir / kBlobFile, encode_parameters(model.params()));
}

LoadedCheckpoint load_checkpoint(const fs::path& dir) {
  if (!fs::exists(dir / kManifestFile)) throw CheckpointError("no checkpoint manifest in " + dir.string());
  ordered_json manifest;
  try {
    manifest = ordered_json::parse(read_file(dir / kManifestFile));
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError("unreadable checkpoint manifest: " + std::string(e.what()));
  }
  if (manifest.value("version", std::string()) != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint version in " + dir.string());
  }
  ModelConfig cfg;
  CheckpointInfo info;
  try {
    cfg = model_from_json(manifest.at("model"));
    info.embedding.source = manifest.at("embedding").at("source").get<std::string>();
    info.embedding.dim = manifest.at("embedding").at("dim").get<std::size_t>();
    info.max_frames = manifest.at("max_frames").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError("malformed checkpoint manifest: " + std::string(e.what()));
  }
  if (info.embedding.dim != cfg.query_dim) {
    throw CheckpointError("embedding width " + std::to_string(info.embedding.dim) + " does not match query_dim " +
                          std::to_string(cfg.query_dim));
  }
  LpNet model(cfg, 0);
  const std::string blob = read_file(dir / manifest.value("blob", std::string(kBlobFile)));
  const auto& listed = manifest.at("params");
  const auto& entries = model.params().entries();
  if (listed.size() != entries.size()) {
    throw CheckpointError("checkpoint lists " + std::to_string(listed.size()) + " parameters, model has " +
                          std::to_string(entries.size()));
  }
  for (const auto& e : entries) {
    if (!listed.contains(e.name)) throw CheckpointError("checkpoint lacks parameter " + e.name);
    const auto& meta = listed.at(e.name);
    const auto shape = meta.at("shape").get<nd::Shape>();
    if (shape != e.tensor.shape()) {
      throw CheckpointError("parameter " + e.name + " has shape " + nd::to_string(shape) + " in the checkpoint but " +
                            nd::to_string(e.tensor.shape()) + " in the model");
    }
    if (meta.at("dtype").get<std::string>() != "f32") throw CheckpointError("parameter " + e.name + " is not f32");
    const auto offset = meta.at("offset").get<std::size_t>();
    if (offset + 4 * e.tensor.size() > blob.size()) throw CheckpointError("parameter " + e.name + " runs past the blob");
    nd::Tensor t = e.tensor;
    auto values = t.mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      std::uint32_t bits = 0;
      for (int b = 0; b < 4; ++b) {
        bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(blob[offset + 4 * i + b])) << (8 * b);
      }
      values[i] = std::bit_cast<float>(bits);
    }
  }
  return {std::move(model), info};
}

}  // namespace lpnet
