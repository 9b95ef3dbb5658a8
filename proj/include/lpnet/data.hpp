#pragma once

#include <cstdint>
#include <filesystem>
#include <istream>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "lpnet/intervals.hpp"
#include "lpnet/nd/tensor.hpp"

namespace lpnet {

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& source, std::size_t line, const std::string& what);
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NotFoundError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------- annotations

struct AnnotationStub {
  std::string video_id;
  std::vector<std::string> tokens;
  Interval seconds;
  double duration = 0.0;  // 0 when the annotation format does not carry it
};

struct AnnotationSet {
  std::vector<AnnotationStub> stubs;
  std::size_t skipped = 0;  // inverted intervals and other rejected rows
  std::size_t clamped = 0;  // timestamps pulled back into [0, duration]
  std::vector<std::string> warnings;
};

// Lowercase, whitespace-separated.
std::vector<std::string> tokenize(std::string_view sentence);

// Lines of the form `<video_id> <start> <end>##<sentence>`.
AnnotationSet parse_annotations_charades(std::istream& in, const std::string& source = "<stream>");
AnnotationSet load_annotations_charades(const std::filesystem::path& path);

// JSON object: video id -> {"duration": s, "timestamps": [[s, e], ...], "sentences": [...]}.
AnnotationSet parse_annotations_activitynet(std::string_view json_text);
AnnotationSet load_annotations_activitynet(const std::filesystem::path& path);

// `<video_id> <duration>` per line.
std::map<std::string, double> load_durations(const std::filesystem::path& path);

// ---------------------------------------------------------------- features

// "LPFT", u32 T, u32 d (little endian), then T*d little-endian float32, row-major.
std::string encode_features(const nd::Tensor& features);
nd::Tensor decode_features(std::string_view bytes, const std::string& source = "<bytes>");
void write_feature_file(const std::filesystem::path& path, const nd::Tensor& features);
nd::Tensor read_feature_file(const std::filesystem::path& path);
nd::Tensor feature_store_read(const std::filesystem::path& dir, const std::string& video_id);

// Uniform temporal subsampling to at most `max_frames` rows.
nd::Tensor downsample(const nd::Tensor& features, std::size_t max_frames);

// ---------------------------------------------------------------- samples

struct Sample {
  std::string video_id;
  nd::Tensor features;  // [T x d_v]
  std::vector<std::string> tokens;
  Interval gt_seconds;
  double duration = 0.0;
  Interval gt_norm;

  // Empty when every invariant holds, otherwise the first violation.
  std::string invalid_reason() const;
};

// Joins annotation stubs with feature files. Stubs lacking a duration take it
// from `durations`. Invalid samples are skipped and counted in `set`.
std::vector<Sample> attach_features(AnnotationSet& set, const std::filesystem::path& feature_dir,
                                    const std::map<std::string, double>& durations = {});

// Dataset location forms:
//   <dir>                                   annotations.txt, durations.txt, features/
//   charades:<annotations>:<durations>:<feature dir>
//   activitynet:<json>:<feature dir>
struct LoadedDataset {
  std::vector<Sample> samples;
  std::size_t skipped = 0;
  std::size_t clamped = 0;
  std::vector<std::string> warnings;
};
LoadedDataset load_dataset(const std::string& spec);

// Inverse of the `<dir>` form of load_dataset.
void write_dataset(const std::filesystem::path& dir, std::span<const Sample> samples);

// ---------------------------------------------------------------- synthetic

struct MixtureMode {
  double center = 0.5;
  double length = 0.27;
  double weight = 1.0;
};

struct SynthSpec {
  std::size_t num_samples = 1000;
  std::size_t frames = 48;
  std::size_t feature_dim = 64;
  std::size_t vocab_size = 16;
  std::size_t min_words = 3;
  std::size_t max_words = 6;
  std::vector<MixtureMode> modes{MixtureMode{}};
  double center_jitter = 0.05;
  double length_jitter = 0.03;
  double min_length = 0.05;
  double signal_strength = 3.0;
  double duration = 30.59;
  std::uint64_t seed = 0;
  // Pattern vectors depend on token ids and this seed only, so datasets
  // drawn with different `seed`s share the same query-to-pattern mapping.
  std::uint64_t pattern_seed = 7;

  void validate() const;
};

// Average Charades-STA moment covers 8.22 s of a 30.59 s video.
SynthSpec charades_like_spec();

// Unit vector in feature space tied to the query's token ids.
std::vector<double> query_pattern(std::span<const std::string> tokens, std::size_t dim,
                                  std::uint64_t pattern_seed);

std::vector<Sample> synth_generate(const SynthSpec& spec);

// ---------------------------------------------------------------- embeddings

class EmbeddingTable {
 public:
  enum class Mode { Hash, File };

  static EmbeddingTable hashed(std::size_t dim = 300);
  // Text format, one `word v_1 ... v_dim` per line. Words absent from the
  // file embed as zero vectors.
  static EmbeddingTable from_file(const std::filesystem::path& path);
  static EmbeddingTable from_stream(std::istream& in, const std::string& source);

  Mode mode() const { return mode_; }
  std::size_t dim() const { return dim_; }
  const std::filesystem::path& source() const { return source_; }

  std::vector<double> lookup(const std::string& word) const;
  // [M x dim]
  nd::Tensor embed(std::span<const std::string> tokens) const;

 private:
  Mode mode_ = Mode::Hash;
  std::size_t dim_ = 300;
  std::filesystem::path source_;
  std::unordered_map<std::string, std::vector<double>> vectors_;
};

// ---------------------------------------------------------------- model inputs

// One sample in the form the network consumes.
struct ModelInput {
  std::string video_id;
  nd::Tensor video;  // [T x d_v], T <= max_frames
  nd::Tensor query;  // [M x embedding dim]
  Interval gt_norm;
  double duration = 0.0;
};

inline constexpr std::size_t kDefaultMaxFrames = 64;

ModelInput prepare_input(const Sample& sample, const EmbeddingTable& table,
                         std::size_t max_frames = kDefaultMaxFrames);
std::vector<ModelInput> prepare_inputs(std::span<const Sample> samples, const EmbeddingTable& table,
                                       std::size_t max_frames = kDefaultMaxFrames);

// Consecutive groups of up to `batch_size` inputs, zero-padded to the longest
// member, with masks marking the real positions.
struct PaddedBatch {
  std::vector<std::size_t> members;  // indices into the input span
  std::vector<std::size_t> video_lengths, query_lengths;
  nd::Tensor video;  // [B x T_max x d_v]
  nd::Tensor query;  // [B x M_max x d_q]
  std::vector<std::vector<bool>> video_mask, query_mask;
};
std::vector<PaddedBatch> pad_batch(std::span<const ModelInput> inputs, std::size_t batch_size);

}  // namespace lpnet
