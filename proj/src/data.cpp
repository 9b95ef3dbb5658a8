#include "lpnet/data.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <numeric>
#include <sstream>

#include "lpnet/nd/ops.hpp"
#include "lpnet/params.hpp"

namespace lpnet {

namespace fs = std::filesystem;

ParseError::ParseError(const std::string& source, std::size_t line, const std::string& what)
    : std::runtime_error(source + ":" + std::to_string(line) + ": " + what), line_(line) {}

namespace {

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFoundError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_whitespace(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    std::size_t j = i;
    while (j < s.size() && !std::isspace(static_cast<unsigned char>(s[j]))) ++j;
    if (j > i) out.push_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

bool parse_double(std::string_view text, double& out) {
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
  return ec == std::errc() && ptr == text.data() + text.size() && std::isfinite(out);
}

Rng stream_rng(std::uint64_t seed, std::uint64_t index, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32),
                    static_cast<std::uint32_t>(stream)};
  return Rng(seq);
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::vector<double> random_unit_vector(Rng& rng, std::size_t dim) {
  std::vector<double> v(dim);
  double norm = 0.0;
  for (auto& x : v) {
    x = standard_normal(rng);
    norm += x * x;
  }
  norm = std::sqrt(norm);
  for (auto& x : v) x /= norm;
  return v;
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

std::uint32_t get_u32(std::string_view bytes, std::size_t offset) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[offset + i])) << (8 * i);
  return v;
}

}  // namespace

std::vector<std::string> tokenize(std::string_view sentence) {
  std::vector<std::string> tokens;
  for (auto word : split_whitespace(sentence)) {
    std::string w(word);
    std::transform(w.begin(), w.end(), w.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    tokens.push_back(std::move(w));
  }
  return tokens;
}

AnnotationSet parse_annotations_charades(std::istream& in, const std::string& source) {
  AnnotationSet set;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view view = trim(line);
    if (view.empty()) continue;
    const auto sep = view.find("##");
    if (sep == std::string_view::npos) throw ParseError(source, line_no, "missing '##' separator");
    const auto head = split_whitespace(view.substr(0, sep));
    if (head.size() != 3) throw ParseError(source, line_no, "expected '<video_id> <start> <end>' before '##'");
    AnnotationStub stub;
    stub.video_id = std::string(head[0]);
    if (!parse_double(head[1], stub.seconds.start) || !parse_double(head[2], stub.seconds.end)) {
      throw ParseError(source, line_no, "start/end are not finite numbers");
    }
    stub.tokens = tokenize(view.substr(sep + 2));
    if (stub.tokens.empty()) throw ParseError(source, line_no, "empty sentence");
    if (stub.seconds.start < 0.0 || stub.seconds.start > stub.seconds.end) {
      ++set.skipped;
      set.warnings.push_back(source + ":" + std::to_string(line_no) + ": inverted or negative interval, skipped");
      continue;
    }
    set.stubs.push_back(std::move(stub));
  }
  return set;
}

AnnotationSet load_annotations_charades(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw NotFoundError("cannot open annotation file " + path.string());
  return parse_annotations_charades(in, path.string());
}

AnnotationSet parse_annotations_activitynet(std::string_view json_text) {
  nlohmann::json root;
  try {
    root = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(std::string("activitynet annotations: ") + e.what());
  }
  if (!root.is_object()) throw FormatError("activitynet annotations: top level must be an object");
  AnnotationSet set;
  for (const auto& [video_id, entry] : root.items()) {
    if (!entry.is_object() || !entry.contains("duration") || !entry.contains("timestamps") ||
        !entry.contains("sentences")) {
      throw FormatError("activitynet annotations: video " + video_id +
                        " needs duration, timestamps and sentences");
    }
    const double duration = entry.at("duration").get<double>();
    const auto& stamps = entry.at("timestamps");
    const auto& sentences = entry.at("sentences");
    if (stamps.size() != sentences.size()) {
      throw FormatError("activitynet annotations: video " + video_id + " has " + std::to_string(stamps.size()) +
                        " timestamps but " + std::to_string(sentences.size()) + " sentences");
    }
    for (std::size_t i = 0; i < stamps.size(); ++i) {
      AnnotationStub stub;
      stub.video_id = video_id;
      stub.duration = duration;
      double s = stamps[i].at(0).get<double>();
      double e = stamps[i].at(1).get<double>();
      const double cs = std::clamp(s, 0.0, duration), ce = std::clamp(e, 0.0, duration);
      if (cs != s || ce != e) {
        ++set.clamped;
        set.warnings.push_back(video_id + "[" + std::to_string(i) + "]: timestamp clamped to [0, duration]");
      }
      stub.seconds = {cs, ce};
      stub.tokens = tokenize(sentences[i].get<std::string>());
      if (stub.seconds.start > stub.seconds.end || stub.tokens.empty()) {
        ++set.skipped;
        set.warnings.push_back(video_id + "[" + std::to_string(i) + "]: invalid pair, skipped");
        continue;
      }
      set.stubs.push_back(std::move(stub));
    }
  }
  return set;
}

AnnotationSet load_annotations_activitynet(const fs::path& path) {
  return parse_annotations_activitynet(read_text(path));
}

std::map<std::string, double> load_durations(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw NotFoundError("cannot open durations file " + path.string());
  std::map<std::string, double> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto parts = split_whitespace(line);
    if (parts.empty()) continue;
    double duration = 0.0;
    if (parts.size() != 2 || !parse_double(parts[1], duration) || duration <= 0.0) {
      throw ParseError(path.string(), line_no, "expected '<video_id> <positive duration>'");
    }
    out[std::string(parts[0])] = duration;
  }
  return out;
}

std::string encode_features(const nd::Tensor& features) {
  if (features.rank() != 2) throw nd::DimensionError("feature tensors must be [T x d]");
  std::string out = "LPFT";
  put_u32(out, static_cast<std::uint32_t>(features.dim(0)));
  put_u32(out, static_cast<std::uint32_t>(features.dim(1)));
  out.reserve(out.size() + 4 * features.size());
  for (double v : features.data()) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  return out;
}

nd::Tensor decode_features(std::string_view bytes, const std::string& source) {
  if (bytes.size() < 12 || bytes.substr(0, 4) != "LPFT") throw FormatError(source + ": bad magic, not an LPFT file");
  const std::size_t T = get_u32(bytes, 4), d = get_u32(bytes, 8);
  if (T == 0 || d == 0) throw FormatError(source + ": zero extent in header");
  const std::size_t expected = 12 + 4 * T * d;
  if (bytes.size() != expected) {
    throw FormatError(source + ": payload has " + std::to_string(bytes.size()) + " bytes, header implies " +
                      std::to_string(expected));
  }
  std::vector<double> values(T * d);
  for (std::size_t i = 0; i < values.size(); ++i) {
    values[i] = std::bit_cast<float>(get_u32(bytes, 12 + 4 * i));
  }
  return nd::Tensor::from({T, d}, std::move(values));
}

void write_feature_file(const fs::path& path, const nd::Tensor& features) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  const std::string bytes = encode_features(features);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

nd::Tensor read_feature_file(const fs::path& path) {
  if (!fs::exists(path)) throw NotFoundError("feature file not found: " + path.string());
  return decode_features(read_text(path), path.string());
}

nd::Tensor feature_store_read(const fs::path& dir, const std::string& video_id) {
  const fs::path path = dir / (video_id + ".lpft");
  if (!fs::exists(path)) throw NotFoundError("no features for video '" + video_id + "' in " + dir.string());
  return read_feature_file(path);
}

nd::Tensor downsample(const nd::Tensor& features, std::size_t max_frames) {
  const std::size_t T = features.dim(0), d = features.dim(1);
  if (max_frames < 2) throw std::invalid_argument("max_frames must be at least 2");
  if (T <= max_frames) return features;
  std::vector<double> out(max_frames * d);
  const auto in = features.data();
  for (std::size_t i = 0; i < max_frames; ++i) {
    const double pos = static_cast<double>(i) * static_cast<double>(T - 1) / static_cast<double>(max_frames - 1);
    const auto src = static_cast<std::size_t>(std::llround(pos));
    std::copy_n(in.begin() + src * d, d, out.begin() + i * d);
  }
  return nd::Tensor::from({max_frames, d}, std::move(out));
}

std::string Sample::invalid_reason() const {
  if (!features.defined() || features.rank() != 2) return "missing features";
  if (features.dim(0) < 2) return "fewer than two frames";
  if (tokens.empty()) return "empty query";
  if (!(duration > 0.0)) return "non-positive duration";
  if (!(gt_seconds.start >= 0.0 && gt_seconds.start <= gt_seconds.end && gt_seconds.end <= duration)) {
    return "ground truth outside [0, duration] or inverted";
  }
  return {};
}

std::vector<Sample> attach_features(AnnotationSet& set, const fs::path& feature_dir,
                                    const std::map<std::string, double>& durations) {
  std::vector<Sample> samples;
  std::map<std::string, nd::Tensor> cache;
  for (const auto& stub : set.stubs) {
    Sample s;
    s.video_id = stub.video_id;
    s.tokens = stub.tokens;
    s.gt_seconds = stub.seconds;
    s.duration = stub.duration;
    if (s.duration <= 0.0) {
      auto it = durations.find(stub.video_id);
      if (it != durations.end()) s.duration = it->second;
    }
    auto cached = cache.find(stub.video_id);
    if (cached == cache.end()) cached = cache.emplace(stub.video_id, feature_store_read(feature_dir, stub.video_id)).first;
    s.features = cached->second;
    if (s.duration > 0.0 && s.gt_seconds.end > s.duration) {
      ++set.clamped;
      set.warnings.push_back(stub.video_id + ": end time beyond duration, clamped");
      s.gt_seconds.end = s.duration;
    }
    if (auto reason = s.invalid_reason(); !reason.empty()) {
      ++set.skipped;
      set.warnings.push_back(stub.video_id + ": " + reason + ", skipped");
      continue;
    }
    s.gt_norm = {s.gt_seconds.start / s.duration, s.gt_seconds.end / s.duration};
    samples.push_back(std::move(s));
  }
  return samples;
}

LoadedDataset load_dataset(const std::string& spec) {
  auto split = [](const std::string& s) {
    std::vector<std::string> parts;
    std::size_t start = 0;
    while (true) {
      auto pos = s.find(':', start);
      parts.push_back(s.substr(start, pos - start));
      if (pos == std::string::npos) break;
      start = pos + 1;
    }
    return parts;
  };
  AnnotationSet set;
  std::vector<Sample> samples;
  if (spec.rfind("charades:", 0) == 0) {
    auto parts = split(spec);
    if (parts.size() != 4) throw std::invalid_argument("expected charades:<annotations>:<durations>:<feature dir>");
    set = load_annotations_charades(parts[1]);
    samples = attach_features(set, parts[3], load_durations(parts[2]));
  } else if (spec.rfind("activitynet:", 0) == 0) {
    auto parts = split(spec);
    if (parts.size() != 3) throw std::invalid_argument("expected activitynet:<json>:<feature dir>");
    set = load_annotations_activitynet(parts[1]);
    samples = attach_features(set, parts[2]);
  } else {
    const fs::path dir(spec);
    if (!fs::is_directory(dir)) throw NotFoundError("dataset directory not found: " + spec);
    set = load_annotations_charades(dir / "annotations.txt");
    samples = attach_features(set, dir / "features", load_durations(dir / "durations.txt"));
  }
  return {std::move(samples), set.skipped, set.clamped, std::move(set.warnings)};
}

void write_dataset(const fs::path& dir, std::span<const Sample> samples) {
  fs::create_directories(dir / "features");
  std::ofstream ann(dir / "annotations.txt");
  std::ofstream dur(dir / "durations.txt");
  if (!ann || !dur) throw std::runtime_error("cannot write dataset files in " + dir.string());
  std::map<std::string, double> durations;
  char buf[128];
  for (const auto& s : samples) {
    std::snprintf(buf, sizeof buf, "%s %.6f %.6f##", s.video_id.c_str(), s.gt_seconds.start, s.gt_seconds.end);
    ann << buf;
    for (std::size_t i = 0; i < s.tokens.size(); ++i) ann << (i ? " " : "") << s.tokens[i];
    ann << '\n';
    if (durations.emplace(s.video_id, s.duration).second) {
      write_feature_file(dir / "features" / (s.video_id + ".lpft"), s.features);
    }
  }
  for (const auto& [id, d] : durations) {
    std::snprintf(buf, sizeof buf, "%.6f", d);
    dur << id << ' ' << buf << '\n';
  }
}

void SynthSpec::validate() const {
  if (num_samples == 0) throw std::invalid_argument("synth: num_samples must be positive");
  if (frames < 2) throw std::invalid_argument("synth: need at least two frames");
  if (feature_dim == 0 || vocab_size == 0) throw std::invalid_argument("synth: feature_dim and vocab_size must be positive");
  if (min_words == 0 || min_words > max_words) throw std::invalid_argument("synth: need 1 <= min_words <= max_words");
  if (modes.empty()) throw std::invalid_argument("synth: mixture has no modes");
  double total = 0.0;
  for (const auto& m : modes) {
    if (m.weight < 0.0 || m.length <= 0.0 || m.length > 1.0 || m.center < 0.0 || m.center > 1.0) {
      throw std::invalid_argument("synth: mixture modes need center in [0,1], length in (0,1], weight >= 0");
    }
    total += m.weight;
  }
  if (std::abs(total - 1.0) > 1e-9) throw std::invalid_argument("synth: mixture weights must sum to 1");
  if (center_jitter < 0.0 || length_jitter < 0.0 || min_length <= 0.0 || min_length > 1.0) {
    throw std::invalid_argument("synth: jitters must be non-negative and min_length in (0, 1]");
  }
  if (signal_strength < 0.0 || duration <= 0.0) throw std::invalid_argument("synth: signal_strength >= 0, duration > 0");
}

SynthSpec charades_like_spec() {
  SynthSpec spec;
  spec.modes = {MixtureMode{0.5, 8.22 / 30.59, 1.0}};
  spec.duration = 30.59;
  return spec;
}

std::vector<double> query_pattern(std::span<const std::string> tokens, std::size_t dim, std::uint64_t pattern_seed) {
  std::vector<double> pattern(dim, 0.0);
  for (const auto& token : tokens) {
    Rng rng = stream_rng(pattern_seed, fnv1a(token), 0x5a);
    const auto u = random_unit_vector(rng, dim);
    for (std::size_t i = 0; i < dim; ++i) pattern[i] += u[i];
  }
  double norm = 0.0;
  for (double v : pattern) norm += v * v;
  norm = std::sqrt(norm);
  if (norm > 0.0)
    for (auto& v : pattern) v /= norm;
  return pattern;
}

std::vector<Sample> synth_generate(const SynthSpec& spec) {
  spec.validate();
  std::vector<Sample> samples;
  samples.reserve(spec.num_samples);
  const double last = static_cast<double>(spec.frames - 1);
  for (std::size_t n = 0; n < spec.num_samples; ++n) {
    Rng gt_rng = stream_rng(spec.seed, n, 1);
    Rng word_rng = stream_rng(spec.seed, n, 2);
    Rng feature_rng = stream_rng(spec.seed, n, 3);

    const double pick = nd::uniform01(gt_rng);
    std::size_t mode = 0;
    double acc = spec.modes[0].weight;
    while (pick >= acc && mode + 1 < spec.modes.size()) acc += spec.modes[++mode].weight;
    const MixtureMode& m = spec.modes[mode];
    double length = std::clamp(m.length + spec.length_jitter * standard_normal(gt_rng), spec.min_length, 1.0);
    double center = m.center + spec.center_jitter * standard_normal(gt_rng);
    center = std::clamp(center, 0.5 * length, 1.0 - 0.5 * length);
    Interval gt{std::max(0.0, center - 0.5 * length), std::min(1.0, center + 0.5 * length)};

    Sample s;
    char id[32];
    std::snprintf(id, sizeof id, "synth%06zu", n);
    s.video_id = id;
    const std::size_t words = spec.min_words + static_cast<std::size_t>(nd::uniform01(word_rng) *
                                                                        static_cast<double>(spec.max_words - spec.min_words + 1));
    for (std::size_t w = 0; w < words; ++w) {
      const auto token = static_cast<std::size_t>(nd::uniform01(word_rng) * static_cast<double>(spec.vocab_size));
      s.tokens.push_back("w" + std::to_string(token));
    }

    std::vector<double> values(spec.frames * spec.feature_dim);
    for (auto& v : values) v = standard_normal(feature_rng);
    if (spec.signal_strength > 0.0) {
      const auto pattern = query_pattern(s.tokens, spec.feature_dim, spec.pattern_seed);
      std::size_t first = static_cast<std::size_t>(std::ceil(gt.start * last));
      std::size_t final = static_cast<std::size_t>(std::floor(gt.end * last));
      if (first > final) first = final = static_cast<std::size_t>(std::llround(0.5 * (gt.start + gt.end) * last));
      for (std::size_t t = first; t <= final; ++t)
        for (std::size_t i = 0; i < spec.feature_dim; ++i) values[t * spec.feature_dim + i] += spec.signal_strength * pattern[i];
    }
    s.features = nd::Tensor::from({spec.frames, spec.feature_dim}, std::move(values));
    s.duration = spec.duration;
    s.gt_norm = gt;
    s.gt_seconds = {gt.start * spec.duration, gt.end * spec.duration};
    samples.push_back(std::move(s));
  }
  return samples;
}

EmbeddingTable EmbeddingTable::hashed(std::size_t dim) {
  if (dim == 0) throw std::invalid_argument("embedding dim must be positive");
  EmbeddingTable t;
  t.mode_ = Mode::Hash;
  t.dim_ = dim;
  return t;
}

EmbeddingTable EmbeddingTable::from_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw NotFoundError("cannot read embedding file " + path.string());
  EmbeddingTable t = from_stream(in, path.string());
  t.source_ = path;
  return t;
}

EmbeddingTable EmbeddingTable::from_stream(std::istream& in, const std::string& source) {
  EmbeddingTable t;
  t.mode_ = Mode::File;
  t.dim_ = 0;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto parts = split_whitespace(line);
    if (parts.empty()) continue;
    if (parts.size() < 2) throw ParseError(source, line_no, "embedding line needs a word and values");
    if (t.dim_ == 0) t.dim_ = parts.size() - 1;
    if (parts.size() - 1 != t.dim_) throw ParseError(source, line_no, "inconsistent embedding width");
    std::vector<double> v(t.dim_);
    for (std::size_t i = 0; i < t.dim_; ++i) {
      if (!parse_double(parts[i + 1], v[i])) throw ParseError(source, line_no, "non-numeric embedding value");
    }
    t.vectors_.emplace(std::string(parts[0]), std::move(v));
  }
  if (t.dim_ == 0) throw FormatError(source + ": embedding file is empty");
  return t;
}

std::vector<double> EmbeddingTable::lookup(const std::string& word) const {
  if (mode_ == Mode::File) {
    auto it = vectors_.find(word);
    return it == vectors_.end() ? std::vector<double>(dim_, 0.0) : it->second;
  }
  Rng rng = stream_rng(fnv1a(word), dim_, 0xe3);
  return random_unit_vector(rng, dim_);
}

nd::Tensor EmbeddingTable::embed(std::span<const std::string> tokens) const {
  if (tokens.empty()) throw std::invalid_argument("cannot embed an empty query");
  std::vector<double> values;
  values.reserve(tokens.size() * dim_);
  for (const auto& token : tokens) {
    const auto v = lookup(token);
    values.insert(values.end(), v.begin(), v.end());
  }
  return nd::Tensor::from({tokens.size(), dim_}, std::move(values));
}

ModelInput prepare_input(const Sample& sample, const EmbeddingTable& table, std::size_t max_frames) {
  if (auto reason = sample.invalid_reason(); !reason.empty()) {
    throw std::invalid_argument("sample " + sample.video_id + ": " + reason);
  }
  ModelInput in;
  in.video_id = sample.video_id;
  in.video = downsample(sample.features, max_frames);
  in.query = table.embed(sample.tokens);
  in.gt_norm = sample.gt_norm;
  in.duration = sample.duration;
  return in;
}

std::vector<ModelInput> prepare_inputs(std::span<const Sample> samples, const EmbeddingTable& table,
                                       std::size_t max_frames) {
  std::vector<ModelInput> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(prepare_input(s, table, max_frames));
  return out;
}

std::vector<PaddedBatch> pad_batch(std::span<const ModelInput> inputs, std::size_t batch_size) {
  if (batch_size == 0) throw std::invalid_argument("batch_size must be positive");
  std::vector<PaddedBatch> batches;
  for (std::size_t begin = 0; begin < inputs.size(); begin += batch_size) {
    const std::size_t end = std::min(inputs.size(), begin + batch_size);
    PaddedBatch b;
    std::size_t t_max = 0, m_max = 0;
    const std::size_t dv = inputs[begin].video.dim(1), dq = inputs[begin].query.dim(1);
    for (std::size_t i = begin; i < end; ++i) {
      if (inputs[i].video.dim(1) != dv || inputs[i].query.dim(1) != dq) {
        throw nd::DimensionError("pad_batch: feature widths differ within a batch");
      }
      b.members.push_back(i);
      b.video_lengths.push_back(inputs[i].video.dim(0));
      b.query_lengths.push_back(inputs[i].query.dim(0));
      t_max = std::max(t_max, inputs[i].video.dim(0));
      m_max = std::max(m_max, inputs[i].query.dim(0));
    }
    const std::size_t B = end - begin;
    std::vector<double> video(B * t_max * dv, 0.0), query(B * m_max * dq, 0.0);
    for (std::size_t k = 0; k < B; ++k) {
      const auto& in = inputs[begin + k];
      std::copy(in.video.data().begin(), in.video.data().end(), video.begin() + k * t_max * dv);
      std::copy(in.query.data().begin(), in.query.data().end(), query.begin() + k * m_max * dq);
      std::vector<bool> vm(t_max, false), qm(m_max, false);
      std::fill_n(vm.begin(), b.video_lengths[k], true);
      std::fill_n(qm.begin(), b.query_lengths[k], true);
      b.video_mask.push_back(std::move(vm));
      b.query_mask.push_back(std::move(qm));
    }
    b.video = nd::Tensor::from({B, t_max, dv}, std::move(video));
    b.query = nd::Tensor::from({B, m_max, dq}, std::move(query));
    batches.push_back(std::move(b));
  }
  return batches;
}

}  // namespace lpnet
