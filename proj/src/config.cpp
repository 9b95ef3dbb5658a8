#include "lpnet/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

namespace lpnet {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::size_t to_size(const std::string& v) {
  std::size_t out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) throw std::invalid_argument("expected a non-negative integer");
  return out;
}

std::uint64_t to_u64(const std::string& v) {
  std::uint64_t out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) throw std::invalid_argument("expected a non-negative integer");
  return out;
}

double to_double(const std::string& v) {
  double out = 0.0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || !std::isfinite(out)) {
    throw std::invalid_argument("expected a finite number");
  }
  return out;
}

bool to_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw std::invalid_argument("expected true or false");
}

std::vector<MixtureMode> to_modes(const std::string& v) {
  std::vector<MixtureMode> modes;
  std::stringstream all(v);
  std::string item;
  while (std::getline(all, item, ';')) {
    if (trim(item).empty()) continue;
    std::stringstream fields{std::string(trim(item))};
    std::string c, w, p;
    if (!std::getline(fields, c, ',') || !std::getline(fields, w, ',') || !std::getline(fields, p, ',')) {
      throw std::invalid_argument("mixture modes are center,length,weight");
    }
    modes.push_back({to_double(std::string(trim(c))), to_double(std::string(trim(w))), to_double(std::string(trim(p)))});
  }
  if (modes.empty()) throw std::invalid_argument("no mixture modes given");
  return modes;
}

using Setter = std::function<void(const std::string&)>;

void apply(const KeyValues& kvs, const std::map<std::string, Setter>& setters, const std::string& source) {
  for (const auto& kv : kvs) {
    auto it = setters.find(kv.key);
    if (it == setters.end()) throw ParseError(source, kv.line, "unknown key '" + kv.key + "'");
    try {
      it->second(kv.value);
    } catch (const std::invalid_argument& e) {
      throw ParseError(source, kv.line, kv.key + ": " + e.what());
    }
  }
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw NotFoundError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace

KeyValues parse_key_values(std::string_view text, const std::string& source) {
  KeyValues out;
  std::set<std::string> seen;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ParseError(source, line_no, "expected key = value");
    std::string key(trim(line.substr(0, eq)));
    std::string value(trim(line.substr(eq + 1)));
    if (key.empty()) throw ParseError(source, line_no, "empty key");
    if (!seen.insert(key).second) throw ParseError(source, line_no, "duplicate key '" + key + "'");
    out.push_back({std::move(key), std::move(value), line_no});
  }
  return out;
}

RunConfig parse_run_config(std::string_view text, const std::string& source) {
  RunConfig rc;
  ModelConfig& m = rc.model;
  TrainConfig& t = rc.train;
  const std::map<std::string, Setter> setters{
      {"lambda", [&](const std::string& v) { t.lambda = to_double(v); }},
      {"lr", [&](const std::string& v) { t.lr = to_double(v); }},
      {"epochs", [&](const std::string& v) { t.epochs = to_size(v); }},
      {"batch_size", [&](const std::string& v) { t.batch_size = to_size(v); }},
      {"seed", [&](const std::string& v) { t.seed = to_u64(v); }},
      {"dropout", [&](const std::string& v) { t.dropout = to_double(v); }},
      {"patience", [&](const std::string& v) { t.patience = to_size(v); }},
      {"relax_radius", [&](const std::string& v) { t.relax_radius = to_size(v); }},
      {"disable_mhsa", [&](const std::string& v) { t.disable_mhsa = to_bool(v); }},
      {"disable_boundary_loss", [&](const std::string& v) { t.disable_boundary_loss = to_bool(v); }},
      {"giou_fallback", [&](const std::string& v) { t.giou_fallback = to_bool(v); }},
      {"kl_reverse", [&](const std::string& v) { t.kl_reverse = to_bool(v); }},
      {"alternate_streams", [&](const std::string& v) { t.alternate_streams = to_bool(v); }},
      {"freeze_boxes", [&](const std::string& v) { t.freeze_boxes = to_bool(v); }},
      {"val_fraction", [&](const std::string& v) { t.val_fraction = to_double(v); }},
      {"trace_proposals", [&](const std::string& v) { t.trace_proposals = to_bool(v); }},
      {"video_dim",
       [&](const std::string& v) {
         m.video_dim = to_size(v);
         rc.video_dim_given = true;
       }},
      {"d", [&](const std::string& v) { m.encoder.d = to_size(v); }},
      {"conv_blocks", [&](const std::string& v) { m.encoder.conv_blocks = to_size(v); }},
      {"kernel", [&](const std::string& v) { m.encoder.kernel = to_size(v); }},
      {"heads", [&](const std::string& v) { m.encoder.heads = to_size(v); }},
      {"num_proposals", [&](const std::string& v) { m.proposals.num_proposals = to_size(v); }},
      {"roi_bins", [&](const std::string& v) { m.proposals.roi.bins = to_size(v); }},
      {"samples_per_bin", [&](const std::string& v) { m.proposals.roi.samples_per_bin = to_size(v); }},
      {"max_length", [&](const std::string& v) { m.proposals.max_length = to_double(v); }},
      {"box_init_std", [&](const std::string& v) { m.proposals.box_init_std = to_double(v); }},
      {"feature_init_std", [&](const std::string& v) { m.proposals.feature_init_std = to_double(v); }},
      {"lstm_hidden", [&](const std::string& v) { m.lstm_hidden = to_size(v); }},
      {"train_data", [&](const std::string& v) { rc.train_data = v; }},
      {"val_data", [&](const std::string& v) { rc.val_data = v; }},
      {"embeddings", [&](const std::string& v) { rc.embedding.source = v; }},
      {"embedding_dim", [&](const std::string& v) { rc.embedding.dim = to_size(v); }},
      {"max_frames", [&](const std::string& v) { rc.max_frames = to_size(v); }},
  };
  apply(parse_key_values(text, source), setters, source);
  m.query_dim = rc.embedding.dim;
  return rc;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  return parse_run_config(read_text(path), path.string());
}

SynthSpec parse_synth_spec(std::string_view text, const std::string& source) {
  SynthSpec s;
  const std::map<std::string, Setter> setters{
      {"num_samples", [&](const std::string& v) { s.num_samples = to_size(v); }},
      {"frames", [&](const std::string& v) { s.frames = to_size(v); }},
      {"feature_dim", [&](const std::string& v) { s.feature_dim = to_size(v); }},
      {"vocab_size", [&](const std::string& v) { s.vocab_size = to_size(v); }},
      {"min_words", [&](const std::string& v) { s.min_words = to_size(v); }},
      {"max_words", [&](const std::string& v) { s.max_words = to_size(v); }},
      {"modes", [&](const std::string& v) { s.modes = to_modes(v); }},
      {"center_jitter", [&](const std::string& v) { s.center_jitter = to_double(v); }},
      {"length_jitter", [&](const std::string& v) { s.length_jitter = to_double(v); }},
      {"min_length", [&](const std::string& v) { s.min_length = to_double(v); }},
      {"signal_strength", [&](const std::string& v) { s.signal_strength = to_double(v); }},
      {"duration", [&](const std::string& v) { s.duration = to_double(v); }},
      {"seed", [&](const std::string& v) { s.seed = to_u64(v); }},
      {"pattern_seed", [&](const std::string& v) { s.pattern_seed = to_u64(v); }},
  };
  apply(parse_key_values(text, source), setters, source);
  try {
    s.validate();
  } catch (const std::invalid_argument& e) {
    throw ParseError(source, 0, e.what());
  }
  return s;
}

SynthSpec load_synth_spec(const std::filesystem::path& path) {
  return parse_synth_spec(read_text(path), path.string());
}

std::string format_synth_spec(const SynthSpec& s) {
  std::ostringstream out;
  out.precision(17);
  out << "num_samples = " << s.num_samples << "\n"
      << "frames = " << s.frames << "\n"
      << "feature_dim = " << s.feature_dim << "\n"
      << "vocab_size = " << s.vocab_size << "\n"
      << "min_words = " << s.min_words << "\n"
      << "max_words = " << s.max_words << "\n"
      << "modes = ";
  for (std::size_t i = 0; i < s.modes.size(); ++i) {
    out << (i ? ";" : "") << s.modes[i].center << "," << s.modes[i].length << "," << s.modes[i].weight;
  }
  out << "\n"
      << "center_jitter = " << s.center_jitter << "\n"
      << "length_jitter = " << s.length_jitter << "\n"
      << "min_length = " << s.min_length << "\n"
      << "signal_strength = " << s.signal_strength << "\n"
      << "duration = " << s.duration << "\n"
      << "seed = " << s.seed << "\n"
      << "pattern_seed = " << s.pattern_seed << "\n";
  return out.str();
}

}  // namespace lpnet
