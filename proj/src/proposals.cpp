#include "lpnet/proposals.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace lpnet {

namespace {

double logistic(double v) {
  if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
  double e = std::exp(v);
  return e / (1.0 + e);
}

struct Tap {
  std::size_t frame;
  double weight;
};

// Interpolation taps for every sample of every bin of one interval.
void append_taps(std::size_t T, const Interval& interval, const RoiConfig& cfg,
                 std::vector<std::vector<Tap>>& rows) {
  if (!(interval.start >= 0.0 && interval.start <= interval.end && interval.end <= 1.0)) {
    throw std::invalid_argument("roialign interval must satisfy 0 <= s <= e <= 1");
  }
  const double last = static_cast<double>(T - 1);
  const double lo = interval.start * last;
  const bool degenerate = interval.end - interval.start < 1e-6;
  const double width = degenerate ? 0.0 : (interval.end - interval.start) * last;
  const std::size_t samples = std::max<std::size_t>(1, cfg.samples_per_bin);
  const double bin_width = width / static_cast<double>(cfg.bins);
  for (std::size_t k = 0; k < cfg.bins; ++k) {
    std::vector<Tap> taps;
    for (std::size_t j = 0; j < samples; ++j) {
      const double offset = (static_cast<double>(j) + 0.5) / static_cast<double>(samples);
      double pos = lo + (static_cast<double>(k) + offset) * bin_width;
      pos = std::clamp(pos, 0.0, last);
      const auto i0 = static_cast<std::size_t>(std::floor(pos));
      const std::size_t i1 = std::min(i0 + 1, T - 1);
      const double frac = pos - static_cast<double>(i0);
      const double share = 1.0 / static_cast<double>(samples);
      taps.push_back({i0, (1.0 - frac) * share});
      if (frac > 0.0) taps.push_back({i1, frac * share});
    }
    rows.push_back(std::move(taps));
  }
}

}  // namespace

BoxParams box_params(double center_logit, double length_logit, double max_length) {
  return {logistic(center_logit), max_length * logistic(length_logit)};
}

Interval box_interval(const BoxParams& box) {
  return {std::max(0.0, box.center - 0.5 * box.length), std::min(1.0, box.center + 0.5 * box.length)};
}

std::vector<Interval> decode_boxes(const ProposalBank& bank) {
  const auto logits = bank.box_logits.data();
  std::vector<Interval> out(bank.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = box_interval(box_params(logits[2 * i], logits[2 * i + 1], bank.max_length));
  }
  return out;
}

DecodedBox decode_box(const ProposalBank& bank, std::size_t index) {
  if (index >= bank.size()) throw std::out_of_range("proposal index out of range");
  nd::Tensor row = nd::reshape(nd::slice(bank.box_logits, 0, index, index + 1), {2});
  DecodedBox box;
  box.center = nd::sigmoid(nd::slice(row, 0, 0, 1));
  box.length = nd::scale(nd::sigmoid(nd::slice(row, 0, 1, 2)), bank.max_length);
  nd::Tensor half = nd::scale(box.length, 0.5);
  box.start = nd::maximum(nd::sub(box.center, half), nd::Tensor::scalar(0.0));
  box.end = nd::minimum(nd::add(box.center, half), nd::Tensor::scalar(1.0));
  return box;
}

nd::Tensor temporal_roialign(const nd::Tensor& v, const Interval& interval, const RoiConfig& cfg) {
  return temporal_roialign(v, std::span<const Interval>(&interval, 1), cfg);
}

nd::Tensor temporal_roialign(const nd::Tensor& v, std::span<const Interval> intervals,
                             const RoiConfig& cfg) {
  if (v.rank() != 2) throw nd::DimensionError("roialign expects [T x d] features");
  if (cfg.bins == 0) throw std::invalid_argument("roialign needs at least one bin");
  const std::size_t T = v.dim(0), d = v.dim(1);
  std::vector<std::vector<Tap>> rows;
  rows.reserve(intervals.size() * cfg.bins);
  for (const auto& interval : intervals) append_taps(T, interval, cfg, rows);
  std::vector<double> out(rows.size() * d, 0.0);
  const auto in = v.data();
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (const Tap& tap : rows[r])
      for (std::size_t c = 0; c < d; ++c) out[r * d + c] += tap.weight * in[tap.frame * d + c];
  const std::size_t n_rows = rows.size();
  return nd::make_op({n_rows, d}, std::move(out), {v}, [rows = std::move(rows), d](nd::Node& self) {
    nd::Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    auto& g = p.grad_buffer();
    for (std::size_t r = 0; r < rows.size(); ++r)
      for (const Tap& tap : rows[r])
        for (std::size_t c = 0; c < d; ++c) g[tap.frame * d + c] += tap.weight * self.grad[r * d + c];
  });
}

nd::Tensor dynamic_interact(const nd::Tensor& candidates, const nd::Tensor& gates,
                            const nd::Tensor& w_p, const nd::Tensor& w_c) {
  const std::size_t n = gates.dim(0), d = gates.dim(1);
  if (candidates.dim(0) % n != 0 || candidates.dim(1) != d) {
    throw nd::DimensionError("dynamic_interact: candidates " + nd::to_string(candidates.shape()) +
                             " vs gates " + nd::to_string(gates.shape()));
  }
  const std::size_t bins = candidates.dim(0) / n;
  nd::Tensor projected = nd::matmul(candidates, w_p);                          // [(N*l) x d]
  nd::Tensor gated = nd::mul(projected, nd::repeat_rows(gates, bins));         // diag(p_i) per block
  return nd::matmul(nd::reshape(gated, {n, bins * d}), w_c);                   // [N x d]
}

RatingHead RatingHead::create(ParamSet& params, const std::string& name, std::size_t d, Rng& rng) {
  return {Linear::create(params, name + ".fuse", 2 * d, d, rng),
          Linear::create(params, name + ".hidden", d, d, rng),
          Linear::create(params, name + ".output", d, 1, rng)};
}

nd::Tensor RatingHead::rate(const nd::Tensor& c_tilde, const nd::Tensor& p_tilde,
                            const nd::Tensor& q_pooled) const {
  const std::size_t n = c_tilde.dim(0), d = c_tilde.dim(1);
  nd::Tensor query_rows = nd::repeat_rows(nd::reshape(q_pooled, {1, d}), n);
  nd::Tensor fused = nd::relu(fuse.apply(nd::concat({nd::add(c_tilde, p_tilde), query_rows}, 1)));
  nd::Tensor logits = output.apply(nd::relu(hidden.apply(fused)));
  return nd::sigmoid(nd::reshape(logits, {n}));
}

std::size_t rank_candidates(std::span<const double> scores) {
  if (scores.empty()) throw std::invalid_argument("rank_candidates: no candidates");
  std::size_t best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i)
    if (scores[i] > scores[best]) best = i;
  return best;
}

ProposalHead ProposalHead::create(ParamSet& params, const ProposalConfig& cfg, std::size_t d,
                                  std::size_t heads, Rng& rng) {
  if (cfg.num_proposals == 0) throw std::invalid_argument("need at least one proposal");
  if (cfg.roi.bins == 0) throw std::invalid_argument("roi bins must be positive");
  if (!(cfg.max_length > 0.0 && cfg.max_length <= 1.0)) {
    throw std::invalid_argument("max proposal length must lie in (0, 1]");
  }
  ProposalHead head;
  head.cfg_ = cfg;
  head.bank_.box_logits = params.normal("proposals.box_logits", {cfg.num_proposals, 2}, cfg.box_init_std, rng);
  head.bank_.features = params.normal("proposals.features", {cfg.num_proposals, d}, cfg.feature_init_std, rng);
  head.bank_.max_length = cfg.max_length;
  head.attention_ = MultiHeadAttention::create(params, "proposals.attention", d, heads, rng);
  head.w_p_ = params.uniform("proposals.interact.w_p", {d, d}, std::sqrt(3.0 / static_cast<double>(d)), rng);
  const std::size_t flat = cfg.roi.bins * d;
  head.w_c_ = params.uniform("proposals.interact.w_c", {flat, d}, std::sqrt(6.0 / static_cast<double>(flat + d)), rng);
  head.rating_ = RatingHead::create(params, "proposals.rating", d, rng);
  return head;
}

nd::Tensor ProposalHead::refine_features(const ForwardContext& ctx) const {
  if (!cfg_.use_mhsa) return bank_.features;
  return nd::add(bank_.features, ctx.drop(attention_.apply(bank_.features)));
}

ProposalHead::Output ProposalHead::forward(const nd::Tensor& v_fused, const nd::Tensor& q_pooled,
                                           const ForwardContext& ctx) const {
  Output out;
  out.intervals = decode_boxes(bank_);
  out.refined_features = refine_features(ctx);
  nd::Tensor candidates = temporal_roialign(v_fused, out.intervals, cfg_.roi);
  nd::Tensor c_tilde = dynamic_interact(candidates, out.refined_features, w_p_, w_c_);
  out.scores = rating_.rate(c_tilde, out.refined_features, q_pooled);
  return out;
}

std::vector<CandidateScore> candidate_scores(const ProposalHead::Output& out) {
  std::vector<CandidateScore> result(out.intervals.size());
  for (std::size_t i = 0; i < result.size(); ++i) result[i] = {i, out.intervals[i], out.scores[i]};
  return result;
}

std::vector<ProposalRow> proposal_rows(const ProposalBank& bank) {
  const auto logits = bank.box_logits.data();
  std::vector<ProposalRow> rows(bank.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const BoxParams box = box_params(logits[2 * i], logits[2 * i + 1], bank.max_length);
    const Interval span = box_interval(box);
    rows[i] = {i, box.center, box.length, span.start, span.end};
  }
  return rows;
}

std::string format_proposal_csv(std::span<const ProposalRow> rows) {
  std::string out = "index,center,length,start,end\n";
  char line[160];
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line, "%zu,%.6f,%.6f,%.6f,%.6f\n", r.index, r.center, r.length, r.start, r.end);
    out += line;
  }
  return out;
}

std::vector<ProposalRow> parse_proposal_csv(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  std::vector<ProposalRow> rows;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line_no == 1) {
      if (line != "index,center,length,start,end") {
        throw std::runtime_error("proposal csv: unexpected header '" + line + "'");
      }
      continue;
    }
    if (line.empty()) continue;
    ProposalRow row;
    char tail = 0;
    if (std::sscanf(line.c_str(), "%zu,%lf,%lf,%lf,%lf%c", &row.index, &row.center, &row.length,
                    &row.start, &row.end, &tail) != 5) {
      throw std::runtime_error("proposal csv: malformed line " + std::to_string(line_no));
    }
    rows.push_back(row);
  }
  if (line_no == 0) throw std::runtime_error("proposal csv: missing header");
  return rows;
}

}  // namespace lpnet
