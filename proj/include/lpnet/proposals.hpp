#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lpnet/intervals.hpp"
#include "lpnet/layers.hpp"

namespace lpnet {

struct RoiConfig {
  std::size_t bins = 16;
  std::size_t samples_per_bin = 1;
};

// N learnable boxes stored as unconstrained logits, center = sigmoid(logit_c),
// length = max_length * sigmoid(logit_w), plus one feature vector per box.
struct ProposalBank {
  nd::Tensor box_logits;  // [N x 2]
  nd::Tensor features;    // [N x d]
  double max_length = 1.0;

  std::size_t size() const { return box_logits.dim(0); }
};

struct BoxParams {
  double center = 0.0;
  double length = 0.0;
};

BoxParams box_params(double center_logit, double length_logit, double max_length);
Interval box_interval(const BoxParams& box);
std::vector<Interval> decode_boxes(const ProposalBank& bank);

// Differentiable decode of one proposal back to the bank's logits; each field
// is a [1] tensor.
struct DecodedBox {
  nd::Tensor center, length, start, end;
};
DecodedBox decode_box(const ProposalBank& bank, std::size_t index);

// Resamples v over the interval into cfg.bins rows. Gradient flows into v
// only; the interval is treated as a constant.
nd::Tensor temporal_roialign(const nd::Tensor& v, const Interval& interval, const RoiConfig& cfg);
// All intervals at once, [(N * bins) x d] with proposal i in rows [i*bins, (i+1)*bins).
nd::Tensor temporal_roialign(const nd::Tensor& v, std::span<const Interval> intervals,
                             const RoiConfig& cfg);

// Flatten((C' W_p) diag(p)) W_c for every proposal: candidates [(N*l) x d],
// gates [N x d] -> [N x d].
nd::Tensor dynamic_interact(const nd::Tensor& candidates, const nd::Tensor& gates,
                            const nd::Tensor& w_p, const nd::Tensor& w_c);

struct RatingHead {
  Linear fuse;    // 2d -> d
  Linear hidden;  // d -> d
  Linear output;  // d -> 1

  static RatingHead create(ParamSet& params, const std::string& name, std::size_t d, Rng& rng);
  // c_tilde, p_tilde: [N x d], q_pooled: [d] -> scores [N] in (0, 1).
  nd::Tensor rate(const nd::Tensor& c_tilde, const nd::Tensor& p_tilde, const nd::Tensor& q_pooled) const;
};

// Argmax with ties broken toward the lowest index.
std::size_t rank_candidates(std::span<const double> scores);

struct CandidateScore {
  std::size_t index = 0;
  Interval interval;
  double score = 0.0;
};

struct ProposalConfig {
  std::size_t num_proposals = 300;
  RoiConfig roi;
  double max_length = 1.0;
  bool use_mhsa = true;
  double box_init_std = 0.5;
  double feature_init_std = 0.02;
};

class ProposalHead {
 public:
  static ProposalHead create(ParamSet& params, const ProposalConfig& cfg, std::size_t d,
                             std::size_t heads, Rng& rng);

  struct Output {
    std::vector<Interval> intervals;
    nd::Tensor refined_features;  // P~, [N x d]
    nd::Tensor scores;            // [N]
  };

  // Self-attention over proposal features plus residual; identity when
  // use_mhsa is off.
  nd::Tensor refine_features(const ForwardContext& ctx) const;
  Output forward(const nd::Tensor& v_fused, const nd::Tensor& q_pooled, const ForwardContext& ctx) const;

  const ProposalBank& bank() const { return bank_; }
  const ProposalConfig& config() const { return cfg_; }
  const nd::Tensor& interact_projection() const { return w_p_; }
  const nd::Tensor& interact_output() const { return w_c_; }
  const RatingHead& rating() const { return rating_; }
  const MultiHeadAttention& attention() const { return attention_; }

 private:
  ProposalConfig cfg_;
  ProposalBank bank_;
  MultiHeadAttention attention_;
  nd::Tensor w_p_, w_c_;
  RatingHead rating_;
};

std::vector<CandidateScore> candidate_scores(const ProposalHead::Output& out);

// CSV with header `index,center,length,start,end`, six decimals per value.
struct ProposalRow {
  std::size_t index = 0;
  double center = 0.0, length = 0.0, start = 0.0, end = 0.0;
};
std::vector<ProposalRow> proposal_rows(const ProposalBank& bank);
std::string format_proposal_csv(std::span<const ProposalRow> rows);
std::vector<ProposalRow> parse_proposal_csv(std::string_view text);

}  // namespace lpnet
