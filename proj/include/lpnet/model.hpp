#pragma once

#include <cstdint>

#include "lpnet/boundary.hpp"
#include "lpnet/encoder.hpp"
#include "lpnet/proposals.hpp"

namespace lpnet {

struct ModelConfig {
  std::size_t video_dim = 500;
  std::size_t query_dim = 300;
  EncoderConfig encoder;
  ProposalConfig proposals;
  std::size_t lstm_hidden = 0;  // 0 selects d / 2

  std::size_t boundary_hidden() const { return lstm_hidden ? lstm_hidden : std::max<std::size_t>(1, encoder.d / 2); }
  void validate() const;
};

struct ModelOutput {
  EncodedPair encoded;
  ProposalHead::Output proposals;
  BoundaryDistributions boundary;
};

class LpNet {
 public:
  LpNet(const ModelConfig& cfg, std::uint64_t seed);
  LpNet(LpNet&&) noexcept = default;
  LpNet& operator=(LpNet&&) noexcept = default;
  LpNet(const LpNet&) = delete;
  LpNet& operator=(const LpNet&) = delete;

  // video: [T x video_dim], query: [M x query_dim]. The boundary head only
  // feeds the training loss, so inference may skip it.
  ModelOutput forward(const nd::Tensor& video, const nd::Tensor& query, const ForwardContext& ctx,
                      bool with_boundary = true) const;

  const ModelConfig& config() const { return cfg_; }
  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }
  const FeatureEncoder& encoder() const { return encoder_; }
  const ProposalHead& proposals() const { return proposals_; }
  const BoundaryPredictor& boundary() const { return boundary_; }

  // The box logits are the only parameters driven by the IoU loss.
  static bool is_box_parameter(const std::string& name);

 private:
  ModelConfig cfg_;
  ParamSet params_;
  FeatureEncoder encoder_;
  ProposalHead proposals_;
  BoundaryPredictor boundary_;
};

}  // namespace lpnet
