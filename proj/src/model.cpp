#include "lpnet/model.hpp"

#include <stdexcept>

namespace lpnet {

void ModelConfig::validate() const {
  encoder.validate();
  if (video_dim == 0 || query_dim == 0) throw std::invalid_argument("input widths must be positive");
  if (proposals.num_proposals == 0) throw std::invalid_argument("num_proposals must be positive");
  if (proposals.roi.bins == 0) throw std::invalid_argument("roi_bins must be positive");
}

namespace {

// Sub-seeds keep each component's initialization independent of the others'
// parameter counts.
Rng component_rng(std::uint64_t seed, std::uint64_t component) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(component)};
  return Rng(seq);
}

}  // namespace

LpNet::LpNet(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  Rng enc_rng = component_rng(seed, 1);
  Rng prop_rng = component_rng(seed, 2);
  Rng bnd_rng = component_rng(seed, 3);
  encoder_ = FeatureEncoder::create(params_, cfg_.encoder, cfg_.video_dim, cfg_.query_dim, enc_rng);
  proposals_ = ProposalHead::create(params_, cfg_.proposals, cfg_.encoder.d, cfg_.encoder.heads, prop_rng);
  boundary_ = BoundaryPredictor::create(params_, cfg_.encoder.d, cfg_.boundary_hidden(), bnd_rng);
}

ModelOutput LpNet::forward(const nd::Tensor& video, const nd::Tensor& query, const ForwardContext& ctx,
                           bool with_boundary) const {
  if (video.rank() != 2 || video.dim(1) != cfg_.video_dim) {
    throw nd::DimensionError("video features " + nd::to_string(video.shape()) + " do not match width " +
                             std::to_string(cfg_.video_dim));
  }
  if (query.rank() != 2 || query.dim(1) != cfg_.query_dim) {
    throw nd::DimensionError("query embeddings " + nd::to_string(query.shape()) + " do not match width " +
                             std::to_string(cfg_.query_dim));
  }
  if (video.dim(0) < 2) throw nd::DimensionError("video needs at least two frames");
  ModelOutput out;
  out.encoded = encoder_.encode(video, query, ctx);
  out.proposals = proposals_.forward(out.encoded.v_fused, out.encoded.q_pooled, ctx);
  if (with_boundary) out.boundary = boundary_.apply(out.encoded.v_fused, ctx);
  return out;
}

bool LpNet::is_box_parameter(const std::string& name) { return name == "proposals.box_logits"; }

}  // namespace lpnet
