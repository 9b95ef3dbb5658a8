#include "lpnet/encoder.hpp"

#include <cmath>
#include <stdexcept>

namespace lpnet {

void EncoderConfig::validate() const {
  if (d == 0) throw std::invalid_argument("encoder width must be positive");
  if (heads == 0 || d % heads != 0) {
    throw std::invalid_argument("encoder width " + std::to_string(d) + " not divisible by " +
                                std::to_string(heads) + " heads");
  }
  if (kernel % 2 == 0) throw std::invalid_argument("encoder kernel width must be odd");
}

EmbeddingEncoder EmbeddingEncoder::create(ParamSet& params, const std::string& name,
                                          const EncoderConfig& cfg, Rng& rng) {
  EmbeddingEncoder enc;
  for (std::size_t b = 0; b < cfg.conv_blocks; ++b) {
    const std::string block = name + ".conv" + std::to_string(b);
    enc.conv_norms_.push_back(LayerNorm::create(params, block + ".norm", cfg.d));
    enc.convs_.push_back(Conv1d::create(params, block, cfg.kernel, cfg.d, cfg.d, rng));
  }
  enc.attention_norm_ = LayerNorm::create(params, name + ".attention.norm", cfg.d);
  enc.attention_ = MultiHeadAttention::create(params, name + ".attention", cfg.d, cfg.heads, rng);
  enc.ffn_norm_ = LayerNorm::create(params, name + ".ffn.norm", cfg.d);
  enc.ffn_in_ = Linear::create(params, name + ".ffn.in", cfg.d, cfg.d, rng);
  enc.ffn_out_ = Linear::create(params, name + ".ffn.out", cfg.d, cfg.d, rng);
  return enc;
}

nd::Tensor EmbeddingEncoder::apply(const nd::Tensor& input, const ForwardContext& ctx) const {
  nd::Tensor x = input;
  for (std::size_t b = 0; b < convs_.size(); ++b) {
    x = nd::add(x, ctx.drop(nd::relu(convs_[b].apply(conv_norms_[b].apply(x)))));
  }
  x = nd::add(x, ctx.drop(attention_.apply(attention_norm_.apply(x))));
  nd::Tensor hidden = nd::relu(ffn_in_.apply(ffn_norm_.apply(x)));
  return nd::add(x, ctx.drop(ffn_out_.apply(hidden)));
}

nd::Tensor similarity_matrix(const nd::Tensor& v, const nd::Tensor& q, const nd::Tensor& weight) {
  const std::size_t T = v.dim(0), M = q.dim(0), d = v.dim(1);
  if (q.dim(1) != d) {
    throw nd::DimensionError("similarity: widths differ, " + nd::to_string(v.shape()) + " vs " +
                             nd::to_string(q.shape()));
  }
  if (weight.shape() != nd::Shape{3 * d}) {
    throw nd::DimensionError("similarity: weight must be [" + std::to_string(3 * d) + "]");
  }
  nd::Tensor w_v = nd::reshape(nd::slice(weight, 0, 0, d), {d, 1});
  nd::Tensor w_q = nd::reshape(nd::slice(weight, 0, d, 2 * d), {d, 1});
  nd::Tensor w_vq = nd::slice(weight, 0, 2 * d, 3 * d);
  nd::Tensor trilinear = nd::matmul(nd::mul_columns(v, w_vq), nd::transpose(q));
  nd::Tensor video_term = nd::matmul(nd::matmul(v, w_v), nd::Tensor::full({1, M}, 1.0));
  nd::Tensor query_term = nd::matmul(nd::Tensor::full({T, 1}, 1.0), nd::transpose(nd::matmul(q, w_q)));
  return nd::add(trilinear, nd::add(video_term, query_term));
}

CrossAttentionTrace cross_modal_attention_trace(const nd::Tensor& v, const nd::Tensor& q,
                                                const nd::Tensor& sim_weight, const Linear& fusion) {
  CrossAttentionTrace t;
  t.similarity = similarity_matrix(v, q, sim_weight);
  t.row_norm = nd::softmax(t.similarity, 1);
  t.col_norm = nd::softmax(t.similarity, 0);
  t.a = nd::matmul(t.row_norm, q);
  t.b = nd::matmul(t.row_norm, nd::matmul(nd::transpose(t.col_norm), v));
  nd::Tensor joined = nd::concat({v, t.a, nd::mul(v, t.a), nd::mul(v, t.b)}, 1);
  t.output = nd::relu(fusion.apply(joined));
  return t;
}

nd::Tensor cross_modal_attention(const nd::Tensor& v, const nd::Tensor& q,
                                 const nd::Tensor& sim_weight, const Linear& fusion) {
  return cross_modal_attention_trace(v, q, sim_weight, fusion).output;
}

nd::Tensor sentence_pool(const nd::Tensor& q, const nd::Tensor& weight) {
  const std::size_t M = q.dim(0), d = q.dim(1);
  nd::Tensor scores = nd::reshape(nd::matmul(q, nd::reshape(weight, {d, 1})), {M});
  return nd::weighted_sum(nd::softmax(scores, 0), q);
}

FeatureEncoder FeatureEncoder::create(ParamSet& params, const EncoderConfig& cfg,
                                      std::size_t video_dim, std::size_t query_dim, Rng& rng) {
  cfg.validate();
  if (video_dim == 0 || query_dim == 0) throw std::invalid_argument("input widths must be positive");
  FeatureEncoder enc;
  enc.video_proj_ = Linear::create(params, "encoder.video_proj", video_dim, cfg.d, rng);
  enc.query_proj_ = Linear::create(params, "encoder.query_proj", query_dim, cfg.d, rng);
  enc.video_encoder_ = EmbeddingEncoder::create(params, "encoder.video", cfg, rng);
  enc.query_encoder_ = EmbeddingEncoder::create(params, "encoder.query", cfg, rng);
  const double sim_limit = 1.0 / std::sqrt(static_cast<double>(cfg.d));
  enc.sim_weight_ = params.uniform("encoder.similarity", {3 * cfg.d}, sim_limit, rng);
  enc.fusion_ = Linear::create(params, "encoder.fusion", 4 * cfg.d, cfg.d, rng);
  enc.pool_weight_ = params.uniform("encoder.pool", {cfg.d}, sim_limit, rng);
  return enc;
}

std::pair<nd::Tensor, nd::Tensor> FeatureEncoder::project(const nd::Tensor& video,
                                                          const nd::Tensor& query) const {
  return {video_proj_.apply(video), query_proj_.apply(query)};
}

EncodedPair FeatureEncoder::encode(const nd::Tensor& video, const nd::Tensor& query,
                                   const ForwardContext& ctx) const {
  auto [v, q] = project(video, query);
  EncodedPair out;
  out.v_enc = video_encoder_.apply(v, ctx);
  out.q_enc = query_encoder_.apply(q, ctx);
  out.v_fused = cross_modal_attention(out.v_enc, out.q_enc, sim_weight_, fusion_);
  out.q_pooled = sentence_pool(out.q_enc, pool_weight_);
  return out;
}

}  // namespace lpnet
