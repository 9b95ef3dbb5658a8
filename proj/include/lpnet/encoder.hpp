#pragma once

#include <utility>
#include <vector>

#include "lpnet/layers.hpp"

namespace lpnet {

struct EncoderConfig {
  std::size_t d = 256;
  std::size_t conv_blocks = 4;
  std::size_t kernel = 7;
  std::size_t heads = 8;

  void validate() const;
};

struct EncodedPair {
  nd::Tensor v_enc;     // [T x d]
  nd::Tensor q_enc;     // [M x d]
  nd::Tensor v_fused;   // [T x d], query-guided video features
  nd::Tensor q_pooled;  // [d]
};

// Convolution blocks, then self-attention, then a position-wise feed-forward
// layer; every sublayer is pre-normalized and wrapped in a residual.
class EmbeddingEncoder {
 public:
  static EmbeddingEncoder create(ParamSet& params, const std::string& name, const EncoderConfig& cfg,
                                 Rng& rng);
  nd::Tensor apply(const nd::Tensor& x, const ForwardContext& ctx) const;

 private:
  std::vector<LayerNorm> conv_norms_;
  std::vector<Conv1d> convs_;
  LayerNorm attention_norm_;
  MultiHeadAttention attention_;
  LayerNorm ffn_norm_;
  Linear ffn_in_, ffn_out_;
};

// S[i][j] = w_v . v_i + w_q . q_j + w_vq . (v_i * q_j), with w = [w_v; w_q; w_vq].
nd::Tensor similarity_matrix(const nd::Tensor& v, const nd::Tensor& q, const nd::Tensor& weight);

// Intermediate products, exposed for inspection in tests.
struct CrossAttentionTrace {
  nd::Tensor similarity, row_norm, col_norm, a, b, output;
};

CrossAttentionTrace cross_modal_attention_trace(const nd::Tensor& v, const nd::Tensor& q,
                                                const nd::Tensor& sim_weight, const Linear& fusion);

// relu(fusion([v; A; v*A; v*B])) with A = S_row q, B = S_row S_col^T v.
nd::Tensor cross_modal_attention(const nd::Tensor& v, const nd::Tensor& q,
                                 const nd::Tensor& sim_weight, const Linear& fusion);

// Softmax-weighted average of the word vectors, scored by q . weight.
nd::Tensor sentence_pool(const nd::Tensor& q, const nd::Tensor& weight);

class FeatureEncoder {
 public:
  static FeatureEncoder create(ParamSet& params, const EncoderConfig& cfg, std::size_t video_dim,
                               std::size_t query_dim, Rng& rng);

  std::pair<nd::Tensor, nd::Tensor> project(const nd::Tensor& video, const nd::Tensor& query) const;
  EncodedPair encode(const nd::Tensor& video, const nd::Tensor& query, const ForwardContext& ctx) const;

  const Linear& video_projection() const { return video_proj_; }
  const Linear& query_projection() const { return query_proj_; }

 private:
  Linear video_proj_, query_proj_;
  EmbeddingEncoder video_encoder_, query_encoder_;
  nd::Tensor sim_weight_;
  Linear fusion_;
  nd::Tensor pool_weight_;
};

}  // namespace lpnet
