#pragma once

#include <span>
#include <string>

#include "lpnet/nd/ops.hpp"
#include "lpnet/nd/recurrent.hpp"
#include "lpnet/params.hpp"

namespace lpnet {

// Train/eval switch threaded through a forward pass.
struct ForwardContext {
  bool train = false;
  double dropout = 0.0;
  Rng* rng = nullptr;

  nd::Tensor drop(const nd::Tensor& x) const;
};

struct Linear {
  nd::Tensor weight;  // [in x out]
  nd::Tensor bias;    // [out], undefined when created without bias

  static Linear create(ParamSet& params, const std::string& name, std::size_t in, std::size_t out,
                       Rng& rng, bool with_bias = true);
  // x: [L x in] or [in].
  nd::Tensor apply(const nd::Tensor& x) const;
};

struct LayerNorm {
  nd::Tensor gain;
  nd::Tensor bias;

  static LayerNorm create(ParamSet& params, const std::string& name, std::size_t width);
  nd::Tensor apply(const nd::Tensor& x) const { return nd::layernorm(x, gain, bias); }
};

struct Conv1d {
  nd::Tensor kernel;  // [k x d x d']
  nd::Tensor bias;

  static Conv1d create(ParamSet& params, const std::string& name, std::size_t kernel_width,
                       std::size_t in, std::size_t out, Rng& rng);
  nd::Tensor apply(const nd::Tensor& x) const { return nd::conv1d(x, kernel, bias); }
};

// Scaled dot-product attention over the rows of x, `heads` heads, followed by
// an output projection. No residual here.
struct MultiHeadAttention {
  Linear query, key, value, output;
  std::size_t heads = 1;

  static MultiHeadAttention create(ParamSet& params, const std::string& name, std::size_t width,
                                   std::size_t heads, Rng& rng);
  // `key_mask`, when non-empty, marks valid rows of x as keys.
  nd::Tensor apply(const nd::Tensor& x, const std::vector<bool>& key_mask = {}) const;
};

nd::LstmWeights create_lstm(ParamSet& params, const std::string& name, std::size_t in,
                            std::size_t hidden, Rng& rng);

}  // namespace lpnet
