#include "lpnet/layers.hpp"

#include <cmath>
#include <stdexcept>

namespace lpnet {

nd::Tensor ForwardContext::drop(const nd::Tensor& x) const {
  if (!train || dropout <= 0.0) return x;
  if (rng == nullptr) throw std::logic_error("training forward pass needs an RNG for dropout");
  return nd::dropout(x, dropout, true, *rng);
}

Linear Linear::create(ParamSet& params, const std::string& name, std::size_t in, std::size_t out,
                      Rng& rng, bool with_bias) {
  Linear layer;
  const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
  layer.weight = params.uniform(name + ".weight", {in, out}, limit, rng);
  if (with_bias) layer.bias = params.zeros(name + ".bias", {out});
  return layer;
}

nd::Tensor Linear::apply(const nd::Tensor& x) const {
  if (x.rank() == 1) {
    nd::Tensor y = apply(nd::reshape(x, {1, x.dim(0)}));
    return nd::reshape(y, {y.dim(1)});
  }
  nd::Tensor y = nd::matmul(x, weight);
  return bias.defined() ? nd::add_bias(y, bias) : y;
}

LayerNorm LayerNorm::create(ParamSet& params, const std::string& name, std::size_t width) {
  return {params.constant(name + ".gain", {width}, 1.0), params.zeros(name + ".bias", {width})};
}

Conv1d Conv1d::create(ParamSet& params, const std::string& name, std::size_t kernel_width,
                      std::size_t in, std::size_t out, Rng& rng) {
  if (kernel_width % 2 == 0) throw std::invalid_argument("conv kernel width must be odd");
  const double limit = std::sqrt(3.0 / static_cast<double>(kernel_width * in));
  return {params.uniform(name + ".kernel", {kernel_width, in, out}, limit, rng),
          params.zeros(name + ".bias", {out})};
}

MultiHeadAttention MultiHeadAttention::create(ParamSet& params, const std::string& name,
                                              std::size_t width, std::size_t heads, Rng& rng) {
  if (heads == 0 || width % heads != 0) {
    throw std::invalid_argument("attention width " + std::to_string(width) +
                                " is not divisible by " + std::to_string(heads) + " heads");
  }
  MultiHeadAttention mha;
  mha.query = Linear::create(params, name + ".query", width, width, rng);
  // A key bias shifts every score in a row equally and cancels in the softmax.
  mha.key = Linear::create(params, name + ".key", width, width, rng, false);
  mha.value = Linear::create(params, name + ".value", width, width, rng);
  mha.output = Linear::create(params, name + ".output", width, width, rng);
  mha.heads = heads;
  return mha;
}

nd::Tensor MultiHeadAttention::apply(const nd::Tensor& x, const std::vector<bool>& key_mask) const {
  const std::size_t L = x.dim(0), width = x.dim(1);
  const std::size_t head_width = width / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(head_width));
  nd::Tensor q = query.apply(x);
  nd::Tensor k = key.apply(x);
  nd::Tensor v = value.apply(x);
  std::vector<double> mask;
  if (!key_mask.empty()) {
    if (key_mask.size() != L) throw nd::DimensionError("attention mask length differs from sequence");
    mask.resize(L * L);
    for (std::size_t i = 0; i < L; ++i)
      for (std::size_t j = 0; j < L; ++j) mask[i * L + j] = key_mask[j] ? 0.0 : nd::kMaskedLogit;
  }
  std::vector<nd::Tensor> outputs;
  outputs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    const std::size_t lo = h * head_width, hi = lo + head_width;
    nd::Tensor qh = heads == 1 ? q : nd::slice(q, 1, lo, hi);
    nd::Tensor kh = heads == 1 ? k : nd::slice(k, 1, lo, hi);
    nd::Tensor vh = heads == 1 ? v : nd::slice(v, 1, lo, hi);
    nd::Tensor scores = nd::scale(nd::matmul(qh, nd::transpose(kh)), inv_sqrt);
    nd::Tensor weights = nd::softmax(scores, 1, mask);
    outputs.push_back(nd::matmul(weights, vh));
  }
  nd::Tensor merged = heads == 1 ? outputs.front() : nd::concat(outputs, 1);
  return output.apply(merged);
}

nd::LstmWeights create_lstm(ParamSet& params, const std::string& name, std::size_t in,
                            std::size_t hidden, Rng& rng) {
  const double limit = 1.0 / std::sqrt(static_cast<double>(hidden));
  nd::LstmWeights w;
  w.input_weight = params.uniform(name + ".input_weight", {in, 4 * hidden}, limit, rng);
  w.recurrent_weight = params.uniform(name + ".recurrent_weight", {hidden, 4 * hidden}, limit, rng);
  std::vector<double> bias(4 * hidden, 0.0);
  for (std::size_t j = hidden; j < 2 * hidden; ++j) bias[j] = 1.0;  // forget gate
  w.bias = params.add(name + ".bias", {4 * hidden}, std::move(bias));
  return w;
}

}  // namespace lpnet
