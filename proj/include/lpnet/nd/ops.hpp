#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "lpnet/nd/tensor.hpp"

namespace lpnet::nd {

// Linear algebra
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& x);
Tensor reshape(const Tensor& x, Shape shape);

// Elementwise, identical shapes
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor minimum(const Tensor& a, const Tensor& b);
Tensor maximum(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);
Tensor add_scalar(const Tensor& x, double offset);
Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);

// Broadcasting over the leading axes: x[..., n] op v[n].
Tensor add_bias(const Tensor& x, const Tensor& bias);
Tensor mul_columns(const Tensor& x, const Tensor& gate);

// Row i of x[m x n] repeated `times` consecutively -> [m*times x n].
Tensor repeat_rows(const Tensor& x, std::size_t times);

// Numerically stable softmax along `axis`. `additive_mask`, when non-empty,
// has one entry per element and is added to the logits first.
Tensor softmax(const Tensor& x, std::size_t axis, std::span<const double> additive_mask = {});
Tensor log_softmax(const Tensor& x, std::size_t axis);

// Masked-out positions get this additive logit.
inline constexpr double kMaskedLogit = -1e9;
std::vector<double> additive_mask(const std::vector<bool>& keep);

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin, std::size_t end);

inline constexpr double kLayerNormEps = 1e-5;
// Normalizes over the last axis, then applies gain and bias of that width.
Tensor layernorm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                 double eps = kLayerNormEps);

// Inverted dropout; identity when `train` is false or p == 0.
Tensor dropout(const Tensor& x, double p, bool train, std::mt19937_64& rng);

// sum_m weights[m] * x[m, :]  -> [d]
Tensor weighted_sum(const Tensor& weights, const Tensor& x);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor mse(const Tensor& prediction, const Tensor& target);

// Temporal convolution, x[T x d] with kernel[k x d x d'] -> [T x d'], zero
// padding of (k-1)/2 on each side. `bias` may be undefined.
Tensor conv1d(const Tensor& x, const Tensor& kernel, const Tensor& bias = Tensor());

// Uniform double in [0, 1) with 53 random bits; independent of the standard
// library's distribution implementations.
double uniform01(std::mt19937_64& rng);

}  // namespace lpnet::nd
