#pragma once

#include "lpnet/nd/tensor.hpp"

namespace lpnet::nd {

// Gate layout along the 4H axis: input, forget, cell candidate, output.
struct LstmWeights {
  Tensor input_weight;      // [d x 4H]
  Tensor recurrent_weight;  // [H x 4H]
  Tensor bias;              // [4H]

  std::size_t hidden() const { return recurrent_weight.dim(0); }
};

struct LstmState {
  Tensor h;  // [1 x H]
  Tensor c;  // [1 x H]
};

// One step given the precomputed pre-activation z = x W_x + h W_h + b, [1 x 4H].
LstmState lstm_cell(const Tensor& preactivation, const Tensor& c_prev);

// Runs the recurrence over x[T x d]; row t of the result is the hidden state
// at step t, whichever the direction.
Tensor lstm(const Tensor& x, const LstmWeights& weights, bool reverse);

// [T x 2H]: forward states then backward states per step.
Tensor bilstm(const Tensor& x, const LstmWeights& forward, const LstmWeights& backward);

}  // namespace lpnet::nd
