#include "lpnet/nd/recurrent.hpp"

#include <cmath>

#include "lpnet/nd/ops.hpp"

namespace lpnet::nd {

namespace {

double logistic(double v) {
  if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
  double e = std::exp(v);
  return e / (1.0 + e);
}

}  // namespace

// Fused cell: one node for (h, c) stacked as [2 x H], split by two slices.
LstmState lstm_cell(const Tensor& preactivation, const Tensor& c_prev) {
  const std::size_t H = c_prev.size();
  if (preactivation.size() != 4 * H) {
    throw DimensionError("lstm_cell: pre-activation " + to_string(preactivation.shape()) +
                         " for state " + to_string(c_prev.shape()));
  }
  const auto z = preactivation.data();
  const auto c0 = c_prev.data();
  // gates: i, f, g, o, tanh(c)
  std::vector<double> gates(5 * H);
  std::vector<double> out(2 * H);
  for (std::size_t j = 0; j < H; ++j) {
    const double i = logistic(z[j]);
    const double f = logistic(z[H + j]);
    const double g = std::tanh(z[2 * H + j]);
    const double o = logistic(z[3 * H + j]);
    const double c = f * c0[j] + i * g;
    const double tc = std::tanh(c);
    gates[j] = i;
    gates[H + j] = f;
    gates[2 * H + j] = g;
    gates[3 * H + j] = o;
    gates[4 * H + j] = tc;
    out[j] = o * tc;
    out[H + j] = c;
  }
  Tensor stacked = make_op({2, H}, std::move(out), {preactivation, c_prev},
                           [H, gates = std::move(gates)](Node& self) {
                             Node& pz = *self.parents[0];
                             Node& pc = *self.parents[1];
                             std::vector<double>* gz = pz.requires_grad ? &pz.grad_buffer() : nullptr;
                             std::vector<double>* gc = pc.requires_grad ? &pc.grad_buffer() : nullptr;
                             for (std::size_t j = 0; j < H; ++j) {
                               const double i = gates[j], f = gates[H + j], g = gates[2 * H + j];
                               const double o = gates[3 * H + j], tc = gates[4 * H + j];
                               const double dh = self.grad[j];
                               const double dc = self.grad[H + j] + dh * o * (1.0 - tc * tc);
                               if (gz) {
                                 (*gz)[j] += dc * g * i * (1.0 - i);
                                 (*gz)[H + j] += dc * pc.value[j] * f * (1.0 - f);
                                 (*gz)[2 * H + j] += dc * i * (1.0 - g * g);
                                 (*gz)[3 * H + j] += dh * tc * o * (1.0 - o);
                               }
                               if (gc) (*gc)[j] += dc * f;
                             }
                           });
  return {slice(stacked, 0, 0, 1), slice(stacked, 0, 1, 2)};
}

Tensor lstm(const Tensor& x, const LstmWeights& weights, bool reverse) {
  const std::size_t T = x.dim(0);
  const std::size_t H = weights.hidden();
  if (T == 0) throw DimensionError("lstm: empty sequence");
  Tensor projected = add_bias(matmul(x, weights.input_weight), weights.bias);  // [T x 4H]
  LstmState state{Tensor::zeros({1, H}), Tensor::zeros({1, H})};
  std::vector<Tensor> outputs(T);
  for (std::size_t step = 0; step < T; ++step) {
    const std::size_t t = reverse ? T - 1 - step : step;
    Tensor z = add(slice(projected, 0, t, t + 1), matmul(state.h, weights.recurrent_weight));
    state = lstm_cell(z, state.c);
    outputs[t] = state.h;
  }
  return concat(outputs, 0);
}

Tensor bilstm(const Tensor& x, const LstmWeights& forward, const LstmWeights& backward) {
  return concat({lstm(x, forward, false), lstm(x, backward, true)}, 1);
}

}  // namespace lpnet::nd
