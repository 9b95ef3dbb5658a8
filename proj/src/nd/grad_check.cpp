#include "lpnet/nd/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace lpnet::nd {

namespace {

double evaluate(const std::function<Tensor()>& f) {
  const double v = f().item();
  if (!std::isfinite(v)) throw std::domain_error("grad_check: function value is not finite");
  return v;
}

}  // namespace

GradCheckResult grad_check(const std::function<Tensor()>& f, std::vector<Tensor> inputs,
                           const GradCheckOptions& options) {
  for (auto& input : inputs) {
    if (!input.requires_grad()) throw std::invalid_argument("grad_check: inputs must require grad");
    input.zero_grad();
  }
  {
    Tape tape;
    TapeScope scope(tape);
    Tensor loss = f();
    if (!std::isfinite(loss.item())) throw std::domain_error("grad_check: function value is not finite");
    tape.backward(loss);
  }

  std::mt19937_64 rng(options.seed);
  GradCheckResult result;
  const double h = options.step;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    Tensor& input = inputs[k];
    std::vector<double> analytic(input.size(), 0.0);
    if (input.has_grad()) std::copy(input.grad().begin(), input.grad().end(), analytic.begin());

    std::vector<std::size_t> entries(input.size());
    std::iota(entries.begin(), entries.end(), 0);
    if (options.max_entries_per_input && *options.max_entries_per_input < entries.size()) {
      std::shuffle(entries.begin(), entries.end(), rng);
      entries.resize(*options.max_entries_per_input);
    }
    auto values = input.mutable_data();
    for (std::size_t idx : entries) {
      const double saved = values[idx];
      values[idx] = saved + h;
      const double up = evaluate(f);
      values[idx] = saved - h;
      const double down = evaluate(f);
      values[idx] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double err = std::abs(analytic[idx] - numeric) / std::max(1e-8, std::abs(numeric));
      ++result.probed;
      if (err > result.max_rel_err || result.probed == 1) {
        result.max_rel_err = err;
        result.worst_input = k;
        result.worst_entry = idx;
        result.analytic = analytic[idx];
        result.numeric = numeric;
      }
    }
  }
  return result;
}

}  // namespace lpnet::nd
