#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <random>
#include <vector>

#include "lpnet/nd/tensor.hpp"

namespace lpnet::nd {

struct GradCheckOptions {
  double step = 1e-5;
  // When set, only this many randomly chosen entries per input are probed.
  std::optional<std::size_t> max_entries_per_input;
  std::uint64_t seed = 0;
};

struct GradCheckResult {
  double max_rel_err = 0.0;
  std::size_t worst_input = 0;
  std::size_t worst_entry = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t probed = 0;
};

// Compares the tape gradient of the scalar `f` with central differences for
// every entry of every input. Relative error is
// |analytic - numeric| / max(1e-8, |numeric|). `inputs` must be leaves with
// requires_grad; `f` must rebuild its graph from them on every call.
// Throws std::domain_error when f is non-finite at a probe point.
GradCheckResult grad_check(const std::function<Tensor()>& f, std::vector<Tensor> inputs,
                           const GradCheckOptions& options = {});

}  // namespace lpnet::nd
