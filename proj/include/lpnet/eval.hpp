#pragma once

#include <array>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "lpnet/data.hpp"
#include "lpnet/model.hpp"

namespace lpnet {

inline constexpr std::array<double, 3> kRecallThresholds{0.3, 0.5, 0.7};

struct EvalReport {
  std::map<double, double> r1_at;  // threshold -> fraction with top-1 tIoU > threshold
  double miou = 0.0;
  std::size_t n_samples = 0;

  double r1(double threshold) const { return r1_at.at(threshold); }
};

// Recall is counted with a strict inequality: tIoU = 0.5 does not pass 0.5.
EvalReport summarize(std::span<const double> ious);

// {"R@1,IoU=0.3":…, "R@1,IoU=0.5":…, "R@1,IoU=0.7":…, "mIoU":…, "n":…}
std::string to_json(const EvalReport& report);

struct Prediction {
  std::size_t index = 0;  // proposal slot that won the ranking
  Interval normalized;
  Interval seconds;
  double score = 0.0;
};

// Inference-mode forward pass and top-1 selection.
Prediction infer(const LpNet& model, const nd::Tensor& video, const nd::Tensor& query, double duration);
Prediction infer(const LpNet& model, const ModelInput& input);

// Top-1 tIoU with the normalized ground truth, one per input.
std::vector<double> top1_ious(const LpNet& model, std::span<const ModelInput> inputs);
EvalReport evaluate(const LpNet& model, std::span<const ModelInput> inputs);

}  // namespace lpnet
