#include "lpnet/eval.hpp"

#include <algorithm>
#include <json.hpp>
#include <stdexcept>

namespace lpnet {

EvalReport summarize(std::span<const double> ious) {
  if (ious.empty()) throw std::invalid_argument("cannot evaluate an empty dataset");
  EvalReport report;
  report.n_samples = ious.size();
  double total = 0.0;
  for (double iou : ious) total += iou;
  report.miou = total / static_cast<double>(ious.size());
  for (double theta : kRecallThresholds) {
    const auto hits = std::count_if(ious.begin(), ious.end(), [theta](double iou) { return iou > theta; });
    report.r1_at[theta] = static_cast<double>(hits) / static_cast<double>(ious.size());
  }
  return report;
}

std::string to_json(const EvalReport& report) {
  nlohmann::ordered_json j;
  j["R@1,IoU=0.3"] = report.r1(0.3);
  j["R@1,IoU=0.5"] = report.r1(0.5);
  j["R@1,IoU=0.7"] = report.r1(0.7);
  j["mIoU"] = report.miou;
  j["n"] = report.n_samples;
  return j.dump();
}

Prediction infer(const LpNet& model, const nd::Tensor& video, const nd::Tensor& query, double duration) {
  if (!(duration > 0.0)) throw std::invalid_argument("duration must be positive");
  const ForwardContext ctx;
  const ModelOutput out = model.forward(video, query, ctx, false);
  const auto scores = out.proposals.scores.data();
  Prediction p;
  p.index = rank_candidates(scores);
  p.score = scores[p.index];
  p.normalized = out.proposals.intervals[p.index];
  p.normalized.start = std::clamp(p.normalized.start, 0.0, 1.0);
  p.normalized.end = std::clamp(p.normalized.end, p.normalized.start, 1.0);
  p.seconds = {p.normalized.start * duration, p.normalized.end * duration};
  return p;
}

Prediction infer(const LpNet& model, const ModelInput& input) {
  return infer(model, input.video, input.query, input.duration);
}

std::vector<double> top1_ious(const LpNet& model, std::span<const ModelInput> inputs) {
  std::vector<double> ious;
  ious.reserve(inputs.size());
  for (const auto& in : inputs) ious.push_back(tiou(infer(model, in).normalized, in.gt_norm));
  return ious;
}

EvalReport evaluate(const LpNet& model, std::span<const ModelInput> inputs) {
  const auto ious = top1_ious(model, inputs);
  return summarize(ious);
}

}  // namespace lpnet
