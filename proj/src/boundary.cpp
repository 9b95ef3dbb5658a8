#include "lpnet/boundary.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace lpnet {

std::vector<double> relax_labels(std::size_t boundary_index, std::size_t length, std::size_t radius) {
  if (boundary_index >= length) throw std::out_of_range("boundary index outside the sequence");
  std::vector<double> y(length, 0.0);
  const double reach = static_cast<double>(radius + 1);
  const std::size_t lo = boundary_index >= radius ? boundary_index - radius : 0;
  const std::size_t hi = std::min(length - 1, boundary_index + radius);
  double total = 0.0;
  for (std::size_t t = lo; t <= hi; ++t) {
    const double dist = std::abs(static_cast<double>(t) - static_cast<double>(boundary_index));
    y[t] = 1.0 - dist / reach;
    total += y[t];
  }
  for (double& v : y) v /= total;
  return y;
}

std::size_t frame_index(double normalized_time, std::size_t length) {
  if (length == 0) throw std::invalid_argument("empty sequence");
  const double pos = std::round(std::clamp(normalized_time, 0.0, 1.0) * static_cast<double>(length - 1));
  return static_cast<std::size_t>(pos);
}

RelaxedLabels make_relaxed_labels(const Interval& gt, std::size_t length, std::size_t radius) {
  RelaxedLabels labels;
  labels.radius = radius;
  labels.y_start = nd::Tensor::from({length}, relax_labels(frame_index(gt.start, length), length, radius));
  labels.y_end = nd::Tensor::from({length}, relax_labels(frame_index(gt.end, length), length, radius));
  return labels;
}

namespace {

nd::Tensor kl_term(const nd::Tensor& logits, const nd::Tensor& probs, const nd::Tensor& labels,
                   KlDirection direction) {
  if (labels.size() != logits.size()) {
    throw nd::DimensionError("boundary labels " + nd::to_string(labels.shape()) + " vs logits " +
                             nd::to_string(logits.shape()));
  }
  const auto y = labels.data();
  if (direction == KlDirection::LabelsToPrediction) {
    double entropy_term = 0.0;
    for (double v : y)
      if (v > 0.0) entropy_term += v * std::log(v);
    nd::Tensor cross = nd::sum(nd::mul(labels, nd::log_softmax(logits, 0)));
    return nd::add_scalar(nd::scale(cross, -1.0), entropy_term);
  }
  std::vector<double> log_y(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) log_y[i] = std::log(std::max(y[i], kLabelFloor));
  nd::Tensor log_ratio = nd::sub(nd::log_softmax(logits, 0), nd::Tensor::from(labels.shape(), std::move(log_y)));
  return nd::sum(nd::mul(probs, log_ratio));
}

}  // namespace

nd::Tensor kl_boundary_loss(const BoundaryDistributions& pred, const RelaxedLabels& labels,
                            KlDirection direction) {
  return nd::add(kl_term(pred.logits_start, pred.p_start, labels.y_start, direction),
                 kl_term(pred.logits_end, pred.p_end, labels.y_end, direction));
}

BoundaryPredictor BoundaryPredictor::create(ParamSet& params, std::size_t d, std::size_t hidden, Rng& rng) {
  if (hidden == 0) throw std::invalid_argument("boundary LSTM width must be positive");
  BoundaryPredictor bp;
  bp.start_fw_ = create_lstm(params, "boundary.start.fw", d, hidden, rng);
  bp.start_bw_ = create_lstm(params, "boundary.start.bw", d, hidden, rng);
  bp.end_fw_ = create_lstm(params, "boundary.end.fw", 2 * hidden, hidden, rng);
  bp.end_bw_ = create_lstm(params, "boundary.end.bw", 2 * hidden, hidden, rng);
  // No bias: a constant logit offset cancels in the softmax over time.
  bp.start_head_ = Linear::create(params, "boundary.start.head", 2 * hidden, 1, rng, false);
  bp.end_head_ = Linear::create(params, "boundary.end.head", 2 * hidden, 1, rng, false);
  return bp;
}

BoundaryDistributions BoundaryPredictor::apply(const nd::Tensor& v_fused, const ForwardContext& ctx) const {
  const std::size_t T = v_fused.dim(0);
  nd::Tensor h_start = nd::bilstm(v_fused, start_fw_, start_bw_);
  nd::Tensor h_end = nd::bilstm(ctx.drop(h_start), end_fw_, end_bw_);
  BoundaryDistributions out;
  out.logits_start = nd::reshape(start_head_.apply(h_start), {T});
  out.logits_end = nd::reshape(end_head_.apply(h_end), {T});
  out.p_start = nd::softmax(out.logits_start, 0);
  out.p_end = nd::softmax(out.logits_end, 0);
  return out;
}

}  // namespace lpnet
