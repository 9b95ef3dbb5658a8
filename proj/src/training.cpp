#include "lpnet/training.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace lpnet {

void TrainConfig::validate() const {
  if (!(lambda > 0.0)) throw std::invalid_argument("lambda must be positive");
  if (!(lr > 0.0)) throw std::invalid_argument("lr must be positive");
  if (batch_size == 0) throw std::invalid_argument("batch_size must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw std::invalid_argument("dropout must lie in [0, 1)");
  if (!(val_fraction >= 0.0 && val_fraction < 1.0)) throw std::invalid_argument("val_fraction must lie in [0, 1)");
  if (alternate_streams && freeze_boxes) {
    throw std::invalid_argument("alternate_streams has no IoU stream to alternate with when boxes are frozen");
  }
}

std::vector<double> matching_targets(std::span<const Interval> intervals, const Interval& gt) {
  std::vector<double> out(intervals.size());
  for (std::size_t i = 0; i < intervals.size(); ++i) out[i] = tiou(intervals[i], gt);
  return out;
}

nd::Tensor reg_loss(const nd::Tensor& predicted, std::span<const double> targets) {
  if (predicted.size() != targets.size()) {
    throw nd::DimensionError("reg_loss: " + std::to_string(predicted.size()) + " predictions vs " +
                             std::to_string(targets.size()) + " targets");
  }
  return nd::mse(predicted, nd::Tensor::from(predicted.shape(), {targets.begin(), targets.end()}));
}

double reg_loss(std::span<const double> predicted, std::span<const double> targets) {
  if (predicted.size() != targets.size() || predicted.empty()) {
    throw std::invalid_argument("reg_loss needs equal, non-zero lengths");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < predicted.size(); ++i) total += (predicted[i] - targets[i]) * (predicted[i] - targets[i]);
  return total / static_cast<double>(predicted.size());
}

std::size_t select_proposal_to_adjust(std::span<const Interval> intervals, const Interval& gt) {
  const auto ious = matching_targets(intervals, gt);
  return rank_candidates(ious);
}

nd::Tensor iou_loss(const DecodedBox& box, const Interval& gt, bool giou_fallback) {
  const nd::Tensor gs = nd::Tensor::scalar(gt.start);
  const nd::Tensor ge = nd::Tensor::scalar(gt.end);
  const double s = box.start.item(), e = box.end.item();
  const double overlap = std::min(e, gt.end) - std::max(s, gt.start);
  nd::Tensor extent = nd::sub(box.end, box.start);
  if (overlap > 0.0) {
    nd::Tensor inter = nd::sub(nd::minimum(box.end, ge), nd::maximum(box.start, gs));
    nd::Tensor uni = nd::sub(nd::add_scalar(extent, gt.length()), inter);
    return nd::add_scalar(nd::scale(nd::div(inter, uni), -1.0), 1.0);
  }
  const double hull_value = std::max(e, gt.end) - std::min(s, gt.start);
  if (!giou_fallback || hull_value <= 0.0) return nd::Tensor::scalar(1.0);
  nd::Tensor hull = nd::sub(nd::maximum(box.end, ge), nd::minimum(box.start, gs));
  nd::Tensor uni = nd::add_scalar(extent, gt.length());
  // 1 - (0 - (hull - union) / hull)
  return nd::add_scalar(nd::div(nd::sub(hull, uni), hull), 1.0);
}

nd::Tensor total_loss(const nd::Tensor& l_kl, const nd::Tensor& l_reg, const TrainConfig& cfg) {
  if (!(cfg.lambda > 0.0)) throw std::invalid_argument("lambda must be positive");
  nd::Tensor weighted = nd::scale(l_reg, cfg.lambda);
  return cfg.disable_boundary_loss ? weighted : nd::add(l_kl, weighted);
}

double total_loss(double l_kl, double l_reg, const TrainConfig& cfg) {
  if (!(cfg.lambda > 0.0)) throw std::invalid_argument("lambda must be positive");
  return (cfg.disable_boundary_loss ? 0.0 : l_kl) + cfg.lambda * l_reg;
}

AdamState AdamState::for_params(const ParamSet& params) {
  AdamState state;
  state.m.resize(params.entries().size());
  state.v.resize(params.entries().size());
  return state;
}

void adam_update(std::span<double> param, std::span<const double> grad, std::span<double> m,
                 std::span<double> v, std::size_t step, double lr, double beta1, double beta2, double eps) {
  if (grad.size() != param.size() || m.size() != param.size() || v.size() != param.size()) {
    throw nd::DimensionError("adam_update: parameter, gradient and moments differ in size");
  }
  if (step == 0) throw std::invalid_argument("adam_update: steps count from 1");
  const double t = static_cast<double>(step);
  const double c1 = 1.0 - std::pow(beta1, t);
  const double c2 = 1.0 - std::pow(beta2, t);
  for (std::size_t i = 0; i < param.size(); ++i) {
    m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
    v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
    param[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
  }
}

void adam_step(ParamSet& params, AdamState& state, double lr) {
  const auto& entries = params.entries();
  state.m.resize(entries.size());
  state.v.resize(entries.size());
  ++state.step;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    nd::Tensor t = entries[i].tensor;
    if (!t.has_grad()) continue;
    if (state.m[i].empty()) {
      state.m[i].assign(t.size(), 0.0);
      state.v[i].assign(t.size(), 0.0);
    }
    adam_update(t.mutable_data(), t.grad(), state.m[i], state.v[i], state.step, lr, state.beta1, state.beta2,
                state.eps);
  }
}

SampleLosses compute_sample_losses(const LpNet& model, const ModelInput& input, const TrainConfig& cfg,
                                   const ForwardContext& ctx) {
  const ModelOutput out = model.forward(input.video, input.query, ctx, !cfg.disable_boundary_loss);
  SampleLosses s;
  const auto targets = matching_targets(out.proposals.intervals, input.gt_norm);
  s.l_reg = reg_loss(out.proposals.scores, targets);
  if (cfg.disable_boundary_loss) {
    s.l_kl = nd::Tensor::scalar(0.0);
  } else {
    const RelaxedLabels labels = make_relaxed_labels(input.gt_norm, input.video.dim(0), cfg.relax_radius);
    s.l_kl = kl_boundary_loss(out.boundary, labels,
                              cfg.kl_reverse ? KlDirection::PredictionToLabels : KlDirection::LabelsToPrediction);
  }
  s.loss = total_loss(s.l_kl, s.l_reg, cfg);
  s.adjusted = rank_candidates(targets);
  s.l_iou = iou_loss(decode_box(model.proposals().bank(), s.adjusted), input.gt_norm, cfg.giou_fallback);
  return s;
}

namespace {

Rng keyed_rng(std::uint64_t seed, std::uint64_t key, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(key), static_cast<std::uint32_t>(key >> 32),
                    static_cast<std::uint32_t>(index)};
  return Rng(seq);
}

// Fisher-Yates on our own uniform draws, so the order does not depend on the
// standard library's shuffle.
void shuffle(std::vector<std::size_t>& order, Rng& rng) {
  for (std::size_t i = order.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(nd::uniform01(rng) * static_cast<double>(i));
    std::swap(order[i - 1], order[j]);
  }
}

}  // namespace

StepReport train_step(LpNet& model, std::span<const ModelInput> batch, const TrainConfig& cfg, AdamState& adam,
                      std::uint64_t step_key) {
  if (batch.empty()) throw std::invalid_argument("train_step: empty batch");
  const bool apply_main = !cfg.alternate_streams || adam.step % 2 == 0;
  const bool apply_iou = !cfg.freeze_boxes && (!cfg.alternate_streams || adam.step % 2 == 1);
  const double inv_batch = 1.0 / static_cast<double>(batch.size());
  model.params().clear_grad();

  StepReport report;
  for (std::size_t k = 0; k < batch.size(); ++k) {
    Rng rng = keyed_rng(cfg.seed, step_key, k);
    const ForwardContext ctx{true, cfg.dropout, &rng};
    nd::Tape tape;
    nd::Tensor objective;
    SampleLosses s;
    {
      nd::TapeScope scope(tape);
      s = compute_sample_losses(model, batch[k], cfg, ctx);
      if (!std::isfinite(s.loss.item()) || !std::isfinite(s.l_iou.item())) {
        std::ostringstream msg;
        msg << "non-finite loss on sample '" << batch[k].video_id << "' (step key " << step_key
            << "): l_kl=" << s.l_kl.item() << " l_reg=" << s.l_reg.item() << " l_iou=" << s.l_iou.item()
            << " adjusted=" << s.adjusted;
        throw std::runtime_error(msg.str());
      }
      nd::Tensor main = nd::scale(s.loss, inv_batch);
      nd::Tensor adjust = nd::scale(s.l_iou, inv_batch);
      if (apply_main && apply_iou) {
        objective = nd::add(main, adjust);
      } else {
        objective = apply_main ? main : adjust;
      }
    }
    tape.backward(objective);
    report.loss += s.loss.item() * inv_batch;
    report.l_kl += s.l_kl.item() * inv_batch;
    report.l_reg += s.l_reg.item() * inv_batch;
    report.l_iou += s.l_iou.item() * inv_batch;
    report.adjusted_indices.push_back(s.adjusted);
  }
  adam_step(model.params(), adam, cfg.lr);
  return report;
}

std::string EpochMetrics::to_json_line() const {
  nlohmann::ordered_json j;
  j["epoch"] = epoch;
  j["loss"] = loss;
  j["l_kl"] = l_kl;
  j["l_reg"] = l_reg;
  j["val_miou"] = val_miou;
  j["val_r1_05"] = val_r1_05;
  return j.dump();
}

FitResult fit(const ModelConfig& model_cfg, std::span<const ModelInput> train,
              std::span<const ModelInput> validation, const TrainConfig& cfg, const EpochObserver& observer) {
  cfg.validate();
  if (train.empty()) throw std::invalid_argument("fit: the training split is empty");
  if (validation.empty()) throw std::invalid_argument("fit: the validation split is empty");
  ModelConfig mc = model_cfg;
  if (cfg.disable_mhsa) mc.proposals.use_mhsa = false;
  LpNet model(mc, cfg.seed);

  std::vector<EpochMetrics> log;
  std::vector<std::vector<ProposalRow>> trace;
  if (cfg.trace_proposals) trace.push_back(proposal_rows(model.proposals().bank()));

  AdamState adam = AdamState::for_params(model.params());
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  Rng shuffle_rng = keyed_rng(cfg.seed, 0x5eed5u, 0);

  double best = -1.0;
  std::size_t best_epoch = 0, since_best = 0;
  bool stopped = false;
  ParamSet::Snapshot best_params = model.params().snapshot();
  std::vector<ModelInput> batch;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    shuffle(order, shuffle_rng);
    EpochMetrics m;
    m.epoch = epoch;
    for (std::size_t begin = 0, b = 0; begin < order.size(); begin += cfg.batch_size, ++b) {
      const std::size_t end = std::min(order.size(), begin + cfg.batch_size);
      batch.clear();
      for (std::size_t i = begin; i < end; ++i) batch.push_back(train[order[i]]);
      const StepReport r = train_step(model, batch, cfg, adam, (static_cast<std::uint64_t>(epoch) << 32) | b);
      const double share = static_cast<double>(batch.size()) / static_cast<double>(order.size());
      m.loss += r.loss * share;
      m.l_kl += r.l_kl * share;
      m.l_reg += r.l_reg * share;
    }
    model.params().clear_grad();
    const EvalReport val = evaluate(model, validation);
    m.val_miou = val.miou;
    m.val_r1_05 = val.r1(0.5);
    log.push_back(m);
    if (cfg.trace_proposals) trace.push_back(proposal_rows(model.proposals().bank()));
    if (observer) observer(m);

    if (m.val_miou > best) {
      best = m.val_miou;
      best_epoch = epoch;
      best_params = model.params().snapshot();
      since_best = 0;
    } else if (cfg.patience > 0 && ++since_best >= cfg.patience) {
      stopped = true;
      break;
    }
  }
  model.params().restore(best_params);
  return FitResult{std::move(model), std::move(log), best_epoch, stopped, std::move(trace)};
}

Split split_validation(std::span<const ModelInput> inputs, double fraction, std::uint64_t seed) {
  if (!(fraction >= 0.0 && fraction < 1.0)) throw std::invalid_argument("validation fraction must lie in [0, 1)");
  std::vector<std::size_t> order(inputs.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng = keyed_rng(seed, 0xa11du, 0);
  shuffle(order, rng);
  const auto n_val = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(inputs.size())));
  Split split;
  for (std::size_t i = 0; i < order.size(); ++i) {
    (i + n_val < order.size() ? split.train : split.validation).push_back(inputs[order[i]]);
  }
  return split;
}

}  // namespace lpnet
