#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "lpnet/data.hpp"
#include "lpnet/eval.hpp"
#include "lpnet/model.hpp"

namespace lpnet {

struct TrainConfig {
  double lambda = 100.0;
  double lr = 1e-4;
  std::size_t epochs = 100;
  std::size_t batch_size = 16;
  std::uint64_t seed = 0;
  double dropout = 0.1;
  std::size_t patience = 10;  // 0 disables early stopping
  std::size_t relax_radius = 1;
  bool disable_mhsa = false;
  bool disable_boundary_loss = false;

  // Zero-overlap proposals fall back to 1 - GIoU so the adjustor still moves them.
  bool giou_fallback = true;
  bool kl_reverse = false;
  // Even batches apply L, odd batches apply the IoU loss.
  bool alternate_streams = false;
  // Keeps the box logits at their initialization (ablation).
  bool freeze_boxes = false;
  // Share of the training pairs held out when no validation set is given.
  double val_fraction = 0.1;
  bool trace_proposals = false;

  void validate() const;
};

// tIoU of every proposal with the ground truth; the rating head's targets.
std::vector<double> matching_targets(std::span<const Interval> intervals, const Interval& gt);

// Mean squared error over the candidates.
nd::Tensor reg_loss(const nd::Tensor& predicted, std::span<const double> targets);
double reg_loss(std::span<const double> predicted, std::span<const double> targets);

// Index of the proposal with the highest tIoU, ties to the lowest index.
std::size_t select_proposal_to_adjust(std::span<const Interval> intervals, const Interval& gt);

// 1 - tIoU while the box overlaps the ground truth. Without overlap it is
// 1 - GIoU when `giou_fallback` is set and a constant 1 otherwise.
nd::Tensor iou_loss(const DecodedBox& box, const Interval& gt, bool giou_fallback = true);

nd::Tensor total_loss(const nd::Tensor& l_kl, const nd::Tensor& l_reg, const TrainConfig& cfg);
double total_loss(double l_kl, double l_reg, const TrainConfig& cfg);

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t step = 0;
  std::vector<std::vector<double>> m, v;  // one pair per parameter, lazily sized

  static AdamState for_params(const ParamSet& params);
};

// One bias-corrected Adam update in place; `step` counts from 1.
void adam_update(std::span<double> param, std::span<const double> grad, std::span<double> m,
                 std::span<double> v, std::size_t step, double lr, double beta1 = 0.9,
                 double beta2 = 0.999, double eps = 1e-8);

// Advances the step counter and updates every parameter that holds a
// gradient. Parameters without one are left untouched.
void adam_step(ParamSet& params, AdamState& state, double lr);

// The graph of one sample. `loss` (L = L_KL + lambda * L_reg) reaches every
// weight except the box logits; `l_iou` reaches only the box logits.
struct SampleLosses {
  nd::Tensor loss, l_kl, l_reg, l_iou;
  std::size_t adjusted = 0;
};
SampleLosses compute_sample_losses(const LpNet& model, const ModelInput& input, const TrainConfig& cfg,
                                   const ForwardContext& ctx);

struct StepReport {
  double loss = 0.0;
  double l_kl = 0.0;
  double l_reg = 0.0;
  double l_iou = 0.0;
  std::vector<std::size_t> adjusted_indices;
};

// Forward, backward and one Adam step on `batch`. Both losses are averaged
// over the batch. `step_key` feeds the dropout streams so that every step
// draws fresh masks.
StepReport train_step(LpNet& model, std::span<const ModelInput> batch, const TrainConfig& cfg,
                      AdamState& adam, std::uint64_t step_key);

struct EpochMetrics {
  std::size_t epoch = 0;
  double loss = 0.0;
  double l_kl = 0.0;
  double l_reg = 0.0;
  double val_miou = 0.0;
  double val_r1_05 = 0.0;

  std::string to_json_line() const;
};

struct FitResult {
  LpNet model;  // parameters of the best validation epoch
  std::vector<EpochMetrics> log;
  std::size_t best_epoch = 0;  // 0 only when no epoch ran
  bool stopped_early = false;
  // Proposal boxes before training and after every epoch, when traced.
  std::vector<std::vector<ProposalRow>> proposal_trace;
};

// Called after every epoch with the metrics of that epoch.
using EpochObserver = std::function<void(const EpochMetrics&)>;

FitResult fit(const ModelConfig& model_cfg, std::span<const ModelInput> train,
              std::span<const ModelInput> validation, const TrainConfig& cfg,
              const EpochObserver& observer = {});

// Seeded shuffle, then the last round(fraction * n) inputs become validation.
struct Split {
  std::vector<ModelInput> train, validation;
};
Split split_validation(std::span<const ModelInput> inputs, double fraction, std::uint64_t seed);

}  // namespace lpnet
