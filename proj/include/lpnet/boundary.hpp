#pragma once

#include <vector>

#include "lpnet/intervals.hpp"
#include "lpnet/layers.hpp"

namespace lpnet {

struct BoundaryDistributions {
  nd::Tensor logits_start, logits_end;  // [T]
  nd::Tensor p_start, p_end;            // softmax over time
};

// Soft start/end targets. Each vector is non-negative and sums to one.
struct RelaxedLabels {
  nd::Tensor y_start, y_end;  // [T]
  std::size_t radius = 1;
};

// Triangular kernel around `boundary_index`: weight 1 - |t - idx| / (radius + 1)
// for |t - idx| <= radius, truncated at the sequence ends, then normalized.
std::vector<double> relax_labels(std::size_t boundary_index, std::size_t length, std::size_t radius);

// Frame index of a normalized time, consistent with the [0, T-1] mapping
// used by temporal RoIAlign.
std::size_t frame_index(double normalized_time, std::size_t length);

RelaxedLabels make_relaxed_labels(const Interval& gt_normalized, std::size_t length, std::size_t radius);

enum class KlDirection {
  LabelsToPrediction,  // D(Y || P), finite for any softmax prediction
  PredictionToLabels,  // D(P || Y), labels floored at kLabelFloor
};

inline constexpr double kLabelFloor = 1e-12;

// D(Y_s || P_s) + D(Y_e || P_e) by default; zero-weight label entries
// contribute nothing.
nd::Tensor kl_boundary_loss(const BoundaryDistributions& pred, const RelaxedLabels& labels,
                            KlDirection direction = KlDirection::LabelsToPrediction);

// Start head: BiLSTM over the fused features; end head: BiLSTM over the start
// head's states. A linear layer per head produces one logit per frame.
class BoundaryPredictor {
 public:
  static BoundaryPredictor create(ParamSet& params, std::size_t d, std::size_t hidden, Rng& rng);
  BoundaryDistributions apply(const nd::Tensor& v_fused, const ForwardContext& ctx) const;

 private:
  nd::LstmWeights start_fw_, start_bw_, end_fw_, end_bw_;
  Linear start_head_, end_head_;
};

}  // namespace lpnet
