#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "acceptance.hpp"
#include "lpnet/boundary.hpp"
#include "lpnet/encoder.hpp"
#include "lpnet/layers.hpp"
#include "lpnet/nd/grad_check.hpp"
#include "lpnet/nd/ops.hpp"
#include "lpnet/nd/recurrent.hpp"
#include "lpnet/proposals.hpp"

namespace lpnet::acceptance {

namespace {

constexpr double kGradTolerance = 1e-4;
constexpr int kGradSeeds = 20;
constexpr std::size_t kMaxExtent = 8;

std::vector<double> normals(std::size_t n, Rng& rng, double scale = 1.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = scale * standard_normal(rng);
  return v;
}

nd::Tensor leaf(nd::Shape shape, Rng& rng, double scale = 1.0) {
  const std::size_t n = nd::numel(shape);
  return nd::Tensor::parameter(std::move(shape), normals(n, rng, scale));
}

std::size_t extent(Rng& rng, std::size_t lo, std::size_t hi = kMaxExtent) {
  return lo + static_cast<std::size_t>(nd::uniform01(rng) * static_cast<double>(hi - lo + 1));
}

// sum(out * R) for a fixed random R of matching shape.
class Probe {
 public:
  explicit Probe(std::uint64_t seed) : rng_(seed) {}
  nd::Tensor operator()(const nd::Tensor& out) {
    if (weights_.size() != out.size()) weights_ = normals(out.size(), rng_);
    return nd::sum(nd::mul(out, nd::Tensor::from(out.shape(), weights_)));
  }

 private:
  Rng rng_;
  std::vector<double> weights_;
};

struct GradLedger {
  double worst = 0.0;
  std::string worst_name;
  std::size_t checks = 0;
  std::size_t unresolved = 0, resolved = 0;

  void record(const std::string& name, double err) {
    if (err > worst) {
      worst = err;
      worst_name = name;
    }
  }

  void check(const std::string& name, const std::function<nd::Tensor()>& f, std::vector<nd::Tensor> inputs,
             std::optional<std::size_t> entries = std::nullopt, std::uint64_t seed = 0) {
    nd::GradCheckOptions opts;
    opts.max_entries_per_input = entries;
    opts.seed = seed;
    ++checks;
    record(name, nd::grad_check(f, std::move(inputs), opts).max_rel_err);
  }

  // Same relative error, but a probe where both the tape and the central
  // difference fall below the difference's round-off resolution (about
  // 2e-11 |f| at h = 1e-5) carries no signal and is counted, not scored.
  void check_resolved(const std::string& name, const std::function<nd::Tensor()>& f,
                      std::vector<nd::Tensor> inputs, std::size_t entries, std::uint64_t seed) {
    constexpr double h = 1e-5;
    for (auto& t : inputs) t.clear_grad();
    double f0 = 0.0;
    {
      nd::Tape tape;
      nd::Tensor out;
      {
        nd::TapeScope scope(tape);
        out = f();
      }
      f0 = out.item();
      tape.backward(out);
    }
    auto value = [&] { return f().item(); };
    const double resolution = 1e-6 * std::max(1.0, std::abs(f0));
    Rng pick(seed);
    ++checks;
    for (auto& t : inputs) {
      std::vector<double> analytic(t.size(), 0.0);
      if (t.has_grad()) std::copy(t.grad().begin(), t.grad().end(), analytic.begin());
      std::vector<std::size_t> idx(t.size());
      std::iota(idx.begin(), idx.end(), 0);
      std::shuffle(idx.begin(), idx.end(), pick);
      idx.resize(std::min(entries, idx.size()));
      auto x = t.mutable_data();
      for (std::size_t i : idx) {
        const double saved = x[i];
        x[i] = saved + h;
        const double up = value();
        x[i] = saved - h;
        const double down = value();
        x[i] = saved;
        const double numeric = (up - down) / (2.0 * h);
        if (std::abs(numeric) < resolution && std::abs(analytic[i]) < resolution) {
          ++unresolved;
          continue;
        }
        ++resolved;
        record(name, std::abs(analytic[i] - numeric) / std::max(1e-8, std::abs(numeric)));
      }
    }
  }
};

void check_elementwise_ops(GradLedger& g, Rng& rng, std::uint64_t seed) {
  using namespace nd;
  const std::size_t m = extent(rng, 1), n = extent(rng, 1);
  Probe p(seed + 1000);
  Tensor a = leaf({m, n}, rng), b = leaf({m, n}, rng), row = leaf({n}, rng), col = leaf({m}, rng);
  std::vector<double> pos(m * n);
  for (auto& x : pos) x = 0.5 + uniform01(rng);
  Tensor positive = Tensor::parameter({m, n}, pos);
  g.check("add", [&] { return p(add(a, b)); }, {a, b});
  g.check("sub", [&] { return p(sub(a, b)); }, {a, b});
  g.check("mul", [&] { return p(mul(a, b)); }, {a, b});
  g.check("div", [&] { return p(div(a, positive)); }, {a, positive});
  g.check("minimum", [&] { return p(minimum(a, b)); }, {a, b});
  g.check("maximum", [&] { return p(maximum(a, b)); }, {a, b});
  g.check("relu", [&] { return p(relu(a)); }, {a});
  g.check("sigmoid", [&] { return p(sigmoid(a)); }, {a});
  g.check("tanh", [&] { return p(tanh(a)); }, {a});
  g.check("scale", [&] { return p(scale(add_scalar(a, 0.3), -1.7)); }, {a});
  g.check("add_bias", [&] { return p(add_bias(a, row)); }, {a, row});
  g.check("mul_columns", [&] { return p(mul_columns(a, row)); }, {a, row});
  g.check("repeat_rows", [&] { return p(repeat_rows(a, 2)); }, {a});
  g.check("transpose", [&] { return p(transpose(a)); }, {a});
  g.check("reshape", [&] { return p(reshape(a, {n, m})); }, {a});
  g.check("softmax", [&] { return p(softmax(a, 1)); }, {a});
  g.check("softmax0", [&] { return p(softmax(a, 0)); }, {a});
  g.check("log_softmax", [&] { return p(log_softmax(a, 1)); }, {a});
  g.check("concat", [&] { return p(concat({a, b}, 1)); }, {a, b});
  g.check("slice", [&] { return p(slice(a, 0, 0, (m + 1) / 2)); }, {a});
  g.check("mean", [&] { return mean(a); }, {a});
  g.check("mse", [&] { return mse(a, b); }, {a, b});
  g.check("weighted_sum", [&] { return p(weighted_sum(col, a)); }, {col, a});
  if (n > 1) {
    Tensor gain = leaf({n}, rng), bias = leaf({n}, rng);
    g.check("layernorm", [&] { return p(layernorm(a, gain, bias)); }, {a, gain, bias});
  }
  const std::size_t k = 2 * extent(rng, 0, 3) + 1, out = extent(rng, 1);
  Tensor kernel = leaf({k, n, out}, rng), kb = leaf({out}, rng);
  g.check("conv1d", [&] { return p(conv1d(a, kernel, kb)); }, {a, kernel, kb});
  Tensor right = leaf({n, out}, rng);
  g.check("matmul", [&] { return p(matmul(a, right)); }, {a, right});
  Rng drop(seed);
  const Rng drop_start = drop;
  g.check("dropout", [&] {
    drop = drop_start;
    return p(dropout(a, 0.3, true, drop));
  }, {a});
}

void check_model_ops(GradLedger& g, Rng& rng, std::uint64_t seed) {
  Probe p(seed + 2000);
  const std::size_t T = extent(rng, 2), d = extent(rng, 1), H = extent(rng, 1, 4);
  nd::Tensor x = leaf({T, d}, rng);
  nd::LstmWeights fw{leaf({d, 4 * H}, rng, 0.5), leaf({H, 4 * H}, rng, 0.5), leaf({4 * H}, rng, 0.5)};
  nd::LstmWeights bw{leaf({d, 4 * H}, rng, 0.5), leaf({H, 4 * H}, rng, 0.5), leaf({4 * H}, rng, 0.5)};
  g.check("bilstm", [&] { return p(nd::bilstm(x, fw, bw)); },
          {x, fw.input_weight, fw.recurrent_weight, fw.bias, bw.input_weight, bw.recurrent_weight, bw.bias});

  std::vector<Interval> spans(extent(rng, 1, 4));
  for (auto& s : spans) {
    s = {nd::uniform01(rng), nd::uniform01(rng)};
    if (s.start > s.end) std::swap(s.start, s.end);
  }
  const RoiConfig roi{extent(rng, 1), extent(rng, 1, 3)};
  g.check("roialign", [&] { return p(temporal_roialign(x, spans, roi)); }, {x});

  const std::size_t n = extent(rng, 1, 4), l = extent(rng, 1, 4);
  nd::Tensor cand = leaf({n * l, d}, rng), gates = leaf({n, d}, rng);
  nd::Tensor wp = leaf({d, d}, rng), wc = leaf({l * d, d}, rng);
  g.check("dynamic_interact", [&] { return p(dynamic_interact(cand, gates, wp, wc)); }, {cand, gates, wp, wc});

  const std::size_t M = extent(rng, 1);
  nd::Tensor q = leaf({M, d}, rng), sim_w = leaf({3 * d}, rng), pool_w = leaf({d}, rng);
  g.check("similarity", [&] { return p(similarity_matrix(x, q, sim_w)); }, {x, q, sim_w});
  g.check("sentence_pool", [&] { return p(sentence_pool(q, pool_w)); }, {q, pool_w});

  ParamSet params;
  const std::size_t heads = extent(rng, 1, 2), width = heads * extent(rng, 1, 4);
  MultiHeadAttention mha = MultiHeadAttention::create(params, "mha", width, heads, rng);
  nd::Tensor y = leaf({T, width}, rng);
  std::vector<nd::Tensor> mha_inputs{y};
  for (const auto& e : params.entries()) mha_inputs.push_back(e.tensor);
  g.check("attention", [&] { return p(mha.apply(y)); }, mha_inputs);

  nd::Tensor ls = leaf({T}, rng), le = leaf({T}, rng);
  double s = nd::uniform01(rng), e = nd::uniform01(rng);
  if (s > e) std::swap(s, e);
  const RelaxedLabels labels = make_relaxed_labels({s, e}, T, extent(rng, 0, 2));
  auto dists = [&] {
    BoundaryDistributions b;
    b.logits_start = ls;
    b.logits_end = le;
    b.p_start = nd::softmax(ls, 0);
    b.p_end = nd::softmax(le, 0);
    return b;
  };
  g.check("kl_boundary", [&] { return kl_boundary_loss(dists(), labels); }, {ls, le});

  // The IoU loss is piecewise smooth; probe it away from coincident endpoints.
  for (int tries = 0; tries < 100; ++tries) {
    ProposalBank bank{leaf({1, 2}, rng), nd::Tensor::zeros({1, 1}), 1.0};
    const Interval box = decode_boxes(bank)[0];
    Interval gt{nd::uniform01(rng), nd::uniform01(rng)};
    if (gt.start > gt.end) std::swap(gt.start, gt.end);
    const double margin = 1e-3;
    const double ends[] = {box.start, box.end, gt.start, gt.end};
    bool clear = box.start > margin && box.end < 1.0 - margin && gt.length() > margin;
    for (int i = 0; i < 4; ++i)
      for (int j = i + 1; j < 4; ++j) clear = clear && std::abs(ends[i] - ends[j]) > margin;
    const bool nested = (box.start < gt.start && gt.end < box.end) || (gt.start < box.start && box.end < gt.end);
    if (!clear || nested) continue;
    nd::Tensor logits = bank.box_logits;
    g.check("iou_loss", [&] { return iou_loss(decode_box(bank, 0), gt); }, {logits});
    break;
  }
}

void check_composed_loss(GradLedger& g, Rng& rng, std::uint64_t seed) {
  ModelConfig cfg;
  cfg.video_dim = extent(rng, 2);
  cfg.query_dim = extent(rng, 2);
  cfg.encoder = EncoderConfig{8, 1, 3, 2};
  cfg.proposals.num_proposals = extent(rng, 2);
  cfg.proposals.roi.bins = extent(rng, 2);
  cfg.proposals.max_length = 0.5;
  cfg.proposals.feature_init_std = 1.0;
  LpNet model(cfg, seed);

  SynthSpec spec;
  spec.num_samples = 1;
  spec.frames = extent(rng, 4);
  spec.feature_dim = cfg.video_dim;
  spec.vocab_size = 6;
  spec.min_words = 2;
  spec.max_words = 4;
  spec.seed = seed;
  const auto inputs = prepare_inputs(synth_generate(spec), EmbeddingTable::hashed(cfg.query_dim));

  TrainConfig train;
  train.dropout = 0.0;
  std::vector<nd::Tensor> weights, boxes;
  for (const auto& e : model.params().entries()) {
    // Zero-initialized biases can sit a ReLU exactly on its kink; move off it.
    nd::Tensor t = e.tensor;
    for (auto& x : t.mutable_data()) x += 0.1 * standard_normal(rng);
    (LpNet::is_box_parameter(e.name) ? boxes : weights).push_back(t);
  }
  // Eight probes per tensor keep the check inside the runtime budget.
  g.check_resolved("composed L",
                   [&] { return compute_sample_losses(model, inputs[0], train, ForwardContext{}).loss; }, weights, 8,
                   seed);
  g.check_resolved("composed L_IoU",
                   [&] { return compute_sample_losses(model, inputs[0], train, ForwardContext{}).l_iou; }, boxes,
                   2 * kMaxExtent, seed);
}

// Fraction of a 1e-5 grid over [0, 1] covered by both / either interval.
double grid_tiou(const Interval& a, const Interval& b) {
  constexpr std::size_t n = 100000;
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = (static_cast<double>(i) + 0.5) / static_cast<double>(n);
    const bool in_a = a.start <= x && x < a.end, in_b = b.start <= x && x < b.end;
    inter += in_a && in_b;
    uni += in_a || in_b;
  }
  return uni ? static_cast<double>(inter) / static_cast<double>(uni) : 0.0;
}

// Average of linearly interpolated reads at evenly spaced sample points per bin.
std::vector<double> naive_roialign(const nd::Tensor& v, const Interval& iv, std::size_t bins, std::size_t samples) {
  const std::size_t T = v.dim(0), d = v.dim(1);
  const double last = static_cast<double>(T - 1);
  const double a = iv.start * last;
  const double b = iv.end - iv.start < 1e-6 ? a : iv.end * last;
  std::vector<double> out(bins * d, 0.0);
  for (std::size_t k = 0; k < bins; ++k)
    for (std::size_t j = 0; j < samples; ++j) {
      const double u = (static_cast<double>(k) + (static_cast<double>(j) + 0.5) / static_cast<double>(samples)) /
                       static_cast<double>(bins);
      const double x = std::min(a + (b - a) * u, last);
      const std::size_t lo = static_cast<std::size_t>(x);
      const std::size_t hi = std::min(lo + 1, T - 1);
      const double w = x - static_cast<double>(lo);
      for (std::size_t c = 0; c < d; ++c)
        out[k * d + c] += ((1.0 - w) * v.at(lo, c) + w * v.at(hi, c)) / static_cast<double>(samples);
    }
  return out;
}

bool all_zero(const nd::Tensor& t) {
  if (!t.has_grad()) return true;
  const auto g = t.grad();
  return std::all_of(g.begin(), g.end(), [](double x) { return x == 0.0; });
}

}  // namespace

Outcome gradient_integrity() {
  GradLedger g;
  for (int seed = 0; seed < kGradSeeds; ++seed) {
    Rng rng(static_cast<std::uint64_t>(seed) * 7919 + 1);
    check_elementwise_ops(g, rng, static_cast<std::uint64_t>(seed));
    check_model_ops(g, rng, static_cast<std::uint64_t>(seed));
    check_composed_loss(g, rng, static_cast<std::uint64_t>(seed));
  }
  return {g.worst < kGradTolerance,
          fmt("%zu checks over %d seeds, max rel err %.2e (%s), tolerance %.0e; composed-loss probes: %zu scored, "
              "%zu below finite-difference resolution",
              g.checks, kGradSeeds, g.worst, g.worst_name.c_str(), kGradTolerance, g.resolved, g.unresolved)};
}

Outcome interval_oracles() {
  Rng rng(2024);
  double tiou_err = 0.0;
  for (int i = 0; i < 1000; ++i) {
    Interval a{nd::uniform01(rng), nd::uniform01(rng)}, b{nd::uniform01(rng), nd::uniform01(rng)};
    if (a.start > a.end) std::swap(a.start, a.end);
    if (b.start > b.end) std::swap(b.start, b.end);
    tiou_err = std::max(tiou_err, std::abs(tiou(a, b) - grid_tiou(a, b)));
  }
  double roi_err = 0.0;
  for (int i = 0; i < 200; ++i) {
    const std::size_t T = extent(rng, 1, 64), d = extent(rng, 1, 8);
    const std::size_t bins = extent(rng, 1, 16), samples = extent(rng, 1, 3);
    const nd::Tensor v = nd::Tensor::from({T, d}, normals(T * d, rng));
    Interval iv{nd::uniform01(rng), nd::uniform01(rng)};
    if (iv.start > iv.end) std::swap(iv.start, iv.end);
    if (i % 20 == 0) iv.end = iv.start;
    const nd::Tensor out = temporal_roialign(v, iv, RoiConfig{bins, samples});
    const auto ref = naive_roialign(v, iv, bins, samples);
    for (std::size_t k = 0; k < ref.size(); ++k) roi_err = std::max(roi_err, std::abs(out[k] - ref[k]));
  }
  return {tiou_err <= 2e-4 && roi_err <= 1e-10,
          fmt("tiou vs grid max err %.2e (tol 2e-4) on 1000 pairs; roialign vs loop max err %.2e (tol 1e-10) on 200",
              tiou_err, roi_err)};
}

Outcome stream_separation() {
  ModelConfig cfg = desk_model_config();
  cfg.video_dim = 16;
  cfg.query_dim = 16;
  LpNet model(cfg, 11);
  SynthSpec spec;
  spec.num_samples = 8;
  spec.frames = 24;
  spec.feature_dim = 16;
  spec.seed = 12;
  const auto batch = prepare_inputs(synth_generate(spec), EmbeddingTable::hashed(16));
  TrainConfig train = desk_train_config(13);
  Rng dropout_rng(14);
  ForwardContext ctx{true, train.dropout, &dropout_rng};

  std::size_t leaks = 0, box_moved = 0, other_moved = 0;
  for (int stream = 0; stream < 2; ++stream) {
    model.params().clear_grad();
    for (const auto& input : batch) {
      nd::Tape tape;
      nd::Tensor target;
      {
        nd::TapeScope scope(tape);
        const SampleLosses s = compute_sample_losses(model, input, train, ctx);
        target = stream == 0 ? s.loss : s.l_iou;
      }
      tape.backward(target);
    }
    for (const auto& e : model.params().entries()) {
      const bool box = LpNet::is_box_parameter(e.name);
      const bool zero = all_zero(e.tensor);
      if (stream == 0 ? box : !box) {
        leaks += !zero;
      } else {
        (box ? box_moved : other_moved) += !zero;
      }
    }
  }
  const std::size_t others = model.params().entries().size() - 1;
  return {leaks == 0 && box_moved == 1 && other_moved == others,
          fmt("%zu leaking buffers; L reached %zu/%zu weight tensors, L_IoU reached the box logits: %s", leaks,
              other_moved, others, box_moved ? "yes" : "no")};
}

}  // namespace lpnet::acceptance
