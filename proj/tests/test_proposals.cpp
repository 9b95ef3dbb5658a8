#include "lpnet/proposals.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "test_util.hpp"

using namespace lpnet;
using lpnet::testing::check_gradient;
using lpnet::testing::Projection;
using lpnet::testing::random_const;
using lpnet::testing::random_leaf;

namespace {

double logit(double p) { return std::log(p / (1.0 - p)); }

// Bin centres of the continuous span, each read by linear interpolation
// between its two neighbouring frames.
std::vector<double> naive_roialign(const nd::Tensor& v, const Interval& iv, std::size_t bins) {
  const std::size_t T = v.dim(0), d = v.dim(1);
  const double a = iv.start * static_cast<double>(T - 1);
  const double b = iv.end - iv.start < 1e-6 ? a : iv.end * static_cast<double>(T - 1);
  std::vector<double> out;
  for (std::size_t k = 0; k < bins; ++k) {
    const double x = a + (b - a) * (static_cast<double>(k) + 0.5) / static_cast<double>(bins);
    const double lo = std::floor(x);
    const double hi = std::min(lo + 1.0, static_cast<double>(T - 1));
    const double frac = x - lo;
    for (std::size_t c = 0; c < d; ++c) {
      const double left = v.at(static_cast<std::size_t>(lo), c);
      const double right = v.at(static_cast<std::size_t>(hi), c);
      out.push_back(left + frac * (right - left));
    }
  }
  return out;
}

ProposalConfig small_config(std::size_t n, std::size_t bins) {
  ProposalConfig cfg;
  cfg.num_proposals = n;
  cfg.roi.bins = bins;
  return cfg;
}

}  // namespace

TEST(DecodeBoxes, Examples) {
  Interval a = box_interval({0.5, 0.4});
  EXPECT_NEAR(a.start, 0.3, 1e-15);
  EXPECT_NEAR(a.end, 0.7, 1e-15);
  Interval b = box_interval({0.05, 0.3});
  EXPECT_EQ(b.start, 0.0);
  EXPECT_NEAR(b.end, 0.2, 1e-15);
  BoxParams p = box_params(1.0, 1.0, 1.0);
  EXPECT_NEAR(p.center, 0.7310585786, 1e-9);
  EXPECT_NEAR(p.length, 0.7310585786, 1e-9);
  Interval c = box_interval(p);
  EXPECT_NEAR(c.start, 0.3655292893, 1e-9);
  EXPECT_EQ(c.end, 1.0);
  EXPECT_NEAR(box_params(0.0, logit(0.5), 0.5).length, 0.25, 1e-15);
}

TEST(DecodeBoxes, AlwaysOrderedInsideUnitInterval) {
  Rng rng(1);
  for (int i = 0; i < 2000; ++i) {
    const double scale = i < 1000 ? 3.0 : 40.0;
    const Interval iv = box_interval(box_params(scale * standard_normal(rng), scale * standard_normal(rng), 1.0));
    EXPECT_GE(iv.start, 0.0);
    EXPECT_LE(iv.start, iv.end);
    EXPECT_LE(iv.end, 1.0);
  }
}

TEST(DecodeBox, AgreesWithPlainDecode) {
  Rng rng(2);
  ProposalBank bank{random_leaf({5, 2}, rng), random_leaf({5, 3}, rng), 0.5};
  const auto plain = decode_boxes(bank);
  for (std::size_t i = 0; i < 5; ++i) {
    DecodedBox box = decode_box(bank, i);
    EXPECT_NEAR(box.start.item(), plain[i].start, 1e-15);
    EXPECT_NEAR(box.end.item(), plain[i].end, 1e-15);
  }
  EXPECT_THROW(decode_box(bank, 5), std::out_of_range);
}

TEST(RoiAlign, RampExample) {
  const std::size_t T = 17;
  std::vector<double> ramp(T);
  for (std::size_t t = 0; t < T; ++t) ramp[t] = static_cast<double>(t);
  nd::Tensor out = temporal_roialign(nd::Tensor::from({T, 1}, ramp), Interval{0.0, 1.0}, RoiConfig{16, 1});
  ASSERT_EQ(out.shape(), (nd::Shape{16, 1}));
  for (std::size_t k = 0; k < 16; ++k) EXPECT_NEAR(out[k], static_cast<double>(k) + 0.5, 1e-12);
}

TEST(RoiAlign, ConstantSequence) {
  nd::Tensor v = nd::Tensor::full({9, 3}, 2.5);
  nd::Tensor out = temporal_roialign(v, Interval{0.13, 0.71}, RoiConfig{16, 1});
  EXPECT_EQ(out.shape(), (nd::Shape{16, 3}));
  for (double x : out.data()) EXPECT_NEAR(x, 2.5, 1e-14);
}

TEST(RoiAlign, DegenerateSpanSamplesOnePoint) {
  Rng rng(3);
  nd::Tensor v = random_const({11, 2}, rng);
  nd::Tensor out = temporal_roialign(v, Interval{0.37, 0.37}, RoiConfig{4, 1});
  const double pos = 0.37 * 10.0, frac = pos - 3.0;
  for (std::size_t k = 0; k < 4; ++k)
    for (std::size_t c = 0; c < 2; ++c) EXPECT_NEAR(out.at(k, c), (1 - frac) * v.at(3, c) + frac * v.at(4, c), 1e-12);
}

TEST(RoiAlign, InvalidIntervalRejected) {
  nd::Tensor v = nd::Tensor::zeros({5, 2});
  EXPECT_THROW(temporal_roialign(v, Interval{0.6, 0.4}, RoiConfig{}), std::invalid_argument);
  EXPECT_THROW(temporal_roialign(v, Interval{-0.1, 0.4}, RoiConfig{}), std::invalid_argument);
  EXPECT_THROW(temporal_roialign(v, Interval{0.1, 1.2}, RoiConfig{}), std::invalid_argument);
}

TEST(RoiAlign, MatchesNaiveLoop) {
  Rng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t T = lpnet::testing::random_extent(rng, 2, 32);
    const std::size_t bins = lpnet::testing::random_extent(rng, 1, 16);
    const std::size_t d = lpnet::testing::random_extent(rng, 1, 8);
    nd::Tensor v = random_const({T, d}, rng);
    double s = nd::uniform01(rng), e = nd::uniform01(rng);
    if (s > e) std::swap(s, e);
    const auto ref = naive_roialign(v, {s, e}, bins);
    nd::Tensor out = temporal_roialign(v, Interval{s, e}, RoiConfig{bins, 1});
    for (std::size_t i = 0; i < ref.size(); ++i) ASSERT_NEAR(out[i], ref[i], 1e-10);
  }
}

TEST(RoiAlign, GradientFlowsToFeatures) {
  Rng rng(5);
  nd::Tensor v = random_leaf({9, 3}, rng);
  const std::vector<Interval> spans{{0.1, 0.6}, {0.0, 1.0}, {0.42, 0.42}};
  Projection proj(6);
  EXPECT_LT(check_gradient([&] { return proj(temporal_roialign(v, spans, RoiConfig{5, 1})); }, {v}), 1e-6);
}

TEST(DynamicInteract, IdentityGating) {
  Rng rng(7);
  const std::size_t l = 4, d = 3;
  nd::Tensor c = random_const({l, d}, rng), wc = random_const({l * d, d}, rng);
  nd::Tensor eye = nd::Tensor::from({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  nd::Tensor out = dynamic_interact(c, nd::Tensor::full({1, d}, 1.0), eye, wc);
  nd::Tensor expected = nd::matmul(nd::reshape(c, {1, l * d}), wc);
  for (std::size_t i = 0; i < d; ++i) EXPECT_NEAR(out[i], expected[i], 1e-14);
  nd::Tensor zero = dynamic_interact(c, nd::Tensor::zeros({1, d}), random_const({d, d}, rng), wc);
  for (double x : zero.data()) EXPECT_EQ(x, 0.0);
}

TEST(DynamicInteract, GradientCheck) {
  Rng rng(8);
  const std::size_t n = 2, l = 4, d = 6;
  nd::Tensor c = random_leaf({n * l, d}, rng), p = random_leaf({n, d}, rng);
  nd::Tensor wp = random_leaf({d, d}, rng), wc = random_leaf({l * d, d}, rng);
  Projection proj(9);
  EXPECT_LT(check_gradient([&] { return proj(dynamic_interact(c, p, wp, wc)); }, {c, p, wp, wc}), 1e-4);
}

TEST(RatingHead, ZeroWeightsGiveOneHalf) {
  ParamSet params;
  Rng rng(10);
  RatingHead head = RatingHead::create(params, "r", 4, rng);
  for (const auto& e : params.entries()) {
    nd::Tensor t = e.tensor;
    for (auto& x : t.mutable_data()) x = 0.0;
  }
  nd::Tensor s = head.rate(random_const({3, 4}, rng), random_const({3, 4}, rng), random_const({4}, rng));
  for (double x : s.data()) EXPECT_EQ(x, 0.5);
}

TEST(RatingHead, ScoresInOpenUnitInterval) {
  ParamSet params;
  Rng rng(11);
  RatingHead head = RatingHead::create(params, "r", 4, rng);
  nd::Tensor s = head.rate(random_const({20, 4}, rng, 3.0), random_const({20, 4}, rng), random_const({4}, rng));
  for (double x : s.data()) {
    EXPECT_GT(x, 0.0);
    EXPECT_LT(x, 1.0);
  }
}

TEST(RatingHead, NonNegativeOutputWeightsAreMonotone) {
  ParamSet params;
  Rng rng(12);
  RatingHead head = RatingHead::create(params, "r", 4, rng);
  nd::Tensor w = head.output.weight;
  for (auto& x : w.mutable_data()) x = std::abs(x);
  nd::Tensor c = random_const({1, 4}, rng), p = random_const({1, 4}, rng), q = random_const({4}, rng);
  const double before = head.rate(c, p, q).item();
  nd::Tensor b = head.output.bias;
  b.mutable_data()[0] += 0.5;
  EXPECT_GT(head.rate(c, p, q).item(), before);
}

TEST(RankCandidates, ArgmaxWithLowestIndexTies) {
  const std::vector<double> a{0.1, 0.7, 0.3};
  EXPECT_EQ(rank_candidates(a), 1u);
  const std::vector<double> b{0.4, 0.4, 0.4};
  EXPECT_EQ(rank_candidates(b), 0u);
  const std::vector<double> c{0.2};
  EXPECT_EQ(rank_candidates(c), 0u);
  EXPECT_THROW(rank_candidates(std::vector<double>{}), std::invalid_argument);
}

TEST(RankCandidates, InvariantUnderIncreasingTransforms) {
  Rng rng(13);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> s(10), t(10);
    for (std::size_t i = 0; i < 10; ++i) {
      s[i] = nd::uniform01(rng);
      t[i] = std::exp(3.0 * s[i]) - 7.0;
    }
    EXPECT_EQ(rank_candidates(s), rank_candidates(t));
  }
}

TEST(ProposalHead, BankShapesAndInitRanges) {
  ParamSet params;
  Rng rng(14);
  ProposalConfig cfg;  // 300 proposals
  cfg.max_length = 0.5;
  ProposalHead head = ProposalHead::create(params, cfg, 8, 2, rng);
  EXPECT_EQ(head.bank().size(), 300u);
  EXPECT_EQ(head.bank().features.shape(), (nd::Shape{300, 8}));
  for (const auto& iv : decode_boxes(head.bank())) EXPECT_LE(iv.length(), 0.5 + 1e-12);
  EXPECT_EQ(head.interact_output().shape(), (nd::Shape{16 * 8, 8}));
}

TEST(ProposalHead, SingleProposalAttention) {
  ParamSet params;
  Rng rng(15);
  ProposalHead head = ProposalHead::create(params, small_config(1, 4), 4, 2, rng);
  const MultiHeadAttention& mha = head.attention();
  nd::Tensor p = head.bank().features;
  nd::Tensor expected = nd::add(p, mha.output.apply(mha.value.apply(p)));
  nd::Tensor refined = head.refine_features(ForwardContext{});
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(refined[i], expected[i], 1e-14);
}

TEST(ProposalHead, AttentionIsPermutationEquivariant) {
  ParamSet params;
  Rng rng(16);
  ProposalHead head = ProposalHead::create(params, small_config(5, 4), 6, 2, rng);
  nd::Tensor p = random_const({5, 6}, rng);
  const std::vector<std::size_t> perm{3, 0, 4, 1, 2};
  std::vector<double> permuted(30);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t c = 0; c < 6; ++c) permuted[i * 6 + c] = p.at(perm[i], c);
  nd::Tensor a = head.attention().apply(p);
  nd::Tensor b = head.attention().apply(nd::Tensor::from({5, 6}, permuted));
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t c = 0; c < 6; ++c) EXPECT_NEAR(b.at(i, c), a.at(perm[i], c), 1e-13);
}

TEST(ProposalHead, WithoutSelfAttentionFeaturesPassThrough) {
  ParamSet params;
  Rng rng(17);
  ProposalConfig cfg = small_config(4, 4);
  cfg.use_mhsa = false;
  ProposalHead head = ProposalHead::create(params, cfg, 4, 2, rng);
  nd::Tensor refined = head.refine_features(ForwardContext{});
  for (std::size_t i = 0; i < refined.size(); ++i) EXPECT_EQ(refined[i], head.bank().features[i]);
}

TEST(ProposalHead, ForwardOutputsAndCandidates) {
  ParamSet params;
  Rng rng(18);
  ProposalHead head = ProposalHead::create(params, small_config(7, 4), 6, 2, rng);
  auto out = head.forward(random_const({10, 6}, rng), random_const({6}, rng), ForwardContext{});
  EXPECT_EQ(out.scores.shape(), (nd::Shape{7}));
  EXPECT_EQ(out.intervals.size(), 7u);
  for (const auto& c : candidate_scores(out)) {
    EXPECT_LE(c.interval.start, c.interval.end);
    EXPECT_GT(c.score, 0.0);
    EXPECT_LT(c.score, 1.0);
  }
}

TEST(ProposalHead, FullForwardGradientCheck) {
  ParamSet params;
  Rng rng(19);
  ProposalConfig cfg = small_config(3, 4);
  cfg.feature_init_std = 1.0;  // keep every gradient well above round-off
  ProposalHead head = ProposalHead::create(params, cfg, 4, 2, rng);
  nd::Tensor v = random_leaf({8, 4}, rng), q = random_leaf({4}, rng);
  std::vector<nd::Tensor> inputs{v, q};
  for (const auto& e : params.entries())
    if (e.name != "proposals.box_logits") inputs.push_back(e.tensor);
  Projection proj(20);
  EXPECT_LT(check_gradient([&] { return proj(head.forward(v, q, ForwardContext{}).scores); }, inputs, 16), 1e-4);
}

TEST(ProposalHead, BoxLogitsReceiveNoGradientFromScores) {
  ParamSet params;
  Rng rng(21);
  ProposalHead head = ProposalHead::create(params, small_config(3, 4), 4, 2, rng);
  nd::Tape tape;
  nd::Tensor loss;
  {
    nd::TapeScope scope(tape);
    loss = nd::sum(head.forward(random_const({8, 4}, rng), random_const({4}, rng), ForwardContext{}).scores);
  }
  tape.backward(loss);
  EXPECT_FALSE(head.bank().box_logits.has_grad());
  EXPECT_TRUE(head.bank().features.has_grad());
}

TEST(ProposalCsv, RoundTripIsByteIdentical) {
  Rng rng(22);
  ProposalBank bank{random_const({12, 2}, rng, 2.0), random_const({12, 3}, rng), 0.5};
  const std::string first = format_proposal_csv(proposal_rows(bank));
  EXPECT_EQ(first.substr(0, first.find('\n')), "index,center,length,start,end");
  const auto parsed = parse_proposal_csv(first);
  ASSERT_EQ(parsed.size(), 12u);
  EXPECT_EQ(format_proposal_csv(parsed), first);
}

TEST(ProposalCsv, MalformedInputRejected) {
  EXPECT_THROW(parse_proposal_csv(""), std::runtime_error);
  EXPECT_THROW(parse_proposal_csv("idx,c\n"), std::runtime_error);
  EXPECT_THROW(parse_proposal_csv("index,center,length,start,end\n0,0.5,abc,0,1\n"), std::runtime_error);
}
