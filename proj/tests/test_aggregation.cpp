#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "gma3d/aggregation.hpp"
#include "gma3d/errors.hpp"
#include "gma3d/numkern/ops.hpp"
#include "test_support.hpp"

namespace ag = gma3d::aggregation;
namespace nk = gma3d::numkern;
using nk::DenseArray;
using testing_support::max_abs_diff;
using testing_support::random_array;
using testing_support::random_cloud;
using testing_support::random_params;

namespace {

ag::Gma3dConfig small_config(std::size_t dc = 5, std::size_t dm = 4, std::size_t k = 3) {
  ag::Gma3dConfig c;
  c.context_dim = dc;
  c.motion_dim = dm;
  c.qk_dim = 3;
  c.enc_dim = 4;
  c.k = k;
  c.enc_hidden = 5;
  c.score_hidden = 6;
  c.global_map_hidden = 3;
  c.plain_hidden = 5;
  return c;
}

std::vector<std::vector<std::size_t>> rows_of(const gma3d::spatial::NeighborIndex& nb) {
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < nb.size(); ++i) out.emplace_back(nb.row(i).begin(), nb.row(i).end());
  return out;
}

oracle::Options options_of(const ag::Gma3dConfig& c) {
  oracle::Options o;
  o.scale_logits = c.scale_logits;
  o.raw_context_logits = c.raw_context_logits;
  o.global_map = c.global_map;
  o.disable_local = c.disable_local;
  o.disable_global = c.disable_global;
  o.plain = c.aggregator == ag::Aggregator::kPlainMlp;
  return o;
}

struct Instance {
  ag::Gma3dConfig cfg;
  ag::Gma3dParams params;
  gma3d::spatial::PointCloud cloud;
  ag::FeatureSet feats;
  gma3d::spatial::NeighborIndex nbrs;
};

Instance make_instance(std::uint64_t seed, std::size_t n, ag::Gma3dConfig cfg) {
  gma3d::Rng rng(seed);
  auto params = random_params(cfg, rng);
  params.alpha = DenseArray::scalar(rng.uniform(0.2, 1.5));
  auto cloud = random_cloud(rng, n);
  ag::FeatureSet feats{random_array(rng, n, cfg.context_dim), random_array(rng, n, cfg.motion_dim)};
  auto nbrs = ag::build_neighbors(cloud, cfg);
  return {cfg, std::move(params), std::move(cloud), std::move(feats), std::move(nbrs)};
}

}  // namespace

TEST(ProjectQkv, IdentityAndZero) {
  auto cfg = small_config(3, 3);
  cfg.qk_dim = 3;
  auto p = ag::zero_params(cfg);
  gma3d::Rng rng(1);
  const ag::FeatureSet f{random_array(rng, 4, 3), random_array(rng, 4, 3)};
  auto z = ag::project_qkv(p, f);
  for (double v : z.q.data()) EXPECT_EQ(v, 0.0);
  for (double v : z.v.data()) EXPECT_EQ(v, 0.0);
  p.qk = DenseArray::identity(3);
  p.value = DenseArray::identity(3);
  const auto r = ag::project_qkv(p, f);
  EXPECT_TRUE(r.q.bit_equal(f.context));
  EXPECT_TRUE(r.k.bit_equal(f.context));
  EXPECT_TRUE(r.v.bit_equal(f.motion));
}

TEST(ProjectQkv, MatchesPerPointOracle) {
  const auto cfg = small_config();
  gma3d::Rng rng(2);
  const auto p = random_params(cfg, rng);
  const ag::FeatureSet f{random_array(rng, 5, cfg.context_dim), random_array(rng, 5, cfg.motion_dim)};
  const auto r = ag::project_qkv(p, f);
  EXPECT_LT(max_abs_diff(r.q, oracle::matmul(testing_support::to_matrix(f.context),
                                             testing_support::to_matrix(p.qk))), 1e-12);
  EXPECT_LT(max_abs_diff(r.v, oracle::matmul(testing_support::to_matrix(f.motion),
                                             testing_support::to_matrix(p.value))), 1e-12);
  EXPECT_THROW(ag::project_qkv(p, {random_array(rng, 5, 2), f.motion}), gma3d::ShapeError);
}

TEST(GlobalWeights, IdenticalContextsSplitEvenly) {
  const auto cfg = small_config();
  const auto q = DenseArray::from_rows({{0.3, -1, 2}, {0.3, -1, 2}});
  const auto w = ag::global_attention_weights(ag::zero_params(cfg), q, q, cfg);
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 2; ++j) EXPECT_EQ(w(i, j), 0.5);
}

TEST(GlobalWeights, OrthogonalScaledRowsConcentrateOnSelf) {
  auto cfg = small_config();
  cfg.qk_dim = 3;
  const auto q = nk::scale(DenseArray::identity(3), 50.0);
  const auto w = ag::global_attention_weights(ag::zero_params(cfg), q, q, cfg);
  // Logits per row: [2500/sqrt(3), 0, 0].
  const double big = 2500.0 / std::sqrt(3.0);
  const double self = 1.0 / (1.0 + 2.0 * std::exp(-big));
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_NEAR(w(i, i), self, 1e-15);
    EXPECT_GT(w(i, i), 1.0 - 1e-12);
  }
}

TEST(GlobalWeights, ArgmaxInvariantUnderJointScaling) {
  auto cfg = small_config();
  gma3d::Rng rng(3);
  const auto p = ag::zero_params(cfg);
  for (bool scaled : {true, false}) {
    cfg.scale_logits = scaled;
    const auto q = random_array(rng, 7, 3);
    const auto w1 = ag::global_attention_weights(p, q, q, cfg);
    const auto w2 = ag::global_attention_weights(p, nk::scale(q, 2.5), nk::scale(q, 2.5), cfg);
    for (std::size_t i = 0; i < 7; ++i) {
      const auto r1 = w1.row(i), r2 = w2.row(i);
      EXPECT_EQ(std::max_element(r1.begin(), r1.end()) - r1.begin(),
                std::max_element(r2.begin(), r2.end()) - r2.begin());
    }
  }
}

TEST(AggregateGlobal, UniformAndIdentityWeights) {
  gma3d::Rng rng(4);
  const auto v = random_array(rng, 4, 3);
  const auto mean = ag::aggregate_global(DenseArray::filled({4, 4}, 0.25), v);
  for (std::size_t c = 0; c < 3; ++c) {
    const double m = (v(0, c) + v(1, c) + v(2, c) + v(3, c)) / 4.0;
    for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(mean(i, c), m, 1e-15);
  }
  EXPECT_TRUE(ag::aggregate_global(DenseArray::identity(4), v).bit_equal(v));
  EXPECT_THROW(ag::aggregate_global(DenseArray::identity(3), v), gma3d::ShapeError);
}

TEST(AggregateLocal, ConstantScoreGivesNeighborMean) {
  const auto cfg = small_config();
  gma3d::Rng rng(5);
  auto p = random_params(cfg, rng);
  for (auto& l : p.scorer.layers) l.weight = DenseArray::zeros(l.weight.shape());
  const auto cloud = random_cloud(rng, 7);
  const ag::FeatureSet f{random_array(rng, 7, cfg.context_dim), random_array(rng, 7, cfg.motion_dim)};
  const auto nb = ag::build_neighbors(cloud, cfg);
  const auto r = ag::aggregate_local(p, cloud, f, f.motion, nb);
  for (std::size_t i = 0; i < 7; ++i) {
    for (std::size_t s = 0; s < cfg.k; ++s) EXPECT_NEAR(r.weights(i, s), 1.0 / 3.0, 1e-15);
    for (std::size_t c = 0; c < cfg.motion_dim; ++c) {
      double m = 0;
      for (std::size_t j : nb.row(i)) m += f.motion(j, c);
      EXPECT_NEAR(r.g_local(i, c), m / 3.0, 1e-14);
    }
  }
}

TEST(AggregateLocal, SingleNeighborCopiesIt) {
  const auto cfg = small_config(5, 4, 1);
  gma3d::Rng rng(6);
  const auto p = random_params(cfg, rng);
  const auto cloud = random_cloud(rng, 6);
  const ag::FeatureSet f{random_array(rng, 6, 5), random_array(rng, 6, 4)};
  const auto nb = ag::build_neighbors(cloud, cfg);
  const auto r = ag::aggregate_local(p, cloud, f, f.motion, nb);
  for (std::size_t i = 0; i < 6; ++i) {
    EXPECT_EQ(r.weights(i, 0), 1.0);
    for (std::size_t c = 0; c < 4; ++c) EXPECT_EQ(r.g_local(i, c), f.motion(nb.row(i)[0], c));
  }
}

TEST(AggregateLocal, MismatchedNeighborIndexIsShapeError) {
  const auto cfg = small_config();
  gma3d::Rng rng(7);
  const auto p = random_params(cfg, rng);
  const auto cloud = random_cloud(rng, 6);
  const auto other = random_cloud(rng, 8);
  const ag::FeatureSet f{random_array(rng, 6, 5), random_array(rng, 6, 4)};
  EXPECT_THROW(ag::aggregate_local(p, cloud, f, f.motion, ag::build_neighbors(other, cfg)),
               gma3d::ShapeError);
}

TEST(OffsetAggregate, ZeroAlphaIsExactIdentity) {
  const auto cfg = small_config();
  gma3d::Rng rng(8);
  auto p = random_params(cfg, rng);
  p.alpha = DenseArray::scalar(0.0);
  const auto y = random_array(rng, 6, 4);
  EXPECT_TRUE(ag::offset_aggregate(p, y, random_array(rng, 6, 4), random_array(rng, 6, 4)).bit_equal(y));
}

TEST(OffsetAggregate, ZeroOffsetInputLeavesMotionUnchanged) {
  const auto cfg = small_config();
  gma3d::Rng rng(9);
  auto p = random_params(cfg, rng);
  p.alpha = DenseArray::scalar(0.7);
  p.head.shift = DenseArray::zeros({1, 4});
  p.head.linear.bias = DenseArray::zeros({1, 4});
  const auto y = random_array(rng, 6, 4);
  // A zero offset stays zero through the head, which outputs relu(0) = 0.
  const auto out = ag::offset_aggregate(p, y, DenseArray::zeros({6, 4}), y);
  EXPECT_TRUE(out.bit_equal(y));
}

TEST(OffsetAggregate, NeedsTwoPoints) {
  const auto cfg = small_config();
  gma3d::Rng rng(10);
  const auto p = random_params(cfg, rng);
  const auto y = random_array(rng, 1, 4);
  EXPECT_THROW(ag::offset_aggregate(p, y, y, y), gma3d::PreconditionError);
}

TEST(Forward, MatchesOracleAcrossConfigurations) {
  std::vector<ag::Gma3dConfig> cfgs;
  auto base = small_config();
  cfgs.push_back(base);
  auto c = base; c.global_map = true; cfgs.push_back(c);
  c = base; c.raw_context_logits = true; cfgs.push_back(c);
  c = base; c.scale_logits = false; cfgs.push_back(c);
  c = base; c.disable_local = true; cfgs.push_back(c);
  c = base; c.disable_global = true; cfgs.push_back(c);
  c = base; c.aggregator = ag::Aggregator::kPlainMlp; cfgs.push_back(c);
  for (std::size_t t = 0; t < cfgs.size(); ++t) {
    const auto inst = make_instance(100 + t, 8, cfgs[t]);
    const auto r = ag::forward(inst.params, inst.cloud, inst.feats, inst.nbrs, inst.cfg);
    const auto o = oracle::forward(testing_support::to_oracle(inst.params),
                                   testing_support::to_points(inst.cloud),
                                   testing_support::to_matrix(inst.feats.context),
                                   testing_support::to_matrix(inst.feats.motion),
                                   rows_of(inst.nbrs), options_of(inst.cfg));
    EXPECT_LT(max_abs_diff(r.y_tilde, o.y_tilde), 1e-10) << "config " << t;
    EXPECT_LT(max_abs_diff(r.attention.global_weights, o.global_w), 1e-12) << "config " << t;
    EXPECT_LT(max_abs_diff(r.attention.local_weights, o.local_w), 1e-12) << "config " << t;
  }
}

TEST(Forward, FusedOutputConcatenates) {
  const auto inst = make_instance(11, 6, small_config());
  const auto r = ag::forward(inst.params, inst.cloud, inst.feats, inst.nbrs, inst.cfg);
  ASSERT_EQ(r.fused.cols(), 4u + 4u + 5u);
  for (std::size_t i = 0; i < 6; ++i) {
    for (std::size_t c = 0; c < 4; ++c) {
      EXPECT_EQ(r.fused(i, c), r.y_tilde(i, c));
      EXPECT_EQ(r.fused(i, 4 + c), inst.feats.motion(i, c));
    }
    for (std::size_t c = 0; c < 5; ++c) EXPECT_EQ(r.fused(i, 8 + c), inst.feats.context(i, c));
  }
}

TEST(Forward, WeightRowsAreStochastic) {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    auto cfg = small_config();
    cfg.global_map = seed % 2 == 1;
    const auto inst = make_instance(seed, 5 + seed % 20, cfg);
    const auto r = ag::forward(inst.params, inst.cloud, inst.feats, inst.nbrs, inst.cfg);
    for (const DenseArray* w : {&r.attention.global_weights, &r.attention.local_weights}) {
      for (std::size_t i = 0; i < w->rows(); ++i) {
        double s = 0;
        for (double x : w->row(i)) {
          EXPECT_GE(x, 0.0);
          s += x;
        }
        EXPECT_NEAR(s, 1.0, 1e-9);
      }
    }
  }
}

TEST(Forward, PermutationEquivariant) {
  const auto inst = make_instance(12, 20, small_config());
  gma3d::Rng rng(13);
  std::vector<std::size_t> perm(20);
  std::iota(perm.begin(), perm.end(), 0);
  rng.shuffle(std::span<std::size_t>(perm));
  std::vector<gma3d::spatial::Vec3> pts;
  for (std::size_t i : perm) pts.push_back(inst.cloud[i]);
  const gma3d::spatial::PointCloud pc(pts);
  const ag::FeatureSet pf{nk::gather_rows(inst.feats.context, perm),
                          nk::gather_rows(inst.feats.motion, perm)};
  const auto a = ag::forward(inst.params, inst.cloud, inst.feats, inst.nbrs, inst.cfg);
  const auto b = ag::forward(inst.params, pc, pf, ag::build_neighbors(pc, inst.cfg), inst.cfg);
  EXPECT_LT(max_abs_diff(b.y_tilde, nk::gather_rows(a.y_tilde, perm)), 1e-10);
  for (std::size_t i = 0; i < 20; ++i)
    for (std::size_t j = 0; j < 20; ++j)
      EXPECT_NEAR(b.attention.global_weights(i, j), a.attention.global_weights(perm[i], perm[j]), 1e-12);
}

TEST(Forward, ZeroAlphaIgnoresEveryOtherParameter) {
  auto inst = make_instance(14, 10, small_config());
  inst.params.alpha = DenseArray::scalar(0.0);
  const auto r = ag::forward(inst.params, inst.cloud, inst.feats, inst.nbrs, inst.cfg);
  EXPECT_TRUE(r.y_tilde.bit_equal(inst.feats.motion));
}

TEST(Forward, CrossFrameDisplacementUsesTarget) {
  auto cfg = small_config();
  const auto inst = make_instance(15, 9, cfg);
  cfg.cross_frame_displacement = true;
  EXPECT_THROW(ag::forward(inst.params, inst.cloud, inst.feats, inst.nbrs, cfg), gma3d::ConfigError);
  // With the target equal to the source, the variant reduces to the default.
  const auto same = ag::forward(inst.params, inst.cloud, inst.feats, inst.nbrs, cfg, &inst.cloud);
  const auto base = ag::forward(inst.params, inst.cloud, inst.feats, inst.nbrs, inst.cfg);
  EXPECT_TRUE(same.y_tilde.bit_equal(base.y_tilde));
  gma3d::Rng rng(16);
  const auto moved = random_cloud(rng, 9);
  const auto other = ag::forward(inst.params, inst.cloud, inst.feats, inst.nbrs, cfg, &moved);
  EXPECT_FALSE(other.attention.local_weights.bit_equal(base.attention.local_weights));
  const auto wrong = random_cloud(rng, 8);
  EXPECT_THROW(ag::forward(inst.params, inst.cloud, inst.feats, inst.nbrs, cfg, &wrong),
               gma3d::ShapeError);
}

TEST(Forward, MotionTransferToOccludedPoint) {
  // Two clusters with one-hot contexts; point 0 of cluster A lost its motion.
  ag::Gma3dConfig cfg = small_config(2, 3, 2);
  cfg.qk_dim = 2;
  auto p = ag::zero_params(cfg);
  p.qk = nk::scale(DenseArray::identity(2), 12.0);  // logits 144/sqrt(2) within a cluster, 0 across
  p.value = DenseArray::identity(3);
  std::vector<gma3d::spatial::Vec3> pts;
  std::vector<double> ctx, mot;
  const double a_motion[3] = {0.4, -0.2, 0.1}, b_motion[3] = {-1, 0.5, 0.3};
  for (int i = 0; i < 8; ++i) {
    const bool in_a = i < 4;
    pts.push_back({in_a ? 0.1 * i : 10 + 0.1 * i, 0.05 * i * i, 0});
    ctx.push_back(in_a ? 1 : 0);
    ctx.push_back(in_a ? 0 : 1);
    for (int c = 0; c < 3; ++c) mot.push_back(i == 0 ? 0.0 : (in_a ? a_motion[c] : b_motion[c]));
  }
  const gma3d::spatial::PointCloud cloud(pts);
  const ag::FeatureSet f{DenseArray({8, 2}, ctx), DenseArray({8, 3}, mot)};
  const auto proj = ag::project_qkv(p, f);
  const auto w = ag::global_attention_weights(p, proj.q, proj.k, cfg);
  const auto g = ag::aggregate_global(w, proj.v);
  // Cluster A mean including the zeroed point.
  for (int c = 0; c < 3; ++c) EXPECT_NEAR(g(0, c), 3.0 * a_motion[c] / 4.0, 1e-9);
  (void)cloud;
}
