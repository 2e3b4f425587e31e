#include "gma3d/aggregation.hpp"

#include <cmath>
#include <string>
#include <vector>

#include "gma3d/errors.hpp"
#include "gma3d/numkern/ops.hpp"

namespace gma3d::aggregation {

namespace nk = numkern;

void FeatureSet::validate() const {
  if (context.rank() != 2 || motion.rank() != 2) {
    throw ShapeError("FeatureSet: context and motion must be matrices");
  }
  if (context.rows() == 0 || context.rows() != motion.rows()) {
    throw ShapeError("FeatureSet: context " + nk::shape_string(context.shape()) + " vs motion " +
                     nk::shape_string(motion.shape()));
  }
}

void Gma3dConfig::validate() const {
  if (context_dim == 0 || motion_dim == 0 || qk_dim == 0 || enc_dim == 0 || k == 0 ||
      enc_hidden == 0 || score_hidden == 0 || global_map_hidden == 0 || plain_hidden == 0) {
    throw ConfigError("module dimensions must be positive");
  }
}

Gma3dParams zero_params(const Gma3dConfig& cfg) {
  cfg.validate();
  const std::size_t dc = cfg.context_dim, dm = cfg.motion_dim;
  Gma3dParams p;
  p.qk = DenseArray::zeros({dc, cfg.qk_dim});
  p.value = DenseArray::zeros({dm, dm});
  p.encoder = nk::zero_mlp({3, cfg.enc_hidden, cfg.enc_dim});
  p.scorer = nk::zero_mlp({cfg.enc_dim + 2 * dc, cfg.score_hidden, 1});
  p.global_map = nk::zero_mlp({1, cfg.global_map_hidden, 1});
  p.head = {{DenseArray::zeros({dm, dm}), DenseArray::zeros({1, dm})},
            DenseArray::filled({1, dm}, 1.0),
            DenseArray::zeros({1, dm})};
  p.alpha = DenseArray::zeros({1, 1});
  p.plain = nk::zero_mlp({dm, cfg.plain_hidden, dm});
  return p;
}

void validate(const Gma3dParams& p, const Gma3dConfig& cfg) {
  const Gma3dParams ref = zero_params(cfg);
  std::vector<nk::Shape> expected;
  visit_params(ref, [&](const std::string&, const DenseArray& a) { expected.push_back(a.shape()); });
  std::size_t i = 0;
  const auto check = [&](const std::string& name, const DenseArray& a) {
    if (i >= expected.size() || a.shape() != expected[i]) {
      throw ShapeError("parameter '" + name + "' has shape " + nk::shape_string(a.shape()) +
                       (i < expected.size() ? ", expected " + nk::shape_string(expected[i]) : ""));
    }
    ++i;
  };
  visit_params(p, check);
  if (i != expected.size()) throw ShapeError("parameter set has the wrong number of tensors");
}

Gma3dVars bind(nk::Tape& tape, const Gma3dParams& p, bool trainable) {
  Gma3dVars v;
  v.qk = tape.leaf(p.qk, trainable);
  v.value = tape.leaf(p.value, trainable);
  v.encoder = nk::bind(tape, p.encoder, trainable);
  v.scorer = nk::bind(tape, p.scorer, trainable);
  v.global_map = nk::bind(tape, p.global_map, trainable);
  v.head = nk::bind(tape, p.head, trainable);
  v.alpha = tape.leaf(p.alpha, trainable);
  v.plain = nk::bind(tape, p.plain, trainable);
  return v;
}

spatial::NeighborIndex build_neighbors(const spatial::PointCloud& cloud, const Gma3dConfig& cfg) {
  return spatial::knn(cloud, cfg.k, cfg.include_self);
}

DenseArray neighbor_displacements(const spatial::PointCloud& cloud,
                                  const spatial::NeighborIndex& nbrs,
                                  const spatial::PointCloud* target) {
  if (nbrs.size() != cloud.size()) {
    throw ShapeError("neighbor index covers " + std::to_string(nbrs.size()) + " points, cloud has " +
                     std::to_string(cloud.size()));
  }
  const spatial::PointCloud& source = target ? *target : cloud;
  if (source.size() != cloud.size()) {
    throw ShapeError("cross-frame displacement needs index-aligned frames of equal size");
  }
  DenseArray d = DenseArray::zeros({cloud.size() * nbrs.k, 3});
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto row = nbrs.row(i);
    for (std::size_t s = 0; s < nbrs.k; ++s) {
      const auto& pj = source[row[s]];
      const auto& pi = cloud[i];
      for (int a = 0; a < 3; ++a) d(i * nbrs.k + s, a) = pj[a] - pi[a];
    }
  }
  return d;
}

// ---- Traced ----------------------------------------------------------------

TracedProjections project_qkv(const Gma3dVars& p, Var context, Var motion) {
  const Var q = nk::matmul(context, p.qk);
  return {q, q, nk::matmul(motion, p.value)};
}

Var global_attention_weights(const Gma3dVars& p, Var q, Var k, const Gma3dConfig& cfg) {
  Var logits = nk::matmul_nt(q, k);
  if (cfg.scale_logits) {
    logits = nk::scale(logits, 1.0 / std::sqrt(static_cast<double>(q.value().cols())));
  }
  Var w = nk::softmax_rows(logits);
  if (cfg.global_map) {
    const std::size_t n = w.value().rows(), m = w.value().cols();
    const Var column = nk::reshape(w, {n * m, 1});
    const Var mapped = nk::softplus(nk::mlp_forward(p.global_map, column));
    w = nk::row_normalize(nk::reshape(mapped, {n, m}));
  }
  return w;
}

Var aggregate_global(Var weights, Var v) {
  const auto& w = weights.value();
  if (w.rows() != w.cols() || w.cols() != v.value().rows()) {
    throw ShapeError("aggregate_global: weights " + nk::shape_string(w.shape()) + " with values " +
                     nk::shape_string(v.value().shape()));
  }
  return nk::matmul(weights, v);
}

TracedLocal aggregate_local(const Gma3dVars& p, const DenseArray& displacements, Var context,
                            Var v, const spatial::NeighborIndex& nbrs) {
  const std::size_t n = context.value().rows(), k = nbrs.k;
  if (nbrs.size() != n || v.value().rows() != n || displacements.rows() != n * k) {
    throw ShapeError("aggregate_local: neighbor index over " + std::to_string(nbrs.size()) +
                     " points (k=" + std::to_string(k) + ") for features over " +
                     std::to_string(n) + " points");
  }
  std::vector<std::size_t> centers(n * k);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t s = 0; s < k; ++s) centers[i * k + s] = i;
  }
  nk::Tape& tape = *context.tape();
  const Var enc = nk::mlp_forward(p.encoder, tape.constant(displacements));
  const Var x_j = nk::gather_rows(context, nbrs.indices);
  const Var x_i = nk::gather_rows(context, std::move(centers));
  const Var scores = nk::mlp_forward(p.scorer, nk::concat_cols({enc, x_j, x_i}));
  const Var weights = nk::softmax_rows(nk::reshape(scores, {n, k}));
  return {nk::neighbor_weighted_sum(weights, v, nbrs.indices), weights};
}

Var offset_aggregate(const Gma3dVars& p, Var y, Var g_local, Var g_global) {
  const Var offset = nk::norm_act_head(p.head, nk::sub(y, nk::add(g_local, g_global)));
  return nk::add_scaled(y, p.alpha, offset);
}

Var plain_aggregate(const Gma3dVars& p, Var y, Var g_local, Var g_global) {
  return nk::add(y, nk::mlp_forward(p.plain, nk::add(g_local, g_global)));
}

TracedForward forward(const Gma3dVars& p, const spatial::PointCloud& cloud, Var context,
                      Var motion, const spatial::NeighborIndex& nbrs, const Gma3dConfig& cfg,
                      const spatial::PointCloud* target) {
  const FeatureSet shapes{context.value(), motion.value()};
  shapes.validate();
  if (cloud.size() != shapes.size()) {
    throw ShapeError("forward: cloud has " + std::to_string(cloud.size()) + " points, features " +
                     std::to_string(shapes.size()));
  }
  if (target == nullptr && cfg.cross_frame_displacement) {
    throw ConfigError("cross-frame displacement requested without a second frame");
  }
  nk::Tape& tape = *context.tape();
  const auto proj = project_qkv(p, context, motion);
  const Var gw = cfg.raw_context_logits ? global_attention_weights(p, context, context, cfg)
                                        : global_attention_weights(p, proj.q, proj.k, cfg);
  const DenseArray disp =
      neighbor_displacements(cloud, nbrs, cfg.cross_frame_displacement ? target : nullptr);
  const auto local = aggregate_local(p, disp, context, proj.v, nbrs);

  const DenseArray zeros = DenseArray::zeros(motion.value().shape());
  const Var g_global = cfg.disable_global ? tape.constant(zeros) : aggregate_global(gw, proj.v);
  const Var g_local = cfg.disable_local ? tape.constant(zeros) : local.g_local;

  const Var y_tilde = cfg.aggregator == Aggregator::kOffset
                          ? offset_aggregate(p, motion, g_local, g_global)
                          : plain_aggregate(p, motion, g_local, g_global);
  return {y_tilde, gw, local.weights, nk::concat_cols({y_tilde, motion, context})};
}

// ---- Eager -----------------------------------------------------------------

Projections project_qkv(const Gma3dParams& p, const FeatureSet& feats) {
  feats.validate();
  nk::Tape tape;
  const auto bound = bind(tape, p, false);
  const auto r = project_qkv(bound, tape.constant(feats.context), tape.constant(feats.motion));
  return {r.q.value(), r.k.value(), r.v.value()};
}

DenseArray global_attention_weights(const Gma3dParams& p, const DenseArray& q,
                                    const DenseArray& k, const Gma3dConfig& cfg) {
  nk::Tape tape;
  const auto bound = bind(tape, p, false);
  return global_attention_weights(bound, tape.constant(q), tape.constant(k), cfg).value();
}

DenseArray aggregate_global(const DenseArray& weights, const DenseArray& v) {
  nk::Tape tape;
  return aggregate_global(tape.constant(weights), tape.constant(v)).value();
}

LocalAggregate aggregate_local(const Gma3dParams& p, const spatial::PointCloud& cloud,
                               const FeatureSet& feats, const DenseArray& v,
                               const spatial::NeighborIndex& nbrs,
                               const spatial::PointCloud* target) {
  feats.validate();
  nk::Tape tape;
  const auto bound = bind(tape, p, false);
  const auto r = aggregate_local(bound, neighbor_displacements(cloud, nbrs, target),
                                 tape.constant(feats.context), tape.constant(v), nbrs);
  return {r.g_local.value(), r.weights.value()};
}

DenseArray offset_aggregate(const Gma3dParams& p, const DenseArray& y, const DenseArray& g_local,
                            const DenseArray& g_global) {
  nk::Tape tape;
  const auto bound = bind(tape, p, false);
  return offset_aggregate(bound, tape.constant(y), tape.constant(g_local), tape.constant(g_global))
      .value();
}

ForwardResult forward(const Gma3dParams& p, const spatial::PointCloud& cloud,
                      const FeatureSet& feats, const spatial::NeighborIndex& nbrs,
                      const Gma3dConfig& cfg, const spatial::PointCloud* target) {
  validate(p, cfg);
  nk::Tape tape;
  const auto bound = bind(tape, p, false);
  const auto r = forward(bound, cloud, tape.constant(feats.context), tape.constant(feats.motion),
                         nbrs, cfg, target);
  return {r.y_tilde.value(), {r.global_weights.value(), r.local_weights.value()}, r.fused.value()};
}

}  // namespace gma3d::aggregation
