#pragma once

// Local-global motion aggregation over the points of one frame.
//
// Context features x (N×Dc) decide who attends to whom; motion features
// y (N×Dm) are what gets moved. With v = y·V:
//
//   global:  w_g = softmax_rows((xW)(xW)ᵀ / sqrt(Dqk)),  g_global = w_g · v
//   local:   e_ij = enc(p_j - p_i),  s_ij = score([e_ij, x_j, x_i]),
//            w_l(i, ·) = softmax over the k neighbors j of i,
//            g_local_i = Σ_j w_l(i, j) · v_j
//   output:  y_tilde = y + alpha · head(y - (g_local + g_global))
//
// W is one matrix shared by queries and keys. head is linear, then
// per-feature standardization over the cloud, then scale/shift and ReLU.
// alpha starts at zero, which makes the module an exact identity on y.

#include <cstddef>
#include <string>

#include "gma3d/numkern/dense_array.hpp"
#include "gma3d/numkern/layers.hpp"
#include "gma3d/numkern/tape.hpp"
#include "gma3d/spatial.hpp"

namespace gma3d::aggregation {

using numkern::DenseArray;
using numkern::Var;

// Per-point context (N×Dc) and motion (N×Dm) features.
struct FeatureSet {
  DenseArray context;
  DenseArray motion;

  std::size_t size() const { return context.rows(); }
  // Throws ShapeError unless both are matrices over the same N >= 1.
  void validate() const;
};

enum class Aggregator {
  kOffset,    // y + alpha · head(y - (g_local + g_global))
  kPlainMlp,  // y + mlp(g_local + g_global)
};

struct Gma3dConfig {
  std::size_t context_dim = 32;
  std::size_t motion_dim = 32;
  std::size_t qk_dim = 16;
  std::size_t enc_dim = 8;
  std::size_t k = 16;
  std::size_t enc_hidden = 16;
  std::size_t score_hidden = 32;
  std::size_t global_map_hidden = 8;
  std::size_t plain_hidden = 32;

  bool scale_logits = true;         // divide logits by sqrt of the key width
  bool raw_context_logits = false;  // logits from x·xᵀ instead of projected q·kᵀ
  bool global_map = false;          // positive scalar MLP + renormalization after softmax
  bool cross_frame_displacement = false;  // enc(p2_j - p1_i) with index-aligned frames
  bool include_self = false;              // allow i in its own neighborhood
  bool disable_local = false;
  bool disable_global = false;
  Aggregator aggregator = Aggregator::kOffset;

  void validate() const;
};

template <class T>
struct Gma3dParamsT {
  T qk;                           // Dc×Dqk, shared query/key projection
  T value;                        // Dm×Dm
  numkern::Mlp<T> encoder;        // 3 → enc_hidden → De
  numkern::Mlp<T> scorer;         // De + 2·Dc → score_hidden → 1
  numkern::Mlp<T> global_map;     // 1 → global_map_hidden → 1, then softplus
  numkern::NormActHead<T> head;   // Dm → Dm
  T alpha;                        // 1×1
  numkern::Mlp<T> plain;          // Dm → plain_hidden → Dm (plain aggregator)
};

using Gma3dParams = Gma3dParamsT<DenseArray>;
using Gma3dVars = Gma3dParamsT<Var>;

template <class P, class F>
void visit_params(P& p, F&& f) {
  f(std::string("qk"), p.qk);
  f(std::string("value"), p.value);
  numkern::visit_mlp(p.encoder, "encoder", f);
  numkern::visit_mlp(p.scorer, "scorer", f);
  numkern::visit_mlp(p.global_map, "global_map", f);
  numkern::visit_head(p.head, "head", f);
  f(std::string("alpha"), p.alpha);
  numkern::visit_mlp(p.plain, "plain", f);
}

// All-zero parameters with the shapes implied by cfg (head: unit scale).
Gma3dParams zero_params(const Gma3dConfig& cfg);
void validate(const Gma3dParams& p, const Gma3dConfig& cfg);
Gma3dVars bind(numkern::Tape& tape, const Gma3dParams& p, bool trainable);

struct AttentionMap {
  DenseArray global_weights;  // N×N, row-stochastic
  DenseArray local_weights;   // N×k, rows aligned with the neighbor index
};

// Neighborhoods over the frame-1 cloud as configured (k, include_self).
spatial::NeighborIndex build_neighbors(const spatial::PointCloud& cloud, const Gma3dConfig& cfg);

// Rows of p_j - p_i for every (i, neighbor j), (N·k)×3. With a target cloud
// the neighbor position is taken from it (index-aligned with `cloud`).
DenseArray neighbor_displacements(const spatial::PointCloud& cloud,
                                  const spatial::NeighborIndex& nbrs,
                                  const spatial::PointCloud* target = nullptr);

// ---- Eager API -------------------------------------------------------------

struct Projections {
  DenseArray q;  // N×Dqk
  DenseArray k;  // N×Dqk
  DenseArray v;  // N×Dm
};

struct LocalAggregate {
  DenseArray g_local;  // N×Dm
  DenseArray weights;  // N×k
};

struct ForwardResult {
  DenseArray y_tilde;  // N×Dm
  AttentionMap attention;
  DenseArray fused;    // [y_tilde, y, x], N×(2·Dm + Dc), for a downstream update unit
};

Projections project_qkv(const Gma3dParams& p, const FeatureSet& feats);
DenseArray global_attention_weights(const Gma3dParams& p, const DenseArray& q,
                                    const DenseArray& k, const Gma3dConfig& cfg);
DenseArray aggregate_global(const DenseArray& weights, const DenseArray& v);
LocalAggregate aggregate_local(const Gma3dParams& p, const spatial::PointCloud& cloud,
                               const FeatureSet& feats, const DenseArray& v,
                               const spatial::NeighborIndex& nbrs,
                               const spatial::PointCloud* target = nullptr);
DenseArray offset_aggregate(const Gma3dParams& p, const DenseArray& y, const DenseArray& g_local,
                            const DenseArray& g_global);
ForwardResult forward(const Gma3dParams& p, const spatial::PointCloud& cloud,
                      const FeatureSet& feats, const spatial::NeighborIndex& nbrs,
                      const Gma3dConfig& cfg, const spatial::PointCloud* target = nullptr);

// ---- Traced API ------------------------------------------------------------

struct TracedProjections {
  Var q;
  Var k;
  Var v;
};

struct TracedLocal {
  Var g_local;
  Var weights;
};

struct TracedForward {
  Var y_tilde;
  Var global_weights;
  Var local_weights;
  Var fused;
};

TracedProjections project_qkv(const Gma3dVars& p, Var context, Var motion);
Var global_attention_weights(const Gma3dVars& p, Var q, Var k, const Gma3dConfig& cfg);
Var aggregate_global(Var weights, Var v);
TracedLocal aggregate_local(const Gma3dVars& p, const DenseArray& displacements, Var context,
                            Var v, const spatial::NeighborIndex& nbrs);
Var offset_aggregate(const Gma3dVars& p, Var y, Var g_local, Var g_global);
Var plain_aggregate(const Gma3dVars& p, Var y, Var g_local, Var g_global);
TracedForward forward(const Gma3dVars& p, const spatial::PointCloud& cloud, Var context,
                      Var motion, const spatial::NeighborIndex& nbrs, const Gma3dConfig& cfg,
                      const spatial::PointCloud* target = nullptr);

}  // namespace gma3d::aggregation
