#include "gma3d/flowmetrics.hpp"

#include <cmath>
#include <string>
#include <utility>

#include "gma3d/errors.hpp"

namespace gma3d::flowmetrics {
namespace {

double norm(const Vec3& v) { return std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]); }

double point_epe(const Vec3& p, const Vec3& g) {
  return norm({p[0] - g[0], p[1] - g[1], p[2] - g[2]});
}

void require_same_size(const FlowField& pred, const FlowField& gt) {
  if (pred.size() != gt.size()) {
    throw ShapeError("flow fields differ in length: " + std::to_string(pred.size()) + " vs " +
                     std::to_string(gt.size()));
  }
}

FlowMetrics evaluate_selected(const FlowField& pred, const FlowField& gt,
                              const std::vector<bool>* mask) {
  require_same_size(pred, gt);
  if (mask && mask->size() != gt.size()) {
    throw ShapeError("mask length " + std::to_string(mask->size()) + " for " +
                     std::to_string(gt.size()) + " points");
  }
  FlowMetrics m;
  double epe_sum = 0.0;
  std::size_t strict = 0, relax = 0, outliers = 0;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (mask && !(*mask)[i]) continue;
    const double e = point_epe(pred[i], gt[i]);
    const double gt_norm = norm(gt[i]);
    const bool has_rel = gt_norm > 0.0;
    const double rel = has_rel ? e / gt_norm : 0.0;
    epe_sum += e;
    if (e < kStrictAbs || (has_rel && rel < kStrictRel)) ++strict;
    if (e < kRelaxAbs || (has_rel && rel < kRelaxRel)) ++relax;
    if (e > kOutlierAbs || (has_rel && rel > kOutlierRel)) ++outliers;
    ++m.n_points;
  }
  if (m.n_points == 0) throw NoPointsError();
  const double n = static_cast<double>(m.n_points);
  m.epe_m = epe_sum / n;
  m.acc_strict = static_cast<double>(strict) / n;
  m.acc_relax = static_cast<double>(relax) / n;
  m.outliers = static_cast<double>(outliers) / n;
  return m;
}

}  // namespace

FlowField::FlowField(std::vector<Vec3> vectors) : vectors_(std::move(vectors)) {
  for (std::size_t i = 0; i < vectors_.size(); ++i) {
    for (double c : vectors_[i]) {
      if (!std::isfinite(c)) {
        throw NumericalError("FlowField: non-finite vector at point " + std::to_string(i), i);
      }
    }
  }
}

FlowField FlowField::from_array(const numkern::DenseArray& a) {
  if (a.rank() != 2 || a.cols() != 3) {
    throw ShapeError("FlowField: expected N×3, got " + numkern::shape_string(a.shape()));
  }
  std::vector<Vec3> v(a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) v[i] = {a(i, 0), a(i, 1), a(i, 2)};
  return FlowField(std::move(v));
}

numkern::DenseArray FlowField::to_array() const {
  std::vector<double> data;
  data.reserve(vectors_.size() * 3);
  for (const auto& v : vectors_) data.insert(data.end(), v.begin(), v.end());
  return numkern::DenseArray({vectors_.size(), 3}, std::move(data));
}

double epe(const FlowField& pred, const FlowField& gt) {
  require_same_size(pred, gt);
  if (gt.size() == 0) throw NoPointsError();
  double total = 0.0;
  for (std::size_t i = 0; i < gt.size(); ++i) total += point_epe(pred[i], gt[i]);
  return total / static_cast<double>(gt.size());
}

FlowMetrics evaluate(const FlowField& pred, const FlowField& gt) {
  return evaluate_selected(pred, gt, nullptr);
}

FlowMetrics evaluate(const FlowField& pred, const FlowField& gt, const std::vector<bool>& mask) {
  return evaluate_selected(pred, gt, &mask);
}

SplitMetrics evaluate_split(const FlowField& pred, const FlowField& gt,
                            const std::vector<bool>& occlusion_mask) {
  SplitMetrics s;
  s.all = evaluate(pred, gt);
  if (occlusion_mask.size() != gt.size()) {
    throw ShapeError("occlusion mask length " + std::to_string(occlusion_mask.size()) + " for " +
                     std::to_string(gt.size()) + " points");
  }
  std::vector<bool> visible(occlusion_mask.size());
  bool any_occluded = false, any_visible = false;
  for (std::size_t i = 0; i < occlusion_mask.size(); ++i) {
    visible[i] = !occlusion_mask[i];
    any_occluded = any_occluded || occlusion_mask[i];
    any_visible = any_visible || visible[i];
  }
  if (any_occluded) s.occluded = evaluate(pred, gt, occlusion_mask);
  if (any_visible) s.non_occluded = evaluate(pred, gt, visible);
  return s;
}

}  // namespace gma3d::flowmetrics
