#pragma once

// End-point-error metrics for scene flow.
//
//   EPE         mean over points of ||pred - gt||_2 (meters)
//   Acc Strict  fraction with EPE < 0.05 m  or relative error < 5%
//   Acc Relax   fraction with EPE < 0.1 m   or relative error < 10%
//   Outliers    fraction with EPE > 0.3 m   or relative error > 30%
//
// Relative error is EPE / ||gt||_2. For a zero ground-truth vector the
// relative condition is never satisfied and only the absolute one applies.

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "gma3d/numkern/dense_array.hpp"
#include "gma3d/spatial.hpp"

namespace gma3d::flowmetrics {

using spatial::Vec3;

inline constexpr double kStrictAbs = 0.05;
inline constexpr double kStrictRel = 0.05;
inline constexpr double kRelaxAbs = 0.1;
inline constexpr double kRelaxRel = 0.1;
inline constexpr double kOutlierAbs = 0.3;
inline constexpr double kOutlierRel = 0.3;

// Per-point 3-D displacement, meters.
class FlowField {
 public:
  FlowField() = default;
  explicit FlowField(std::vector<Vec3> vectors);

  static FlowField from_array(const numkern::DenseArray& a);
  numkern::DenseArray to_array() const;

  std::size_t size() const noexcept { return vectors_.size(); }
  const Vec3& operator[](std::size_t i) const { return vectors_[i]; }
  std::span<const Vec3> vectors() const noexcept { return vectors_; }

 private:
  std::vector<Vec3> vectors_;
};

struct FlowMetrics {
  double epe_m = 0.0;
  double acc_strict = 0.0;
  double acc_relax = 0.0;
  double outliers = 0.0;
  std::size_t n_points = 0;
};

struct SplitMetrics {
  std::optional<FlowMetrics> occluded;      // empty when no point is occluded
  std::optional<FlowMetrics> non_occluded;  // empty when every point is occluded
  FlowMetrics all;
};

double epe(const FlowField& pred, const FlowField& gt);

// Metrics over all points, or over the points where mask is true.
// Throws NoPointsError for an empty selection.
FlowMetrics evaluate(const FlowField& pred, const FlowField& gt);
FlowMetrics evaluate(const FlowField& pred, const FlowField& gt, const std::vector<bool>& mask);

SplitMetrics evaluate_split(const FlowField& pred, const FlowField& gt,
                            const std::vector<bool>& occlusion_mask);

}  // namespace gma3d::flowmetrics
