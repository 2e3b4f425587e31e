#pragma once

// Deterministic two-frame synthetic scenes with rigid cluster motion and
// controlled occlusion.
//
// A scene is n_clusters rigid objects. Each object is a row of
// parts_per_cluster Gaussian blobs spaced part_spacing apart along a random
// direction, so that a whole part can vanish while the rest of its object
// stays visible. Every object moves by its own rotation (about its center)
// plus translation. Occluded frame-1 points have their frame-2 counterpart
// deleted:
//
//   local   scattered points; each keeps >= 1 visible point among its k-NN
//   global  whole parts (closed under k-NN), so no occluded point has a
//           visible k-NN neighbor; at least one part per object survives
//   fps     frame 2 is a farthest-point subsample of the moved points
//
// Streams: geometry and occlusion draw from Rng(derive_seed(seed, 0)),
// feature noise from derive_seed(seed, 1), the motion embedding from
// derive_seed(seed, 2).

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "gma3d/flowmetrics.hpp"
#include "gma3d/numkern/dense_array.hpp"
#include "gma3d/spatial.hpp"

namespace gma3d::synthgen {

enum class OcclusionMode { kLocal, kGlobal, kFps };
enum class OccludedMotion { kZero, kNoise };
enum class MotionEmbedding { kRandom, kIdentity };

struct SceneConfig {
  std::size_t n_clusters = 2;
  std::size_t points_per_cluster = 100;
  std::size_t parts_per_cluster = 4;
  double cluster_spread = 0.15;          // std of each blob, m
  double part_spacing = 1.0;             // m between neighboring blob centers
  double scene_extent = 6.0;             // centers drawn in [-extent, extent]^3
  double min_cluster_separation = 5.0;   // m between object centers
  double translation_range = 1.0;        // per-axis uniform in [-r, r], m
  double rotation_range = 0.1;           // angle uniform in [-r, r], rad
  double occlusion_fraction = 0.0;       // in [0, 1)
  OcclusionMode occlusion_mode = OcclusionMode::kLocal;
  std::size_t neighbor_k = 16;
  double r_match = 1e-3;                 // m
  std::size_t context_dim = 32;
  std::size_t motion_dim = 32;
  double feature_noise_std = 0.05;
  OccludedMotion occluded_motion = OccludedMotion::kZero;
  double occluded_noise_std = 1.0;
  MotionEmbedding motion_embedding = MotionEmbedding::kRandom;
  std::uint64_t seed = 0;

  std::size_t total_points() const { return n_clusters * points_per_cluster; }
  // Throws ConfigError describing the first invalid field.
  void validate() const;
};

std::string to_string(OcclusionMode m);
OcclusionMode occlusion_mode_from_string(const std::string& s);

struct SyntheticScene {
  spatial::PointCloud frame1;
  spatial::PointCloud frame2;
  flowmetrics::FlowField gt_flow;
  std::vector<bool> occlusion_mask;  // true = occluded
  std::vector<std::size_t> cluster_id;
  numkern::DenseArray context;    // N×Dc
  numkern::DenseArray motion_in;  // N×Dm

  std::size_t size() const { return frame1.size(); }
  std::size_t occluded_count() const;
};

struct Features {
  numkern::DenseArray context;
  numkern::DenseArray motion_in;
};

// Throws GenerationError if the occlusion constraints cannot be met.
SyntheticScene generate_scene(const SceneConfig& cfg);

// Context: one-hot cluster id (padded to Dc) plus noise. Motion: gt_flow
// times a fixed 3×Dm embedding plus noise at visible points; zero or pure
// noise at occluded points.
Features synth_features(const SyntheticScene& scene, const SceneConfig& cfg);

// The 3×Dm matrix mapping flow vectors to motion features.
numkern::DenseArray motion_embedding(const SceneConfig& cfg);

}  // namespace gma3d::synthgen
