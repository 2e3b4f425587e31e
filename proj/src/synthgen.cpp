#include "gma3d/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <utility>

#include "gma3d/errors.hpp"
#include "gma3d/random.hpp"

namespace gma3d::synthgen {

using spatial::Vec3;

namespace {

constexpr int kMaxAttempts = 16;
constexpr int kMaxCenterDraws = 1000;

Vec3 random_unit(Rng& rng) {
  for (;;) {
    const Vec3 v{rng.normal(), rng.normal(), rng.normal()};
    const double n = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
    if (n > 1e-12) return {v[0] / n, v[1] / n, v[2] / n};
  }
}

// Rodrigues rotation of v about unit axis a by angle theta.
Vec3 rotate(const Vec3& v, const Vec3& a, double theta) {
  const double c = std::cos(theta), s = std::sin(theta);
  const Vec3 cross{a[1] * v[2] - a[2] * v[1], a[2] * v[0] - a[0] * v[2], a[0] * v[1] - a[1] * v[0]};
  const double dot = a[0] * v[0] + a[1] * v[1] + a[2] * v[2];
  Vec3 out;
  for (int i = 0; i < 3; ++i) out[i] = v[i] * c + cross[i] * s + a[i] * dot * (1.0 - c);
  return out;
}

struct Geometry {
  std::vector<Vec3> points;
  std::vector<Vec3> flow;
  std::vector<std::size_t> cluster;
  std::vector<std::size_t> part;  // global part index: cluster * parts + p
};

Geometry sample_geometry(const SceneConfig& cfg, Rng& rng) {
  Geometry g;
  std::vector<Vec3> centers;
  for (std::size_t c = 0; c < cfg.n_clusters; ++c) {
    std::optional<Vec3> center;
    for (int draw = 0; draw < kMaxCenterDraws && !center; ++draw) {
      const Vec3 cand{rng.uniform(-cfg.scene_extent, cfg.scene_extent),
                      rng.uniform(-cfg.scene_extent, cfg.scene_extent),
                      rng.uniform(-cfg.scene_extent, cfg.scene_extent)};
      const bool clear = std::all_of(centers.begin(), centers.end(), [&](const Vec3& o) {
        return spatial::squared_distance(cand, o) >=
               cfg.min_cluster_separation * cfg.min_cluster_separation;
      });
      if (clear) center = cand;
    }
    if (!center) {
      throw GenerationError("could not place cluster " + std::to_string(c) + " at separation " +
                            std::to_string(cfg.min_cluster_separation) + " m inside extent " +
                            std::to_string(cfg.scene_extent) + " m");
    }
    centers.push_back(*center);
  }

  for (std::size_t c = 0; c < cfg.n_clusters; ++c) {
    const Vec3& center = centers[c];
    const Vec3 dir = random_unit(rng);
    const double mid = (static_cast<double>(cfg.parts_per_cluster) - 1.0) / 2.0;
    for (std::size_t j = 0; j < cfg.points_per_cluster; ++j) {
      const std::size_t p = j * cfg.parts_per_cluster / cfg.points_per_cluster;
      const double offset = (static_cast<double>(p) - mid) * cfg.part_spacing;
      Vec3 pt;
      for (int a = 0; a < 3; ++a) {
        pt[a] = center[a] + offset * dir[a] + cfg.cluster_spread * rng.normal();
      }
      g.points.push_back(pt);
      g.cluster.push_back(c);
      g.part.push_back(c * cfg.parts_per_cluster + p);
    }
    const Vec3 axis = random_unit(rng);
    const double angle = rng.uniform(-cfg.rotation_range, cfg.rotation_range);
    const Vec3 t{rng.uniform(-cfg.translation_range, cfg.translation_range),
                 rng.uniform(-cfg.translation_range, cfg.translation_range),
                 rng.uniform(-cfg.translation_range, cfg.translation_range)};
    const std::size_t first = c * cfg.points_per_cluster;
    for (std::size_t i = first; i < first + cfg.points_per_cluster; ++i) {
      const Vec3 rel{g.points[i][0] - center[0], g.points[i][1] - center[1],
                     g.points[i][2] - center[2]};
      const Vec3 moved = rotate(rel, axis, angle);
      g.flow.push_back({moved[0] - rel[0] + t[0], moved[1] - rel[1] + t[1], moved[2] - rel[2] + t[2]});
    }
  }
  return g;
}

std::vector<bool> occlude_local(const SceneConfig& cfg, const spatial::NeighborIndex& nbrs,
                                std::size_t target, Rng& rng) {
  const std::size_t n = nbrs.size();
  std::vector<std::vector<std::size_t>> referenced_by(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j : nbrs.row(i)) referenced_by[j].push_back(i);
  }
  std::vector<std::size_t> visible_nbrs(n, nbrs.k);
  std::vector<bool> occluded(n, false);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(std::span<std::size_t>(order));

  std::size_t count = 0;
  for (std::size_t i : order) {
    if (count == target) break;
    if (visible_nbrs[i] == 0) continue;
    const bool keeps_others = std::all_of(
        referenced_by[i].begin(), referenced_by[i].end(),
        [&](std::size_t j) { return !occluded[j] || visible_nbrs[j] >= 2; });
    if (!keeps_others) continue;
    occluded[i] = true;
    ++count;
    for (std::size_t j : referenced_by[i]) --visible_nbrs[j];
  }
  if (count < target) {
    throw GenerationError("local occlusion: only " + std::to_string(count) + " of " +
                          std::to_string(target) + " points can be occluded while keeping a " +
                          "visible neighbor among k=" + std::to_string(cfg.neighbor_k));
  }
  return occluded;
}

std::vector<bool> occlude_global(const SceneConfig& cfg, const Geometry& g,
                                 const spatial::NeighborIndex& nbrs, std::size_t target,
                                 Rng& rng) {
  const std::size_t n = g.points.size();
  const std::size_t n_parts = cfg.n_clusters * cfg.parts_per_cluster;
  std::vector<std::size_t> order(n_parts);
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(std::span<std::size_t>(order));

  std::vector<bool> occluded(n, false);
  std::vector<std::size_t> visible_in_cluster(cfg.n_clusters, cfg.points_per_cluster);
  std::size_t count = 0;
  for (std::size_t part : order) {
    if (count >= target) break;
    // Close the part under k-NN so every member's neighbors are occluded too.
    std::vector<bool> in_region(n, false);
    std::vector<std::size_t> region, frontier;
    for (std::size_t i = 0; i < n; ++i) {
      if (g.part[i] == part && !occluded[i]) {
        in_region[i] = true;
        region.push_back(i);
        frontier.push_back(i);
      }
    }
    if (region.empty()) continue;
    while (!frontier.empty()) {
      const std::size_t i = frontier.back();
      frontier.pop_back();
      for (std::size_t j : nbrs.row(i)) {
        if (!in_region[j] && !occluded[j]) {
          in_region[j] = true;
          region.push_back(j);
          frontier.push_back(j);
        }
      }
    }
    std::vector<std::size_t> removed(cfg.n_clusters, 0);
    for (std::size_t i : region) ++removed[g.cluster[i]];
    bool keeps_every_cluster = true;
    for (std::size_t c = 0; c < cfg.n_clusters; ++c) {
      if (removed[c] > 0 && removed[c] >= visible_in_cluster[c]) keeps_every_cluster = false;
    }
    if (!keeps_every_cluster) continue;
    for (std::size_t i : region) occluded[i] = true;
    for (std::size_t c = 0; c < cfg.n_clusters; ++c) visible_in_cluster[c] -= removed[c];
    count += region.size();
  }
  if (count < target) {
    throw GenerationError("global occlusion: reached " + std::to_string(count) + " of " +
                          std::to_string(target) + " points; parts leak through k-NN (k=" +
                          std::to_string(cfg.neighbor_k) +
                          ") or every object would vanish; increase part_spacing or lower the fraction");
  }
  return occluded;
}

std::vector<bool> occlude_fps(const Geometry& g, std::size_t target, Rng& rng) {
  const std::size_t n = g.points.size();
  std::vector<bool> occluded(n, true);
  if (target == 0) return std::vector<bool>(n, false);
  std::vector<Vec3> moved(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (int a = 0; a < 3; ++a) moved[i][a] = g.points[i][a] + g.flow[i][a];
  }
  const std::size_t seed = rng.index(n);
  for (std::size_t i : spatial::fps(spatial::PointCloud(std::move(moved)), n - target, seed)) {
    occluded[i] = false;
  }
  return occluded;
}

bool occluded_targets_clear(const Geometry& g, const std::vector<bool>& occluded, double r_match) {
  const double r2 = r_match * r_match;
  const std::size_t n = g.points.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (!occluded[i]) continue;
    const Vec3 target{g.points[i][0] + g.flow[i][0], g.points[i][1] + g.flow[i][1],
                      g.points[i][2] + g.flow[i][2]};
    for (std::size_t j = 0; j < n; ++j) {
      if (occluded[j]) continue;
      const Vec3 kept{g.points[j][0] + g.flow[j][0], g.points[j][1] + g.flow[j][1],
                      g.points[j][2] + g.flow[j][2]};
      if (spatial::squared_distance(target, kept) <= r2) return false;
    }
  }
  return true;
}

}  // namespace

void SceneConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("scene config: " + msg); };
  if (n_clusters == 0) fail("n_clusters must be positive");
  if (points_per_cluster == 0) fail("points_per_cluster must be positive");
  if (parts_per_cluster == 0 || parts_per_cluster > points_per_cluster) {
    fail("parts_per_cluster must be in [1, points_per_cluster]");
  }
  if (total_points() < 2) fail("a scene needs at least 2 points");
  if (!(cluster_spread > 0.0)) fail("cluster_spread must be positive");
  if (!(part_spacing >= 0.0)) fail("part_spacing must be non-negative");
  if (!(scene_extent >= 0.0)) fail("scene_extent must be non-negative");
  if (!(min_cluster_separation >= 0.0)) fail("min_cluster_separation must be non-negative");
  if (!(translation_range >= 0.0)) fail("translation_range must be non-negative");
  if (!(rotation_range >= 0.0)) fail("rotation_range must be non-negative");
  if (!(occlusion_fraction >= 0.0 && occlusion_fraction < 1.0)) {
    fail("occlusion_fraction must be in [0, 1)");
  }
  if (neighbor_k == 0 || neighbor_k >= total_points()) fail("neighbor_k must be in [1, N-1]");
  if (!(r_match > 0.0)) fail("r_match must be positive");
  if (context_dim < n_clusters) {
    fail("context_dim (" + std::to_string(context_dim) + ") must be at least n_clusters (" +
         std::to_string(n_clusters) + ")");
  }
  if (motion_dim == 0) fail("motion_dim must be positive");
  if (!(feature_noise_std >= 0.0)) fail("feature_noise_std must be non-negative");
  if (!(occluded_noise_std >= 0.0)) fail("occluded_noise_std must be non-negative");
}

std::string to_string(OcclusionMode m) {
  switch (m) {
    case OcclusionMode::kLocal:
      return "local";
    case OcclusionMode::kGlobal:
      return "global";
    case OcclusionMode::kFps:
      return "fps";
  }
  return "local";
}

OcclusionMode occlusion_mode_from_string(const std::string& s) {
  if (s == "local") return OcclusionMode::kLocal;
  if (s == "global") return OcclusionMode::kGlobal;
  if (s == "fps") return OcclusionMode::kFps;
  throw ConfigError("unknown occlusion mode '" + s + "' (expected local, global or fps)");
}

std::size_t SyntheticScene::occluded_count() const {
  return static_cast<std::size_t>(std::count(occlusion_mask.begin(), occlusion_mask.end(), true));
}

SyntheticScene generate_scene(const SceneConfig& cfg) {
  cfg.validate();
  Rng rng(derive_seed(cfg.seed, 0));
  const std::size_t n = cfg.total_points();
  const auto target =
      static_cast<std::size_t>(std::llround(cfg.occlusion_fraction * static_cast<double>(n)));

  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    Geometry g = sample_geometry(cfg, rng);
    std::vector<bool> occluded(n, false);
    if (target > 0) {
      switch (cfg.occlusion_mode) {
        case OcclusionMode::kLocal:
          occluded = occlude_local(cfg, spatial::knn(spatial::PointCloud(g.points), cfg.neighbor_k),
                                   target, rng);
          break;
        case OcclusionMode::kGlobal:
          occluded = occlude_global(
              cfg, g, spatial::knn(spatial::PointCloud(g.points), cfg.neighbor_k), target, rng);
          break;
        case OcclusionMode::kFps:
          occluded = occlude_fps(g, target, rng);
          break;
      }
    }
    if (!occluded_targets_clear(g, occluded, cfg.r_match)) continue;

    std::vector<Vec3> frame2;
    for (std::size_t i = 0; i < n; ++i) {
      if (occluded[i]) continue;
      frame2.push_back({g.points[i][0] + g.flow[i][0], g.points[i][1] + g.flow[i][1],
                        g.points[i][2] + g.flow[i][2]});
    }
    if (frame2.empty()) throw GenerationError("every point would be occluded");
    SyntheticScene scene{spatial::PointCloud(std::move(g.points)),
                         spatial::PointCloud(std::move(frame2)),
                         flowmetrics::FlowField(std::move(g.flow)),
                         std::move(occluded),
                         std::move(g.cluster),
                         {},
                         {}};
    auto feats = synth_features(scene, cfg);
    scene.context = std::move(feats.context);
    scene.motion_in = std::move(feats.motion_in);
    return scene;
  }
  throw GenerationError("an occluded point kept a frame-2 counterpart within r_match=" +
                        std::to_string(cfg.r_match) + " m in " + std::to_string(kMaxAttempts) +
                        " attempts");
}

numkern::DenseArray motion_embedding(const SceneConfig& cfg) {
  numkern::DenseArray e = numkern::DenseArray::zeros({3, cfg.motion_dim});
  if (cfg.motion_embedding == MotionEmbedding::kIdentity) {
    for (std::size_t a = 0; a < std::min<std::size_t>(3, cfg.motion_dim); ++a) e(a, a) = 1.0;
    return e;
  }
  Rng rng(derive_seed(cfg.seed, 2));
  const double s = 1.0 / std::sqrt(3.0);
  for (std::size_t i = 0; i < e.size(); ++i) e[i] = s * rng.normal();
  return e;
}

Features synth_features(const SyntheticScene& scene, const SceneConfig& cfg) {
  if (cfg.context_dim < cfg.n_clusters) {
    throw ConfigError("context_dim (" + std::to_string(cfg.context_dim) +
                      ") must be at least n_clusters (" + std::to_string(cfg.n_clusters) + ")");
  }
  const std::size_t n = scene.size();
  Rng rng(derive_seed(cfg.seed, 1));
  numkern::DenseArray context = numkern::DenseArray::zeros({n, cfg.context_dim});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < cfg.context_dim; ++c) {
      const double base = c == scene.cluster_id[i] ? 1.0 : 0.0;
      context(i, c) = base + cfg.feature_noise_std * rng.normal();
    }
  }

  const numkern::DenseArray embed = motion_embedding(cfg);
  numkern::DenseArray motion = numkern::DenseArray::zeros({n, cfg.motion_dim});
  for (std::size_t i = 0; i < n; ++i) {
    const auto& f = scene.gt_flow[i];
    for (std::size_t d = 0; d < cfg.motion_dim; ++d) {
      const double z = rng.normal();
      if (!scene.occlusion_mask[i]) {
        const double clean = f[0] * embed(0, d) + f[1] * embed(1, d) + f[2] * embed(2, d);
        motion(i, d) = clean + cfg.feature_noise_std * z;
      } else if (cfg.occluded_motion == OccludedMotion::kNoise) {
        motion(i, d) = cfg.occluded_noise_std * z;
      }
    }
  }
  return {std::move(context), std::move(motion)};
}

}  // namespace gma3d::synthgen
