#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "panoslam/camera.hpp"
#include "panoslam/frame.hpp"
#include "panoslam/random.hpp"

namespace panoslam {

enum class PrimitiveKind { Box, Sphere };

struct Primitive {
  PrimitiveKind kind;
  Vec3 center = Vec3::Zero();
  Vec3 half_extent = Vec3::Zero();  // boxes; spheres use half_extent.x as radius
  Vec3 albedo = Vec3::Ones();
  int class_id = 0;
  int instance_id = 0;

  double radius() const { return half_extent.x(); }
  Vec3 aabb_min() const;
  Vec3 aabb_max() const;
};

/// Closed room (instance 0) plus free-standing primitives. Exact ray-cast
/// ground truth for color, z-depth and panoptic ids.
struct SyntheticScene {
  Vec3 room_min = Vec3(-2, -1.5, -2);
  Vec3 room_max = Vec3(2, 1.5, 2);
  std::vector<Primitive> objects;  // instance ids 1..n
  Vec3 light_dir = Vec3(0.4, -1.0, 0.3).normalized();
  double texture_amplitude = 0.15;
  double texture_frequency = 4.0;
  int room_class = 0;

  int num_instances() const { return static_cast<int>(objects.size()) + 1; }
  int instance_class(int instance) const {
    return instance == 0 ? room_class : objects[instance - 1].class_id;
  }
};

struct SceneSpec {
  int num_objects = 8;
  int num_classes = 16;  // class ids drawn from [1, num_classes)
  Vec3 room_min = Vec3(-2, -1.5, -2);
  Vec3 room_max = Vec3(2, 1.5, 2);
  double min_size = 0.25;
  double max_size = 0.55;
  /// Objects are kept outside this radius around the room center so orbit
  /// trajectories never start inside geometry.
  double keep_out_radius = 0.9;
  int max_attempts = 200;
};

/// Deterministic scene from the seed; throws after bounded retries when the
/// requested objects cannot be placed without overlap.
SyntheticScene generate_scene(const SceneSpec& spec, uint64_t seed);

struct RayHit {
  double depth = 0;  // z-depth along the optical axis
  int instance = -1;
  Vec3 normal = Vec3::Zero();
  Vec3 point = Vec3::Zero();
};

/// Nearest-surface hit for the camera ray through pixel (u, v). The returned
/// depth is the camera-frame z of the hit (not the euclidean distance).
RayHit cast_ray(const SyntheticScene& scene, const CameraPose& pose, const Intrinsics& intr,
                double u, double v);

/// Exact RGB-D + panoptic frame. Color is quantized to 8-bit levels and depth
/// to f32 at the source so on-disk round trips are bit-identical.
Frame render_ground_truth(const SyntheticScene& scene, const CameraPose& pose,
                          const Intrinsics& intr, int frame_index = 0);

struct NoiseConfig {
  double class_flip_rate = 0.0;      // p
  bool permute_instances = false;    // break cross-view region-id consistency
  int boundary_radius_px = 0;        // boundary erosion/dilation reach
  uint64_t seed = 0;
};

/// SEEM-like noisy pseudo-labels from a ground-truth panoptic frame. Each
/// view gets its own region index space; classes flip to a uniformly random
/// other class with probability p; labels within `boundary_radius_px` of a
/// region boundary are resampled from their neighborhood (erodes and dilates
/// masks stochastically). Identity config returns labels equal to the ground
/// truth partition.
PseudoLabels corrupt_labels(const PanopticLabels& gt, int num_classes, const NoiseConfig& cfg,
                            uint64_t view_tag);

enum class MotionType { Orbit, Lateral, RandomWalk };

struct TrajectorySpec {
  MotionType motion = MotionType::Orbit;
  int frames = 50;
  double orbit_radius = 1.1;
  double orbit_arc_deg = 70.0;
  double orbit_height = 0.0;
  double lateral_extent = 0.8;
  double max_step = 0.05;  // meters, random walk bound
  Vec3 look_at = Vec3::Zero();
};

/// Smooth world-to-camera pose sequence keeping the scene in view.
std::vector<CameraPose> generate_trajectory(const TrajectorySpec& spec, uint64_t seed);

/// World-to-camera pose looking from `eye` toward `target` (y-down camera).
CameraPose look_at_pose(const Vec3& eye, const Vec3& target, const Vec3& world_up = Vec3(0, 1, 0));

}  // namespace panoslam
