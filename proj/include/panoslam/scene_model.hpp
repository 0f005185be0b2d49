#pragma once

#include <cstdint>
#include <vector>

#include "panoslam/camera.hpp"
#include "panoslam/frame.hpp"

namespace panoslam {

/// Isotropic splat primitive: 13 trainable values. Optical appearance uses
/// (c, u, r, o); the semantic channel renders (s, r_sem, o_sem) over the same
/// center.
struct SemanticGaussian {
  Vec3 color = Vec3::Zero();   // c, RGB in [0,1]
  Vec3 center = Vec3::Zero();  // u, world meters
  double radius = 0;           // r > 0, meters (standard deviation)
  double opacity = 0;          // o in [0,1]
  Vec3 semantic = Vec3::Zero();  // s, unitless embedding
  double sem_radius = 0;       // r_sem > 0, meters
  double sem_opacity = 0;      // o_sem in [0,1]
};

constexpr int kGaussianParamCount = 13;
constexpr double kOpacityEps = 1e-6;   // opacities live in [eps, 1-eps]
constexpr double kRadiusFloor = 1e-6;

class GaussianMap {
 public:
  std::vector<SemanticGaussian> gaussians;
  std::vector<int32_t> creation_frame;  // parallel to gaussians

  size_t size() const { return gaussians.size(); }
  bool empty() const { return gaussians.empty(); }

  void add(const SemanticGaussian& g, int frame_index) {
    gaussians.push_back(g);
    creation_frame.push_back(frame_index);
  }

  /// Clamps every Gaussian back into its valid box. Idempotent.
  void clamp_parameters();
};

/// Unnormalized opacity-weighted Gaussian falloff at squared distance `dist_sq`
/// from the center, with standard deviation `radius`.
inline double gaussian_falloff(double opacity, double radius, double dist_sq) {
  return opacity * std::exp(-dist_sq / (2.0 * radius * radius));
}

/// One Gaussian per valid-depth pixel of the first frame (identity pose):
/// center unprojects the pixel depth, r = r_sem = depth / fx (a one-pixel
/// footprint), c = s = pixel color, o = o_sem = 0.5.
/// Throws if the frame has no valid depth anywhere.
GaussianMap init_map_from_first_frame(const Frame& frame, const Intrinsics& intr);

/// The first-frame initialization rule for a single pixel, through an
/// arbitrary pose; shared with densification.
SemanticGaussian init_gaussian_at_pixel(const Frame& frame, const Intrinsics& intr,
                                        const CameraPose& pose, int x, int y);

}  // namespace panoslam
