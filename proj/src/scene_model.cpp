#include "panoslam/scene_model.hpp"

#include <algorithm>
#include <stdexcept>

namespace panoslam {

namespace {
double clamp(double v, double lo, double hi) { return std::min(hi, std::max(lo, v)); }
}  // namespace

void GaussianMap::clamp_parameters() {
  for (auto& g : gaussians) {
    for (int k = 0; k < 3; ++k) g.color[k] = clamp(g.color[k], 0.0, 1.0);
    g.opacity = clamp(g.opacity, kOpacityEps, 1.0 - kOpacityEps);
    g.sem_opacity = clamp(g.sem_opacity, kOpacityEps, 1.0 - kOpacityEps);
    g.radius = std::max(g.radius, kRadiusFloor);
    g.sem_radius = std::max(g.sem_radius, kRadiusFloor);
  }
}

SemanticGaussian init_gaussian_at_pixel(const Frame& frame, const Intrinsics& intr,
                                        const CameraPose& pose, int x, int y) {
  const double d = frame.depth(x, y);
  SemanticGaussian g;
  g.center = pose.inverse_transform(backproject_pixel(x, y, d, intr));
  g.radius = g.sem_radius = d / intr.fx;
  g.color = g.semantic = frame.color(x, y);
  g.opacity = g.sem_opacity = 0.5;
  return g;
}

GaussianMap init_map_from_first_frame(const Frame& frame, const Intrinsics& intr) {
  frame.validate(intr);
  GaussianMap map;
  const CameraPose identity;
  for (int y = 0; y < intr.height; ++y)
    for (int x = 0; x < intr.width; ++x)
      if (frame.depth(x, y) > 0)
        map.add(init_gaussian_at_pixel(frame, intr, identity, x, y), frame.index);
  if (map.empty())
    throw std::runtime_error("first frame has no valid depth; cannot initialize map");
  return map;
}

}  // namespace panoslam
