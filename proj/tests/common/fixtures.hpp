// Shared test fixtures: FD-friendly random scenes and the finite-difference
// oracle used to check every analytic gradient of the renderer.
#pragma once

#include <functional>
#include <vector>

#include "panoslam/random.hpp"
#include "panoslam/renderer.hpp"
#include "panoslam/scene_model.hpp"

namespace panoslam::testing {

struct GradCheckScene {
  GaussianMap map;
  CameraPose pose;
  Intrinsics intr;
};

/// Random scene whose Gaussians project well inside the image with bounded
/// per-pixel opacity stacking, so finite differences never cross the culling
/// or transmittance-truncation discontinuities.
inline GradCheckScene make_gradcheck_scene(uint64_t seed, int n_gaussians = 10,
                                           int image = 16) {
  for (uint64_t attempt = 0;; ++attempt) {
    Rng rng(derive_seed(seed, 0xf1d, attempt));
    GradCheckScene s;
    s.intr = Intrinsics{static_cast<double>(image), static_cast<double>(image),
                        image / 2.0, image / 2.0, image, image};

    const double angle = rng.uniform(-0.15, 0.15);
    const Vec3 axis = Vec3(rng.normal(), rng.normal(), rng.normal()).normalized();
    const Vec4 q(std::cos(angle / 2), std::sin(angle / 2) * axis.x(),
                 std::sin(angle / 2) * axis.y(), std::sin(angle / 2) * axis.z());
    s.pose = CameraPose(q, Vec3(rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1),
                                rng.uniform(-0.1, 0.1)));

    // One Gaussian per coarse grid cell keeps the per-pixel stack shallow.
    const int grid = 4;
    std::vector<int> cells(grid * grid);
    for (size_t i = 0; i < cells.size(); ++i) cells[i] = static_cast<int>(i);
    rng.shuffle(cells);
    for (int i = 0; i < n_gaussians; ++i) {
      const int cell = cells[i % cells.size()];
      const double cw = static_cast<double>(image - 6) / grid;
      const double px = 3.0 + (cell % grid) * cw + rng.uniform(0.2, 0.8) * cw;
      const double py = 3.0 + (cell / grid) * cw + rng.uniform(0.2, 0.8) * cw;
      const double depth = rng.uniform(1.5, 3.0);
      SemanticGaussian g;
      g.center = s.pose.inverse_transform(backproject_pixel(px, py, depth, s.intr));
      g.radius = rng.uniform(0.8, 2.0) * depth / s.intr.fx;
      g.sem_radius = rng.uniform(0.8, 2.0) * depth / s.intr.fx;
      g.opacity = rng.uniform(0.25, 0.7);
      g.sem_opacity = rng.uniform(0.25, 0.7);
      g.color = Vec3(rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9));
      g.semantic = Vec3(rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9));
      s.map.add(g, 0);
    }

    // Keep a 10x margin above the truncation threshold.
    const RenderOutput probe = render(s.map, s.pose, s.intr, true);
    double min_t = 1.0;
    for (size_t i = 0; i < probe.silhouette.size(); ++i)
      min_t = std::min(min_t, 1.0 - std::max(probe.silhouette[i], probe.sem_silhouette[i]));
    if (min_t > 10.0 * kTransmittanceEps) return s;
  }
}

/// Upstream weights against one channel only (0=C, 1=D, 2=F, 3=S, 4=Fhat).
inline ChannelGradients channel_weights(int channel, int w, int h, uint64_t seed) {
  Rng rng(derive_seed(seed, 0x3a7, channel));
  ChannelGradients up = ChannelGradients::zeros(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      switch (channel) {
        case 0: up.d_color(x, y) = Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)); break;
        case 1: up.d_depth(x, y) = rng.uniform(-1, 1); break;
        case 2: up.d_silhouette(x, y) = rng.uniform(-1, 1); break;
        case 3: up.d_semantic(x, y) = Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)); break;
        case 4: up.d_sem_silhouette(x, y) = rng.uniform(-1, 1); break;
      }
    }
  return up;
}

/// Weighted sum of all channels under the given upstream weights.
inline double weighted_objective(const GaussianMap& map, const CameraPose& pose,
                                 const Intrinsics& intr, const ChannelGradients& up) {
  const RenderOutput out = render(map, pose, intr, false);
  double acc = 0;
  for (size_t i = 0; i < out.color.size(); ++i) {
    acc += up.d_color[i].dot(out.color[i]);
    acc += up.d_depth[i] * out.depth[i];
    acc += up.d_silhouette[i] * out.silhouette[i];
    acc += up.d_semantic[i].dot(out.semantic[i]);
    acc += up.d_sem_silhouette[i] * out.sem_silhouette[i];
  }
  return acc;
}

/// Central finite difference through a parameter accessor.
inline double central_difference(const std::function<double()>& objective, double* param,
                                 double rel_step = 1e-4) {
  const double original = *param;
  const double h = rel_step * std::max(1.0, std::abs(original));
  *param = original + h;
  const double hi = objective();
  *param = original - h;
  const double lo = objective();
  *param = original;
  return (hi - lo) / (2 * h);
}

inline bool grad_matches(double analytic, double numeric, double rel_tol = 1e-3,
                         double abs_floor = 1e-6) {
  const double diff = std::abs(analytic - numeric);
  return diff <= std::max(abs_floor, rel_tol * std::max(std::abs(analytic), std::abs(numeric)));
}

/// Checks every Gaussian and pose parameter of one scene for one channel.
/// Returns the number of failed comparisons (0 = all good).
inline int check_scene_gradients(GradCheckScene& s, int channel, uint64_t seed,
                                 int* checked_out = nullptr) {
  const ChannelGradients up = channel_weights(channel, s.intr.width, s.intr.height, seed);
  const RenderOutput out = render(s.map, s.pose, s.intr, true);
  const BackwardResult bw = render_backward(s.map, out, up);

  auto objective = [&]() { return weighted_objective(s.map, s.pose, s.intr, up); };
  int failures = 0, checked = 0;
  auto check1 = [&](double analytic, double* param) {
    const double numeric = central_difference(objective, param);
    ++checked;
    if (!grad_matches(analytic, numeric)) ++failures;
  };

  for (size_t i = 0; i < s.map.size(); ++i) {
    SemanticGaussian& g = s.map.gaussians[i];
    for (int k = 0; k < 3; ++k) check1(bw.gaussians.color[i][k], &g.color[k]);
    for (int k = 0; k < 3; ++k) check1(bw.gaussians.center[i][k], &g.center[k]);
    check1(bw.gaussians.radius[i], &g.radius);
    check1(bw.gaussians.opacity[i], &g.opacity);
    for (int k = 0; k < 3; ++k) check1(bw.gaussians.semantic[i][k], &g.semantic[k]);
    check1(bw.gaussians.sem_radius[i], &g.sem_radius);
    check1(bw.gaussians.sem_opacity[i], &g.sem_opacity);
  }

  // Pose parameters: perturb the raw quaternion storage; render renormalizes,
  // matching the tangent-projected analytic gradient.
  Vec4 q = s.pose.quat();
  Vec3 t = s.pose.translation();
  auto pose_objective = [&]() {
    return weighted_objective(s.map, CameraPose(q, t), s.intr, up);
  };
  for (int k = 0; k < 4; ++k) {
    const double numeric = central_difference(pose_objective, &q[k]);
    ++checked;
    if (!grad_matches(bw.pose.quat[k], numeric)) ++failures;
  }
  for (int k = 0; k < 3; ++k) {
    const double numeric = central_difference(pose_objective, &t[k]);
    ++checked;
    if (!grad_matches(bw.pose.translation[k], numeric)) ++failures;
  }
  if (checked_out) *checked_out = checked;
  return failures;
}

}  // namespace panoslam::testing
