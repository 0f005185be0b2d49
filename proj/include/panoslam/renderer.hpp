#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "panoslam/camera.hpp"
#include "panoslam/scene_model.hpp"

namespace panoslam {

/// Splat of one map Gaussian into pixel space. Only exists for Gaussians that
/// survive culling (in front of the near plane, footprint touching the image).
struct Projected2DGaussian {
  Vec2 center_px = Vec2::Zero();  // u2d
  double radius_px = 0;           // r2d = fx * r / d
  double sem_radius_px = 0;       // fx * r_sem / d
  double depth = 0;               // camera-frame z
  int32_t source = -1;            // index into GaussianMap
  double opacity = 0;             // copies kept hot for compositing
  double sem_opacity = 0;
  double reach_sq = 0;  // squared kTileBinSigmas footprint; beyond it both
                        // influences fall under kContributionEps
  Vec3 cam_point = Vec3::Zero();  // E*u, kept for the backward pass
};

constexpr double kNearPlane = 0.01;          // meters
constexpr double kTransmittanceEps = 1e-4;   // compositing truncation
constexpr double kContributionEps = 1e-12;   // skip influences below this
constexpr int kTileSize = 16;

// Compositing evaluates the Gaussian falloff with a smooth taper to exactly
// zero between 4 and 4.5 sigma (in q = dist^2 / 2 sigma^2 units). The taper
// keeps every rendered channel C1 in all parameters, so finite differences
// see no cutoff, while giving splats the bounded support that tile
// rasterization needs. Influence at the taper start is exp(-8) ~ 3.4e-4.
constexpr double kWindowStartQ = 8.0;    // 4.0 sigma
constexpr double kWindowEndQ = 10.125;   // 4.5 sigma
constexpr double kTileBinSigmas = 4.5;   // support radius, in sigmas

std::optional<Projected2DGaussian> project_gaussian(const SemanticGaussian& g,
                                                    const CameraPose& pose,
                                                    const Intrinsics& intr);

/// Influence of a projected Gaussian at pixel p: o * exp(-|p-u|^2 / (2 r^2))
/// with the optical (o, r) or semantic (o_sem, r_sem) pair.
inline double gaussian_influence(const Projected2DGaussian& g, const Vec2& p, bool semantic) {
  const double dist_sq = (p - g.center_px).squaredNorm();
  return semantic ? gaussian_falloff(g.sem_opacity, g.sem_radius_px, dist_sq)
                  : gaussian_falloff(g.opacity, g.radius_px, dist_sq);
}

/// One compositing entry: alpha values of a projected Gaussian at a pixel.
struct PixelContribution {
  int32_t local;     // index into the owning tile's contributor list
  double alpha;      // optical f
  double sem_alpha;  // semantic f
};

struct TileContributions {
  int x0 = 0, y0 = 0, w = 0, h = 0;          // pixel rect
  std::vector<int32_t> gaussians;            // projected indices, depth order
  std::vector<int32_t> offsets;              // per tile pixel, size w*h+1
  std::vector<PixelContribution> entries;
};

struct RenderOutput {
  int width = 0, height = 0;
  ColorImage color;          // C
  DepthImage depth;          // D
  ScalarImage silhouette;    // F, composited with (o, r)
  ColorImage semantic;       // S, composited with (o_sem, r_sem)
  ScalarImage sem_silhouette;  // F_hat

  // Backward-pass state.
  std::vector<Projected2DGaussian> projected;
  std::vector<TileContributions> tiles;
  int tiles_x = 0, tiles_y = 0;
  CameraPose pose;
  Intrinsics intr;
  bool retained = false;

  /// (map Gaussian index, optical weight, semantic weight) per contributor of
  /// one pixel, in compositing order. Weights are f_i * prod(1 - f_j).
  struct WeightEntry {
    int32_t gaussian;
    double weight;
    double sem_weight;
  };
  std::vector<WeightEntry> pixel_weights(int x, int y) const;
};

/// Per-pixel upstream gradients for every rendered channel.
struct ChannelGradients {
  ColorImage d_color;
  DepthImage d_depth;
  ScalarImage d_silhouette;
  ColorImage d_semantic;
  ScalarImage d_sem_silhouette;

  static ChannelGradients zeros(int w, int h);
};

/// d(loss)/d(every Gaussian parameter), aligned with the map.
struct GaussianGradients {
  std::vector<Vec3> color;
  std::vector<Vec3> center;
  std::vector<double> radius;
  std::vector<double> opacity;
  std::vector<Vec3> semantic;
  std::vector<double> sem_radius;
  std::vector<double> sem_opacity;

  void resize(size_t n);
  void add_scaled(const GaussianGradients& other, double s);
};

struct PoseGradient {
  Vec4 quat = Vec4::Zero();  // ambient 4-vector, tangent-projected
  Vec3 translation = Vec3::Zero();
};

RenderOutput render(const GaussianMap& map, const CameraPose& pose,
                    const Intrinsics& intr, bool retain = true);

struct BackwardResult {
  GaussianGradients gaussians;
  PoseGradient pose;
};

/// Analytic adjoint of render(). `output` must have been produced with
/// retain = true; throws std::logic_error otherwise.
BackwardResult render_backward(const GaussianMap& map, const RenderOutput& output,
                               const ChannelGradients& upstream);

void set_render_threads(int n);

}  // namespace panoslam
