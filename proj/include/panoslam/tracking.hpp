#pragma once

#include "panoslam/camera.hpp"
#include "panoslam/frame.hpp"
#include "panoslam/renderer.hpp"
#include "panoslam/scene_model.hpp"

namespace panoslam {

struct TrackingConfig {
  int iterations = 40;
  double lr_rotation = 4e-4;
  double lr_translation = 2e-3;
  double silhouette_threshold = 0.99;
  double convergence_tol = 1e-12;  // stop when the loss delta falls below this
  double lambda_color = 1.0;
  double lambda_depth = 1.0;
  /// Constant-velocity extrapolation mode: the literal additive form, or the
  /// relative-rotation composition alternative.
  bool geodesic_velocity = false;
};

enum class TrackStatus { Ok, DegenerateSilhouette };

struct TrackResult {
  CameraPose pose;
  double loss = 0;
  int iterations_run = 0;
  TrackStatus status = TrackStatus::Ok;
};

/// E_next = E_curr + (E_curr - E_prev), component-wise on the translation and
/// the sign-aligned quaternion 4-vector, renormalized. Falls back to E_curr
/// when the extrapolated quaternion degenerates.
CameraPose init_pose_constant_velocity(const CameraPose& prev, const CameraPose& curr,
                                       bool geodesic = false);

/// Gradient refinement of the camera pose against color + depth restricted to
/// pixels where the rendered silhouette exceeds the visibility threshold and
/// the frame depth is valid. The map is never mutated; the best iterate wins.
TrackResult track_frame(const GaussianMap& map, const Frame& frame, const CameraPose& init,
                        const Intrinsics& intr, const TrackingConfig& cfg);

/// The masked tracking objective at a fixed pose (exposed for tests).
/// Returns the number of masked pixels through `masked_out` when non-null.
double tracking_loss(const RenderOutput& rendered, const Frame& frame,
                     const TrackingConfig& cfg, size_t* masked_out = nullptr,
                     ChannelGradients* upstream_out = nullptr);

}  // namespace panoslam
