#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <vector>

#include "panoslam/frame.hpp"
#include "panoslam/optimizer.hpp"
#include "panoslam/panoptic.hpp"
#include "panoslam/renderer.hpp"
#include "panoslam/scene_model.hpp"
#include "panoslam/stl.hpp"

namespace panoslam {

struct MappingConfig {
  double lambda_color = 1.0;     // lambda1
  double lambda_depth = 1.0;     // lambda2
  double lambda_ce = 1.0;        // lambda3
  double lambda_dice = 1.0;      // lambda4
  double lambda_focal = 20.0;    // lambda5
  double depth_error_factor = 50.0;  // x median depth error
  int keyframe_interval = 5;     // u
  int window_size = 4;           // T
  int iterations_per_frame = 30;
  int warmup_iterations = 100;
  int warmup_frames = 5;
  double lr_centers = 1e-4;
  double lr_colors = 2.5e-3;     // shared with semantic embeddings
  double lr_radii = 1e-3;
  double lr_opacities = 5e-2;
  double lr_head = 1e-3;
  double focal_alpha = 0.25;
  double focal_gamma = 2.0;
  double no_object_weight = 0.1;
  double stl_voxel_size = 0.05;  // S_n, meters
  bool stl_enabled = true;
  bool panoptic_in_warmup = false;
  int keyframe_subsample = 4096;
};

/// Eq-style densification rule: a pixel is flagged when either silhouette is
/// below 0.5 or its depth residual exceeds `depth_error_factor` times the
/// median residual over valid pixels. Invalid-depth pixels never trip the
/// depth clause.
Image<uint8_t> densification_mask(const RenderOutput& rendered, const Frame& frame,
                                  const MappingConfig& cfg);

/// Adds one Gaussian per flagged valid-depth pixel, first-frame rules through
/// the tracked pose. Returns the number of spawned Gaussians.
size_t densify(GaussianMap& map, const Frame& frame, const Image<uint8_t>& mask,
               const CameraPose& pose, const Intrinsics& intr);

struct WindowMember {
  int frame_index = 0;
  const Frame* frame = nullptr;
  CameraPose pose;
};

/// Count of `points` landing inside the frustum of `pose` (in front of the
/// near plane and within image bounds).
int64_t count_points_in_frustum(const std::vector<Vec3>& points, const CameraPose& pose,
                                const Intrinsics& intr);

/// Top (window_size - 1) keyframes by frustum overlap with the current frame
/// plus the current frame itself, in ascending frame order. Overlap counts
/// unprojected current-frame depth points (subsampled to `max_points` with a
/// seeded draw); ties break toward recency.
std::vector<WindowMember> select_keyframes(const WindowMember& current,
                                           const std::vector<WindowMember>& keyframes,
                                           const Intrinsics& intr, int window_size,
                                           int max_points, uint64_t seed);

/// Per-frame training targets in head-slot space, produced by Hungarian
/// alignment of pseudo regions against the currently rendered masks and then
/// (optionally) STL voxel refinement.
struct FrameTargets {
  bool has_labels = false;
  std::vector<int> slot_to_pseudo;   // per head slot, matched pseudo region or -1
  Eigen::MatrixXd region_targets;    // (pixels x N)
  Eigen::MatrixXd class_targets;     // (N x K), rows meaningful for matched slots
};

struct WindowTargets {
  std::vector<FrameTargets> frames;  // parallel to the window
  size_t stl_groups = 0;             // voxel groups used (0 when STL disabled)
};

WindowTargets prepare_window_targets(const std::vector<WindowMember>& window,
                                     const GaussianMap& map, const PanopticHead& head,
                                     const Intrinsics& intr, const MappingConfig& cfg,
                                     bool stl_enabled);

struct LossBreakdown {
  double color = 0, depth = 0, ce = 0, dice = 0, focal = 0;
  double total = 0;
  size_t matched_regions = 0;
  bool warning_no_match = false;

  double weighted_total(const MappingConfig& cfg) const {
    return cfg.lambda_color * color + cfg.lambda_depth * depth + cfg.lambda_ce * ce +
           cfg.lambda_dice * dice + cfg.lambda_focal * focal;
  }
};

struct WindowLossResult {
  LossBreakdown breakdown;  // per-term means over the window, unweighted
  double total = 0;         // the optimized objective (weights applied)
  std::vector<ChannelGradients> upstreams;  // d total / d channels, per frame
  HeadGradients head_grads;
};

/// Eq-13 objective over the window: mean over frames of per-pixel-mean L1
/// color and depth terms plus CE/dice/focal over the matched region slots.
/// Gradients for the rendered channels and the head come back ready for
/// render_backward / the optimizer.
WindowLossResult total_loss(const std::vector<RenderOutput>& renders,
                            const std::vector<WindowMember>& window,
                            const WindowTargets& targets, const PanopticHead& head,
                            const MappingConfig& cfg, bool panoptic_enabled,
                            bool with_gradients = true);

/// Adam over every Gaussian parameter and the head. Learning rates halve when
/// a step is rejected for a non-finite loss.
class MapOptimizer {
 public:
  void ensure_map_size(size_t n);
  void step(GaussianMap& map, PanopticHead& head, const GaussianGradients& g,
            const HeadGradients& hg, const MappingConfig& cfg, bool update_head);
  double lr_scale() const { return lr_scale_; }
  void halve_learning_rates() { lr_scale_ *= 0.5; }

  // Checkpoint access.
  std::vector<AdamState*> map_states();
  std::vector<AdamState*> head_states();
  std::vector<const AdamState*> map_states() const;
  std::vector<const AdamState*> head_states() const;
  void set_lr_scale(double s) { lr_scale_ = s; }

 private:
  AdamState color_, center_, radius_, opacity_, semantic_, sem_radius_, sem_opacity_;
  AdamState h_embed_, h_class_, h_w1_, h_b1_, h_w2_, h_b2_;
  double lr_scale_ = 1.0;
  bool head_init_ = false;
};

enum class MapStepStatus { Ok, RejectedNonFinite };

struct MapStepResult {
  LossBreakdown loss;
  MapStepStatus status = MapStepStatus::Ok;
};

/// One joint optimizer step on the map and head over the window; poses stay
/// fixed. Non-finite losses reject the step and halve the learning rates.
MapStepResult map_update_step(GaussianMap& map, PanopticHead& head, MapOptimizer& opt,
                              const std::vector<WindowMember>& window,
                              const WindowTargets& targets, const Intrinsics& intr,
                              const MappingConfig& cfg, bool panoptic_enabled);

}  // namespace panoslam
