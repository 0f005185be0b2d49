#pragma once

#include <filesystem>
#include <memory>
#include <vector>

#include "panoslam/frame.hpp"
#include "panoslam/mapping.hpp"
#include "panoslam/panoptic.hpp"
#include "panoslam/tracking.hpp"

namespace panoslam {

struct HeadConfig {
  int num_regions = 64;  // N
  int num_classes = 16;  // K
  int hidden = 16;       // H
};

struct SlamConfig {
  TrackingConfig tracking;
  MappingConfig mapping;
  HeadConfig head;
  PanopticThresholds thresholds;
  uint64_t seed = 12345;
};

struct FrameReport {
  int index = 0;
  int track_status = 0;  // TrackStatus
  double track_loss = 0;
  int track_iterations = 0;
  double map_loss = 0;
  int map_rejections = 0;
  int64_t gaussians = 0;
  int64_t densified = 0;
  int64_t stl_groups = 0;
  int64_t matched_regions = 0;
};

/// Per-frame SLAM loop: tracking, densification, spatial-temporal lifting,
/// window mapping. Frames must arrive in stream order.
class SlamSession {
 public:
  SlamSession(const Intrinsics& intr, const SlamConfig& cfg);

  FrameReport process_frame(const Frame& frame);

  int frames_processed() const { return frames_processed_; }
  const std::vector<CameraPose>& trajectory() const { return pose_history_; }
  const GaussianMap& map() const { return map_; }
  const PanopticHead& head() const { return head_; }
  const SlamConfig& config() const { return cfg_; }
  const Intrinsics& intrinsics() const { return intr_; }
  const std::vector<FrameReport>& reports() const { return reports_; }
  std::vector<int> keyframe_indices() const;
  const CameraPose& pose_of(int frame_index) const { return pose_history_.at(frame_index); }

  /// Renders + panoptic inference at an arbitrary pose with the current map.
  RenderOutput render_view(const CameraPose& pose) const;
  PanopticSegmentation infer_panoptic(const RenderOutput& rendered) const;

  /// Writes estimated trajectory, per-keyframe renders (color, depth,
  /// panoptic) and the per-frame metric log. Deterministic bytes.
  void export_results(const std::filesystem::path& dir) const;

  void save_checkpoint(const std::filesystem::path& path) const;
  /// Restores a session; keyframe pixel data is re-read from `all_frames`
  /// (the sequence the checkpointed run was consuming).
  static std::unique_ptr<SlamSession> load_checkpoint(const std::filesystem::path& path,
                                                      const std::vector<Frame>& all_frames);

 private:
  struct KeyframeRecord {
    Frame frame;  // owned copy
    CameraPose pose;
  };

  Intrinsics intr_;
  SlamConfig cfg_;
  GaussianMap map_;
  PanopticHead head_;
  MapOptimizer optimizer_;
  std::vector<CameraPose> pose_history_;
  std::vector<KeyframeRecord> keyframes_;
  std::vector<FrameReport> reports_;
  int frames_processed_ = 0;

  FrameReport run_mapping(const Frame& frame, const CameraPose& pose, FrameReport report);
};

/// Writes the per-frame metric log (the same content export_results emits).
void write_frame_reports(const std::filesystem::path& path,
                         const std::vector<FrameReport>& reports);

}  // namespace panoslam
