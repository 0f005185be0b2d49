#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <vector>

#include "panoslam/camera.hpp"
#include "panoslam/frame.hpp"

namespace panoslam {

/// Pixel `pixel` (flat row-major index) of window frame `frame_slot`.
struct PixelRef {
  int32_t frame_slot;
  int32_t pixel;
};

/// Multi-view voxel correspondence over an optimization window. Groups are
/// enumerated in lexicographic voxel-key order so iteration is deterministic.
struct VoxelGroups {
  double voxel_size = 0.05;  // S_n, meters; +inf = one voxel holds everything
  std::vector<std::vector<PixelRef>> groups;
  std::vector<Eigen::Vector3i> keys;  // empty for the infinite-voxel sentinel

  size_t total_members() const {
    size_t n = 0;
    for (const auto& g : groups) n += g.size();
    return n;
  }
};

/// World-space point of pixel (u, v) at ground-truth depth d through the
/// inverse camera pose. Throws on d <= 0.
Vec3 unproject(double u, double v, double d, const CameraPose& pose, const Intrinsics& intr);

/// Buckets every valid-depth pixel of every window frame into
/// floor(coordinate / voxel_size) cells.
VoxelGroups build_voxel_groups(const std::vector<const Frame*>& frames,
                               const std::vector<CameraPose>& poses, const Intrinsics& intr,
                               double voxel_size);

/// Replaces every group member's region distribution with the group mean
/// (rows of `region_dists[t]` are per-pixel distributions). Groups whose
/// members already agree bitwise are left untouched, which makes repeated
/// application a no-op.
void refine_region_distributions(const VoxelGroups& groups,
                                 std::vector<Eigen::MatrixXd>& region_dists);

/// Class id induced for a pixel: argmax class of its argmax region.
int induced_pixel_class(const Eigen::VectorXd& region_dist, const Eigen::MatrixXd& class_dists);

}  // namespace panoslam
