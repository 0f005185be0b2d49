#include "panoslam/stl.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <stdexcept>

namespace panoslam {

Vec3 unproject(double u, double v, double d, const CameraPose& pose, const Intrinsics& intr) {
  if (!(d > 0)) throw std::invalid_argument("unproject: depth must be positive");
  return pose.inverse_transform(backproject_pixel(u, v, d, intr));
}

VoxelGroups build_voxel_groups(const std::vector<const Frame*>& frames,
                               const std::vector<CameraPose>& poses, const Intrinsics& intr,
                               double voxel_size) {
  if (frames.size() != poses.size())
    throw std::invalid_argument("build_voxel_groups: one pose per frame required");
  VoxelGroups out;
  out.voxel_size = voxel_size;

  if (std::isinf(voxel_size)) {
    std::vector<PixelRef> all;
    for (size_t t = 0; t < frames.size(); ++t) {
      const DepthImage& depth = frames[t]->depth;
      for (size_t p = 0; p < depth.size(); ++p)
        if (depth[p] > 0) all.push_back({static_cast<int32_t>(t), static_cast<int32_t>(p)});
    }
    if (!all.empty()) out.groups.push_back(std::move(all));
    return out;
  }
  if (!(voxel_size > 0)) throw std::invalid_argument("build_voxel_groups: voxel size must be positive");

  // std::map keeps keys sorted, giving the deterministic enumeration order.
  std::map<std::array<int32_t, 3>, std::vector<PixelRef>> cells;
  for (size_t t = 0; t < frames.size(); ++t) {
    const DepthImage& depth = frames[t]->depth;
    const int w = depth.width();
    for (size_t p = 0; p < depth.size(); ++p) {
      const double d = depth[p];
      if (!(d > 0)) continue;
      const int x = static_cast<int>(p % w);
      const int y = static_cast<int>(p / w);
      const Vec3 world = unproject(x, y, d, poses[t], intr);
      const std::array<int32_t, 3> key{
          static_cast<int32_t>(std::floor(world.x() / voxel_size)),
          static_cast<int32_t>(std::floor(world.y() / voxel_size)),
          static_cast<int32_t>(std::floor(world.z() / voxel_size))};
      cells[key].push_back({static_cast<int32_t>(t), static_cast<int32_t>(p)});
    }
  }
  out.groups.reserve(cells.size());
  out.keys.reserve(cells.size());
  for (auto& [key, members] : cells) {
    out.keys.emplace_back(key[0], key[1], key[2]);
    out.groups.push_back(std::move(members));
  }
  return out;
}

void refine_region_distributions(const VoxelGroups& groups,
                                 std::vector<Eigen::MatrixXd>& region_dists) {
  if (region_dists.empty()) return;
  const Eigen::Index n = region_dists.front().cols();
  for (const auto& group : groups.groups) {
    if (group.size() <= 1) continue;

    const auto row = [&](const PixelRef& r) { return region_dists[r.frame_slot].row(r.pixel); };
    bool all_equal = true;
    for (size_t i = 1; i < group.size() && all_equal; ++i)
      all_equal = row(group[i]) == row(group[0]);
    if (all_equal) continue;

    Eigen::RowVectorXd mean = Eigen::RowVectorXd::Zero(n);
    for (const PixelRef& r : group) mean += row(r);
    mean /= static_cast<double>(group.size());
    for (const PixelRef& r : group) region_dists[r.frame_slot].row(r.pixel) = mean;
  }
}

int induced_pixel_class(const Eigen::VectorXd& region_dist, const Eigen::MatrixXd& class_dists) {
  Eigen::Index region, cls;
  region_dist.maxCoeff(&region);
  class_dists.row(region).maxCoeff(&cls);
  return static_cast<int>(cls);
}

}  // namespace panoslam
