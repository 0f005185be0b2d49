#pragma once

#include <Eigen/Core>
#include <optional>
#include <stdexcept>

#include "panoslam/camera.hpp"
#include "panoslam/image.hpp"

namespace panoslam {

/// Per-view panoptic prediction used as a training target. Regions carry a
/// view-local index space (no cross-view consistency is promised); classes
/// are one distribution row per region.
struct PseudoLabels {
  LabelImage regions;            // per-pixel region id, -1 = void
  Eigen::MatrixXd region_classes;  // (num_regions x K) rows sum to 1

  int num_regions() const { return static_cast<int>(region_classes.rows()); }
};

/// Exact panoptic annotation: per-pixel instance id plus per-instance class.
struct PanopticLabels {
  LabelImage instances;           // -1 = void
  std::vector<int> instance_classes;  // class id per instance id
};

/// One RGB-D observation (plus optional labels) at stream index `index`.
struct Frame {
  int index = 0;
  ColorImage color;
  DepthImage depth;  // meters, 0 = invalid
  std::optional<PseudoLabels> pseudo;
  std::optional<PanopticLabels> gt_panoptic;

  void validate(const Intrinsics& intr) const {
    if (!color.same_size(intr.width, intr.height) || !depth.same_size(intr.width, intr.height))
      throw std::invalid_argument("frame rasters do not match intrinsics dimensions");
    for (double d : depth)
      if (!(d >= 0) || !std::isfinite(d))
        throw std::invalid_argument("frame depth must be finite and >= 0");
    if (pseudo) {
      if (!pseudo->regions.same_size(intr.width, intr.height))
        throw std::invalid_argument("pseudo region raster size mismatch");
      for (Eigen::Index r = 0; r < pseudo->region_classes.rows(); ++r) {
        const double s = pseudo->region_classes.row(r).sum();
        if (std::abs(s - 1.0) > 1e-6)
          throw std::invalid_argument("pseudo class distribution does not sum to 1");
      }
    }
  }
};

}  // namespace panoslam
