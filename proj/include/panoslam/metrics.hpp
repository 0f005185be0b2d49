#pragma once

#include <vector>

#include "panoslam/camera.hpp"
#include "panoslam/frame.hpp"
#include "panoslam/image.hpp"
#include "panoslam/panoptic.hpp"

namespace panoslam {

/// Root-mean-square translational error (cm) after rigid (no scale)
/// least-squares alignment of the two camera-center trajectories.
double ate_rmse_cm(const std::vector<CameraPose>& estimated,
                   const std::vector<CameraPose>& ground_truth);

/// Mean absolute depth error (cm) over pixels with valid ground truth.
double depth_l1_cm(const DepthImage& rendered, const DepthImage& ground_truth);

/// PSNR in dB over [0,1] images; +inf for identical inputs.
double psnr_db(const ColorImage& rendered, const ColorImage& ground_truth);

/// Mean SSIM over pixels and channels, 11x11 Gaussian window (sigma 1.5),
/// K1 = 0.01, K2 = 0.03, L = 1.
double ssim(const ColorImage& rendered, const ColorImage& ground_truth);

/// Mean IoU (percent) over the classes present in the ground truth; void
/// pixels (-1) are excluded from both rasters.
double miou_percent(const LabelImage& pred_classes, const LabelImage& gt_classes, int num_classes);

struct PanopticQuality {
  // Pooled over all classes so pq == sq * rq holds by construction.
  double pq = 0, sq = 0, rq = 0;  // percent
  int true_positives = 0, false_positives = 0, false_negatives = 0;
  double iou_sum = 0;  // over true positives; lets callers pool across frames
  // Standard per-class averages, for reference alongside the pooled numbers.
  double pq_class_avg = 0, sq_class_avg = 0, rq_class_avg = 0;
};

/// Segments match iff same class and IoU > 0.5 (which makes the matching
/// unique). SQ = mean IoU over matches, RQ = TP / (TP + FP/2 + FN/2),
/// PQ = SQ * RQ, all computed over the pooled match sets; the per-class
/// averaged variants are reported alongside.
PanopticQuality panoptic_quality(const PanopticSegmentation& pred,
                                 const PanopticSegmentation& gt);

/// Per-pixel class raster induced by a panoptic segmentation.
LabelImage class_raster(const PanopticSegmentation& seg);

/// Exact panoptic annotation as a segmentation (confidence 1 per instance).
PanopticSegmentation segmentation_from_labels(const PanopticLabels& labels);

/// Per-pixel semantic class raster of an annotation (-1 = void).
LabelImage semantic_raster(const PanopticLabels& labels);

}  // namespace panoslam
