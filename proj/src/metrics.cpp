#include "panoslam/metrics.hpp"

#include <Eigen/Geometry>
#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>

namespace panoslam {

double ate_rmse_cm(const std::vector<CameraPose>& estimated,
                   const std::vector<CameraPose>& ground_truth) {
  if (estimated.size() != ground_truth.size())
    throw std::invalid_argument("ate_rmse: trajectory lengths differ");
  if (estimated.size() < 2) throw std::invalid_argument("ate_rmse: need at least two poses");

  const Eigen::Index n = static_cast<Eigen::Index>(estimated.size());
  Eigen::MatrixXd src(3, n), dst(3, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    src.col(i) = estimated[i].center();
    dst.col(i) = ground_truth[i].center();
  }
  const Eigen::Matrix4d align = Eigen::umeyama(src, dst, false);
  double sum_sq = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vec3 aligned = align.block<3, 3>(0, 0) * src.col(i) + align.block<3, 1>(0, 3);
    sum_sq += (aligned - dst.col(i)).squaredNorm();
  }
  return 100.0 * std::sqrt(sum_sq / static_cast<double>(n));
}

double depth_l1_cm(const DepthImage& rendered, const DepthImage& ground_truth) {
  if (!rendered.same_size(ground_truth))
    throw std::invalid_argument("depth_l1: dimension mismatch");
  double sum = 0;
  size_t count = 0;
  for (size_t i = 0; i < rendered.size(); ++i) {
    if (!(ground_truth[i] > 0)) continue;
    sum += std::abs(rendered[i] - ground_truth[i]);
    ++count;
  }
  if (count == 0) throw std::invalid_argument("depth_l1: no valid ground-truth pixels");
  return 100.0 * sum / static_cast<double>(count);
}

double psnr_db(const ColorImage& rendered, const ColorImage& ground_truth) {
  if (!rendered.same_size(ground_truth)) throw std::invalid_argument("psnr: dimension mismatch");
  double mse = 0;
  for (size_t i = 0; i < rendered.size(); ++i)
    mse += (rendered[i] - ground_truth[i]).squaredNorm();
  mse /= static_cast<double>(rendered.size() * 3);
  if (mse == 0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

namespace {

std::vector<double> gaussian_kernel_11() {
  std::vector<double> k(11);
  double sum = 0;
  for (int i = 0; i < 11; ++i) {
    const double x = i - 5;
    k[i] = std::exp(-x * x / (2.0 * 1.5 * 1.5));
    sum += k[i];
  }
  for (double& v : k) v /= sum;
  return k;
}

/// Separable Gaussian blur with edge clamping.
ScalarImage blur(const ScalarImage& img, const std::vector<double>& k) {
  const int w = img.width(), h = img.height();
  ScalarImage tmp(w, h), out(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0;
      for (int i = -5; i <= 5; ++i)
        acc += k[i + 5] * img(std::clamp(x + i, 0, w - 1), y);
      tmp(x, y) = acc;
    }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0;
      for (int i = -5; i <= 5; ++i)
        acc += k[i + 5] * tmp(x, std::clamp(y + i, 0, h - 1));
      out(x, y) = acc;
    }
  return out;
}

}  // namespace

double ssim(const ColorImage& rendered, const ColorImage& ground_truth) {
  if (!rendered.same_size(ground_truth)) throw std::invalid_argument("ssim: dimension mismatch");
  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  const auto kernel = gaussian_kernel_11();
  const int w = rendered.width(), h = rendered.height();

  double total = 0;
  for (int ch = 0; ch < 3; ++ch) {
    ScalarImage x(w, h), y(w, h), xx(w, h), yy(w, h), xy(w, h);
    for (int j = 0; j < h; ++j)
      for (int i = 0; i < w; ++i) {
        const double a = rendered(i, j)[ch];
        const double b = ground_truth(i, j)[ch];
        x(i, j) = a;
        y(i, j) = b;
        xx(i, j) = a * a;
        yy(i, j) = b * b;
        xy(i, j) = a * b;
      }
    const ScalarImage mx = blur(x, kernel), my = blur(y, kernel);
    const ScalarImage mxx = blur(xx, kernel), myy = blur(yy, kernel), mxy = blur(xy, kernel);
    double acc = 0;
    for (int j = 0; j < h; ++j)
      for (int i = 0; i < w; ++i) {
        const double mux = mx(i, j), muy = my(i, j);
        const double vx = mxx(i, j) - mux * mux;
        const double vy = myy(i, j) - muy * muy;
        const double cov = mxy(i, j) - mux * muy;
        acc += ((2 * mux * muy + c1) * (2 * cov + c2)) /
               ((mux * mux + muy * muy + c1) * (vx + vy + c2));
      }
    total += acc / static_cast<double>(w * h);
  }
  return total / 3.0;
}

double miou_percent(const LabelImage& pred_classes, const LabelImage& gt_classes, int num_classes) {
  if (!pred_classes.same_size(gt_classes)) throw std::invalid_argument("miou: dimension mismatch");
  std::vector<int64_t> tp(num_classes, 0), fp(num_classes, 0), fn(num_classes, 0);
  std::vector<char> in_gt(num_classes, 0);
  for (size_t i = 0; i < gt_classes.size(); ++i) {
    const int32_t g = gt_classes[i];
    if (g < 0) continue;  // void excluded
    in_gt[g] = 1;
    const int32_t p = pred_classes[i];
    if (p == g) {
      ++tp[g];
    } else {
      ++fn[g];
      if (p >= 0 && p < num_classes) ++fp[p];
    }
  }
  double sum = 0;
  int classes = 0;
  for (int c = 0; c < num_classes; ++c) {
    if (!in_gt[c]) continue;
    ++classes;
    const int64_t denom = tp[c] + fp[c] + fn[c];
    sum += denom == 0 ? 0.0 : static_cast<double>(tp[c]) / static_cast<double>(denom);
  }
  return classes == 0 ? 0.0 : 100.0 * sum / classes;
}

LabelImage class_raster(const PanopticSegmentation& seg) {
  LabelImage out(seg.segment_ids.width(), seg.segment_ids.height(), -1);
  for (size_t i = 0; i < seg.segment_ids.size(); ++i) {
    const int32_t s = seg.segment_ids[i];
    if (s >= 0) out[i] = seg.segments[s].class_id;
  }
  return out;
}

PanopticSegmentation segmentation_from_labels(const PanopticLabels& labels) {
  PanopticSegmentation seg;
  seg.segment_ids = LabelImage(labels.instances.width(), labels.instances.height(), -1);
  std::vector<int> segment_of(labels.instance_classes.size(), -1);
  for (size_t i = 0; i < labels.instances.size(); ++i) {
    const int32_t inst = labels.instances[i];
    if (inst < 0) continue;
    if (segment_of[inst] < 0) {
      segment_of[inst] = static_cast<int>(seg.segments.size());
      seg.segments.push_back({inst, labels.instance_classes[inst], 1.0});
    }
    seg.segment_ids[i] = segment_of[inst];
  }
  return seg;
}

LabelImage semantic_raster(const PanopticLabels& labels) {
  LabelImage out(labels.instances.width(), labels.instances.height(), -1);
  for (size_t i = 0; i < labels.instances.size(); ++i)
    if (labels.instances[i] >= 0) out[i] = labels.instance_classes[labels.instances[i]];
  return out;
}

PanopticQuality panoptic_quality(const PanopticSegmentation& pred,
                                 const PanopticSegmentation& gt) {
  if (!pred.segment_ids.same_size(gt.segment_ids))
    throw std::invalid_argument("panoptic_quality: dimension mismatch");

  const size_t np = pred.segments.size(), ng = gt.segments.size();
  std::vector<int64_t> pred_area(np, 0), gt_area(ng, 0);
  std::map<std::pair<int32_t, int32_t>, int64_t> intersections;
  for (size_t i = 0; i < pred.segment_ids.size(); ++i) {
    const int32_t p = pred.segment_ids[i];
    const int32_t g = gt.segment_ids[i];
    if (p >= 0) ++pred_area[p];
    if (g >= 0) ++gt_area[g];
    if (p >= 0 && g >= 0) ++intersections[{g, p}];
  }

  // IoU > 0.5 makes matches unique; scan (gt, pred) pairs in sorted order.
  std::vector<int> match_of_gt(ng, -1);
  std::vector<char> pred_matched(np, 0);
  std::vector<double> match_iou(ng, 0.0);
  for (const auto& [key, inter] : intersections) {
    const auto [g, p] = key;
    if (gt.segments[g].class_id != pred.segments[p].class_id) continue;
    const double uni = static_cast<double>(gt_area[g] + pred_area[p] - inter);
    const double iou = static_cast<double>(inter) / uni;
    if (iou > 0.5) {
      match_of_gt[g] = p;
      match_iou[g] = iou;
      pred_matched[p] = 1;
    }
  }

  PanopticQuality q;
  std::map<int, std::array<double, 4>> per_class;  // tp, fp, fn, iou_sum
  double iou_sum = 0;
  for (size_t g = 0; g < ng; ++g) {
    auto& pc = per_class[gt.segments[g].class_id];
    if (match_of_gt[g] >= 0) {
      ++q.true_positives;
      iou_sum += match_iou[g];
      pc[0] += 1;
      pc[3] += match_iou[g];
    } else {
      ++q.false_negatives;
      pc[2] += 1;
    }
  }
  for (size_t p = 0; p < np; ++p)
    if (!pred_matched[p]) {
      ++q.false_positives;
      per_class[pred.segments[p].class_id][1] += 1;
    }

  const double denom = q.true_positives + 0.5 * q.false_positives + 0.5 * q.false_negatives;
  q.iou_sum = iou_sum;
  q.sq = q.true_positives == 0 ? 0.0 : 100.0 * iou_sum / q.true_positives;
  q.rq = denom == 0 ? 0.0 : 100.0 * q.true_positives / denom;
  q.pq = q.sq * q.rq / 100.0;

  double pq_sum = 0, sq_sum = 0, rq_sum = 0;
  int classes = 0;
  for (const auto& [cls, v] : per_class) {
    const auto [tp, fp, fn, ious] = v;
    const double d = tp + 0.5 * fp + 0.5 * fn;
    if (d == 0) continue;
    ++classes;
    const double sq_c = tp == 0 ? 0.0 : ious / tp;
    const double rq_c = tp / d;
    sq_sum += sq_c;
    rq_sum += rq_c;
    pq_sum += sq_c * rq_c;
  }
  if (classes > 0) {
    q.pq_class_avg = 100.0 * pq_sum / classes;
    q.sq_class_avg = 100.0 * sq_sum / classes;
    q.rq_class_avg = 100.0 * rq_sum / classes;
  }
  return q;
}

}  // namespace panoslam
