#include "panoslam/panoptic.hpp"

#include <cmath>
#include <stdexcept>

#include "panoslam/assignment.hpp"
#include "panoslam/losses.hpp"

namespace panoslam {

PanopticHead PanopticHead::create(int n_regions, int n_classes, int hidden, uint64_t seed) {
  if (n_regions < 1 || n_classes < 2 || hidden < 3)
    throw std::invalid_argument("panoptic head: need N >= 1, K >= 2, H >= 3");
  Rng rng(seed);
  auto fill = [&](Eigen::MatrixXd& m, double scale) {
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = rng.normal(0.0, scale);
  };
  PanopticHead head;
  head.region_embeddings.resize(n_regions, hidden);
  head.classifier.resize(hidden, n_classes + 1);
  head.gamma.w1.resize(hidden, 3);
  head.gamma.b1 = Eigen::VectorXd::Zero(hidden);
  head.gamma.w2.resize(hidden, hidden);
  head.gamma.b2 = Eigen::VectorXd::Zero(hidden);
  fill(head.region_embeddings, 1.0 / std::sqrt(static_cast<double>(hidden)));
  fill(head.classifier, 1.0 / std::sqrt(static_cast<double>(hidden)));
  fill(head.gamma.w1, 1.0 / std::sqrt(3.0));
  fill(head.gamma.w2, 1.0 / std::sqrt(static_cast<double>(hidden)));
  return head;
}

RegionLogitsResult region_logits(const Eigen::MatrixXd& semantic, const PanopticHead& head) {
  if (semantic.cols() != 3) throw std::invalid_argument("region_logits: semantic must have 3 channels");
  RegionLogitsResult r;
  if (head.gamma.identity) {
    if (head.embed_dim() != 3)
      throw std::invalid_argument("identity gamma requires H == 3");
    r.decoded = semantic;
  } else {
    r.hidden = ((semantic * head.gamma.w1.transpose()).rowwise() + head.gamma.b1.transpose())
                   .array()
                   .tanh()
                   .matrix();
    r.decoded = (r.hidden * head.gamma.w2.transpose()).rowwise() + head.gamma.b2.transpose();
  }
  r.logits = r.decoded * head.region_embeddings.transpose();
  return r;
}

HeadGradients HeadGradients::zeros(const PanopticHead& head) {
  HeadGradients g;
  g.d_region_embeddings = Eigen::MatrixXd::Zero(head.region_embeddings.rows(),
                                                head.region_embeddings.cols());
  g.d_classifier = Eigen::MatrixXd::Zero(head.classifier.rows(), head.classifier.cols());
  g.d_w1 = Eigen::MatrixXd::Zero(head.gamma.w1.rows(), head.gamma.w1.cols());
  g.d_w2 = Eigen::MatrixXd::Zero(head.gamma.w2.rows(), head.gamma.w2.cols());
  g.d_b1 = Eigen::VectorXd::Zero(head.gamma.b1.size());
  g.d_b2 = Eigen::VectorXd::Zero(head.gamma.b2.size());
  return g;
}

void HeadGradients::add(const HeadGradients& o) {
  d_region_embeddings += o.d_region_embeddings;
  d_classifier += o.d_classifier;
  d_w1 += o.d_w1;
  d_w2 += o.d_w2;
  d_b1 += o.d_b1;
  d_b2 += o.d_b2;
}

void HeadGradients::scale(double s) {
  d_region_embeddings *= s;
  d_classifier *= s;
  d_w1 *= s;
  d_w2 *= s;
  d_b1 *= s;
  d_b2 *= s;
}

Eigen::MatrixXd region_logits_backward(const Eigen::MatrixXd& semantic,
                                       const PanopticHead& head,
                                       const RegionLogitsResult& fwd,
                                       const Eigen::MatrixXd& d_logits,
                                       HeadGradients& grads) {
  // logits = decoded * M^T
  grads.d_region_embeddings += d_logits.transpose() * fwd.decoded;
  const Eigen::MatrixXd d_decoded = d_logits * head.region_embeddings;
  if (head.gamma.identity) return d_decoded;

  // decoded = hidden * W2^T + b2
  grads.d_w2 += d_decoded.transpose() * fwd.hidden;
  grads.d_b2 += d_decoded.colwise().sum().transpose();
  Eigen::MatrixXd d_hidden = d_decoded * head.gamma.w2;
  // hidden = tanh(semantic * W1^T + b1)
  d_hidden.array() *= (1.0 - fwd.hidden.array().square());
  grads.d_w1 += d_hidden.transpose() * semantic;
  grads.d_b1 += d_hidden.colwise().sum().transpose();
  return d_hidden * head.gamma.w1;
}

Eigen::MatrixXd classify_regions(const PanopticHead& head) {
  const Eigen::MatrixXd logits =
      head.region_embeddings * head.classifier.leftCols(head.num_classes());
  return softmax_rows(logits);
}

Eigen::MatrixXd classify_regions_full(const PanopticHead& head) {
  return softmax_rows(head.region_embeddings * head.classifier);
}

PanopticSegmentation panoptic_inference(const Eigen::MatrixXd& logits, int width, int height,
                                        const Eigen::MatrixXd& class_probs,
                                        const PanopticThresholds& thresholds) {
  const int n = static_cast<int>(logits.cols());
  const int k_real = static_cast<int>(class_probs.cols()) - 1;
  if (class_probs.rows() != n) throw std::invalid_argument("panoptic_inference: shape mismatch");
  const Eigen::Index pixels = logits.rows();
  if (pixels != static_cast<Eigen::Index>(width) * height)
    throw std::invalid_argument("panoptic_inference: pixel count mismatch");

  PanopticSegmentation seg;
  seg.segment_ids = LabelImage(width, height, -1);

  std::vector<int> best_class(n, 0);
  std::vector<double> confidence(n, 0.0);
  std::vector<char> survives(n, 0);
  int n_surviving = 0;
  for (int i = 0; i < n; ++i) {
    Eigen::Index j;
    confidence[i] = class_probs.row(i).head(k_real).maxCoeff(&j);
    best_class[i] = static_cast<int>(j);
    survives[i] = confidence[i] >= thresholds.class_confidence;
    n_surviving += survives[i];
  }
  if (n_surviving == 0) return seg;

  const Eigen::MatrixXd probs = softmax_rows(logits);
  std::vector<int> winner(pixels, -1);  // weighted argmax
  std::vector<int> prefer(pixels, -1);  // region-probability argmax
  std::vector<int64_t> visible(n, 0), original(n, 0);
  for (Eigen::Index p = 0; p < pixels; ++p) {
    double best_score = -1.0, best_prob = -1.0;
    for (int i = 0; i < n; ++i) {
      if (!survives[i]) continue;
      const double prob = probs(p, i);
      const double score = prob * confidence[i];
      if (score > best_score) {
        best_score = score;
        winner[p] = i;
      }
      if (prob > best_prob) {
        best_prob = prob;
        prefer[p] = i;
      }
    }
    ++visible[winner[p]];
    ++original[prefer[p]];
  }

  std::vector<int> segment_of(n, -1);
  for (int i = 0; i < n; ++i) {
    if (!survives[i]) continue;
    if (static_cast<double>(visible[i]) < thresholds.keep_fraction * static_cast<double>(original[i]))
      continue;  // mostly occluded by other predictions
    if (visible[i] == 0) continue;
    segment_of[i] = static_cast<int>(seg.segments.size());
    seg.segments.push_back({i, best_class[i], confidence[i]});
  }
  for (Eigen::Index p = 0; p < pixels; ++p)
    if (winner[p] >= 0) seg.segment_ids[static_cast<size_t>(p)] = segment_of[winner[p]];
  return seg;
}

std::vector<int> hungarian_match(const Eigen::MatrixXd& pred_masks,
                                 const Eigen::MatrixXd& pseudo_masks,
                                 const Eigen::MatrixXd& pred_class_probs,
                                 const Eigen::MatrixXd& pseudo_classes,
                                 const MatchWeights& weights) {
  const int n = static_cast<int>(pred_masks.cols());
  const int m = static_cast<int>(pseudo_masks.cols());
  if (m == 0) return std::vector<int>(n, -1);
  if (pred_masks.rows() != pseudo_masks.rows())
    throw std::invalid_argument("hungarian_match: pixel count mismatch");

  Eigen::MatrixXd cost(n, m);
  for (int j = 0; j < m; ++j) {
    Eigen::Index pseudo_class;
    pseudo_classes.row(j).maxCoeff(&pseudo_class);
    const Eigen::ArrayXd target = pseudo_masks.col(j).array();
    for (int i = 0; i < n; ++i) {
      const Eigen::ArrayXd mask = pred_masks.col(i).array();
      const double dice = DiceLoss::forward(mask, target);
      // Focal cost from probabilities: logit = log(p / (1-p)).
      const Eigen::ArrayXd logits =
          (mask.max(1e-12) / (1.0 - mask).max(1e-12)).log();
      double focal;
      Eigen::ArrayXd unused;
      FocalLoss::forward_backward(logits, target, weights.focal_alpha, weights.focal_gamma,
                                  focal, unused);
      focal /= static_cast<double>(mask.size());
      const double class_cost =
          -std::log(std::max(pred_class_probs(i, pseudo_class), 1e-12));
      cost(i, j) = weights.lambda_dice * dice + weights.lambda_focal * focal +
                   weights.lambda_class * class_cost;
    }
  }
  return solve_assignment(cost);
}

}  // namespace panoslam
