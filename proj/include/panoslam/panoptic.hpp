#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <vector>

#include "panoslam/image.hpp"
#include "panoslam/random.hpp"

namespace panoslam {

/// Two-layer decoder lifting the 3-channel rendered embedding to H dims:
/// gamma(s) = W2 * tanh(W1 s + b1) + b2. `identity` bypasses the MLP (only
/// legal when H == 3); used by diagnostics that probe the region wiring.
struct GammaMlp {
  Eigen::MatrixXd w1;  // H x 3
  Eigen::VectorXd b1;  // H
  Eigen::MatrixXd w2;  // H x H
  Eigen::VectorXd b2;  // H
  bool identity = false;

  int hidden() const { return static_cast<int>(w1.rows()); }
};

/// MaskFormer-style head over rendered semantic embeddings. The classifier
/// carries K real categories plus one trailing no-object column used during
/// training and inference filtering.
struct PanopticHead {
  Eigen::MatrixXd region_embeddings;  // M: N x H
  Eigen::MatrixXd classifier;         // C: H x (K+1)
  GammaMlp gamma;

  int num_regions() const { return static_cast<int>(region_embeddings.rows()); }
  int embed_dim() const { return static_cast<int>(region_embeddings.cols()); }
  int num_classes() const { return static_cast<int>(classifier.cols()) - 1; }

  static PanopticHead create(int n_regions, int n_classes, int hidden, uint64_t seed);
};

/// Forward activations kept for the backward pass.
struct RegionLogitsResult {
  Eigen::MatrixXd logits;   // (pixels x N)
  Eigen::MatrixXd hidden;   // (pixels x H), post-tanh
  Eigen::MatrixXd decoded;  // (pixels x H), gamma output
};

/// R(P) = gamma(S(P)) . M^T for every pixel. `semantic` is (pixels x 3).
RegionLogitsResult region_logits(const Eigen::MatrixXd& semantic, const PanopticHead& head);

/// Backward through region_logits. `d_logits` is (pixels x N). Returns
/// d/d semantic and accumulates parameter gradients.
struct HeadGradients {
  Eigen::MatrixXd d_region_embeddings;
  Eigen::MatrixXd d_classifier;
  Eigen::MatrixXd d_w1, d_w2;
  Eigen::VectorXd d_b1, d_b2;

  static HeadGradients zeros(const PanopticHead& head);
  void add(const HeadGradients& o);
  void scale(double s);
};

Eigen::MatrixXd region_logits_backward(const Eigen::MatrixXd& semantic,
                                       const PanopticHead& head,
                                       const RegionLogitsResult& fwd,
                                       const Eigen::MatrixXd& d_logits,
                                       HeadGradients& grads);

/// O = softmax(M C) restricted to the K real categories (rows sum to 1).
Eigen::MatrixXd classify_regions(const PanopticHead& head);

/// Softmax over all K+1 columns, no-object last.
Eigen::MatrixXd classify_regions_full(const PanopticHead& head);

struct PanopticThresholds {
  double class_confidence = 0.5;  // drop regions below this before inference
  double keep_fraction = 0.8;     // drop regions mostly occluded by others
};

struct Segment {
  int region = 0;      // head slot (or source region id)
  int class_id = 0;
  double confidence = 0;
};

struct PanopticSegmentation {
  LabelImage segment_ids;         // per-pixel index into `segments`, -1 = void
  std::vector<Segment> segments;
};

/// Combines per-pixel region logits with per-region class probabilities into
/// a panoptic map. `class_probs` is N x (K+1) with the no-object column last;
/// confidence of a region is its best real-class probability.
///
/// Rules, applied in order:
///  1. regions with confidence < class_confidence are dropped;
///  2. each pixel goes to the surviving region maximizing softmax(R)_i * conf_i;
///  3. a surviving region keeps only `visible = #pixels it wins`; if
///     visible < keep_fraction * #pixels where it wins on softmax(R) alone,
///     it is dropped and its pixels become void.
PanopticSegmentation panoptic_inference(const Eigen::MatrixXd& logits, int width, int height,
                                        const Eigen::MatrixXd& class_probs,
                                        const PanopticThresholds& thresholds);

struct MatchWeights {
  double lambda_class = 1.0;  // weight on -log class probability
  double lambda_dice = 1.0;
  double lambda_focal = 20.0;
  double focal_alpha = 0.25;
  double focal_gamma = 2.0;
};

/// Hungarian matching of predicted soft masks against pseudo masks.
/// pred_masks: (pixels x N) sigmoid probabilities; pseudo_masks: (pixels x M)
/// binary/soft targets; pred_class_probs: N x (K+1); pseudo_classes: M x K.
/// Returns per-prediction column (-1 = unmatched). Empty pseudo set gives an
/// all-unmatched result.
std::vector<int> hungarian_match(const Eigen::MatrixXd& pred_masks,
                                 const Eigen::MatrixXd& pseudo_masks,
                                 const Eigen::MatrixXd& pred_class_probs,
                                 const Eigen::MatrixXd& pseudo_classes,
                                 const MatchWeights& weights);

}  // namespace panoslam
