#include <doctest.h>

#include "panoslam/losses.hpp"
#include "panoslam/panoptic.hpp"
#include "panoslam/random.hpp"

using namespace panoslam;

namespace {

Eigen::MatrixXd random_matrix(Eigen::Index r, Eigen::Index c, Rng& rng, double scale = 1.0) {
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = rng.normal(0, scale);
  return m;
}

}  // namespace

TEST_CASE("zero region embeddings give zero logits and a uniform softmax") {
  PanopticHead head = PanopticHead::create(6, 4, 8, 1);
  head.region_embeddings.setZero();
  Rng rng(2);
  const Eigen::MatrixXd sem = random_matrix(10, 3, rng);
  const RegionLogitsResult r = region_logits(sem, head);
  CHECK(r.logits.isZero(0.0));
  const Eigen::MatrixXd probs = softmax_rows(r.logits);
  for (Eigen::Index p = 0; p < probs.rows(); ++p)
    for (Eigen::Index i = 0; i < probs.cols(); ++i)
      CHECK(probs(p, i) == doctest::Approx(1.0 / 6).epsilon(1e-12));
}

TEST_CASE("identity gamma with basis embeddings reproduces the input") {
  PanopticHead head = PanopticHead::create(3, 4, 3, 1);
  head.gamma.identity = true;
  head.region_embeddings = Eigen::MatrixXd::Identity(3, 3);
  Rng rng(3);
  const Eigen::MatrixXd sem = random_matrix(16, 3, rng);
  const RegionLogitsResult r = region_logits(sem, head);
  CHECK((r.logits - sem).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("region logits equal brute-force dot products") {
  PanopticHead head = PanopticHead::create(4, 5, 8, 77);
  Rng rng(4);
  const Eigen::MatrixXd sem = random_matrix(25, 3, rng);
  const RegionLogitsResult r = region_logits(sem, head);
  for (Eigen::Index p = 0; p < sem.rows(); ++p) {
    // Hand-evaluate gamma then the dot products against each embedding row.
    Eigen::VectorXd hidden =
        (head.gamma.w1 * sem.row(p).transpose() + head.gamma.b1).array().tanh();
    Eigen::VectorXd decoded = head.gamma.w2 * hidden + head.gamma.b2;
    for (Eigen::Index i = 0; i < 4; ++i) {
      const double expect = head.region_embeddings.row(i).dot(decoded);
      CHECK(r.logits(p, i) == doctest::Approx(expect).epsilon(1e-12));
    }
  }
}

TEST_CASE("region logits are linear in the embeddings for fixed input") {
  PanopticHead head = PanopticHead::create(5, 4, 6, 9);
  Rng rng(5);
  const Eigen::MatrixXd sem = random_matrix(12, 3, rng);
  const Eigen::MatrixXd m1 = head.region_embeddings;
  const Eigen::MatrixXd m2 = random_matrix(5, 6, rng);
  const Eigen::MatrixXd base = region_logits(sem, head).logits;
  head.region_embeddings = m2;
  const Eigen::MatrixXd other = region_logits(sem, head).logits;
  head.region_embeddings = 0.25 * m1 + 0.75 * m2;
  const Eigen::MatrixXd mixed = region_logits(sem, head).logits;
  CHECK((mixed - (0.25 * base + 0.75 * other)).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("zero classifier gives uniform class rows over the real classes") {
  PanopticHead head = PanopticHead::create(5, 4, 8, 10);
  head.classifier.setZero();
  const Eigen::MatrixXd o = classify_regions(head);
  REQUIRE(o.cols() == 4);
  for (Eigen::Index r = 0; r < o.rows(); ++r)
    for (Eigen::Index c = 0; c < o.cols(); ++c)
      CHECK(o(r, c) == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("softmax saturates toward a strongly scaled class column") {
  PanopticHead head = PanopticHead::create(3, 4, 8, 11);
  head.region_embeddings.setZero();
  head.region_embeddings(1, 2) = 1.0;  // one-hot embedding row
  head.classifier.setZero();
  head.classifier(2, 3) = 50.0;  // scaled column pointing at class 3
  const Eigen::MatrixXd o = classify_regions(head);
  Eigen::Index best;
  o.row(1).maxCoeff(&best);
  CHECK(best == 3);
  CHECK(o(1, 3) > 0.999);
}

TEST_CASE("classify rows sum to one") {
  PanopticHead head = PanopticHead::create(7, 5, 6, 12);
  const Eigen::MatrixXd o = classify_regions(head);
  const Eigen::MatrixXd full = classify_regions_full(head);
  for (Eigen::Index r = 0; r < o.rows(); ++r) {
    CHECK(o.row(r).sum() == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(full.row(r).sum() == doctest::Approx(1.0).epsilon(1e-6));
  }
  CHECK(full.cols() == 6);
}

namespace {

/// Direct transliteration of the inference rules, kept deliberately naive.
LabelImage brute_force_inference(const Eigen::MatrixXd& logits, int w, int h,
                                 const Eigen::MatrixXd& class_probs,
                                 const PanopticThresholds& th) {
  const int n = static_cast<int>(logits.cols());
  const int k = static_cast<int>(class_probs.cols()) - 1;
  LabelImage out(w, h, -1);
  std::vector<int> survivors;
  for (int i = 0; i < n; ++i)
    if (class_probs.row(i).head(k).maxCoeff() >= th.class_confidence) survivors.push_back(i);
  if (survivors.empty()) return out;
  const Eigen::MatrixXd probs = softmax_rows(logits);
  std::vector<int> winner(w * h, -1), prefer(w * h, -1);
  for (int p = 0; p < w * h; ++p) {
    double bs = -1, bp = -1;
    for (int i : survivors) {
      const double conf = class_probs.row(i).head(k).maxCoeff();
      if (probs(p, i) * conf > bs) {
        bs = probs(p, i) * conf;
        winner[p] = i;
      }
      if (probs(p, i) > bp) {
        bp = probs(p, i);
        prefer[p] = i;
      }
    }
  }
  for (int i : survivors) {
    int64_t vis = 0, orig = 0;
    for (int p = 0; p < w * h; ++p) {
      vis += winner[p] == i;
      orig += prefer[p] == i;
    }
    if (static_cast<double>(vis) < th.keep_fraction * static_cast<double>(orig) || vis == 0)
      for (int p = 0; p < w * h; ++p)
        if (winner[p] == i) winner[p] = -1;
  }
  for (int p = 0; p < w * h; ++p) out[p] = winner[p];
  return out;
}

}  // namespace

TEST_CASE("single confident region covering everything leaves no void") {
  const int w = 4, h = 4;
  Eigen::MatrixXd logits = Eigen::MatrixXd::Zero(w * h, 1);
  Eigen::MatrixXd probs(1, 3);  // K = 2 real classes + no-object
  probs << 1.0, 0.0, 0.0;
  const PanopticSegmentation seg = panoptic_inference(logits, w, h, probs, {});
  REQUIRE(seg.segments.size() == 1);
  CHECK(seg.segments[0].class_id == 0);
  CHECK(seg.segments[0].confidence == 1.0);
  for (size_t i = 0; i < seg.segment_ids.size(); ++i) CHECK(seg.segment_ids[i] == 0);
}

TEST_CASE("all low-confidence regions produce an all-void segmentation") {
  const int w = 4, h = 4;
  Eigen::MatrixXd logits = Eigen::MatrixXd::Random(w * h, 3);
  Eigen::MatrixXd probs(3, 4);
  probs << 0.4, 0.3, 0.2, 0.1, 0.25, 0.25, 0.25, 0.25, 0.1, 0.2, 0.3, 0.4;
  const PanopticSegmentation seg = panoptic_inference(logits, w, h, probs, {});
  CHECK(seg.segments.empty());
  for (size_t i = 0; i < seg.segment_ids.size(); ++i) CHECK(seg.segment_ids[i] == -1);
}

TEST_CASE("inference equals the brute-force drop rules on small grids") {
  Rng rng(21);
  for (int trial = 0; trial < 40; ++trial) {
    const int w = 4, h = 4, n = 2 + static_cast<int>(rng.below(3));
    const int k = 3;
    Eigen::MatrixXd logits = random_matrix(w * h, n, rng, 2.0);
    Eigen::MatrixXd class_logits = random_matrix(n, k + 1, rng, 2.0);
    const Eigen::MatrixXd probs = softmax_rows(class_logits);
    const PanopticThresholds th{0.4, 0.8};
    const PanopticSegmentation seg = panoptic_inference(logits, w, h, probs, th);
    const LabelImage expect = brute_force_inference(logits, w, h, probs, th);
    for (int p = 0; p < w * h; ++p) {
      const int got = seg.segment_ids[p] >= 0 ? seg.segments[seg.segment_ids[p]].region : -1;
      CHECK(got == expect[p]);
    }
  }
}

TEST_CASE("inference is invariant to per-pixel constant logit shifts") {
  Rng rng(31);
  const int w = 4, h = 4, n = 4;
  Eigen::MatrixXd logits = random_matrix(w * h, n, rng, 2.0);
  Eigen::MatrixXd probs = softmax_rows(random_matrix(n, 4, rng, 1.5));
  const PanopticSegmentation a = panoptic_inference(logits, w, h, probs, {});
  Eigen::MatrixXd shifted = logits;
  for (Eigen::Index p = 0; p < shifted.rows(); ++p)
    shifted.row(p).array() += rng.uniform(-10, 10);
  const PanopticSegmentation b = panoptic_inference(shifted, w, h, probs, {});
  REQUIRE(a.segments.size() == b.segments.size());
  for (size_t i = 0; i < a.segment_ids.size(); ++i) CHECK(a.segment_ids[i] == b.segment_ids[i]);
}

TEST_CASE("hungarian match prefers identical masks and classes") {
  const int pixels = 64;
  Rng rng(41);
  Eigen::MatrixXd pseudo = Eigen::MatrixXd::Zero(pixels, 3);
  for (int p = 0; p < pixels; ++p) pseudo(p, p % 3) = 1.0;
  // Predictions mirror the pseudo masks but in permuted slot order 3 -> {2,0,1}.
  Eigen::MatrixXd pred = Eigen::MatrixXd::Constant(pixels, 3, 0.01);
  for (int p = 0; p < pixels; ++p) pred(p, (p % 3 + 1) % 3) = 0.99;
  Eigen::MatrixXd pred_classes(3, 4);
  pred_classes << 0.1, 0.8, 0.05, 0.05, 0.8, 0.1, 0.05, 0.05, 0.05, 0.1, 0.8, 0.05;
  Eigen::MatrixXd pseudo_classes(3, 3);
  pseudo_classes << 1, 0, 0, 0, 1, 0, 0, 0, 1;
  const std::vector<int> match =
      hungarian_match(pred, pseudo, pred_classes, pseudo_classes, {});
  CHECK(match[1] == 0);
  CHECK(match[2] == 1);
  CHECK(match[0] == 2);
}

TEST_CASE("empty pseudo set yields an all-unmatched assignment") {
  const std::vector<int> match =
      hungarian_match(Eigen::MatrixXd::Ones(16, 4), Eigen::MatrixXd(16, 0),
                      Eigen::MatrixXd::Ones(4, 3), Eigen::MatrixXd(0, 2), {});
  REQUIRE(match.size() == 4);
  for (int v : match) CHECK(v == -1);
}

TEST_CASE("CE, dice and focal gradients match finite differences") {
  Rng rng(55);
  const int pixels = 24, n = 3, k = 4, h = 6;
  PanopticHead head = PanopticHead::create(n, k, h, 99);
  Eigen::MatrixXd sem = random_matrix(pixels, 3, rng);
  Eigen::MatrixXd target = Eigen::MatrixXd::Zero(pixels, n);
  for (int p = 0; p < pixels; ++p) target(p, p % n) = 1.0;
  Eigen::MatrixXd class_target = Eigen::MatrixXd::Zero(n, k + 1);
  for (int i = 0; i < n; ++i) class_target(i, i % k) = 1.0;

  // Combined objective over all three loss families.
  auto objective = [&]() {
    const RegionLogitsResult fwd = region_logits(sem, head);
    double total = 0;
    for (int i = 0; i < n; ++i) {
      const Eigen::ArrayXd logit = fwd.logits.col(i).array();
      const Eigen::ArrayXd mask = logit.unaryExpr([](double x) { return sigmoid(x); });
      total += DiceLoss::forward(mask, target.col(i).array());
      double focal;
      Eigen::ArrayXd unused;
      FocalLoss::forward_backward(logit, target.col(i).array(), 0.25, 2.0, focal, unused);
      total += focal / pixels;
    }
    const Eigen::MatrixXd probs = softmax_rows(head.region_embeddings * head.classifier);
    for (int i = 0; i < n; ++i)
      total += cross_entropy(probs.row(i).array().transpose(), class_target.row(i).array().transpose());
    return total;
  };

  // Analytic gradients assembled the same way total_loss does it.
  HeadGradients grads = HeadGradients::zeros(head);
  {
    const RegionLogitsResult fwd = region_logits(sem, head);
    Eigen::MatrixXd d_logits = Eigen::MatrixXd::Zero(pixels, n);
    for (int i = 0; i < n; ++i) {
      const Eigen::ArrayXd logit = fwd.logits.col(i).array();
      const Eigen::ArrayXd mask = logit.unaryExpr([](double x) { return sigmoid(x); });
      const Eigen::ArrayXd d_dice =
          DiceLoss::backward(mask, target.col(i).array()) * mask * (1.0 - mask);
      double focal;
      Eigen::ArrayXd d_focal;
      FocalLoss::forward_backward(logit, target.col(i).array(), 0.25, 2.0, focal, d_focal);
      d_logits.col(i) = (d_dice + d_focal / pixels).matrix();
    }
    region_logits_backward(sem, head, fwd, d_logits, grads);
    const Eigen::MatrixXd probs = softmax_rows(head.region_embeddings * head.classifier);
    Eigen::MatrixXd d_class = Eigen::MatrixXd::Zero(n, k + 1);
    for (int i = 0; i < n; ++i)
      d_class.row(i) = (probs.row(i).array() - class_target.row(i).array()).matrix();
    grads.d_region_embeddings += d_class * head.classifier.transpose();
    grads.d_classifier += head.region_embeddings.transpose() * d_class;
  }

  auto fd_check = [&](double* param, double analytic) {
    const double orig = *param;
    const double step = 1e-5 * std::max(1.0, std::abs(orig));
    *param = orig + step;
    const double hi = objective();
    *param = orig - step;
    const double lo = objective();
    *param = orig;
    const double numeric = (hi - lo) / (2 * step);
    CHECK(std::abs(analytic - numeric) <=
          std::max(1e-6, 1e-3 * std::max(std::abs(analytic), std::abs(numeric))));
  };

  for (Eigen::Index i = 0; i < head.region_embeddings.size(); ++i)
    fd_check(head.region_embeddings.data() + i, grads.d_region_embeddings(i));
  for (Eigen::Index i = 0; i < head.classifier.size(); ++i)
    fd_check(head.classifier.data() + i, grads.d_classifier(i));
  for (Eigen::Index i = 0; i < head.gamma.w1.size(); ++i)
    fd_check(head.gamma.w1.data() + i, grads.d_w1(i));
  for (Eigen::Index i = 0; i < head.gamma.w2.size(); ++i)
    fd_check(head.gamma.w2.data() + i, grads.d_w2(i));
  for (Eigen::Index i = 0; i < head.gamma.b1.size(); ++i)
    fd_check(head.gamma.b1.data() + i, grads.d_b1(i));
  for (Eigen::Index i = 0; i < head.gamma.b2.size(); ++i)
    fd_check(head.gamma.b2.data() + i, grads.d_b2(i));
}
