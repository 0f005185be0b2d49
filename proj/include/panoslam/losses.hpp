#pragma once

#include <Eigen/Core>
#include <cmath>

namespace panoslam {

/// L1 with sign subgradient. `residual` = prediction - target.
inline double l1_value(double residual) { return std::abs(residual); }
inline double l1_grad(double residual) { return residual > 0 ? 1.0 : (residual < 0 ? -1.0 : 0.0); }

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

/// Smoothed soft dice loss between a predicted soft mask and a (possibly
/// soft) target mask: 1 - (2<m,g> + 1) / (sum m + sum g + 1).
struct DiceLoss {
  double value = 0;
  // Filled by backward(): d value / d m, same shape as the mask.
  static double forward(const Eigen::ArrayXd& m, const Eigen::ArrayXd& g) {
    const double num = 2.0 * (m * g).sum() + 1.0;
    const double den = m.sum() + g.sum() + 1.0;
    return 1.0 - num / den;
  }
  static Eigen::ArrayXd backward(const Eigen::ArrayXd& m, const Eigen::ArrayXd& g) {
    const double num = 2.0 * (m * g).sum() + 1.0;
    const double den = m.sum() + g.sum() + 1.0;
    return (-2.0 * g * den + num) / (den * den);
  }
};

/// Sigmoid focal loss with soft targets, per element, mean-reduced by caller.
/// x = logits, g = targets in [0,1].
struct FocalLoss {
  static void forward_backward(const Eigen::ArrayXd& x, const Eigen::ArrayXd& g,
                               double alpha, double gamma, double& value_out,
                               Eigen::ArrayXd& dx_out) {
    const Eigen::ArrayXd p = 1.0 / (1.0 + (-x).exp());
    // Binary cross entropy written against the logits for stability:
    // ce = max(x,0) - x*g + log(1+exp(-|x|)).
    const Eigen::ArrayXd ce = x.max(0.0) - x * g + (1.0 + (-x.abs()).exp()).log();
    const Eigen::ArrayXd p_t = p * g + (1.0 - p) * (1.0 - g);
    const Eigen::ArrayXd a_t = alpha * g + (1.0 - alpha) * (1.0 - g);
    const Eigen::ArrayXd one_minus_pt = (1.0 - p_t).max(0.0);
    const Eigen::ArrayXd mod = one_minus_pt.pow(gamma);
    value_out = (a_t * mod * ce).sum();

    // d ce / dx = p - g;  d p_t / dx = (2g - 1) p (1 - p)
    const Eigen::ArrayXd dce = p - g;
    const Eigen::ArrayXd dpt = (2.0 * g - 1.0) * p * (1.0 - p);
    const Eigen::ArrayXd dmod = -gamma * one_minus_pt.pow(gamma - 1.0) * dpt;
    dx_out = a_t * (dmod * ce + mod * dce);
  }
};

/// Cross entropy of a softmax row `q` against a target distribution `tau`:
/// -sum tau_k log q_k. Gradient w.r.t. the logits is q - tau.
inline double cross_entropy(const Eigen::ArrayXd& q, const Eigen::ArrayXd& tau) {
  return -(tau * q.max(1e-300).log()).sum();
}

/// Numerically stable row-wise softmax.
Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& logits);

}  // namespace panoslam
