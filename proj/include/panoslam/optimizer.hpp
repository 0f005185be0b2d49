#pragma once

#include <Eigen/Core>
#include <cmath>
#include <cstdint>
#include <vector>

namespace panoslam {

/// Adam moments for a flat parameter block. Callers own the parameter storage
/// and pass matching gradient views; state grows on demand (densification).
class AdamState {
 public:
  AdamState() = default;
  explicit AdamState(size_t n) { resize(n); }

  void resize(size_t n) {
    m_.resize(n, 0.0);
    v_.resize(n, 0.0);
  }

  size_t size() const { return m_.size(); }
  int64_t steps() const { return t_; }

  /// One Adam update over `n` parameters with a shared learning rate.
  /// Caller increments the shared step count via begin_step() once per
  /// optimizer step (bias correction is per-step, not per-block).
  void update(double* params, const double* grads, size_t n, double lr,
              double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8) {
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t_));
    for (size_t i = 0; i < n; ++i) {
      m_[i] = beta1 * m_[i] + (1.0 - beta1) * grads[i];
      v_[i] = beta2 * v_[i] + (1.0 - beta2) * grads[i] * grads[i];
      const double mhat = m_[i] / bc1;
      const double vhat = v_[i] / bc2;
      params[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }

  void begin_step() { ++t_; }

  std::vector<double>& moment1() { return m_; }
  std::vector<double>& moment2() { return v_; }
  const std::vector<double>& moment1() const { return m_; }
  const std::vector<double>& moment2() const { return v_; }
  void set_steps(int64_t t) { t_ = t; }

 private:
  std::vector<double> m_;
  std::vector<double> v_;
  int64_t t_ = 0;
};

}  // namespace panoslam
