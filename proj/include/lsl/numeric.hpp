#pragma once

#include <cmath>
#include <limits>

#include <Eigen/Dense>

namespace lsl {

using Vec = Eigen::VectorXd;
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// log(sum(exp(z))) with the max subtracted first.
inline double log_sum_exp(const Vec& z) {
  const double m = z.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((z.array() - m).exp().sum());
}

inline Vec softmax(const Vec& z) {
  const double m = z.maxCoeff();
  Vec e = (z.array() - m).exp();
  return e / e.sum();
}

/// log(1 + exp(x)) without overflow.
inline double softplus(double x) {
  return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

inline double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

/// Shannon entropy in nats, with 0 log 0 = 0.
inline double entropy(const Vec& p) {
  double h = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i)
    if (p[i] > 0) h -= p[i] * std::log(p[i]);
  return h;
}

/// Entropy of softmax(z) computed from the logits: lse(z) - <softmax(z), z>.
inline double entropy_from_logits(const Vec& z, const Vec& p) {
  return log_sum_exp(z) - p.dot(z);
}

}  // namespace lsl
