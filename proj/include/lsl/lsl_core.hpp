#pragma once

// Latent subclass learning head.
//
// A binary classifier factored through N latent classes: latent logits
// z = W x, binary logit log(sum_i exp(z_i)), i.e. an (N+1)-way softmax with a
// null class pinned at logit 0, trained only on the binary label. The
// softmax over z is the latent class distribution C(x), its argmax the hard
// assignment.
//
// Objective on a batch:
//   L_lsl  binary cross-entropy on the marginal probability
//   L_be   log N - H(mean_x C(x))     (pushes toward using all classes)
//   L_ie   mean_x H(C(x))             (pushes toward confident assignments)
//   total  L_lsl + alpha * L_be + beta * L_ie
// All entropies are in nats. L_be + L_ie = log N - I(x; C) on the batch.

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

#include "numeric.hpp"
#include "random.hpp"

namespace lsl {

inline constexpr int kDefaultLatentClasses = 32;
inline constexpr double kDefaultAlpha = 1.5;
inline constexpr double kDefaultBeta = 1.5;
inline constexpr double kLogClamp = 1e-12;

struct LslHead {
  Mat weight;  // N x h

  Eigen::Index num_classes() const { return weight.rows(); }
  Eigen::Index input_dim() const { return weight.cols(); }
};

inline LslHead init_head(Eigen::Index num_classes, Eigen::Index input_dim, Rng& rng) {
  if (num_classes < 1 || input_dim < 1) throw std::invalid_argument("init_head: invalid shape");
  LslHead head;
  head.weight.resize(num_classes, input_dim);
  const double bound = 1.0 / std::sqrt(static_cast<double>(input_dim));
  for (Eigen::Index i = 0; i < head.weight.size(); ++i) head.weight.data()[i] = uniform(rng, -bound, bound);
  return head;
}

struct LatentPosterior {
  Vec latent_logits;
  Vec distribution;
  int hard_class = 1;  // 1-based argmax, ties to the lowest index
  double binary_logit = 0.0;
  double binary_prob = 0.5;

  int hard_index() const { return hard_class - 1; }
};

inline LatentPosterior posterior_from_logits(Vec logits) {
  if (logits.size() < 1) throw std::invalid_argument("posterior: empty logit vector");
  LatentPosterior post;
  post.distribution = softmax(logits);
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < logits.size(); ++i)
    if (logits[i] > logits[best]) best = i;
  post.hard_class = static_cast<int>(best) + 1;
  post.binary_logit = log_sum_exp(logits);
  post.binary_prob = sigmoid(post.binary_logit);
  post.latent_logits = std::move(logits);
  return post;
}

inline LatentPosterior forward(const Vec& x, const LslHead& head) {
  if (x.size() != head.input_dim()) throw std::invalid_argument("forward: feature size mismatch");
  return posterior_from_logits(head.weight * x);
}

namespace detail {

inline void require_batch(std::span<const LatentPosterior> batch) {
  if (batch.empty()) throw std::invalid_argument("empty batch");
}

inline Vec mean_distribution(std::span<const LatentPosterior> batch) {
  Vec m = Vec::Zero(batch.front().distribution.size());
  for (const auto& p : batch) m += p.distribution;
  return m / static_cast<double>(batch.size());
}

inline double item_entropy(const LatentPosterior& p) {
  return std::max(0.0, entropy_from_logits(p.latent_logits, p.distribution));
}

// log p and log(1-p) of sigmoid(s), each clamped below at log(kLogClamp).
inline double clamped_log_prob(double s, int label, bool* clamped = nullptr) {
  const double lp = label == 1 ? -softplus(-s) : -softplus(s);
  const double floor = std::log(kLogClamp);
  if (clamped) *clamped = lp < floor;
  return std::max(lp, floor);
}

}  // namespace detail

/// Mean binary cross-entropy of the marginal probability.
inline double loss_lsl(std::span<const LatentPosterior> batch, std::span<const int> labels) {
  detail::require_batch(batch);
  if (labels.size() != batch.size()) throw std::invalid_argument("loss_lsl: label count mismatch");
  double sum = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) sum -= detail::clamped_log_prob(batch[i].binary_logit, labels[i]);
  return sum / static_cast<double>(batch.size());
}

/// log N - H(mean distribution), in [0, log N].
inline double loss_batch_entropy(std::span<const LatentPosterior> batch) {
  detail::require_batch(batch);
  const Vec m = detail::mean_distribution(batch);
  const double log_n = std::log(static_cast<double>(m.size()));
  return std::clamp(log_n - entropy(m), 0.0, log_n);
}

/// Mean per-item entropy, in [0, log N].
inline double loss_instance_entropy(std::span<const LatentPosterior> batch) {
  detail::require_batch(batch);
  double sum = 0.0;
  for (const auto& p : batch) sum += detail::item_entropy(p);
  const double log_n = std::log(static_cast<double>(batch.front().distribution.size()));
  return std::min(sum / static_cast<double>(batch.size()), log_n);
}

/// H(mean_x C(x)) - mean_x H(C(x)).
inline double mutual_information(std::span<const LatentPosterior> batch) {
  detail::require_batch(batch);
  double inst = 0.0;
  for (const auto& p : batch) inst += detail::item_entropy(p);
  return entropy(detail::mean_distribution(batch)) - inst / static_cast<double>(batch.size());
}

/// Which batch items the entropy regularizers average over.
enum class RegularizerScope { all, positives };

struct RegularizerWeights {
  double alpha = kDefaultAlpha;
  double beta = kDefaultBeta;
  RegularizerScope scope = RegularizerScope::all;

  void validate() const {
    if (!(alpha >= 0.0) || !(beta >= 0.0)) {
      throw std::invalid_argument("regularizer coefficients must be non-negative");
    }
  }
};

struct BatchLoss {
  double total = 0.0;
  double lsl = 0.0;
  double batch_entropy = 0.0;
  double instance_entropy = 0.0;
  std::vector<Vec> dlogits;  // d(total)/d(latent logits), one per item
};

/// Total regularized loss and, if requested, its gradient with respect to
/// every item's latent logits.
inline BatchLoss batch_objective(std::span<const LatentPosterior> batch, std::span<const int> labels,
                                 const RegularizerWeights& w, bool with_gradient = true) {
  w.validate();
  BatchLoss out;
  out.lsl = loss_lsl(batch, labels);

  std::vector<LatentPosterior> subset;
  std::span<const LatentPosterior> reg = batch;
  if (w.scope == RegularizerScope::positives) {
    for (std::size_t i = 0; i < batch.size(); ++i)
      if (labels[i] == 1) subset.push_back(batch[i]);
    reg = subset;
  }
  if (!reg.empty()) {
    out.batch_entropy = loss_batch_entropy(reg);
    out.instance_entropy = loss_instance_entropy(reg);
  }
  out.total = out.lsl + w.alpha * out.batch_entropy + w.beta * out.instance_entropy;
  if (!with_gradient) return out;

  const double inv_b = 1.0 / static_cast<double>(batch.size());
  const double inv_r = reg.empty() ? 0.0 : 1.0 / static_cast<double>(reg.size());
  Vec log_m = reg.empty() ? Vec::Zero(batch.front().distribution.size()) : detail::mean_distribution(reg);
  for (Eigen::Index k = 0; k < log_m.size(); ++k) log_m[k] = log_m[k] > 0 ? std::log(log_m[k]) : 0.0;

  out.dlogits.reserve(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const LatentPosterior& post = batch[i];
    const Vec& p = post.distribution;
    bool clamped = false;
    detail::clamped_log_prob(post.binary_logit, labels[i], &clamped);
    double ds = 0.0;  // d(cross-entropy)/d(binary logit)
    if (!clamped) ds = labels[i] == 1 ? -sigmoid(-post.binary_logit) : sigmoid(post.binary_logit);
    Vec dz = (ds * inv_b) * p;
    const bool regularized = w.scope == RegularizerScope::all || labels[i] == 1;
    if (regularized && w.alpha != 0.0) {
      dz += (w.alpha * inv_r) * (p.array() * (log_m.array() - p.dot(log_m))).matrix();
    }
    if (regularized && w.beta != 0.0) {
      const Vec& z = post.latent_logits;
      dz -= (w.beta * inv_r) * (p.array() * (z.array() - p.dot(z))).matrix();
    }
    out.dlogits.push_back(std::move(dz));
  }
  return out;
}

}  // namespace lsl
