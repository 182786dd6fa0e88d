#pragma once

// Evaluation of an induced clustering against gold labels. Callers restrict
// inputs to gold-positive points before scoring.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <unordered_map>
#include <vector>

#include "lsl_core.hpp"
#include "numeric.hpp"

namespace lsl {

struct BCubed {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

inline double harmonic_mean(double p, double r) { return p + r > 0 ? 2.0 * p * r / (p + r) : 0.0; }

/// Point-averaged B-cubed precision/recall. When `restrict_to` is set only
/// points with that gold label are averaged; cluster and class sizes still
/// count every point.
template <class G, class C>
BCubed b_cubed(std::span<const G> gold, std::span<const C> pred, const std::optional<G>& restrict_to = std::nullopt) {
  if (gold.size() != pred.size()) throw std::invalid_argument("b_cubed: vectors not aligned");
  if (gold.empty()) throw std::invalid_argument("b_cubed: empty input");
  std::map<G, std::size_t> gold_size;
  std::map<C, std::size_t> cluster_size;
  std::map<std::pair<G, C>, std::size_t> joint;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    ++gold_size[gold[i]];
    ++cluster_size[pred[i]];
    ++joint[{gold[i], pred[i]}];
  }
  double p = 0.0, r = 0.0;
  std::size_t scored = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (restrict_to && !(gold[i] == *restrict_to)) continue;
    const auto same = static_cast<double>(joint[{gold[i], pred[i]}]);
    p += same / static_cast<double>(cluster_size[pred[i]]);
    r += same / static_cast<double>(gold_size[gold[i]]);
    ++scored;
  }
  if (scored == 0) throw std::invalid_argument("b_cubed: no points carry the requested gold label");
  BCubed out;
  out.precision = p / static_cast<double>(scored);
  out.recall = r / static_cast<double>(scored);
  out.f1 = harmonic_mean(out.precision, out.recall);
  return out;
}

template <class G, class C>
BCubed b_cubed(const std::vector<G>& gold, const std::vector<C>& pred,
               const std::optional<G>& restrict_to = std::nullopt) {
  return b_cubed(std::span<const G>(gold), std::span<const C>(pred), restrict_to);
}

/// Symmetrized agreement between two clusterings of the same points: mean of
/// B-cubed F1 with each one taken as the reference.
template <class A, class B>
double pairwise_b_cubed_f1(const std::vector<A>& a, const std::vector<B>& b) {
  return 0.5 * (b_cubed(a, b).f1 + b_cubed(b, a).f1);
}

namespace detail {

template <class T>
std::string label_key(const T& v) {
  if constexpr (std::is_convertible_v<const T&, std::string>) {
    return std::string(v);
  } else {
    return std::to_string(v);
  }
}

}  // namespace detail

/// Gold label x predicted cluster counts. Labels are kept sorted; clusters
/// keep first-seen order.
class Contingency {
 public:
  Contingency() = default;

  template <class G, class C>
  static Contingency from(std::span<const G> gold, std::span<const C> pred) {
    if (gold.size() != pred.size()) throw std::invalid_argument("contingency: vectors not aligned");
    Contingency c;
    for (std::size_t i = 0; i < gold.size(); ++i) c.add(detail::label_key(gold[i]), detail::label_key(pred[i]));
    return c;
  }
  template <class G, class C>
  static Contingency from(const std::vector<G>& gold, const std::vector<C>& pred) {
    return from(std::span<const G>(gold), std::span<const C>(pred));
  }

  /// Registers a label with zero count so it shows up (as undefined) in reports.
  void declare_label(const std::string& label) { label_index(label); }

  void add(const std::string& label, const std::string& cluster, std::int64_t count = 1) {
    if (count < 0) throw std::invalid_argument("contingency: negative count");
    const std::size_t g = label_index(label);
    const std::size_t c = cluster_index(cluster);
    counts_[g][c] += count;
  }

  /// Appends the clusters of `other` as new, distinct clusters (prefixed),
  /// which is how co-occurrence counts from several runs are summed.
  void absorb(const Contingency& other, const std::string& prefix) {
    for (std::size_t g = 0; g < other.labels_.size(); ++g) {
      declare_label(other.labels_[g]);
      for (std::size_t c = 0; c < other.clusters_.size(); ++c)
        if (other.counts_[g][c] > 0) add(other.labels_[g], prefix + other.clusters_[c], other.counts_[g][c]);
    }
  }

  const std::vector<std::string>& labels() const { return labels_; }
  const std::vector<std::string>& clusters() const { return clusters_; }
  std::int64_t count(std::size_t g, std::size_t c) const { return counts_[g][c]; }

  std::int64_t label_total(std::size_t g) const {
    std::int64_t s = 0;
    for (auto v : counts_[g]) s += v;
    return s;
  }
  std::int64_t cluster_total(std::size_t c) const {
    std::int64_t s = 0;
    for (const auto& row : counts_) s += row[c];
    return s;
  }
  std::int64_t total() const {
    std::int64_t s = 0;
    for (std::size_t g = 0; g < labels_.size(); ++g) s += label_total(g);
    return s;
  }

  std::optional<std::size_t> find_label(const std::string& label) const {
    auto it = std::lower_bound(labels_.begin(), labels_.end(), label);
    if (it == labels_.end() || *it != label) return std::nullopt;
    return static_cast<std::size_t>(it - labels_.begin());
  }

 private:
  std::size_t label_index(const std::string& label) {
    auto it = std::lower_bound(labels_.begin(), labels_.end(), label);
    const auto pos = static_cast<std::size_t>(it - labels_.begin());
    if (it != labels_.end() && *it == label) return pos;
    labels_.insert(it, label);
    counts_.insert(counts_.begin() + static_cast<std::ptrdiff_t>(pos), std::vector<std::int64_t>(clusters_.size(), 0));
    return pos;
  }

  std::size_t cluster_index(const std::string& cluster) {
    auto it = cluster_pos_.find(cluster);
    if (it != cluster_pos_.end()) return it->second;
    cluster_pos_.emplace(cluster, clusters_.size());
    clusters_.push_back(cluster);
    for (auto& row : counts_) row.push_back(0);
    return clusters_.size() - 1;
  }

  std::vector<std::string> labels_;
  std::vector<std::string> clusters_;
  std::unordered_map<std::string, std::size_t> cluster_pos_;
  std::vector<std::vector<std::int64_t>> counts_;
};

/// Symmetric label x label nPMI; NaN marks labels with zero count.
struct NpmiMatrix {
  std::vector<std::string> labels;
  Mat values;

  static bool undefined(double v) { return std::isnan(v); }
};

/// Pairwise nPMI of gold labels co-occurring in predicted clusters.
///
/// Event space: a cluster c is drawn with probability n_c / n, and label x
/// occurs in it with strength s_x(c) = n_xc / max_y n_yc, independently of
/// other labels given c. So
///   p(x)   = sum_c p(c) s_x(c)
///   p(x,y) = sum_c p(c) s_x(c) s_y(c)
/// Disjoint labels give -1, labels that always share a cluster at equal
/// strength give +1, and labels distributed identically across clusters give
/// exactly 0. p(x,y) = 0 maps to -1 and p(x,y) = 1 maps to +1.
inline NpmiMatrix npmi_matrix(const Contingency& table) {
  const std::size_t G = table.labels().size();
  const std::size_t C = table.clusters().size();
  NpmiMatrix out;
  out.labels = table.labels();
  out.values = Mat::Constant(static_cast<Eigen::Index>(G), static_cast<Eigen::Index>(G),
                             std::numeric_limits<double>::quiet_NaN());
  const double n = static_cast<double>(table.total());
  if (n <= 0) return out;

  Mat strength = Mat::Zero(static_cast<Eigen::Index>(G), static_cast<Eigen::Index>(C));
  Vec cluster_prob = Vec::Zero(static_cast<Eigen::Index>(C));
  for (std::size_t c = 0; c < C; ++c) {
    std::int64_t top = 0;
    for (std::size_t g = 0; g < G; ++g) top = std::max(top, table.count(g, c));
    if (top == 0) continue;
    cluster_prob[static_cast<Eigen::Index>(c)] = static_cast<double>(table.cluster_total(c)) / n;
    for (std::size_t g = 0; g < G; ++g)
      strength(static_cast<Eigen::Index>(g), static_cast<Eigen::Index>(c)) =
          static_cast<double>(table.count(g, c)) / static_cast<double>(top);
  }
  const Vec marginal = strength * cluster_prob;
  const Mat joint = strength * cluster_prob.asDiagonal() * strength.transpose();

  for (Eigen::Index x = 0; x < static_cast<Eigen::Index>(G); ++x) {
    for (Eigen::Index y = 0; y < static_cast<Eigen::Index>(G); ++y) {
      if (marginal[x] <= 0 || marginal[y] <= 0) continue;
      const double pxy = std::min(joint(x, y), 1.0);
      double v;
      if (pxy <= 0) {
        v = -1.0;
      } else if (pxy >= 1.0) {
        v = 1.0;
      } else {
        v = std::log(pxy / (marginal[x] * marginal[y])) / -std::log(pxy);
      }
      out.values(x, y) = std::clamp(v, -1.0, 1.0);
    }
  }
  // exact symmetry regardless of summation order
  for (Eigen::Index x = 0; x < out.values.rows(); ++x)
    for (Eigen::Index y = x + 1; y < out.values.cols(); ++y) out.values(y, x) = out.values(x, y);
  return out;
}

/// Effective number of clusters: exp of the entropy of the hard-assignment
/// histogram.
template <class C>
double diversity(std::span<const C> pred) {
  if (pred.empty()) throw std::invalid_argument("diversity: empty input");
  std::map<C, std::size_t> hist;
  for (const auto& c : pred) ++hist[c];
  double h = 0.0;
  const double n = static_cast<double>(pred.size());
  for (const auto& [c, k] : hist) {
    const double p = static_cast<double>(k) / n;
    h -= p * std::log(p);
  }
  return std::exp(h);
}

template <class C>
double diversity(const std::vector<C>& pred) {
  return diversity(std::span<const C>(pred));
}

/// Mean over points of exp(entropy of the latent distribution).
inline double uncertainty(std::span<const Vec> distributions) {
  if (distributions.empty()) throw std::invalid_argument("uncertainty: empty input");
  double sum = 0.0;
  for (const auto& p : distributions) sum += std::exp(entropy(p));
  return sum / static_cast<double>(distributions.size());
}

inline double uncertainty(std::span<const LatentPosterior> posteriors) {
  std::vector<Vec> d;
  d.reserve(posteriors.size());
  for (const auto& p : posteriors) d.push_back(p.distribution);
  return uncertainty(std::span<const Vec>(d));
}

inline constexpr double kAccuracyThreshold = 0.5;

inline double binary_accuracy(std::span<const double> probs, std::span<const int> labels) {
  if (probs.size() != labels.size()) throw std::invalid_argument("binary_accuracy: vectors not aligned");
  if (probs.empty()) throw std::invalid_argument("binary_accuracy: empty input");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) hit += (probs[i] >= kAccuracyThreshold ? 1 : 0) == labels[i];
  return static_cast<double>(hit) / static_cast<double>(probs.size());
}

}  // namespace lsl
