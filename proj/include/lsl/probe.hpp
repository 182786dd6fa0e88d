#pragma once

// Span probe: learned scalar mix over encoder layers, self-attentive pooling
// over each span, concatenation, and one fully connected layer with a ramp
// nonlinearity. Forward passes can record a cache for the backward pass.

#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "data_model.hpp"
#include "numeric.hpp"
#include "random.hpp"

namespace lsl {

struct ProbeParams {
  Vec mix_logits;     // L
  double mix_scale = 1.0;
  Vec attn;           // d
  Mat proj_weight;    // h x (arity * d)
  Vec proj_bias;      // h

  Eigen::Index num_layers() const { return mix_logits.size(); }
  Eigen::Index dim() const { return attn.size(); }
  Eigen::Index hidden() const { return proj_weight.rows(); }
  Eigen::Index arity() const { return dim() == 0 ? 0 : proj_weight.cols() / dim(); }

  void set_zero() {
    mix_logits.setZero();
    mix_scale = 0.0;
    attn.setZero();
    proj_weight.setZero();
    proj_bias.setZero();
  }

  bool all_finite() const {
    return mix_logits.allFinite() && std::isfinite(mix_scale) && attn.allFinite() &&
           proj_weight.allFinite() && proj_bias.allFinite();
  }
};

inline ProbeParams zeros_like(const ProbeParams& p) {
  ProbeParams z;
  z.mix_logits = Vec::Zero(p.mix_logits.size());
  z.mix_scale = 0.0;
  z.attn = Vec::Zero(p.attn.size());
  z.proj_weight = Mat::Zero(p.proj_weight.rows(), p.proj_weight.cols());
  z.proj_bias = Vec::Zero(p.proj_bias.size());
  return z;
}

/// Mix logits 0, scale 1, bias 0; attention and projection uniform in
/// [-1/sqrt(fan_in), 1/sqrt(fan_in)].
inline ProbeParams init_probe(Eigen::Index layers, Eigen::Index dim, Eigen::Index hidden, Eigen::Index arity,
                              Rng& rng) {
  if (layers < 1 || dim < 1 || hidden < 1 || arity < 1 || arity > 2) {
    throw std::invalid_argument("init_probe: invalid shape");
  }
  ProbeParams p;
  p.mix_logits = Vec::Zero(layers);
  p.mix_scale = 1.0;
  p.attn.resize(dim);
  const double attn_bound = 1.0 / std::sqrt(static_cast<double>(dim));
  for (Eigen::Index k = 0; k < dim; ++k) p.attn[k] = uniform(rng, -attn_bound, attn_bound);
  p.proj_weight.resize(hidden, arity * dim);
  const double proj_bound = 1.0 / std::sqrt(static_cast<double>(arity * dim));
  for (Eigen::Index i = 0; i < p.proj_weight.size(); ++i)
    p.proj_weight.data()[i] = uniform(rng, -proj_bound, proj_bound);
  p.proj_bias = Vec::Zero(hidden);
  return p;
}

namespace detail {

inline auto layer_token(const EmbeddingBundle& b, std::uint32_t layer, std::uint32_t tok) {
  return Eigen::Map<const Eigen::VectorXf>(b.token(layer, tok), b.dim).cast<double>();
}

inline void check_mix_shape(const EmbeddingBundle& b, const ProbeParams& p) {
  if (static_cast<Eigen::Index>(b.num_layers) != p.num_layers()) {
    throw std::invalid_argument("layer-count mismatch: sentence '" + b.sentence_id + "' has " +
                                std::to_string(b.num_layers) + " layers, probe mixes " +
                                std::to_string(p.num_layers()));
  }
  if (static_cast<Eigen::Index>(b.dim) != p.dim()) {
    throw std::invalid_argument("dimension mismatch for sentence '" + b.sentence_id + "'");
  }
}

/// Un-scaled mix sum_l c_l * layer_l for the tokens of `span`, one row each.
inline Mat mix_rows(const EmbeddingBundle& b, Span span, const Vec& weights) {
  Mat rows = Mat::Zero(span.length(), b.dim);
  for (std::uint32_t t = span.start; t < span.end; ++t)
    for (std::uint32_t l = 0; l < b.num_layers; ++l)
      rows.row(t - span.start) += weights[l] * layer_token(b, l, t).transpose();
  return rows;
}

}  // namespace detail

/// Scalar mix gamma * sum_l softmax(mix_logits)_l * layer_l for every token.
inline Mat mix_layers(const EmbeddingBundle& bundle, const ProbeParams& params) {
  detail::check_mix_shape(bundle, params);
  return params.mix_scale * detail::mix_rows(bundle, Span{0, bundle.num_tokens}, softmax(params.mix_logits));
}

/// Attention weights over the rows of `tokens`.
inline Vec attention_weights(const Mat& tokens, const Vec& attn) {
  return softmax(tokens * attn);
}

/// Self-attentive pooling of tokens[span] into one d-vector.
inline Vec pool_span(const Mat& tokens, Span span, const ProbeParams& params) {
  if (span.start >= span.end) throw std::invalid_argument("pool_span: empty span");
  if (span.end > tokens.rows()) throw std::invalid_argument("pool_span: span out of bounds");
  const Mat rows = tokens.middleRows(span.start, span.length());
  return rows.transpose() * attention_weights(rows, params.attn);
}

struct SpanCache {
  Span span;
  Mat unscaled;  // len x d, mix before gamma
  Vec weights;   // attention weights
  Vec pooled;    // d
};

struct FeatureCache {
  const EmbeddingBundle* bundle = nullptr;
  Vec mix_weights;
  std::vector<SpanCache> spans;
  Vec concat;
  Vec pre;  // pre-activation
  Vec x;
};

/// Probe feature vector for one example. Span bounds are the caller's
/// responsibility (checked at load time); the arity must match proj_weight.
inline Vec featurize(const EmbeddingBundle& bundle, Span span1, const std::optional<Span>& span2,
                     const ProbeParams& params, FeatureCache* cache = nullptr) {
  detail::check_mix_shape(bundle, params);
  const Eigen::Index arity = span2 ? 2 : 1;
  if (params.proj_weight.cols() != arity * params.dim()) {
    throw std::invalid_argument("dimension mismatch: task arity " + std::to_string(arity) +
                                " does not match projection with " +
                                std::to_string(params.proj_weight.cols()) + " columns");
  }
  const Vec c = softmax(params.mix_logits);
  const Eigen::Index d = params.dim();
  Vec concat(arity * d);
  std::vector<SpanCache> spans;
  for (Eigen::Index s = 0; s < arity; ++s) {
    const Span sp = s == 0 ? span1 : *span2;
    if (sp.start >= sp.end || sp.end > bundle.num_tokens) {
      throw std::invalid_argument("featurize: invalid span for sentence '" + bundle.sentence_id + "'");
    }
    SpanCache sc;
    sc.span = sp;
    sc.unscaled = detail::mix_rows(bundle, sp, c);
    const Mat tokens = params.mix_scale * sc.unscaled;
    sc.weights = attention_weights(tokens, params.attn);
    sc.pooled = tokens.transpose() * sc.weights;
    concat.segment(s * d, d) = sc.pooled;
    if (cache) spans.push_back(std::move(sc));
  }
  Vec pre = params.proj_weight * concat + params.proj_bias;
  Vec x = pre.cwiseMax(0.0);
  if (cache) {
    cache->bundle = &bundle;
    cache->mix_weights = c;
    cache->spans = std::move(spans);
    cache->concat = std::move(concat);
    cache->pre = std::move(pre);
    cache->x = x;
  }
  return x;
}

inline Vec featurize(const EmbeddingBundle& bundle, const SpanTarget& target, const ProbeParams& params,
                     FeatureCache* cache = nullptr) {
  return featurize(bundle, target.span1, target.span2, params, cache);
}

/// Accumulates d(loss)/d(params) into `grad` given d(loss)/dx.
inline void featurize_backward(const FeatureCache& cache, const Vec& dx, const ProbeParams& params,
                               ProbeParams& grad) {
  const Eigen::Index d = params.dim();
  const double gamma = params.mix_scale;
  Vec dpre = dx;
  for (Eigen::Index i = 0; i < dpre.size(); ++i)
    if (cache.pre[i] <= 0.0) dpre[i] = 0.0;
  grad.proj_weight.noalias() += dpre * cache.concat.transpose();
  grad.proj_bias += dpre;
  const Vec dconcat = params.proj_weight.transpose() * dpre;

  const EmbeddingBundle& b = *cache.bundle;
  Vec dmix = Vec::Zero(params.num_layers());  // d(loss)/d(mix weight c_l)
  for (std::size_t s = 0; s < cache.spans.size(); ++s) {
    const SpanCache& sc = cache.spans[s];
    const Vec dpooled = dconcat.segment(static_cast<Eigen::Index>(s) * d, d);
    // pooled = sum_t w_t u_t with u_t = gamma * unscaled_t and w = softmax(U attn)
    const Vec g = gamma * (sc.unscaled * dpooled);               // <dpooled, u_t>
    const Vec dscore = (sc.weights.array() * (g.array() - sc.weights.dot(g))).matrix();
    grad.attn += gamma * (sc.unscaled.transpose() * dscore);
    // du_t = w_t dpooled + dscore_t attn
    const Mat du = sc.weights * dpooled.transpose() + dscore * params.attn.transpose();
    grad.mix_scale += (du.cwiseProduct(sc.unscaled)).sum();
    for (std::uint32_t t = sc.span.start; t < sc.span.end; ++t) {
      const auto row = du.row(t - sc.span.start);
      for (std::uint32_t l = 0; l < b.num_layers; ++l)
        dmix[l] += gamma * row.dot(detail::layer_token(b, l, t));
    }
  }
  const Vec& c = cache.mix_weights;
  grad.mix_logits += (c.array() * (dmix.array() - c.dot(dmix))).matrix();
}

}  // namespace lsl
