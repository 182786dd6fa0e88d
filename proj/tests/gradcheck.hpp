#pragma once

#include <algorithm>
#include <functional>
#include <vector>

#include <lsl/model.hpp>

#include "fixtures.hpp"

namespace lsl::testing {

/// Central finite differences of f over a flat parameter vector.
inline Vec numeric_gradient(const std::function<double(const Vec&)>& f, Vec at, double h = 1e-6) {
  Vec g(at.size());
  for (Eigen::Index i = 0; i < at.size(); ++i) {
    const double keep = at[i];
    at[i] = keep + h;
    const double up = f(at);
    at[i] = keep - h;
    const double down = f(at);
    at[i] = keep;
    g[i] = (up - down) / (2 * h);
  }
  return g;
}

inline double relative_error(const Vec& analytic, const Vec& numeric) {
  const double scale = std::max({analytic.norm(), numeric.norm(), 1e-8});
  return (analytic - numeric).norm() / scale;
}

struct GradDraw {
  std::vector<EmbeddingBundle> bundles;
  std::vector<ResolvedExample> batch;
  Model model;
};

/// A random model and batch over random sentences. Mix logits, scale and
/// attention are perturbed away from their initial values so every gradient
/// path is exercised.
inline GradDraw random_draw(Rng& rng, int arity, int num_classes) {
  GradDraw d;
  const auto L = static_cast<std::uint32_t>(1 + uniform_index(rng, 3));
  const auto dim = static_cast<std::uint32_t>(2 + uniform_index(rng, 4));
  const auto hidden = static_cast<Eigen::Index>(2 + uniform_index(rng, 5));
  const std::size_t n = 3 + uniform_index(rng, 5);
  for (std::size_t i = 0; i < n; ++i) {
    const auto T = static_cast<std::uint32_t>(2 + uniform_index(rng, 5));
    d.bundles.push_back(random_bundle("g" + std::to_string(i), L, T, dim, rng));
  }
  ModelShape shape{L, dim, hidden, arity, num_classes};
  d.model = init_model(shape, rng);
  for (Eigen::Index l = 0; l < d.model.probe.mix_logits.size(); ++l) d.model.probe.mix_logits[l] = normal(rng);
  d.model.probe.mix_scale = uniform(rng, 0.5, 1.5);
  d.model.probe.attn *= 2.0;
  for (Eigen::Index i = 0; i < d.model.probe.proj_bias.size(); ++i) d.model.probe.proj_bias[i] = uniform(rng, 0.05, 0.3);
  d.model.head.weight *= 2.0;
  auto random_span = [&](std::uint32_t T) {
    const auto a = static_cast<std::uint32_t>(uniform_index(rng, T));
    const auto b = a + 1 + static_cast<std::uint32_t>(uniform_index(rng, T - a));
    return Span{a, b};
  };
  for (std::size_t i = 0; i < n; ++i) {
    const auto& b = d.bundles[i];
    ResolvedExample ex;
    ex.bundle = &b;
    ex.span1 = random_span(b.num_tokens);
    if (arity == 2) ex.span2 = random_span(b.num_tokens);
    ex.label = static_cast<int>(uniform_index(rng, 2));
    d.batch.push_back(ex);
  }
  return d;
}

/// Relative error between loss_total's analytic gradient and central
/// differences of its value, over every trainable parameter.
inline double loss_gradient_error(const GradDraw& d, const RegularizerWeights& w) {
  const auto analytic = pack(loss_total(d.model, d.batch, w, true).grad);
  Model probe = d.model;
  const auto f = [&](const Vec& flat) {
    unpack(flat, probe);
    return loss_total(probe, d.batch, w, false).parts.total;
  };
  return relative_error(analytic, numeric_gradient(f, pack(d.model)));
}

}  // namespace lsl::testing
