#pragma once

// Full probe stack (scalar mix -> span pooling -> projection -> LSL head),
// the end-to-end regularized loss with analytic gradients, flat parameter
// packing for optimizers, and the checkpoint format.
//
// Checkpoint (binary, little-endian):
//   "LSLC" u32:version u32:L u32:d u32:h u32:arity u32:N
//   f64 mix_logits[L], f64 mix_scale, f64 attn[d],
//   f64 proj_weight[h * arity*d] (row-major), f64 proj_bias[h],
//   f64 lsl_weight[N * h] (row-major)

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "binary_io.hpp"
#include "data_model.hpp"
#include "lsl_core.hpp"
#include "probe.hpp"

namespace lsl {

struct Model {
  ProbeParams probe;
  LslHead head;
};

struct ModelShape {
  Eigen::Index layers = 1;
  Eigen::Index dim = 1;
  Eigen::Index hidden = 1;
  Eigen::Index arity = 1;
  Eigen::Index num_classes = kDefaultLatentClasses;
};

inline Model init_model(const ModelShape& shape, Rng& rng) {
  Model m;
  m.probe = init_probe(shape.layers, shape.dim, shape.hidden, shape.arity, rng);
  m.head = init_head(shape.num_classes, shape.hidden, rng);
  return m;
}

inline Model zeros_like(const Model& m) {
  Model z;
  z.probe = zeros_like(m.probe);
  z.head.weight = Mat::Zero(m.head.weight.rows(), m.head.weight.cols());
  return z;
}

inline Eigen::Index parameter_count(const Model& m) {
  return m.probe.mix_logits.size() + 1 + m.probe.attn.size() + m.probe.proj_weight.size() +
         m.probe.proj_bias.size() + m.head.weight.size();
}

namespace detail {

// Visits every parameter block in checkpoint order.
template <class M, class F>
void for_each_block(M& m, F&& f) {
  f(m.probe.mix_logits.data(), m.probe.mix_logits.size());
  f(&m.probe.mix_scale, Eigen::Index{1});
  f(m.probe.attn.data(), m.probe.attn.size());
  f(m.probe.proj_weight.data(), m.probe.proj_weight.size());
  f(m.probe.proj_bias.data(), m.probe.proj_bias.size());
  f(m.head.weight.data(), m.head.weight.size());
}

}  // namespace detail

inline Vec pack(const Model& m) {
  Vec flat(parameter_count(m));
  Eigen::Index at = 0;
  detail::for_each_block(m, [&](const double* p, Eigen::Index n) {
    flat.segment(at, n) = Eigen::Map<const Vec>(p, n);
    at += n;
  });
  return flat;
}

inline void unpack(const Vec& flat, Model& m) {
  if (flat.size() != parameter_count(m)) throw std::invalid_argument("unpack: size mismatch");
  Eigen::Index at = 0;
  detail::for_each_block(m, [&](double* p, Eigen::Index n) {
    Eigen::Map<Vec>(p, n) = flat.segment(at, n);
    at += n;
  });
}

/// A task example with its sentence features resolved.
struct ResolvedExample {
  const EmbeddingBundle* bundle = nullptr;
  Span span1;
  std::optional<Span> span2;
  int label = 0;
};

inline std::vector<ResolvedExample> resolve(const TaskDataset& ds, const EmbeddingIndex& index) {
  std::vector<ResolvedExample> out;
  out.reserve(ds.size());
  for (const auto& t : ds.examples) out.push_back({&index.at(t.sentence_id), t.span1, t.span2, t.label});
  return out;
}

inline LatentPosterior predict(const Model& m, const ResolvedExample& ex) {
  return forward(featurize(*ex.bundle, ex.span1, ex.span2, m.probe), m.head);
}

struct LossResult {
  BatchLoss parts;  // dlogits cleared after backprop
  Model grad;
  std::vector<LatentPosterior> posteriors;
};

/// Regularized LSL loss over a batch, with gradients with respect to every
/// trainable parameter when `with_gradient` is set. Items are processed in
/// order, so results are bit-reproducible.
inline LossResult loss_total(const Model& m, std::span<const ResolvedExample> batch, const RegularizerWeights& w,
                             bool with_gradient = true) {
  w.validate();
  if (batch.empty()) throw std::invalid_argument("loss_total: empty batch");
  LossResult out;
  std::vector<FeatureCache> caches(with_gradient ? batch.size() : 0);
  std::vector<int> labels(batch.size());
  out.posteriors.reserve(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& ex = batch[i];
    const Vec x = featurize(*ex.bundle, ex.span1, ex.span2, m.probe, with_gradient ? &caches[i] : nullptr);
    out.posteriors.push_back(forward(x, m.head));
    labels[i] = ex.label;
  }
  out.parts = batch_objective(out.posteriors, labels, w, with_gradient);
  if (!with_gradient) return out;

  out.grad = zeros_like(m);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const Vec& dz = out.parts.dlogits[i];
    out.grad.head.weight.noalias() += dz * caches[i].x.transpose();
    const Vec dx = m.head.weight.transpose() * dz;
    featurize_backward(caches[i], dx, m.probe, out.grad.probe);
  }
  out.parts.dlogits.clear();
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoints

inline constexpr std::array<char, 4> kCheckpointMagic{'L', 'S', 'L', 'C'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

inline void write_checkpoint(std::ostream& out, const Model& m) {
  out.write(kCheckpointMagic.data(), kCheckpointMagic.size());
  binary::put(out, kCheckpointVersion);
  for (Eigen::Index v : {m.probe.num_layers(), m.probe.dim(), m.probe.hidden(), m.probe.arity(),
                         m.head.num_classes()})
    binary::put(out, static_cast<std::uint32_t>(v));
  detail::for_each_block(m, [&](const double* p, Eigen::Index n) {
    out.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(n * sizeof(double)));
  });
}

inline Model read_checkpoint(std::istream& in) {
  binary::Reader r(in);
  std::array<char, 4> magic{};
  std::uint32_t version = 0;
  if (!r.read(magic.data(), magic.size()) || magic != kCheckpointMagic || !r.get(version) ||
      version != kCheckpointVersion) {
    throw LoadError("checkpoint: bad magic or version");
  }
  std::array<std::uint32_t, 5> dims{};
  for (auto& v : dims)
    if (!r.get(v) || v == 0) throw LoadError("checkpoint: malformed shape header");
  const auto [L, d, h, arity, N] = dims;
  if (arity > 2) throw LoadError("checkpoint: arity must be 1 or 2");
  Model m;
  m.probe.mix_logits.resize(L);
  m.probe.attn.resize(d);
  m.probe.proj_weight.resize(h, static_cast<Eigen::Index>(arity) * d);
  m.probe.proj_bias.resize(h);
  m.head.weight.resize(N, h);
  detail::for_each_block(m, [&](double* p, Eigen::Index n) {
    if (!r.read(reinterpret_cast<char*>(p), static_cast<std::size_t>(n) * sizeof(double))) {
      throw LoadError("checkpoint: truncated payload at byte offset " + std::to_string(r.offset()));
    }
  });
  if (!r.at_eof()) throw LoadError("checkpoint: trailing bytes");
  return m;
}

inline void save_checkpoint(const std::filesystem::path& path, const Model& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_checkpoint(out, m);
}

inline Model load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open checkpoint " + path.string());
  return read_checkpoint(in);
}

}  // namespace lsl
