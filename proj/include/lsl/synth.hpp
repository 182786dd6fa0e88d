#pragma once

// Synthetic benchmark with planted latent subclasses.
//
// Positives come from K isotropic Gaussians (std = noise) centred at
// (separation * noise / sqrt(2)) * e_k, so every pair of centres is
// separation * noise apart. Negatives come from a broader Gaussian placed on
// the far side of the origin, equally far from every positive centre, so each
// subclass is cut off from the background by its own half-space.
// Each example is a single-token span; tokens are packed into sentences.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "data_model.hpp"
#include "numeric.hpp"
#include "random.hpp"

namespace lsl {

struct SynthOptions {
  int num_subclasses = 6;
  int num_positives = 5000;
  int dim = 16;
  double separation = 6.0;
  double noise = 1.0;
  double negative_fraction = 0.5;  // share of all examples that are negative
  double dev_fraction = 0.2;
  int layers = 1;
  int signal_layer = 1;  // used when layers > 1; the rest carry pure noise
  int tokens_per_sentence = 10;
  double background_offset = 10.0;  // negatives centred at -offset*noise along the mean positive direction
  double background_scale = 4.0;    // negative std relative to noise
  std::uint64_t seed = 0;

  void validate() const {
    if (num_subclasses < 1) throw std::invalid_argument("synth: need at least one subclass");
    if (!(separation > 0.0)) throw std::invalid_argument("synth: infeasible geometry, separation must be > 0");
    if (num_subclasses > dim) throw std::invalid_argument("synth: infeasible geometry, more subclasses than dimensions");
    if (!(noise > 0.0)) throw std::invalid_argument("synth: noise must be > 0");
    if (num_positives < 1) throw std::invalid_argument("synth: need at least one positive");
    if (!(negative_fraction >= 0.0 && negative_fraction < 1.0)) throw std::invalid_argument("synth: negative_fraction in [0, 1)");
    if (!(dev_fraction > 0.0 && dev_fraction < 1.0)) throw std::invalid_argument("synth: dev_fraction in (0, 1)");
    if (layers < 1) throw std::invalid_argument("synth: layers must be >= 1");
    if (layers > 1 && (signal_layer < 0 || signal_layer >= layers)) throw std::invalid_argument("synth: bad signal_layer");
    if (tokens_per_sentence < 1) throw std::invalid_argument("synth: tokens_per_sentence must be >= 1");
  }

  int num_negatives() const {
    return static_cast<int>(std::lround(num_positives * negative_fraction / (1.0 - negative_fraction)));
  }
  int effective_signal_layer() const { return layers > 1 ? signal_layer : 0; }
};

inline std::string planted_label(int k) { return "c" + std::to_string(k); }

struct SynthBenchmark {
  SynthOptions options;
  std::vector<EmbeddingBundle> bundles;
  std::vector<SpanTarget> examples;
  std::vector<int> planted;  // per example, -1 for negatives
  std::vector<Vec> centers;
  double oracle_accuracy = 0.0;  // nearest-centroid accuracy on positives
};

inline SynthBenchmark generate_synth(const SynthOptions& opt) {
  opt.validate();
  SynthBenchmark out;
  out.options = opt;
  const double radius = opt.separation * opt.noise / std::sqrt(2.0);
  for (int k = 0; k < opt.num_subclasses; ++k) {
    Vec c = Vec::Zero(opt.dim);
    c[k] = radius;
    out.centers.push_back(std::move(c));
  }

  Vec background = Vec::Zero(opt.dim);
  for (int k = 0; k < opt.num_subclasses; ++k) background[k] = -opt.background_offset * opt.noise / std::sqrt(static_cast<double>(opt.num_subclasses));

  auto rng = make_rng(opt.seed, 0);
  const int n_pos = opt.num_positives;
  const int n_total = n_pos + opt.num_negatives();
  // example class: k >= 0 positive subclass, -1 negative
  std::vector<int> cls(static_cast<std::size_t>(n_total));
  for (int i = 0; i < n_total; ++i) cls[static_cast<std::size_t>(i)] = i < n_pos ? i % opt.num_subclasses : -1;
  shuffle(cls, rng);

  const auto n_dev = static_cast<int>(std::lround(n_total * opt.dev_fraction));
  const int T = opt.tokens_per_sentence;
  const int signal = opt.effective_signal_layer();
  std::size_t correct = 0, scored = 0;

  auto emit_split = [&](int begin, int end, Split split) {
    for (int s0 = begin, sent = 0; s0 < end; s0 += T, ++sent) {
      const int n_tok = std::min(T, end - s0);
      EmbeddingBundle b;
      b.sentence_id = std::string(to_string(split)) + "-" + std::to_string(sent);
      b.num_layers = static_cast<std::uint32_t>(opt.layers);
      b.num_tokens = static_cast<std::uint32_t>(n_tok);
      b.dim = static_cast<std::uint32_t>(opt.dim);
      b.values.assign(b.expected_size(), 0.0f);
      for (int t = 0; t < n_tok; ++t) {
        const int k = cls[static_cast<std::size_t>(s0 + t)];
        for (int l = 0; l < opt.layers; ++l) {
          Vec v(opt.dim);
          for (int j = 0; j < opt.dim; ++j) v[j] = opt.noise * normal(rng);
          if (l == signal && k >= 0) v += out.centers[static_cast<std::size_t>(k)];
          if (l == signal && k < 0) v = opt.background_scale * v + background;
          float* dst = b.values.data() + (static_cast<std::size_t>(l) * n_tok + t) * opt.dim;
          for (int j = 0; j < opt.dim; ++j) dst[j] = static_cast<float>(v[j]);
          if (l == signal && k >= 0) {
            int best = 0;
            double best_d = std::numeric_limits<double>::infinity();
            for (int c = 0; c < opt.num_subclasses; ++c) {
              double dist = 0.0;
              for (int j = 0; j < opt.dim; ++j) {
                const double diff = static_cast<double>(dst[j]) - out.centers[static_cast<std::size_t>(c)][j];
                dist += diff * diff;
              }
              if (dist < best_d) best_d = dist, best = c;
            }
            correct += best == k;
            ++scored;
          }
        }
        SpanTarget ex;
        ex.id = b.sentence_id + ":" + std::to_string(t);
        ex.sentence_id = b.sentence_id;
        ex.span1 = Span{static_cast<std::uint32_t>(t), static_cast<std::uint32_t>(t + 1)};
        ex.label = k >= 0 ? 1 : 0;
        if (k >= 0) ex.gold = planted_label(k);
        ex.split = split;
        out.examples.push_back(std::move(ex));
        out.planted.push_back(k);
      }
      out.bundles.push_back(std::move(b));
    }
  };
  emit_split(n_dev, n_total, Split::train);
  emit_split(0, n_dev, Split::dev);
  out.oracle_accuracy = scored ? static_cast<double>(correct) / static_cast<double>(scored) : 1.0;
  return out;
}

inline nlohmann::json synth_manifest(const SynthBenchmark& b) {
  const auto& o = b.options;
  nlohmann::json j;
  j["num_subclasses"] = o.num_subclasses;
  j["num_positives"] = o.num_positives;
  j["num_negatives"] = o.num_negatives();
  j["dim"] = o.dim;
  j["separation"] = o.separation;
  j["noise"] = o.noise;
  j["negative_fraction"] = o.negative_fraction;
  j["dev_fraction"] = o.dev_fraction;
  j["layers"] = o.layers;
  j["signal_layer"] = o.effective_signal_layer();
  j["tokens_per_sentence"] = o.tokens_per_sentence;
  j["background_offset"] = o.background_offset;
  j["background_scale"] = o.background_scale;
  j["seed"] = o.seed;
  j["oracle_accuracy"] = b.oracle_accuracy;
  auto planted = nlohmann::json::array();
  for (std::size_t i = 0; i < b.examples.size(); ++i)
    if (b.planted[i] >= 0) planted.push_back({b.examples[i].id, b.planted[i]});
  j["planted"] = std::move(planted);
  return j;
}

/// Writes embeddings.bin, task.jsonl and manifest.json into `dir`.
inline void write_synth(const std::filesystem::path& dir, const SynthBenchmark& b) {
  std::filesystem::create_directories(dir);
  save_embeddings(dir / "embeddings.bin", b.bundles);
  {
    std::ofstream out(dir / "task.jsonl", std::ios::binary);
    write_task(out, b.examples);
  }
  std::ofstream out(dir / "manifest.json", std::ios::binary);
  out << synth_manifest(b).dump(2) << '\n';
}

}  // namespace lsl
