#pragma once

// Minibatch training of LSL probes, best-of-k consistency selection, the
// regularizer ablation grid, and hidden-size tuning.
//
// Seeding: parameters are initialized from make_rng(seed, 0); a second
// stream make_rng(seed, 1) draws one permutation of the training set per
// epoch. Nothing else consumes randomness, so a run is a pure function of
// (data, config).

#include <algorithm>
#include <cmath>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "data_model.hpp"
#include "lsl_core.hpp"
#include "metrics.hpp"
#include "model.hpp"
#include "text.hpp"

namespace lsl {

enum class OptimizerKind { sgd, adam };

struct TrainConfig {
  int num_latent = kDefaultLatentClasses;
  double alpha = kDefaultAlpha;
  double beta = kDefaultBeta;
  int hidden_size = 64;
  int batch_size = 64;
  int max_epochs = 50;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
  OptimizerKind optimizer = OptimizerKind::adam;
  int patience = 5;
  RegularizerScope regularize = RegularizerScope::all;

  RegularizerWeights weights() const { return {alpha, beta, regularize}; }

  void validate() const {
    if (num_latent < 1) throw std::invalid_argument("num_latent must be >= 1");
    if (hidden_size < 1) throw std::invalid_argument("hidden_size must be >= 1");
    if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
    if (max_epochs < 1) throw std::invalid_argument("max_epochs must be >= 1");
    if (!(learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be > 0");
    if (patience < 1) throw std::invalid_argument("patience must be >= 1");
    weights().validate();
  }
};

inline const char* to_string(OptimizerKind k) { return k == OptimizerKind::sgd ? "sgd" : "adam"; }

/// Applies key/value pairs onto `cfg`. Unknown keys throw in strict mode and
/// are ignored otherwise.
inline void apply_config(TrainConfig& cfg, const std::map<std::string, std::string>& kv, bool strict) {
  for (const auto& [key, value] : kv) {
    try {
      if (key == "num_latent") cfg.num_latent = std::stoi(value);
      else if (key == "alpha") cfg.alpha = std::stod(value);
      else if (key == "beta") cfg.beta = std::stod(value);
      else if (key == "hidden_size") cfg.hidden_size = std::stoi(value);
      else if (key == "batch_size") cfg.batch_size = std::stoi(value);
      else if (key == "max_epochs") cfg.max_epochs = std::stoi(value);
      else if (key == "learning_rate") cfg.learning_rate = std::stod(value);
      else if (key == "seed") cfg.seed = std::stoull(value);
      else if (key == "patience") cfg.patience = std::stoi(value);
      else if (key == "regularize") {
        if (value == "all") cfg.regularize = RegularizerScope::all;
        else if (value == "positives") cfg.regularize = RegularizerScope::positives;
        else throw std::invalid_argument("regularize must be all or positives");
      } else if (key == "optimizer") {
        if (value == "sgd") cfg.optimizer = OptimizerKind::sgd;
        else if (value == "adam" || value == "adaptive-moment") cfg.optimizer = OptimizerKind::adam;
        else throw std::invalid_argument("unknown optimizer");
      } else if (strict) {
        throw std::invalid_argument("unknown config key '" + key + "'");
      }
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument("config " + key + "=" + value + ": " + e.what());
    } catch (const std::out_of_range&) {
      throw std::invalid_argument("config " + key + "=" + value + ": out of range");
    }
  }
  cfg.validate();
}

inline TrainConfig load_config(const std::filesystem::path& path, bool strict) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path.string());
  TrainConfig cfg;
  apply_config(cfg, parse_key_values(in, path.string()), strict);
  return cfg;
}

inline std::string config_text(const TrainConfig& c) {
  std::ostringstream o;
  o << "num_latent = " << c.num_latent << '\n'
    << "alpha = " << format_double(c.alpha, 17) << '\n'
    << "beta = " << format_double(c.beta, 17) << '\n'
    << "hidden_size = " << c.hidden_size << '\n'
    << "batch_size = " << c.batch_size << '\n'
    << "max_epochs = " << c.max_epochs << '\n'
    << "learning_rate = " << format_double(c.learning_rate, 17) << '\n'
    << "seed = " << c.seed << '\n'
    << "optimizer = " << to_string(c.optimizer) << '\n'
    << "patience = " << c.patience << '\n'
    << "regularize = " << (c.regularize == RegularizerScope::all ? "all" : "positives") << '\n';
  return o.str();
}

// ---------------------------------------------------------------------------
// Optimizers over the flat parameter vector

class Optimizer {
 public:
  Optimizer(OptimizerKind kind, double lr, Eigen::Index size)
      : kind_(kind), lr_(lr), m_(Vec::Zero(size)), v_(Vec::Zero(size)) {}

  void step(Vec& params, const Vec& grad) {
    if (kind_ == OptimizerKind::sgd) {
      params -= lr_ * grad;
      return;
    }
    ++t_;
    m_ = kBeta1 * m_ + (1.0 - kBeta1) * grad;
    v_ = kBeta2 * v_ + (1.0 - kBeta2) * grad.cwiseProduct(grad);
    const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(t_));
    params.array() -= lr_ * (m_.array() / c1) / ((v_.array() / c2).sqrt() + kEps);
  }

  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEps = 1e-8;

 private:
  OptimizerKind kind_;
  double lr_;
  Vec m_, v_;
  long t_ = 0;
};

// ---------------------------------------------------------------------------
// Training

class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double dev_loss = 0.0;
};

/// Dev-set predictions of a model. Assignments cover the gold-positive dev
/// examples (label 1); accuracy covers every dev example.
struct DevPredictions {
  std::vector<std::string> ids;
  std::vector<std::string> gold;  // empty string when absent
  std::vector<int> hard;          // 1-based latent class
  std::vector<Vec> distributions;
  std::vector<Vec> logits;
  double accuracy = 0.0;
};

struct RunArtifact {
  TrainConfig config;
  Model model;
  DevPredictions dev;
  std::vector<EpochRecord> curve;
  std::vector<double> step_losses;
  int best_epoch = 0;
};

inline double evaluate_loss(const Model& m, std::span<const ResolvedExample> data, const TrainConfig& cfg) {
  double sum = 0.0;
  const auto bs = static_cast<std::size_t>(cfg.batch_size);
  for (std::size_t at = 0; at < data.size(); at += bs) {
    const auto n = std::min(bs, data.size() - at);
    sum += loss_total(m, data.subspan(at, n), cfg.weights(), false).parts.total * static_cast<double>(n);
  }
  return sum / static_cast<double>(data.size());
}

inline DevPredictions predict_dev(const Model& m, const TaskDataset& dev, const EmbeddingIndex& index) {
  DevPredictions out;
  std::vector<double> probs;
  std::vector<int> labels;
  for (const auto& t : dev.examples) {
    const auto post = forward(featurize(index.at(t.sentence_id), t, m.probe), m.head);
    probs.push_back(post.binary_prob);
    labels.push_back(t.label);
    if (t.label != 1) continue;
    out.ids.push_back(t.id);
    out.gold.push_back(t.gold.value_or(""));
    out.hard.push_back(post.hard_class);
    out.distributions.push_back(post.distribution);
    out.logits.push_back(post.latent_logits);
  }
  if (!probs.empty()) out.accuracy = binary_accuracy(probs, labels);
  return out;
}

/// Trains one probe. Early-stops on dev total loss and returns the best
/// (lowest dev loss) parameters.
inline RunArtifact train(const TaskSplits& data, const EmbeddingIndex& index, const TrainConfig& cfg) {
  cfg.validate();
  if (data.train.empty()) throw std::invalid_argument("train: empty training split");
  if (data.dev.empty()) throw std::invalid_argument("train: empty dev split");
  const auto train_set = resolve(data.train, index);
  const auto dev_set = resolve(data.dev, index);

  const auto& first = *train_set.front().bundle;
  ModelShape shape;
  shape.layers = first.num_layers;
  shape.dim = first.dim;
  shape.hidden = cfg.hidden_size;
  shape.arity = train_set.front().span2 ? 2 : 1;
  shape.num_classes = cfg.num_latent;
  for (const auto& ex : train_set)
    if ((ex.span2 ? 2 : 1) != shape.arity) throw std::invalid_argument("train: mixed span arity in task");

  auto init_rng = make_rng(cfg.seed, 0);
  auto order_rng = make_rng(cfg.seed, 1);
  RunArtifact run;
  run.config = cfg;
  Model model = init_model(shape, init_rng);
  Vec params = pack(model);
  Optimizer opt(cfg.optimizer, cfg.learning_rate, params.size());

  Model best = model;
  double best_dev = std::numeric_limits<double>::infinity();
  int stale = 0;
  const auto bs = static_cast<std::size_t>(cfg.batch_size);
  std::vector<ResolvedExample> batch;
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const auto order = permutation(train_set.size(), order_rng);
    double epoch_sum = 0.0;
    std::size_t steps = 0;
    for (std::size_t at = 0; at < order.size(); at += bs) {
      batch.clear();
      for (std::size_t i = at; i < std::min(at + bs, order.size()); ++i) batch.push_back(train_set[order[i]]);
      auto res = loss_total(model, batch, cfg.weights(), true);
      const Vec grad = pack(res.grad);
      if (!std::isfinite(res.parts.total) || !grad.allFinite()) {
        throw TrainingDiverged("non-finite loss at epoch " + std::to_string(epoch) + " step " +
                               std::to_string(steps) + " (lsl=" + format_double(res.parts.lsl) +
                               " be=" + format_double(res.parts.batch_entropy) +
                               " ie=" + format_double(res.parts.instance_entropy) + ")");
      }
      run.step_losses.push_back(res.parts.total);
      epoch_sum += res.parts.total;
      ++steps;
      opt.step(params, grad);
      unpack(params, model);
    }
    const double dev_loss = evaluate_loss(model, dev_set, cfg);
    if (!std::isfinite(dev_loss)) {
      throw TrainingDiverged("non-finite dev loss at epoch " + std::to_string(epoch));
    }
    run.curve.push_back({epoch, epoch_sum / static_cast<double>(steps), dev_loss});
    if (dev_loss < best_dev) {
      best_dev = dev_loss;
      best = model;
      run.best_epoch = epoch;
      stale = 0;
    } else if (++stale >= cfg.patience) {
      break;
    }
  }
  run.model = std::move(best);
  run.dev = predict_dev(run.model, data.dev, index);
  return run;
}

// ---------------------------------------------------------------------------
// Parallel job helper

/// Runs fn(i) for i in [0, count) on up to `jobs` threads. Results are
/// indexed, so scheduling never changes the outcome. Rethrows the first
/// failure by index.
template <class R>
std::vector<R> run_jobs(std::size_t count, int jobs, const std::function<R(std::size_t)>& fn) {
  std::vector<std::optional<R>> results(count);
  std::vector<std::exception_ptr> errors(count);
  std::mutex mu;
  std::size_t next = 0;
  auto worker = [&] {
    for (;;) {
      std::size_t i;
      {
        std::lock_guard lock(mu);
        if (next >= count) return;
        i = next++;
      }
      try {
        results[i].emplace(fn(i));
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const auto n_threads = static_cast<std::size_t>(std::max(1, jobs));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < std::min(n_threads, count); ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  std::vector<R> out;
  out.reserve(count);
  for (auto& r : results) out.push_back(std::move(*r));
  return out;
}

/// Seed of restart `k` derived from a base seed.
inline std::uint64_t restart_seed(std::uint64_t base, std::size_t k) { return base + k; }

inline std::vector<RunArtifact> train_restarts(const TaskSplits& data, const EmbeddingIndex& index,
                                               const TrainConfig& cfg, std::size_t runs, int jobs = 1) {
  return run_jobs<RunArtifact>(runs, jobs, [&](std::size_t k) {
    TrainConfig c = cfg;
    c.seed = restart_seed(cfg.seed, k);
    return train(data, index, c);
  });
}

// ---------------------------------------------------------------------------
// Consistency-based selection

struct Selection {
  std::size_t index = 0;
  std::vector<double> scores;  // mean pairwise B-cubed F1 per run
};

/// Picks the clustering with the highest mean symmetrized pairwise B-cubed F1
/// against the others; ties go to the lowest index.
inline Selection select_consistent(const std::vector<std::vector<int>>& assignments) {
  if (assignments.size() < 2) throw std::invalid_argument("select_consistent: need at least 2 runs");
  for (const auto& a : assignments)
    if (a.size() != assignments.front().size() || a.empty()) {
      throw std::invalid_argument("select_consistent: assignments not aligned");
    }
  const std::size_t k = assignments.size();
  std::vector<std::vector<double>> pair(k, std::vector<double>(k, 0.0));
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = i + 1; j < k; ++j) pair[i][j] = pair[j][i] = pairwise_b_cubed_f1(assignments[i], assignments[j]);
  Selection sel;
  for (std::size_t i = 0; i < k; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < k; ++j)
      if (j != i) s += pair[i][j];
    sel.scores.push_back(s / static_cast<double>(k - 1));
  }
  for (std::size_t i = 1; i < k; ++i)
    if (sel.scores[i] > sel.scores[sel.index]) sel.index = i;
  return sel;
}

inline Selection select_consistent(const std::vector<RunArtifact>& runs) {
  std::vector<std::vector<int>> a;
  for (const auto& r : runs) a.push_back(r.dev.hard);
  return select_consistent(a);
}

// ---------------------------------------------------------------------------
// Metrics for a run

struct RunMetrics {
  BCubed b3;
  double accuracy = 0.0;
  double diversity = 0.0;
  double uncertainty = 0.0;
  std::size_t scored = 0;  // gold-positive points with a gold label
};

/// Scores dev predictions on gold-positive examples that carry a gold label.
inline RunMetrics score_predictions(const DevPredictions& dev) {
  RunMetrics m;
  m.accuracy = dev.accuracy;
  std::vector<std::string> gold;
  std::vector<int> pred;
  std::vector<Vec> dists;
  for (std::size_t i = 0; i < dev.hard.size(); ++i) {
    if (dev.gold[i].empty()) continue;
    gold.push_back(dev.gold[i]);
    pred.push_back(dev.hard[i]);
    dists.push_back(dev.distributions[i]);
  }
  m.scored = gold.size();
  if (gold.empty()) return m;
  m.b3 = b_cubed(gold, pred);
  m.diversity = diversity(pred);
  m.uncertainty = uncertainty(std::span<const Vec>(dists));
  return m;
}

// ---------------------------------------------------------------------------
// Regularizer ablation

struct AblationRow {
  std::string name;
  double alpha = 0.0;
  double beta = 0.0;
  RunMetrics metrics;
  std::size_t selected_run = 0;
};

/// Runs {none, +be, +ie, +be+ie} with alpha, beta in {0, base}. With
/// runs_per_cell > 1 each cell is chosen by consistency selection.
inline std::vector<AblationRow> ablation_grid(const TaskSplits& data, const EmbeddingIndex& index,
                                              const TrainConfig& base, std::size_t runs_per_cell = 1,
                                              int jobs = 1) {
  struct Cell {
    const char* name;
    double alpha, beta;
  };
  const std::vector<Cell> cells{{"LSL", 0.0, 0.0},
                                {"+be", base.alpha, 0.0},
                                {"+ie", 0.0, base.beta},
                                {"+be+ie", base.alpha, base.beta}};
  const std::size_t per = std::max<std::size_t>(1, runs_per_cell);
  auto runs = run_jobs<RunArtifact>(cells.size() * per, jobs, [&](std::size_t job) {
    TrainConfig c = base;
    c.alpha = cells[job / per].alpha;
    c.beta = cells[job / per].beta;
    c.seed = restart_seed(base.seed, job % per);
    return train(data, index, c);
  });
  std::vector<AblationRow> rows;
  for (std::size_t ci = 0; ci < cells.size(); ++ci) {
    AblationRow row{cells[ci].name, cells[ci].alpha, cells[ci].beta, {}, 0};
    if (per > 1) {
      std::vector<RunArtifact> group(runs.begin() + static_cast<std::ptrdiff_t>(ci * per),
                                     runs.begin() + static_cast<std::ptrdiff_t>((ci + 1) * per));
      row.selected_run = select_consistent(group).index;
    }
    row.metrics = score_predictions(runs[ci * per + row.selected_run].dev);
    rows.push_back(std::move(row));
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Hidden-size tuning

/// Smallest size whose accuracy is at least threshold * max accuracy.
/// `sizes` must be ascending and aligned with `accuracies`.
inline int choose_hidden_size(const std::vector<int>& sizes, const std::vector<double>& accuracies,
                              double threshold = 0.97) {
  if (sizes.empty() || sizes.size() != accuracies.size()) {
    throw std::invalid_argument("choose_hidden_size: need one accuracy per size");
  }
  if (!std::is_sorted(sizes.begin(), sizes.end())) throw std::invalid_argument("choose_hidden_size: sizes must ascend");
  const double best = *std::max_element(accuracies.begin(), accuracies.end());
  for (std::size_t i = 0; i < sizes.size(); ++i)
    if (accuracies[i] >= threshold * best) return sizes[i];
  return sizes.back();
}

struct HiddenSizeResult {
  int chosen = 0;
  std::vector<int> sizes;
  std::vector<double> accuracies;
};

/// Evaluates `accuracy_of(size)` for every candidate and applies
/// choose_hidden_size.
inline HiddenSizeResult tune_hidden_size(const std::vector<int>& sizes, const std::function<double(int)>& accuracy_of,
                                         double threshold = 0.97, int jobs = 1) {
  HiddenSizeResult r;
  r.sizes = sizes;
  r.accuracies = run_jobs<double>(sizes.size(), jobs, [&](std::size_t i) { return accuracy_of(sizes[i]); });
  r.chosen = choose_hidden_size(sizes, r.accuracies, threshold);
  return r;
}

/// Trains a plain binary probe (N = 1, alpha = beta = 0) for each size and
/// picks by dev accuracy.
inline HiddenSizeResult tune_hidden_size(const TaskSplits& data, const EmbeddingIndex& index,
                                         const std::vector<int>& sizes, const TrainConfig& base,
                                         double threshold = 0.97, int jobs = 1) {
  return tune_hidden_size(
      sizes,
      [&](int size) {
        TrainConfig c = base;
        c.num_latent = 1;
        c.alpha = 0.0;
        c.beta = 0.0;
        c.hidden_size = size;
        return train(data, index, c).dev.accuracy;
      },
      threshold, jobs);
}

// ---------------------------------------------------------------------------
// Run directories
//
//   config.txt        flat key = value snapshot of TrainConfig
//   checkpoint.bin    model checkpoint
//   assignments.tsv   id <TAB> hard class <TAB> comma-separated distribution
//   latent_logits.tsv id <TAB> tab-separated latent logits
//   loss_curve.csv    epoch,train_loss,dev_loss
//   summary.txt       dev accuracy, best epoch, epochs run

inline void write_run_dir(const std::filesystem::path& dir, const RunArtifact& run) {
  std::filesystem::create_directories(dir);
  auto open = [&](const char* name) {
    std::ofstream out(dir / name, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + (dir / name).string());
    return out;
  };
  open("config.txt") << config_text(run.config);
  save_checkpoint(dir / "checkpoint.bin", run.model);
  {
    auto out = open("assignments.tsv");
    for (std::size_t i = 0; i < run.dev.ids.size(); ++i) {
      out << run.dev.ids[i] << '\t' << run.dev.hard[i] << '\t';
      const Vec& p = run.dev.distributions[i];
      for (Eigen::Index k = 0; k < p.size(); ++k) out << (k ? "," : "") << format_double(p[k]);
      out << '\n';
    }
  }
  {
    auto out = open("latent_logits.tsv");
    for (std::size_t i = 0; i < run.dev.ids.size(); ++i) {
      out << run.dev.ids[i];
      for (Eigen::Index k = 0; k < run.dev.logits[i].size(); ++k) out << '\t' << format_double(run.dev.logits[i][k]);
      out << '\n';
    }
  }
  {
    auto out = open("loss_curve.csv");
    out << "epoch,train_loss,dev_loss\n";
    for (const auto& e : run.curve)
      out << e.epoch << ',' << format_double(e.train_loss, 17) << ',' << format_double(e.dev_loss, 17) << '\n';
  }
  open("summary.txt") << "dev_accuracy = " << format_double(run.dev.accuracy, 17) << '\n'
                      << "best_epoch = " << run.best_epoch << '\n'
                      << "epochs_run = " << run.curve.size() << '\n';
}

/// Dev predictions read back from a run directory (gold labels unknown).
inline DevPredictions read_run_predictions(const std::filesystem::path& dir) {
  DevPredictions dev;
  std::ifstream in(dir / "assignments.tsv");
  if (!in) throw LoadError("cannot open " + (dir / "assignments.tsv").string());
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = split(line, '\t');
    if (f.size() != 3) throw LoadError("assignments.tsv:" + std::to_string(lineno) + ": expected 3 fields");
    dev.ids.push_back(f[0]);
    dev.gold.emplace_back();
    dev.hard.push_back(std::stoi(f[1]));
    const auto parts = split(f[2], ',');
    Vec p(static_cast<Eigen::Index>(parts.size()));
    for (std::size_t k = 0; k < parts.size(); ++k) p[static_cast<Eigen::Index>(k)] = std::stod(parts[k]);
    dev.distributions.push_back(std::move(p));
  }
  std::ifstream lin(dir / "latent_logits.tsv");
  if (lin) {
    while (std::getline(lin, line)) {
      if (line.empty()) continue;
      const auto f = split(line, '\t');
      Vec z(static_cast<Eigen::Index>(f.size() - 1));
      for (std::size_t k = 1; k < f.size(); ++k) z[static_cast<Eigen::Index>(k - 1)] = std::stod(f[k]);
      dev.logits.push_back(std::move(z));
    }
    if (dev.logits.size() != dev.ids.size()) throw LoadError("latent_logits.tsv does not match assignments.tsv");
  }
  std::ifstream sin(dir / "summary.txt");
  if (sin) {
    const auto kv = parse_key_values(sin, "summary.txt");
    if (auto it = kv.find("dev_accuracy"); it != kv.end()) dev.accuracy = std::stod(it->second);
  }
  return dev;
}

}  // namespace lsl
