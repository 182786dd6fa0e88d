// lslprobe: command-line front end for latent subclass probes.
//
// Every command prints exactly one JSON line on stdout summarizing what it
// did, and exits 0 only when all of its outputs were written and re-read.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include <lsl/lsl.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Common {
  std::optional<std::uint64_t> seed;
  bool strict = false;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--seed", c.seed, "Random seed (overrides any config file value)");
  cmd->add_flag("--strict", c.strict, "Reject unknown fields in every input file");
}

// TrainConfig keys settable from the command line; values are kept as text
// and applied after the config file so flags win.
struct ConfigFlags {
  std::string config_path;
  std::map<std::string, std::string> values;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config_path, "Flat key = value training config")->check(CLI::ExistingFile);
    for (const char* key : {"num_latent", "alpha", "beta", "hidden_size", "batch_size", "max_epochs",
                            "learning_rate", "optimizer", "patience", "regularize"}) {
      std::string flag = std::string("--") + key;
      std::replace(flag.begin(), flag.end(), '_', '-');
      cmd->add_option_function<std::string>(
          flag, [this, key](const std::string& v) { values[key] = v; }, std::string("Config override: ") + key);
    }
  }

  lsl::TrainConfig resolve(const Common& common) const {
    lsl::TrainConfig cfg;
    if (!config_path.empty()) cfg = lsl::load_config(config_path, common.strict);
    auto kv = values;
    if (common.seed) kv["seed"] = std::to_string(*common.seed);
    lsl::apply_config(cfg, kv, true);
    return cfg;
  }
};

struct TaskInputs {
  std::string task_path;
  std::string embeddings_path;

  void attach(CLI::App* cmd) {
    cmd->add_option("--task", task_path, "Task record file (JSON lines)")->required()->check(CLI::ExistingFile);
    cmd->add_option("--embeddings", embeddings_path, "Binary embedding file")->required()->check(CLI::ExistingFile);
  }
};

struct LoadedTask {
  lsl::EmbeddingIndex index;
  lsl::TaskSplits splits;
};

LoadedTask load_inputs(const TaskInputs& in, bool strict) {
  LoadedTask t;
  t.index = lsl::load_embeddings(in.embeddings_path);
  t.splits = lsl::load_task(in.task_path, &t.index, strict);
  return t;
}

void emit(const json& summary) { std::cout << summary.dump() << '\n' << std::flush; }

std::ofstream open_out(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  return out;
}

void require_file(const fs::path& p) {
  if (!fs::is_regular_file(p)) throw std::runtime_error("expected output missing: " + p.string());
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  for (auto& part : lsl::split(s, ','))
    if (auto t = lsl::trim(part); !t.empty()) out.push_back(t);
  return out;
}

json config_json(const lsl::TrainConfig& c) {
  return {{"num_latent", c.num_latent},
          {"alpha", c.alpha},
          {"beta", c.beta},
          {"hidden_size", c.hidden_size},
          {"batch_size", c.batch_size},
          {"max_epochs", c.max_epochs},
          {"learning_rate", c.learning_rate},
          {"seed", c.seed},
          {"optimizer", lsl::to_string(c.optimizer)},
          {"patience", c.patience}};
}

// ---------------------------------------------------------------------------
// make-task

struct MakeTaskArgs {
  Common common;
  std::string corpus, out, kind = "spans", strategy = "from-candidates", mode = "random-unattached",
                           scope = "per-predicate";
  double ratio = 1.0;
};

json run_make_task(const MakeTaskArgs& a) {
  const auto corpus = lsl::load_corpus(a.corpus, a.common.strict);
  const std::uint64_t seed = a.common.seed.value_or(0);
  std::vector<lsl::SpanTarget> examples;
  std::size_t positives = 0, negatives = 0, short_sentences = 0;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto& s = corpus[i];
    const auto sentence_seed = lsl::mix_seed(seed, i);
    lsl::NegativeSample neg;
    if (a.kind == "spans") {
      const auto strategy =
          a.strategy == "from-candidates" ? lsl::SpanStrategy::from_candidates : lsl::SpanStrategy::random_spans;
      neg = lsl::sample_negative_spans(s, strategy, a.ratio, sentence_seed);
    } else {
      const auto mode =
          a.mode == "closest-unattached" ? lsl::PairMode::closest_unattached : lsl::PairMode::random_unattached;
      const auto scope = a.scope == "per-sentence" ? lsl::PairScope::per_sentence : lsl::PairScope::per_predicate;
      neg = lsl::sample_negative_pairs(s, mode, a.ratio, sentence_seed, scope);
    }
    short_sentences += neg.short_of_target;
    positives += s.positive_units.size();
    negatives += neg.negatives.size();
    for (auto& ex : lsl::build_task_examples(s, neg)) examples.push_back(std::move(ex));
  }
  {
    auto out = open_out(a.out);
    lsl::write_task(out, examples);
  }
  const auto check = lsl::load_task(a.out, nullptr, true);
  const auto count = check.train.size() + check.dev.size() + check.test.size();
  if (count != examples.size()) throw std::runtime_error("task file did not round-trip");
  return {{"command", "make-task"}, {"ok", true},       {"out", a.out},
          {"positives", positives}, {"negatives", negatives}, {"sentences_short_of_ratio", short_sentences},
          {"seed", seed}};
}

// ---------------------------------------------------------------------------
// tune-hidden

struct TuneArgs {
  Common common;
  TaskInputs inputs;
  ConfigFlags config;
  std::vector<int> sizes{16, 32, 64, 128, 256, 512};
  double threshold = 0.97;
  int jobs = 1;
  std::string out;
};

json run_tune(const TuneArgs& a) {
  auto sizes = a.sizes;
  std::sort(sizes.begin(), sizes.end());
  sizes.erase(std::unique(sizes.begin(), sizes.end()), sizes.end());
  const auto cfg = a.config.resolve(a.common);
  const auto t = load_inputs(a.inputs, a.common.strict);
  const auto r = lsl::tune_hidden_size(t.splits, t.index, sizes, cfg, a.threshold, a.jobs);
  json summary{{"command", "tune-hidden"}, {"ok", true},         {"chosen", r.chosen},
               {"sizes", r.sizes},          {"accuracies", r.accuracies}, {"threshold", a.threshold},
               {"seed", cfg.seed}};
  if (!a.out.empty()) {
    {
      auto out = open_out(a.out);
      out << summary.dump(2) << '\n';
    }
    require_file(a.out);
    summary["out"] = a.out;
  }
  return summary;
}

// ---------------------------------------------------------------------------
// train

struct TrainArgs {
  Common common;
  TaskInputs inputs;
  ConfigFlags config;
  std::string out;
  int runs = 5;
  int jobs = 1;
};

fs::path run_dir(const fs::path& base, std::size_t k) { return base / ("run" + std::to_string(k)); }

json run_train(const TrainArgs& a) {
  const auto cfg = a.config.resolve(a.common);
  const auto t = load_inputs(a.inputs, a.common.strict);
  const auto runs = lsl::train_restarts(t.splits, t.index, cfg, static_cast<std::size_t>(a.runs), a.jobs);
  json list = json::array();
  for (std::size_t k = 0; k < runs.size(); ++k) {
    const auto dir = run_dir(a.out, k);
    lsl::write_run_dir(dir, runs[k]);
    const auto back = lsl::read_run_predictions(dir);
    if (back.hard != runs[k].dev.hard) throw std::runtime_error("run directory did not round-trip: " + dir.string());
    lsl::load_checkpoint(dir / "checkpoint.bin");
    list.push_back({{"dir", dir.string()},
                    {"seed", runs[k].config.seed},
                    {"dev_accuracy", runs[k].dev.accuracy},
                    {"best_epoch", runs[k].best_epoch},
                    {"epochs_run", runs[k].curve.size()}});
  }
  return {{"command", "train"}, {"ok", true}, {"out", a.out}, {"config", config_json(cfg)}, {"runs", list}};
}

// ---------------------------------------------------------------------------
// select

struct SelectArgs {
  Common common;
  std::vector<std::string> runs;
};

json run_select(const SelectArgs& a) {
  std::vector<lsl::DevPredictions> preds;
  for (const auto& r : a.runs) preds.push_back(lsl::read_run_predictions(r));
  for (std::size_t k = 1; k < preds.size(); ++k)
    if (preds[k].ids != preds[0].ids) throw std::runtime_error("runs are not aligned: " + a.runs[k]);
  std::vector<std::vector<int>> assignments;
  for (const auto& p : preds) assignments.push_back(p.hard);
  const auto sel = lsl::select_consistent(assignments);
  for (std::size_t k = 0; k < a.runs.size(); ++k) {
    const auto marker = fs::path(a.runs[k]) / "SELECTED";
    if (k != sel.index) {
      fs::remove(marker);
      continue;
    }
    auto out = open_out(marker);
    out << "mean_pairwise_b3_f1 = " << lsl::format_double(sel.scores[k], 17) << '\n';
  }
  require_file(fs::path(a.runs[sel.index]) / "SELECTED");
  return {{"command", "select"},       {"ok", true}, {"selected", a.runs[sel.index]},
          {"index", sel.index},        {"scores", sel.scores}};
}

// ---------------------------------------------------------------------------
// report

struct ReportArgs {
  Common common;
  std::vector<std::string> runs;
  std::string task, out, encoder = "encoder", task_name, labels;
  bool npmi = false, labelwise = false, projector = false, summary = false;
};

json run_report(const ReportArgs& a) {
  const auto task = lsl::load_task(a.task, nullptr, a.common.strict);
  std::map<std::string, std::string> gold_of;
  for (const auto* ds : {&task.train, &task.dev, &task.test})
    for (const auto& ex : ds->examples)
      if (ex.label == 1 && ex.gold) gold_of[ex.id] = *ex.gold;

  auto with_gold = [&](const std::string& dir) {
    auto p = lsl::read_run_predictions(dir);
    for (std::size_t i = 0; i < p.ids.size(); ++i) {
      auto it = gold_of.find(p.ids[i]);
      if (it == gold_of.end()) throw std::runtime_error(dir + ": example '" + p.ids[i] + "' has no gold label in task");
      p.gold[i] = it->second;
    }
    return p;
  };
  const auto main = with_gold(a.runs.front());
  const auto metrics = lsl::score_predictions(main);
  const fs::path out = a.out;
  std::vector<std::string> written;
  auto write = [&](const std::string& name, auto&& fn) {
    {
      auto f = open_out(out / name);
      fn(f);
    }
    require_file(out / name);
    written.push_back(name);
  };
  write("metrics.tsv", [&](std::ostream& f) { lsl::write_metric_report(f, metrics); });
  write("metrics.json", [&](std::ostream& f) { f << lsl::metric_record(metrics).dump(2) << '\n'; });
  if (a.labelwise) {
    write("labelwise.tsv", [&](std::ostream& f) { lsl::write_labelwise_table(f, lsl::labelwise_table(main.gold, main.hard)); });
  }
  if (a.npmi) {
    std::vector<lsl::Contingency> tables;
    for (const auto& r : a.runs) {
      const auto p = r == a.runs.front() ? main : with_gold(r);
      tables.push_back(lsl::Contingency::from(p.gold, p.hard));
    }
    std::optional<std::vector<std::string>> subset;
    if (!a.labels.empty()) subset = split_list(a.labels);
    const auto rep = lsl::npmi_report(tables, subset);
    write("npmi.csv", [&](std::ostream& f) { lsl::write_npmi_csv(f, rep.matrix); });
    write("npmi_long.csv", [&](std::ostream& f) { lsl::write_npmi_long(f, rep.records); });
  }
  if (a.projector) {
    if (main.logits.size() != main.ids.size()) throw std::runtime_error("run has no latent_logits.tsv");
    {
      auto v = open_out(out / "projector_vectors.tsv");
      auto m = open_out(out / "projector_metadata.tsv");
      lsl::export_projector(v, m, main.logits, main.gold, main.hard);
    }
    std::ifstream v(out / "projector_vectors.tsv"), m(out / "projector_metadata.tsv");
    lsl::parse_projector(v, m);
    written.push_back("projector_vectors.tsv");
    written.push_back("projector_metadata.tsv");
  }
  if (a.summary) {
    const std::string name = a.task_name.empty() ? fs::path(a.task).stem().string() : a.task_name;
    write("summary.tsv", [&](std::ostream& f) { lsl::write_summary_table(f, {{a.encoder, name, metrics}}); });
  }
  return {{"command", "report"}, {"ok", true}, {"out", a.out}, {"metrics", lsl::metric_record(metrics)},
          {"files", written}};
}

// ---------------------------------------------------------------------------
// ablate

struct AblateArgs {
  Common common;
  TaskInputs inputs;
  ConfigFlags config;
  std::string out;
  int runs_per_cell = 1;
  int jobs = 1;
};

json run_ablate(const AblateArgs& a) {
  const auto cfg = a.config.resolve(a.common);
  const auto t = load_inputs(a.inputs, a.common.strict);
  const auto rows = lsl::ablation_grid(t.splits, t.index, cfg, static_cast<std::size_t>(a.runs_per_cell), a.jobs);
  {
    auto out = open_out(a.out);
    lsl::write_ablation_table(out, rows);
  }
  require_file(a.out);
  json cells = json::array();
  for (const auto& r : rows) {
    auto m = lsl::metric_record(r.metrics);
    m["model"] = r.name;
    m["alpha"] = r.alpha;
    m["beta"] = r.beta;
    cells.push_back(std::move(m));
  }
  return {{"command", "ablate"}, {"ok", true}, {"out", a.out}, {"config", config_json(cfg)}, {"cells", cells}};
}

// ---------------------------------------------------------------------------
// synth

struct SynthArgs {
  Common common;
  lsl::SynthOptions options;
  std::string out;
};

json run_synth(SynthArgs a) {
  if (a.common.seed) a.options.seed = *a.common.seed;
  const auto bench = lsl::generate_synth(a.options);
  lsl::write_synth(a.out, bench);
  const auto idx = lsl::load_embeddings(fs::path(a.out) / "embeddings.bin");
  const auto task = lsl::load_task(fs::path(a.out) / "task.jsonl", &idx, true);
  require_file(fs::path(a.out) / "manifest.json");
  return {{"command", "synth"},
          {"ok", true},
          {"out", a.out},
          {"examples", task.train.size() + task.dev.size() + task.test.size()},
          {"oracle_accuracy", bench.oracle_accuracy},
          {"seed", a.options.seed}};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Latent subclass probes over precomputed embeddings"};
  app.require_subcommand(1);

  MakeTaskArgs mk;
  auto* make_task = app.add_subcommand("make-task", "Build a binary probing task from an annotated corpus");
  add_common(make_task, mk.common);
  make_task->add_option("--corpus", mk.corpus, "Annotated corpus (JSON lines)")->required()->check(CLI::ExistingFile);
  make_task->add_option("--out", mk.out, "Output task file")->required();
  make_task->add_option("--kind", mk.kind, "Unit kind")->check(CLI::IsMember({"spans", "pairs"}));
  make_task->add_option("--strategy", mk.strategy, "Span negatives")
      ->check(CLI::IsMember({"from-candidates", "random-spans"}));
  make_task->add_option("--mode", mk.mode, "Pair negatives")
      ->check(CLI::IsMember({"random-unattached", "closest-unattached"}));
  make_task->add_option("--scope", mk.scope, "Pair negative budget")
      ->check(CLI::IsMember({"per-predicate", "per-sentence"}));
  make_task->add_option("--ratio", mk.ratio, "Negatives per positive")->check(CLI::NonNegativeNumber);

  TuneArgs tune;
  auto* tune_cmd = app.add_subcommand("tune-hidden", "Pick the smallest adequate hidden size");
  add_common(tune_cmd, tune.common);
  tune.inputs.attach(tune_cmd);
  tune.config.attach(tune_cmd);
  tune_cmd->add_option("--sizes", tune.sizes, "Candidate hidden sizes")->delimiter(',')->check(CLI::PositiveNumber);
  tune_cmd->add_option("--threshold", tune.threshold, "Fraction of the best accuracy to reach")
      ->check(CLI::Range(0.0, 1.0));
  tune_cmd->add_option("--jobs", tune.jobs, "Worker threads")->check(CLI::PositiveNumber);
  tune_cmd->add_option("--out", tune.out, "Record the result here (JSON)");

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "Train probes with independent restarts");
  add_common(train_cmd, tr.common);
  tr.inputs.attach(train_cmd);
  tr.config.attach(train_cmd);
  train_cmd->add_option("--out", tr.out, "Directory receiving run0, run1, ...")->required();
  train_cmd->add_option("--runs", tr.runs, "Number of restarts")->check(CLI::PositiveNumber);
  train_cmd->add_option("--jobs", tr.jobs, "Worker threads")->check(CLI::PositiveNumber);

  SelectArgs sel;
  auto* select_cmd = app.add_subcommand("select", "Mark the most consistent run with a SELECTED file");
  add_common(select_cmd, sel.common);
  select_cmd->add_option("runs", sel.runs, "Run directories")->required()->expected(2, -1)->check(CLI::ExistingDirectory);

  ReportArgs rep;
  auto* report_cmd = app.add_subcommand("report", "Write metric tables and analysis files for a run");
  add_common(report_cmd, rep.common);
  report_cmd->add_option("--run", rep.runs, "Run directory; repeat to sum nPMI counts over runs")
      ->required()
      ->check(CLI::ExistingDirectory);
  report_cmd->add_option("--task", rep.task, "Task file with gold labels")->required()->check(CLI::ExistingFile);
  report_cmd->add_option("--out", rep.out, "Output directory")->required();
  report_cmd->add_flag("--npmi", rep.npmi, "Gold-label nPMI matrix");
  report_cmd->add_flag("--labelwise", rep.labelwise, "Per-label B-cubed table");
  report_cmd->add_flag("--projector", rep.projector, "Embedding projector export");
  report_cmd->add_flag("--summary", rep.summary, "Encoder x task summary table");
  report_cmd->add_option("--labels", rep.labels, "Comma-separated label subset for nPMI");
  report_cmd->add_option("--encoder", rep.encoder, "Encoder name for the summary table");
  report_cmd->add_option("--task-name", rep.task_name, "Task name for the summary table");

  AblateArgs abl;
  auto* ablate_cmd = app.add_subcommand("ablate", "Regularizer ablation grid");
  add_common(ablate_cmd, abl.common);
  abl.inputs.attach(ablate_cmd);
  abl.config.attach(ablate_cmd);
  ablate_cmd->add_option("--out", abl.out, "Output table (TSV)")->required();
  ablate_cmd->add_option("--runs-per-cell", abl.runs_per_cell, "Restarts per cell, chosen by consistency")
      ->check(CLI::PositiveNumber);
  ablate_cmd->add_option("--jobs", abl.jobs, "Worker threads")->check(CLI::PositiveNumber);

  SynthArgs syn;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic benchmark with planted subclasses");
  add_common(synth_cmd, syn.common);
  auto& o = syn.options;
  synth_cmd->add_option("--out", syn.out, "Output directory")->required();
  synth_cmd->add_option("--subclasses", o.num_subclasses, "Planted subclasses K");
  synth_cmd->add_option("--positives", o.num_positives, "Positive examples");
  synth_cmd->add_option("--dim", o.dim, "Feature dimension");
  synth_cmd->add_option("--separation", o.separation, "Centre separation in noise units");
  synth_cmd->add_option("--noise", o.noise, "Cluster standard deviation");
  synth_cmd->add_option("--negative-fraction", o.negative_fraction, "Share of negatives");
  synth_cmd->add_option("--dev-fraction", o.dev_fraction, "Share held out for dev");
  synth_cmd->add_option("--layers", o.layers, "Encoder layers");
  synth_cmd->add_option("--signal-layer", o.signal_layer, "0-based layer carrying the signal");
  synth_cmd->add_option("--tokens-per-sentence", o.tokens_per_sentence, "Tokens packed per sentence");
  synth_cmd->add_option("--background-offset", o.background_offset, "Distance of the negative background");
  synth_cmd->add_option("--background-scale", o.background_scale, "Spread of the negative background");

  std::string command = "lslprobe";
  try {
    app.parse(argc, argv);
    command = app.get_subcommands().front()->get_name();
    json summary;
    if (*make_task) summary = run_make_task(mk);
    else if (*tune_cmd) summary = run_tune(tune);
    else if (*train_cmd) summary = run_train(tr);
    else if (*select_cmd) summary = run_select(sel);
    else if (*report_cmd) summary = run_report(rep);
    else if (*ablate_cmd) summary = run_ablate(abl);
    else summary = run_synth(syn);
    emit(summary);
    return 0;
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    emit({{"command", command}, {"ok", false}, {"error", e.what()}});
    return 1;
  }
}
