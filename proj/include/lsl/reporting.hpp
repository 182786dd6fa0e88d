#pragma once

// Report artifacts: label-wise B-cubed tables, summary and ablation tables,
// nPMI matrices (dense CSV and long format), and embedding-projector exports.
// All text output is UTF-8 with LF line endings.

#include <algorithm>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "metrics.hpp"
#include "text.hpp"
#include "trainer.hpp"

namespace lsl {

struct LabelRow {
  std::string label;
  std::size_t count = 0;
  BCubed b3;
};

/// Per-gold-label B-cubed, sorted by decreasing F1 (ties by label).
inline std::vector<LabelRow> labelwise_table(const std::vector<std::string>& gold, const std::vector<int>& pred) {
  std::map<std::string, std::size_t> counts;
  for (const auto& g : gold) ++counts[g];
  std::vector<LabelRow> rows;
  for (const auto& [label, n] : counts) {
    if (n == 0) continue;
    rows.push_back({label, n, b_cubed(gold, pred, std::optional<std::string>(label))});
  }
  std::stable_sort(rows.begin(), rows.end(), [](const LabelRow& a, const LabelRow& b) { return a.b3.f1 > b.b3.f1; });
  return rows;
}

inline void write_labelwise_table(std::ostream& out, const std::vector<LabelRow>& rows) {
  out << "label\tcount\tprecision\trecall\tf1\n";
  for (const auto& r : rows)
    out << r.label << '\t' << r.count << '\t' << format_double(r.b3.precision) << '\t'
        << format_double(r.b3.recall) << '\t' << format_double(r.b3.f1) << '\n';
}

// ---------------------------------------------------------------------------

struct SummaryEntry {
  std::string encoder;
  std::string task;
  RunMetrics metrics;
};

/// Tasks as rows, one P/R/F1 | Div | Unc column group per encoder; encoders
/// and tasks keep first-seen order. Missing cells print "-".
inline void write_summary_table(std::ostream& out, const std::vector<SummaryEntry>& entries) {
  std::vector<std::string> encoders, tasks;
  auto remember = [](std::vector<std::string>& v, const std::string& s) {
    if (std::find(v.begin(), v.end(), s) == v.end()) v.push_back(s);
  };
  for (const auto& e : entries) {
    remember(encoders, e.encoder);
    remember(tasks, e.task);
  }
  out << "task";
  for (const auto& enc : encoders) out << '\t' << enc << " P/R/F1\t" << enc << " Div\t" << enc << " Unc";
  out << '\n';
  auto fmt2 = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return std::string(buf);
  };
  for (const auto& task : tasks) {
    out << task;
    for (const auto& enc : encoders) {
      auto it = std::find_if(entries.begin(), entries.end(),
                             [&](const SummaryEntry& e) { return e.encoder == enc && e.task == task; });
      if (it == entries.end()) {
        out << "\t-\t-\t-";
        continue;
      }
      const auto& m = it->metrics;
      out << '\t' << fmt2(m.b3.precision) << " / " << fmt2(m.b3.recall) << " / " << fmt2(m.b3.f1) << '\t'
          << fmt2(m.diversity) << '\t' << fmt2(m.uncertainty);
    }
    out << '\n';
  }
}

inline void write_ablation_table(std::ostream& out, const std::vector<AblationRow>& rows) {
  out << "model\talpha\tbeta\tprecision\trecall\tf1\taccuracy\tdiversity\tuncertainty\n";
  for (const auto& r : rows)
    out << r.name << '\t' << format_double(r.alpha) << '\t' << format_double(r.beta) << '\t'
        << format_double(r.metrics.b3.precision) << '\t' << format_double(r.metrics.b3.recall) << '\t'
        << format_double(r.metrics.b3.f1) << '\t' << format_double(r.metrics.accuracy) << '\t'
        << format_double(r.metrics.diversity) << '\t' << format_double(r.metrics.uncertainty) << '\n';
}

// ---------------------------------------------------------------------------
// Metric reports

inline void write_metric_report(std::ostream& out, const RunMetrics& m) {
  out << "precision\t" << format_double(m.b3.precision) << '\n'
      << "recall\t" << format_double(m.b3.recall) << '\n'
      << "f1\t" << format_double(m.b3.f1) << '\n'
      << "accuracy\t" << format_double(m.accuracy) << '\n'
      << "diversity\t" << format_double(m.diversity) << '\n'
      << "uncertainty\t" << format_double(m.uncertainty) << '\n'
      << "scored\t" << m.scored << '\n';
}

inline nlohmann::json metric_record(const RunMetrics& m) {
  return {{"precision", m.b3.precision}, {"recall", m.b3.recall}, {"f1", m.b3.f1},
          {"accuracy", m.accuracy},      {"diversity", m.diversity}, {"uncertainty", m.uncertainty},
          {"scored", m.scored}};
}

// ---------------------------------------------------------------------------
// Embedding projector export

/// Writes latent logits (tab-separated, no header) and aligned metadata
/// (header row "gold<TAB>cluster").
inline void export_projector(std::ostream& vectors, std::ostream& metadata, std::span<const Vec> logits,
                             const std::vector<std::string>& gold, const std::vector<int>& pred) {
  if (logits.size() != gold.size() || gold.size() != pred.size()) {
    throw std::invalid_argument("export_projector: inputs not aligned");
  }
  metadata << "gold\tcluster\n";
  for (std::size_t i = 0; i < logits.size(); ++i) {
    for (Eigen::Index k = 0; k < logits[i].size(); ++k) vectors << (k ? "\t" : "") << format_double(logits[i][k]);
    vectors << '\n';
    metadata << gold[i] << '\t' << pred[i] << '\n';
  }
}

struct ProjectorData {
  std::vector<Vec> logits;
  std::vector<std::string> gold;
  std::vector<int> pred;
};

inline ProjectorData parse_projector(std::istream& vectors, std::istream& metadata) {
  ProjectorData d;
  std::string line;
  while (std::getline(vectors, line)) {
    if (line.empty()) continue;
    const auto f = split(line, '\t');
    Vec v(static_cast<Eigen::Index>(f.size()));
    for (std::size_t k = 0; k < f.size(); ++k) v[static_cast<Eigen::Index>(k)] = std::stod(f[k]);
    d.logits.push_back(std::move(v));
  }
  if (!std::getline(metadata, line) || line != "gold\tcluster") {
    throw LoadError("projector metadata: missing header row");
  }
  while (std::getline(metadata, line)) {
    if (line.empty()) continue;
    const auto f = split(line, '\t');
    if (f.size() != 2) throw LoadError("projector metadata: expected 2 columns");
    d.gold.push_back(f[0]);
    d.pred.push_back(std::stoi(f[1]));
  }
  if (d.gold.size() != d.logits.size()) throw LoadError("projector files have different row counts");
  return d;
}

// ---------------------------------------------------------------------------
// nPMI reports

struct NpmiRecord {
  std::string label_a;
  std::string label_b;
  double npmi = 0.0;  // NaN when undefined
};

struct NpmiReport {
  NpmiMatrix matrix;
  std::vector<NpmiRecord> records;
};

/// nPMI over a single contingency table, optionally restricted to (and
/// ordered by) `label_subset`. Subset labels absent from the table appear as
/// undefined rows.
inline NpmiReport npmi_report(const Contingency& table,
                              const std::optional<std::vector<std::string>>& label_subset = std::nullopt) {
  Contingency t = table;
  if (label_subset)
    for (const auto& l : *label_subset) t.declare_label(l);
  const NpmiMatrix full = npmi_matrix(t);
  NpmiReport rep;
  std::vector<Eigen::Index> idx;
  if (label_subset) {
    for (const auto& l : *label_subset) idx.push_back(static_cast<Eigen::Index>(*t.find_label(l)));
  } else {
    for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(full.labels.size()); ++i) idx.push_back(i);
  }
  const auto n = static_cast<Eigen::Index>(idx.size());
  rep.matrix.values.resize(n, n);
  for (Eigen::Index a = 0; a < n; ++a) {
    rep.matrix.labels.push_back(full.labels[static_cast<std::size_t>(idx[static_cast<std::size_t>(a)])]);
    for (Eigen::Index b = 0; b < n; ++b)
      rep.matrix.values(a, b) = full.values(idx[static_cast<std::size_t>(a)], idx[static_cast<std::size_t>(b)]);
  }
  for (Eigen::Index a = 0; a < n; ++a)
    for (Eigen::Index b = 0; b < n; ++b)
      rep.records.push_back({rep.matrix.labels[static_cast<std::size_t>(a)],
                             rep.matrix.labels[static_cast<std::size_t>(b)], rep.matrix.values(a, b)});
  return rep;
}

/// Sums co-occurrence counts over several runs (each run's clusters kept
/// distinct) before computing nPMI.
inline NpmiReport npmi_report(const std::vector<Contingency>& runs,
                              const std::optional<std::vector<std::string>>& label_subset = std::nullopt) {
  Contingency sum;
  for (std::size_t r = 0; r < runs.size(); ++r) sum.absorb(runs[r], "run" + std::to_string(r) + ":");
  return npmi_report(sum, label_subset);
}

namespace detail {

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q += '"';
    q += c;
  }
  return q + "\"";
}

inline std::string npmi_cell(double v) { return std::isnan(v) ? "NA" : format_double(v); }

}  // namespace detail

inline void write_npmi_csv(std::ostream& out, const NpmiMatrix& m) {
  out << "label";
  for (const auto& l : m.labels) out << ',' << detail::csv_field(l);
  out << '\n';
  for (Eigen::Index a = 0; a < m.values.rows(); ++a) {
    out << detail::csv_field(m.labels[static_cast<std::size_t>(a)]);
    for (Eigen::Index b = 0; b < m.values.cols(); ++b) out << ',' << detail::npmi_cell(m.values(a, b));
    out << '\n';
  }
}

inline void write_npmi_long(std::ostream& out, const std::vector<NpmiRecord>& records) {
  out << "label_a,label_b,npmi\n";
  for (const auto& r : records)
    out << detail::csv_field(r.label_a) << ',' << detail::csv_field(r.label_b) << ',' << detail::npmi_cell(r.npmi)
        << '\n';
}

}  // namespace lsl
