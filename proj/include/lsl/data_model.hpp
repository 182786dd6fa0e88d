#pragma once

// Feature and task file formats, loaders, and negative sampling for building
// binary probing tasks out of labeled spans and span pairs.
//
// Embedding file (binary, little-endian):
//   "LSLF" u32:version
//   repeated { u32:id_len, id bytes, u32:L, u32:T, u32:d, f32[L*T*d] }
// values are layer-major, then token-major.
//
// Task file (JSON lines), one example per line:
//   {"id": "s1:p0", "sentence_id": "s1", "span1": [0, 2], "span2": [3, 4],
//    "label": 1, "gold": "PER", "split": "train"}
// id, span2, gold and split are optional; split defaults to "train".
//
// Corpus file (JSON lines), one annotated sentence per line:
//   {"sentence_id": "s1", "tokens": ["a", "b"], "split": "train",
//    "positive_units": [{"span1": [0, 1], "span2": [1, 2], "gold": "nsubj"}],
//    "candidate_spans": [[0, 1], [0, 2]]}

#include <algorithm>
#include <array>
#include <cmath>
#include <compare>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "binary_io.hpp"
#include "random.hpp"

namespace lsl {

class LoadError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::array<char, 4> kEmbeddingMagic{'L', 'S', 'L', 'F'};
inline constexpr std::uint32_t kEmbeddingVersion = 1;

/// Half-open token interval [start, end).
struct Span {
  std::uint32_t start = 0;
  std::uint32_t end = 0;

  std::uint32_t length() const { return end - start; }
  bool valid_within(std::uint32_t num_tokens) const {
    return start < end && end <= num_tokens;
  }
  /// Twice the midpoint, kept integral so distances compare exactly.
  std::int64_t twice_mid() const {
    return static_cast<std::int64_t>(start) + static_cast<std::int64_t>(end);
  }

  auto operator<=>(const Span&) const = default;
};

struct EmbeddingBundle {
  std::string sentence_id;
  std::uint32_t num_layers = 0;
  std::uint32_t num_tokens = 0;
  std::uint32_t dim = 0;
  std::vector<float> values;  // L x T x d

  std::size_t expected_size() const {
    return static_cast<std::size_t>(num_layers) * num_tokens * dim;
  }
  const float* token(std::uint32_t layer, std::uint32_t tok) const {
    return values.data() + (static_cast<std::size_t>(layer) * num_tokens + tok) * dim;
  }
  float at(std::uint32_t layer, std::uint32_t tok, std::uint32_t k) const {
    return token(layer, tok)[k];
  }
};

/// Immutable-after-load collection of bundles indexed by sentence id.
class EmbeddingIndex {
 public:
  void add(EmbeddingBundle bundle) {
    if (by_id_.count(bundle.sentence_id)) {
      throw LoadError("duplicate sentence_id '" + bundle.sentence_id + "'");
    }
    by_id_.emplace(bundle.sentence_id, bundles_.size());
    bundles_.push_back(std::move(bundle));
  }

  const EmbeddingBundle* find(const std::string& id) const {
    auto it = by_id_.find(id);
    return it == by_id_.end() ? nullptr : &bundles_[it->second];
  }

  const EmbeddingBundle& at(const std::string& id) const {
    const auto* b = find(id);
    if (!b) throw LoadError("unknown sentence_id '" + id + "'");
    return *b;
  }

  std::size_t size() const { return bundles_.size(); }
  const std::vector<EmbeddingBundle>& bundles() const { return bundles_; }

 private:
  std::vector<EmbeddingBundle> bundles_;
  std::unordered_map<std::string, std::size_t> by_id_;
};

// ---------------------------------------------------------------------------
// Embedding file IO

inline EmbeddingIndex read_embeddings(std::istream& in) {
  binary::Reader r(in);
  std::array<char, 4> magic{};
  if (!r.read(magic.data(), magic.size()) || magic != kEmbeddingMagic) {
    throw LoadError("malformed header: missing LSLF magic at byte offset 0");
  }
  std::uint32_t version = 0;
  if (!r.get(version) || version != kEmbeddingVersion) {
    throw LoadError("malformed header: unsupported format version at byte offset 4");
  }

  EmbeddingIndex index;
  while (!r.at_eof()) {
    const auto record_offset = r.offset();
    std::uint32_t id_len = 0;
    if (!r.get(id_len)) {
      throw LoadError("malformed header: truncated record at byte offset " +
                      std::to_string(record_offset));
    }
    EmbeddingBundle b;
    b.sentence_id.resize(id_len);
    if (!r.read(b.sentence_id.data(), id_len) || !r.get(b.num_layers) ||
        !r.get(b.num_tokens) || !r.get(b.dim)) {
      throw LoadError("malformed header: truncated record header at byte offset " +
                      std::to_string(record_offset));
    }
    if (b.num_layers == 0 || b.num_tokens == 0 || b.dim == 0) {
      throw LoadError("malformed header: sentence '" + b.sentence_id +
                      "' has a zero dimension at byte offset " + std::to_string(record_offset));
    }
    const auto payload_offset = r.offset();
    const std::size_t n = b.expected_size();
    b.values.resize(n);
    if (!r.read(reinterpret_cast<char*>(b.values.data()), n * sizeof(float))) {
      throw LoadError("shape mismatch: sentence '" + b.sentence_id + "' declares " +
                      std::to_string(b.num_layers) + "x" + std::to_string(b.num_tokens) + "x" +
                      std::to_string(b.dim) + " values but the payload at byte offset " +
                      std::to_string(payload_offset) + " is short");
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (!std::isfinite(b.values[i])) {
        throw LoadError("non-finite value in sentence '" + b.sentence_id + "' at byte offset " +
                        std::to_string(payload_offset + i * sizeof(float)));
      }
    }
    index.add(std::move(b));
  }
  return index;
}

inline EmbeddingIndex load_embeddings(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open embedding file " + path.string());
  return read_embeddings(in);
}

template <class Range>
void write_embeddings(std::ostream& out, const Range& bundles) {
  out.write(kEmbeddingMagic.data(), kEmbeddingMagic.size());
  binary::put(out, kEmbeddingVersion);
  for (const EmbeddingBundle& b : bundles) {
    if (b.values.size() != b.expected_size()) {
      throw std::invalid_argument("bundle '" + b.sentence_id + "' has inconsistent shape");
    }
    binary::put(out, static_cast<std::uint32_t>(b.sentence_id.size()));
    binary::put_bytes(out, b.sentence_id);
    binary::put(out, b.num_layers);
    binary::put(out, b.num_tokens);
    binary::put(out, b.dim);
    out.write(reinterpret_cast<const char*>(b.values.data()),
              static_cast<std::streamsize>(b.values.size() * sizeof(float)));
  }
}

template <class Range>
void save_embeddings(const std::filesystem::path& path, const Range& bundles) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_embeddings(out, bundles);
}

// ---------------------------------------------------------------------------
// Tasks

enum class Split { train, dev, test };

inline const char* to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::dev: return "dev";
    case Split::test: return "test";
  }
  return "train";
}

inline std::optional<Split> parse_split(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "dev") return Split::dev;
  if (s == "test") return Split::test;
  return std::nullopt;
}

/// One probing example: one or two spans in a sentence and a binary label.
struct SpanTarget {
  std::string id;
  std::string sentence_id;
  Span span1;
  std::optional<Span> span2;
  int label = 0;
  std::optional<std::string> gold;
  Split split = Split::train;

  std::size_t arity() const { return span2 ? 2 : 1; }
};

struct TaskDataset {
  std::string name;
  Split split = Split::train;
  std::vector<SpanTarget> examples;
  std::set<std::string> label_inventory;

  bool empty() const { return examples.empty(); }
  std::size_t size() const { return examples.size(); }
};

struct TaskSplits {
  TaskDataset train;
  TaskDataset dev;
  TaskDataset test;

  TaskDataset& get(Split s) {
    return s == Split::train ? train : s == Split::dev ? dev : test;
  }
  const TaskDataset& get(Split s) const {
    return s == Split::train ? train : s == Split::dev ? dev : test;
  }
};

namespace detail {

inline Span parse_span(const nlohmann::json& j, const char* field) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number_integer() ||
      !j[1].is_number_integer()) {
    throw std::invalid_argument(std::string(field) + " must be [start, end]");
  }
  const auto s = j[0].get<std::int64_t>();
  const auto e = j[1].get<std::int64_t>();
  if (s < 0 || e <= s || e > UINT32_MAX) {
    throw std::invalid_argument(std::string(field) + " must satisfy 0 <= start < end");
  }
  return Span{static_cast<std::uint32_t>(s), static_cast<std::uint32_t>(e)};
}

inline nlohmann::json span_json(const Span& s) { return nlohmann::json::array({s.start, s.end}); }

inline void check_fields(const nlohmann::json& j, std::initializer_list<const char*> allowed) {
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw std::invalid_argument("unknown field '" + key + "'");
  }
}

inline std::string line_error(const std::string& path, std::size_t line, const std::string& what) {
  return path + ":" + std::to_string(line) + ": " + what;
}

}  // namespace detail

inline SpanTarget parse_task_record(const nlohmann::json& j, bool strict) {
  if (!j.is_object()) throw std::invalid_argument("record must be an object");
  if (strict) detail::check_fields(j, {"id", "sentence_id", "span1", "span2", "label", "gold", "split"});
  SpanTarget t;
  if (!j.contains("sentence_id") || !j["sentence_id"].is_string()) {
    throw std::invalid_argument("missing string field sentence_id");
  }
  t.sentence_id = j["sentence_id"].get<std::string>();
  if (!j.contains("span1")) throw std::invalid_argument("missing field span1");
  t.span1 = detail::parse_span(j["span1"], "span1");
  if (j.contains("span2") && !j["span2"].is_null()) t.span2 = detail::parse_span(j["span2"], "span2");
  if (!j.contains("label") || !j["label"].is_number_integer()) {
    throw std::invalid_argument("missing integer field label");
  }
  t.label = j["label"].get<int>();
  if (t.label != 0 && t.label != 1) throw std::invalid_argument("label must be 0 or 1");
  if (j.contains("gold") && !j["gold"].is_null()) {
    if (!j["gold"].is_string()) throw std::invalid_argument("gold must be a string");
    t.gold = j["gold"].get<std::string>();
  }
  if (t.gold && t.label == 0) throw std::invalid_argument("gold label given on a negative example");
  if (j.contains("id")) {
    if (!j["id"].is_string()) throw std::invalid_argument("id must be a string");
    t.id = j["id"].get<std::string>();
  }
  if (j.contains("split")) {
    auto s = j["split"].is_string() ? parse_split(j["split"].get<std::string>()) : std::nullopt;
    if (!s) throw std::invalid_argument("split must be train, dev or test");
    t.split = *s;
  }
  return t;
}

inline nlohmann::json task_record_json(const SpanTarget& t) {
  nlohmann::json j;
  j["id"] = t.id;
  j["sentence_id"] = t.sentence_id;
  j["span1"] = detail::span_json(t.span1);
  if (t.span2) j["span2"] = detail::span_json(*t.span2);
  j["label"] = t.label;
  if (t.gold) j["gold"] = *t.gold;
  j["split"] = to_string(t.split);
  return j;
}

template <class Range>
void write_task(std::ostream& out, const Range& targets) {
  for (const SpanTarget& t : targets) out << task_record_json(t).dump() << '\n';
}

/// Parses a task stream. When `embeddings` is given every sentence_id must
/// resolve and every span must fit the referenced sentence.
inline TaskSplits read_task(std::istream& in, const std::string& name,
                            const EmbeddingIndex* embeddings, bool strict = false) {
  TaskSplits splits;
  for (Split s : {Split::train, Split::dev, Split::test}) {
    splits.get(s).name = name;
    splits.get(s).split = s;
  }
  std::string line;
  std::size_t lineno = 0;
  std::set<std::string> seen_ids;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line.find_first_not_of(" \t\r") == std::string::npos) continue;
    SpanTarget t;
    try {
      t = parse_task_record(nlohmann::json::parse(line), strict);
    } catch (const std::exception& e) {
      throw LoadError(detail::line_error(name, lineno, e.what()));
    }
    if (t.id.empty()) t.id = "L" + std::to_string(lineno);
    if (!seen_ids.insert(t.id).second) {
      throw LoadError(detail::line_error(name, lineno, "duplicate example id '" + t.id + "'"));
    }
    if (embeddings) {
      const auto* b = embeddings->find(t.sentence_id);
      if (!b) {
        throw LoadError(detail::line_error(name, lineno, "dangling sentence_id '" + t.sentence_id + "'"));
      }
      if (!t.span1.valid_within(b->num_tokens) || (t.span2 && !t.span2->valid_within(b->num_tokens))) {
        throw LoadError(detail::line_error(name, lineno, "span out of bounds for sentence '" +
                                                             t.sentence_id + "' with " +
                                                             std::to_string(b->num_tokens) + " tokens"));
      }
    }
    auto& ds = splits.get(t.split);
    if (t.label == 1 && t.gold) ds.label_inventory.insert(*t.gold);
    ds.examples.push_back(std::move(t));
  }
  return splits;
}

inline TaskSplits load_task(const std::filesystem::path& path, const EmbeddingIndex* embeddings,
                            bool strict = false) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open task file " + path.string());
  return read_task(in, path.stem().string(), embeddings, strict);
}

// ---------------------------------------------------------------------------
// Annotated corpus and negative sampling

struct PositiveUnit {
  Span span1;
  std::optional<Span> span2;
  std::string gold;
};

struct AnnotatedSentence {
  std::string sentence_id;
  std::vector<std::string> tokens;
  std::vector<PositiveUnit> positive_units;
  std::optional<std::vector<Span>> candidate_spans;
  Split split = Split::train;

  std::uint32_t num_tokens() const { return static_cast<std::uint32_t>(tokens.size()); }
};

inline AnnotatedSentence parse_corpus_record(const nlohmann::json& j, bool strict) {
  if (!j.is_object()) throw std::invalid_argument("record must be an object");
  if (strict) detail::check_fields(j, {"sentence_id", "tokens", "positive_units", "candidate_spans", "split"});
  AnnotatedSentence s;
  if (!j.contains("sentence_id") || !j["sentence_id"].is_string()) {
    throw std::invalid_argument("missing string field sentence_id");
  }
  s.sentence_id = j["sentence_id"].get<std::string>();
  if (!j.contains("tokens") || !j["tokens"].is_array()) throw std::invalid_argument("missing array field tokens");
  for (const auto& tok : j["tokens"]) {
    if (!tok.is_string()) throw std::invalid_argument("tokens must be strings");
    s.tokens.push_back(tok.get<std::string>());
  }
  const auto T = s.num_tokens();
  auto bounded = [T](Span sp, const char* field) {
    if (!sp.valid_within(T)) throw std::invalid_argument(std::string(field) + " out of token bounds");
    return sp;
  };
  if (j.contains("positive_units")) {
    for (const auto& u : j["positive_units"]) {
      if (strict) detail::check_fields(u, {"span1", "span2", "gold"});
      PositiveUnit pu;
      pu.span1 = bounded(detail::parse_span(u.at("span1"), "span1"), "span1");
      if (u.contains("span2") && !u["span2"].is_null()) {
        pu.span2 = bounded(detail::parse_span(u["span2"], "span2"), "span2");
      }
      if (!u.contains("gold") || !u["gold"].is_string()) {
        throw std::invalid_argument("positive unit needs a string gold label");
      }
      pu.gold = u["gold"].get<std::string>();
      s.positive_units.push_back(std::move(pu));
    }
  }
  if (j.contains("candidate_spans") && !j["candidate_spans"].is_null()) {
    std::vector<Span> cands;
    for (const auto& c : j["candidate_spans"]) cands.push_back(bounded(detail::parse_span(c, "candidate_spans"), "candidate_spans"));
    s.candidate_spans = std::move(cands);
  }
  if (j.contains("split")) {
    auto sp = j["split"].is_string() ? parse_split(j["split"].get<std::string>()) : std::nullopt;
    if (!sp) throw std::invalid_argument("split must be train, dev or test");
    s.split = *sp;
  }
  return s;
}

inline nlohmann::json corpus_record_json(const AnnotatedSentence& s) {
  nlohmann::json j;
  j["sentence_id"] = s.sentence_id;
  j["tokens"] = s.tokens;
  j["split"] = to_string(s.split);
  auto units = nlohmann::json::array();
  for (const auto& u : s.positive_units) {
    nlohmann::json ju;
    ju["span1"] = detail::span_json(u.span1);
    if (u.span2) ju["span2"] = detail::span_json(*u.span2);
    ju["gold"] = u.gold;
    units.push_back(std::move(ju));
  }
  j["positive_units"] = std::move(units);
  if (s.candidate_spans) {
    auto c = nlohmann::json::array();
    for (const auto& sp : *s.candidate_spans) c.push_back(detail::span_json(sp));
    j["candidate_spans"] = std::move(c);
  }
  return j;
}

inline std::vector<AnnotatedSentence> read_corpus(std::istream& in, const std::string& name,
                                                  bool strict = false) {
  std::vector<AnnotatedSentence> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(parse_corpus_record(nlohmann::json::parse(line), strict));
    } catch (const std::exception& e) {
      throw LoadError(detail::line_error(name, lineno, e.what()));
    }
  }
  return out;
}

inline std::vector<AnnotatedSentence> load_corpus(const std::filesystem::path& path, bool strict = false) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open corpus file " + path.string());
  return read_corpus(in, path.filename().string(), strict);
}

enum class SpanStrategy { from_candidates, random_spans };
enum class PairMode { random_unattached, closest_unattached };
/// Whether the negative budget for pair tasks is counted per predicate
/// (distinct span1) or per sentence.
enum class PairScope { per_predicate, per_sentence };

struct NegativeSample {
  std::vector<SpanTarget> negatives;
  bool short_of_target = false;  // fewer negatives available than requested
};

namespace detail {

inline std::size_t negative_target(double ratio, std::size_t positives) {
  if (!(ratio >= 0.0) || !std::isfinite(ratio)) throw std::invalid_argument("ratio must be a finite value >= 0");
  // the epsilon keeps 1.0 * 3 from rounding up to 4 after float error
  return static_cast<std::size_t>(std::ceil(ratio * static_cast<double>(positives) - 1e-9));
}

inline SpanTarget make_negative(const AnnotatedSentence& s, Span a, std::optional<Span> b) {
  SpanTarget t;
  t.sentence_id = s.sentence_id;
  t.span1 = a;
  t.span2 = b;
  t.label = 0;
  t.split = s.split;
  return t;
}

/// Units a pair sampler may draw from: the candidate spans if present,
/// otherwise every single token.
inline std::vector<Span> pair_units(const AnnotatedSentence& s) {
  std::vector<Span> units;
  std::set<Span> seen;
  if (s.candidate_spans) {
    for (const auto& c : *s.candidate_spans)
      if (seen.insert(c).second) units.push_back(c);
  } else {
    for (std::uint32_t i = 0; i < s.num_tokens(); ++i) units.push_back(Span{i, i + 1});
  }
  return units;
}

inline std::uint64_t distance_key(Span a, Span b) {
  const auto d = a.twice_mid() - b.twice_mid();
  return static_cast<std::uint64_t>(d < 0 ? -d : d);
}

}  // namespace detail

/// Draws single-span negatives, never equal to a positive span. The count is
/// min(ceil(ratio * positives), available) and draws are without replacement.
inline NegativeSample sample_negative_spans(const AnnotatedSentence& sentence, SpanStrategy strategy,
                                            double ratio, std::uint64_t seed) {
  const std::size_t target = detail::negative_target(ratio, sentence.positive_units.size());
  std::set<Span> positive;
  for (const auto& u : sentence.positive_units) positive.insert(u.span1);

  std::vector<Span> pool;
  if (strategy == SpanStrategy::from_candidates) {
    if (!sentence.candidate_spans) {
      throw std::invalid_argument("sentence '" + sentence.sentence_id +
                                  "' has no candidate_spans for from_candidates sampling");
    }
    std::set<Span> seen;
    for (const auto& c : *sentence.candidate_spans)
      if (!positive.count(c) && seen.insert(c).second) pool.push_back(c);
  } else {
    const auto T = sentence.num_tokens();
    for (std::uint32_t s = 0; s < T; ++s)
      for (std::uint32_t e = s + 1; e <= T; ++e)
        if (!positive.count(Span{s, e})) pool.push_back(Span{s, e});
  }

  NegativeSample out;
  out.short_of_target = pool.size() < target;
  const std::size_t count = std::min(target, pool.size());
  auto rng = make_rng(seed);
  for (std::size_t i = 0; i < count; ++i) {
    std::swap(pool[i], pool[i + uniform_index(rng, pool.size() - i)]);
    out.negatives.push_back(detail::make_negative(sentence, pool[i], std::nullopt));
  }
  return out;
}

/// Draws span-pair negatives that are not attached in either direction.
/// closest_unattached ranks candidates by midpoint distance, then span1
/// start, then span2 start, and is deterministic; random_unattached samples
/// uniformly without replacement.
inline NegativeSample sample_negative_pairs(const AnnotatedSentence& sentence, PairMode mode, double ratio,
                                            std::uint64_t seed, PairScope scope = PairScope::per_predicate) {
  std::set<std::pair<Span, Span>> attached;
  std::map<Span, std::size_t> positives_per_head;
  for (const auto& u : sentence.positive_units) {
    if (!u.span2) {
      throw std::invalid_argument("sentence '" + sentence.sentence_id + "' has a positive unit without span2");
    }
    attached.insert({u.span1, *u.span2});
    attached.insert({*u.span2, u.span1});
    ++positives_per_head[u.span1];
  }
  const auto units = detail::pair_units(sentence);
  NegativeSample out;

  if (mode == PairMode::random_unattached) {
    const std::size_t target = detail::negative_target(ratio, sentence.positive_units.size());
    std::vector<std::pair<Span, Span>> pool;
    for (const auto& a : units)
      for (const auto& b : units)
        if (a != b && !attached.count({a, b})) pool.emplace_back(a, b);
    out.short_of_target = pool.size() < target;
    const std::size_t count = std::min(target, pool.size());
    auto rng = make_rng(seed);
    for (std::size_t i = 0; i < count; ++i) {
      std::swap(pool[i], pool[i + uniform_index(rng, pool.size() - i)]);
      out.negatives.push_back(detail::make_negative(sentence, pool[i].first, pool[i].second));
    }
    return out;
  }

  struct Ranked {
    std::uint64_t dist;
    Span head;
    Span arg;
    bool operator<(const Ranked& o) const {
      return std::tie(dist, head.start, arg.start, head.end, arg.end) <
             std::tie(o.dist, o.head.start, o.arg.start, o.head.end, o.arg.end);
    }
  };
  auto candidates_for = [&](Span head) {
    std::vector<Ranked> c;
    for (const auto& a : units)
      if (a != head && !attached.count({head, a})) c.push_back({detail::distance_key(head, a), head, a});
    std::sort(c.begin(), c.end());
    return c;
  };

  if (scope == PairScope::per_predicate) {
    for (const auto& [head, npos] : positives_per_head) {
      const std::size_t target = detail::negative_target(ratio, npos);
      auto c = candidates_for(head);
      if (c.size() < target) out.short_of_target = true;
      for (std::size_t i = 0; i < std::min(target, c.size()); ++i)
        out.negatives.push_back(detail::make_negative(sentence, c[i].head, c[i].arg));
    }
  } else {
    const std::size_t target = detail::negative_target(ratio, sentence.positive_units.size());
    std::vector<Ranked> all;
    for (const auto& kv : positives_per_head) {
      auto c = candidates_for(kv.first);
      all.insert(all.end(), c.begin(), c.end());
    }
    std::sort(all.begin(), all.end());
    out.short_of_target = all.size() < target;
    for (std::size_t i = 0; i < std::min(target, all.size()); ++i)
      out.negatives.push_back(detail::make_negative(sentence, all[i].head, all[i].arg));
  }
  return out;
}

/// Turns one annotated sentence into labeled examples: its positives with
/// gold labels followed by sampled negatives. Ids are "<sentence>:p<i>" and
/// "<sentence>:n<i>".
inline std::vector<SpanTarget> build_task_examples(const AnnotatedSentence& sentence,
                                                   const NegativeSample& negatives) {
  std::vector<SpanTarget> out;
  for (std::size_t i = 0; i < sentence.positive_units.size(); ++i) {
    const auto& u = sentence.positive_units[i];
    SpanTarget t;
    t.id = sentence.sentence_id + ":p" + std::to_string(i);
    t.sentence_id = sentence.sentence_id;
    t.span1 = u.span1;
    t.span2 = u.span2;
    t.label = 1;
    t.gold = u.gold;
    t.split = sentence.split;
    out.push_back(std::move(t));
  }
  for (std::size_t i = 0; i < negatives.negatives.size(); ++i) {
    SpanTarget t = negatives.negatives[i];
    t.id = sentence.sentence_id + ":n" + std::to_string(i);
    out.push_back(std::move(t));
  }
  return out;
}

}  // namespace lsl
