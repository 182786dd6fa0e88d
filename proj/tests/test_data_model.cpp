#include <cmath>
#include <cstring>
#include <limits>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include <lsl/data_model.hpp>

#include "fixtures.hpp"

using namespace lsl;
using lsl::testing::random_bundle;

namespace {

std::string encode(const std::vector<EmbeddingBundle>& bundles) {
  std::ostringstream out;
  write_embeddings(out, bundles);
  return out.str();
}

EmbeddingIndex decode(const std::string& bytes) {
  std::istringstream in(bytes);
  return read_embeddings(in);
}

std::string load_error(const std::string& bytes) {
  try {
    decode(bytes);
  } catch (const LoadError& e) {
    return e.what();
  }
  return "";
}

AnnotatedSentence sentence_with(std::uint32_t T, std::vector<PositiveUnit> units,
                                std::optional<std::vector<Span>> candidates = std::nullopt) {
  AnnotatedSentence s;
  s.sentence_id = "s";
  for (std::uint32_t i = 0; i < T; ++i) s.tokens.push_back("w" + std::to_string(i));
  s.positive_units = std::move(units);
  s.candidate_spans = std::move(candidates);
  return s;
}

Span tok(std::uint32_t i) { return Span{i, i + 1}; }

}  // namespace

TEST(Embeddings, MinimalFileLoads) {
  auto rng = make_rng(1);
  const auto b = random_bundle("s1", 2, 3, 4, rng);
  const auto idx = decode(encode({b}));
  ASSERT_EQ(idx.size(), 1u);
  const auto& got = idx.at("s1");
  EXPECT_EQ(got.num_layers, 2u);
  EXPECT_EQ(got.num_tokens, 3u);
  EXPECT_EQ(got.dim, 4u);
  EXPECT_EQ(got.values, b.values);
  EXPECT_EQ(got.at(1, 2, 3), b.values[(1 * 3 + 2) * 4 + 3]);
}

TEST(Embeddings, ByteLayoutMatchesFormat) {
  EmbeddingBundle b{"ab", 1, 1, 2, {1.0f, -2.0f}};
  const auto bytes = encode({b});
  ASSERT_EQ(bytes.size(), 4u + 4 + 4 + 2 + 12 + 8);
  EXPECT_EQ(bytes.substr(0, 4), "LSLF");
  EXPECT_EQ(bytes[4], 1);
  EXPECT_EQ(bytes[8], 2);
  EXPECT_EQ(bytes.substr(12, 2), "ab");
  float v = 0;
  std::memcpy(&v, bytes.data() + 26, 4);
  EXPECT_EQ(v, 1.0f);
}

TEST(Embeddings, ShortPayloadIsShapeMismatch) {
  auto rng = make_rng(2);
  auto bytes = encode({random_bundle("short", 1, 3, 2, rng)});
  bytes.resize(bytes.size() - 2 * sizeof(float));  // header says T=3, payload holds 2 tokens
  const auto msg = load_error(bytes);
  EXPECT_NE(msg.find("shape mismatch"), std::string::npos) << msg;
  EXPECT_NE(msg.find("short"), std::string::npos);
  EXPECT_NE(msg.find("byte offset"), std::string::npos);
}

TEST(Embeddings, NanIsRejectedWithSentenceIdAndOffset) {
  auto rng = make_rng(3);
  auto a = random_bundle("fine", 1, 2, 2, rng);
  auto b = random_bundle("broken", 1, 2, 2, rng);
  b.values[3] = std::numeric_limits<float>::quiet_NaN();
  const auto msg = load_error(encode({a, b}));
  EXPECT_NE(msg.find("non-finite"), std::string::npos) << msg;
  EXPECT_NE(msg.find("broken"), std::string::npos);
  const std::size_t expected = 8 + (4 + 4 + 12 + 16) + (4 + 6 + 12) + 3 * 4;
  EXPECT_NE(msg.find("byte offset " + std::to_string(expected)), std::string::npos) << msg;
}

TEST(Embeddings, MalformedHeadersAreRejected) {
  EXPECT_NE(load_error("LSLX\1\0\0\0").find("malformed header"), std::string::npos);
  EXPECT_NE(load_error(std::string("LSLF\2\0\0\0", 8)).find("version"), std::string::npos);
  auto rng = make_rng(4);
  auto bytes = encode({random_bundle("x", 1, 1, 1, rng)});
  EXPECT_NE(load_error(bytes.substr(0, 10)).find("malformed header"), std::string::npos);
  EmbeddingBundle zero{"z", 1, 0, 1, {}};
  EXPECT_NE(load_error(encode({zero})).find("zero dimension"), std::string::npos);
}

TEST(Embeddings, DuplicateSentenceIdsAreRejected) {
  auto rng = make_rng(5);
  EXPECT_THROW(decode(encode({random_bundle("d", 1, 1, 1, rng), random_bundle("d", 1, 1, 1, rng)})), LoadError);
}

TEST(Embeddings, LoadingIsPure) {
  auto rng = make_rng(6);
  std::vector<EmbeddingBundle> bundles;
  for (int i = 0; i < 5; ++i) bundles.push_back(random_bundle("s" + std::to_string(i), 2, 4, 3, rng));
  const auto bytes = encode(bundles);
  const auto a = decode(bytes), b = decode(bytes);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a.bundles()[i].sentence_id, b.bundles()[i].sentence_id);
    EXPECT_EQ(a.bundles()[i].values, b.bundles()[i].values);
  }
  EXPECT_EQ(encode(a.bundles()), bytes);
}

TEST(TaskFile, ResolvesAndComputesInventory) {
  auto rng = make_rng(7);
  EmbeddingIndex idx;
  idx.add(random_bundle("s1", 1, 5, 2, rng));
  std::istringstream in(
      R"({"id":"a","sentence_id":"s1","span1":[0,2],"label":1,"gold":"PER"})"
      "\n"
      R"({"id":"b","sentence_id":"s1","span1":[2,3],"span2":[4,5],"label":0,"split":"dev"})"
      "\n\n"
      R"({"sentence_id":"s1","span1":[3,5],"label":1,"gold":"ORG"})"
      "\n");
  const auto t = read_task(in, "toy", &idx, true);
  ASSERT_EQ(t.train.size(), 2u);
  ASSERT_EQ(t.dev.size(), 1u);
  EXPECT_EQ(t.train.label_inventory, (std::set<std::string>{"ORG", "PER"}));
  EXPECT_EQ(t.train.examples[1].id, "L4");
  EXPECT_EQ(t.dev.examples[0].span2, (Span{4, 5}));
}

TEST(TaskFile, ErrorsCarryLineNumbers) {
  auto rng = make_rng(8);
  EmbeddingIndex idx;
  idx.add(random_bundle("s1", 1, 3, 2, rng));
  auto fails = [&](const std::string& text, const std::string& needle, bool strict = false) {
    std::istringstream in(text);
    try {
      read_task(in, "t", &idx, strict);
    } catch (const LoadError& e) {
      return std::string(e.what()).find(needle) != std::string::npos;
    }
    return false;
  };
  const std::string ok = R"({"sentence_id":"s1","span1":[0,1],"label":0})";
  EXPECT_TRUE(fails(ok + "\n" + R"({"sentence_id":"nope","span1":[0,1],"label":0})", "t:2: dangling"));
  EXPECT_TRUE(fails(ok + "\n" + ok + "\n" + R"({"sentence_id":"s1","span1":[2,4],"label":0})", "t:3: span out of bounds"));
  EXPECT_TRUE(fails(R"({"sentence_id":"s1","span1":[0,1],"label":0,"gold":"X"})", "t:1: gold label given on a negative"));
  EXPECT_TRUE(fails(R"({"sentence_id":"s1","span1":[1,1],"label":0})", "t:1"));
  EXPECT_TRUE(fails(R"({"sentence_id":"s1","span1":[0,1],"label":2})", "label must be 0 or 1"));
  EXPECT_TRUE(fails(R"({"id":"x","sentence_id":"s1","span1":[0,1],"label":0})"
                    "\n"
                    R"({"id":"x","sentence_id":"s1","span1":[1,2],"label":0})",
                    "t:2: duplicate example id"));
  EXPECT_TRUE(fails("{not json", "t:1"));
  const std::string extra = R"({"sentence_id":"s1","span1":[0,1],"label":0,"weight":3})";
  EXPECT_TRUE(fails(extra, "unknown field 'weight'", true));
  std::istringstream lenient(extra);
  EXPECT_NO_THROW(read_task(lenient, "t", &idx, false));
}

TEST(TaskFile, RecordsRoundTrip) {
  SpanTarget t;
  t.id = "e";
  t.sentence_id = "s";
  t.span1 = {1, 3};
  t.span2 = Span{4, 6};
  t.label = 1;
  t.gold = "ARG0";
  t.split = Split::test;
  const auto back = parse_task_record(task_record_json(t), true);
  EXPECT_EQ(back.id, t.id);
  EXPECT_EQ(back.span1, t.span1);
  EXPECT_EQ(back.span2, t.span2);
  EXPECT_EQ(back.gold, t.gold);
  EXPECT_EQ(back.split, Split::test);
}

TEST(Corpus, ParsesAndRejectsOutOfBoundsUnits) {
  std::istringstream in(
      R"({"sentence_id":"c","tokens":["a","b","c"],"positive_units":[{"span1":[0,1],"gold":"X"}],"candidate_spans":[[1,3]]})");
  const auto corpus = read_corpus(in, "corpus", true);
  ASSERT_EQ(corpus.size(), 1u);
  EXPECT_EQ(corpus[0].positive_units[0].gold, "X");
  EXPECT_EQ(corpus[0].candidate_spans->at(0), (Span{1, 3}));
  const auto again = parse_corpus_record(corpus_record_json(corpus[0]), true);
  EXPECT_EQ(again.tokens, corpus[0].tokens);

  std::istringstream bad(R"({"sentence_id":"c","tokens":["a"],"positive_units":[{"span1":[0,2],"gold":"X"}]})");
  EXPECT_THROW(read_corpus(bad, "corpus"), LoadError);
}

TEST(SampleSpans, RatioArithmeticAndExclusion) {
  const auto s = sentence_with(8, {{Span{0, 2}, {}, "A"}, {Span{3, 4}, {}, "B"}},
                               std::vector<Span>{{0, 2}, {3, 4}, {1, 2}, {2, 3}, {4, 6}, {5, 6}, {6, 8}});
  const auto out = sample_negative_spans(s, SpanStrategy::from_candidates, 1.0, 9);
  ASSERT_EQ(out.negatives.size(), 2u);
  EXPECT_FALSE(out.short_of_target);
  for (const auto& n : out.negatives) {
    EXPECT_NE(n.span1, (Span{0, 2}));
    EXPECT_NE(n.span1, (Span{3, 4}));
    EXPECT_EQ(n.label, 0);
    EXPECT_FALSE(n.gold);
  }
  EXPECT_NE(out.negatives[0].span1, out.negatives[1].span1);
}

TEST(SampleSpans, ExhaustedCandidatesGiveEmptyListWithFlag) {
  const auto s = sentence_with(4, {{Span{0, 1}, {}, "A"}, {Span{2, 4}, {}, "B"}}, std::vector<Span>{{0, 1}, {2, 4}});
  const auto out = sample_negative_spans(s, SpanStrategy::from_candidates, 1.0, 1);
  EXPECT_TRUE(out.negatives.empty());
  EXPECT_TRUE(out.short_of_target);
}

TEST(SampleSpans, DeterministicUnderSeed) {
  const auto s = sentence_with(12, {{Span{0, 2}, {}, "A"}, {Span{5, 7}, {}, "B"}, {Span{9, 10}, {}, "A"}});
  const auto a = sample_negative_spans(s, SpanStrategy::random_spans, 1.5, 42);
  const auto b = sample_negative_spans(s, SpanStrategy::random_spans, 1.5, 42);
  ASSERT_EQ(a.negatives.size(), 5u);
  for (std::size_t i = 0; i < a.negatives.size(); ++i) EXPECT_EQ(a.negatives[i].span1, b.negatives[i].span1);
}

TEST(SampleSpans, PropertyNeverHitsPositivesAndMatchesCountOnAmpleCandidates) {
  auto rng = make_rng(77);
  for (int trial = 0; trial < 200; ++trial) {
    const auto T = static_cast<std::uint32_t>(4 + uniform_index(rng, 10));
    std::vector<PositiveUnit> units;
    std::set<Span> pos;
    const auto n_pos = 1 + uniform_index(rng, 3);
    for (std::size_t k = 0; k < n_pos; ++k) {
      const auto a = static_cast<std::uint32_t>(uniform_index(rng, T));
      const auto b = a + 1 + static_cast<std::uint32_t>(uniform_index(rng, T - a));
      units.push_back({Span{a, b}, {}, "G"});
      pos.insert(Span{a, b});
    }
    const auto s = sentence_with(T, units);
    const auto out = sample_negative_spans(s, SpanStrategy::random_spans, 1.0, static_cast<std::uint64_t>(trial));
    EXPECT_EQ(out.negatives.size(), units.size());
    for (const auto& n : out.negatives) EXPECT_FALSE(pos.count(n.span1));
    std::set<Span> distinct;
    for (const auto& n : out.negatives) distinct.insert(n.span1);
    EXPECT_EQ(distinct.size(), out.negatives.size());
  }
}

TEST(SampleSpans, FromCandidatesNeedsCandidates) {
  const auto s = sentence_with(3, {{Span{0, 1}, {}, "A"}});
  EXPECT_THROW(sample_negative_spans(s, SpanStrategy::from_candidates, 1.0, 0), std::invalid_argument);
}

TEST(SamplePairs, RandomUnattachedExcludesPositive) {
  const auto s = sentence_with(4, {{Span{0, 1}, Span{2, 3}, "dep"}});
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto out = sample_negative_pairs(s, PairMode::random_unattached, 1.0, seed);
    ASSERT_EQ(out.negatives.size(), 1u);
    const auto& n = out.negatives[0];
    ASSERT_TRUE(n.span2);
    EXPECT_FALSE((n.span1 == Span{0, 1} && *n.span2 == Span{2, 3}));
    EXPECT_FALSE((n.span1 == Span{2, 3} && *n.span2 == Span{0, 1}));
    EXPECT_NE(n.span1, *n.span2);
  }
}

TEST(SamplePairs, ClosestUnattachedPicksNearestCandidateFirst) {
  // predicate at 5 with arguments 3 and 9; unattached candidates at 4 and 1
  const auto s = sentence_with(10, {{tok(5), tok(3), "ARG0"}, {tok(5), tok(9), "ARG1"}},
                               std::vector<Span>{tok(5), tok(3), tok(9), tok(4), tok(1)});
  const auto out = sample_negative_pairs(s, PairMode::closest_unattached, 1.0, 0);
  ASSERT_EQ(out.negatives.size(), 2u);
  EXPECT_EQ(out.negatives[0].span1, tok(5));
  EXPECT_EQ(*out.negatives[0].span2, tok(4));
  EXPECT_EQ(*out.negatives[1].span2, tok(1));

  const auto half = sample_negative_pairs(s, PairMode::closest_unattached, 0.5, 0);
  ASSERT_EQ(half.negatives.size(), 1u);
  EXPECT_EQ(*half.negatives[0].span2, tok(4));
}

TEST(SamplePairs, ClosestTiesBreakByStartIndex) {
  // tokens 4 and 6 are both at distance 1 from the predicate at 5
  const auto s = sentence_with(8, {{tok(5), tok(1), "A"}}, std::vector<Span>{tok(1), tok(4), tok(5), tok(6)});
  const auto out = sample_negative_pairs(s, PairMode::closest_unattached, 2.0, 0);
  ASSERT_EQ(out.negatives.size(), 2u);
  EXPECT_EQ(*out.negatives[0].span2, tok(4));
  EXPECT_EQ(*out.negatives[1].span2, tok(6));
}

TEST(SamplePairs, PerSentenceScopePoolsPredicates) {
  const auto s = sentence_with(10, {{tok(2), tok(0), "A"}, {tok(7), tok(9), "A"}, {tok(7), tok(5), "B"}});
  const auto per_pred = sample_negative_pairs(s, PairMode::closest_unattached, 1.0, 0, PairScope::per_predicate);
  ASSERT_EQ(per_pred.negatives.size(), 3u);
  std::size_t from_two = 0;
  for (const auto& n : per_pred.negatives) from_two += n.span1 == tok(2);
  EXPECT_EQ(from_two, 1u);
  const auto per_sent = sample_negative_pairs(s, PairMode::closest_unattached, 1.0, 0, PairScope::per_sentence);
  EXPECT_EQ(per_sent.negatives.size(), 3u);
}

TEST(SamplePairs, ZeroRatioGivesNothing) {
  const auto s = sentence_with(4, {{tok(0), tok(2), "dep"}});
  EXPECT_TRUE(sample_negative_pairs(s, PairMode::random_unattached, 0.0, 1).negatives.empty());
  EXPECT_TRUE(sample_negative_pairs(s, PairMode::closest_unattached, 0.0, 1).negatives.empty());
  EXPECT_TRUE(sample_negative_spans(s, SpanStrategy::random_spans, 0.0, 1).negatives.empty());
}

TEST(SamplePairs, PropertyNeverReturnsAttachedPairs) {
  auto rng = make_rng(99);
  for (int trial = 0; trial < 200; ++trial) {
    const auto T = static_cast<std::uint32_t>(3 + uniform_index(rng, 8));
    std::vector<PositiveUnit> units;
    std::set<std::pair<Span, Span>> attached;
    for (std::size_t k = 0; k < 1 + uniform_index(rng, 3); ++k) {
      const auto a = static_cast<std::uint32_t>(uniform_index(rng, T));
      auto b = static_cast<std::uint32_t>(uniform_index(rng, T));
      if (a == b) b = (b + 1) % T;
      units.push_back({tok(a), tok(b), "r"});
      attached.insert({tok(a), tok(b)});
      attached.insert({tok(b), tok(a)});
    }
    const auto s = sentence_with(T, units);
    for (auto mode : {PairMode::random_unattached, PairMode::closest_unattached}) {
      const auto out = sample_negative_pairs(s, mode, 1.0, static_cast<std::uint64_t>(trial));
      for (const auto& n : out.negatives) EXPECT_FALSE(attached.count({n.span1, *n.span2}));
    }
  }
}

TEST(BuildTask, AssignsIdsAndLabels) {
  const auto s = sentence_with(5, {{Span{0, 1}, {}, "A"}}, std::vector<Span>{{0, 1}, {2, 4}});
  const auto neg = sample_negative_spans(s, SpanStrategy::from_candidates, 1.0, 0);
  const auto ex = build_task_examples(s, neg);
  ASSERT_EQ(ex.size(), 2u);
  EXPECT_EQ(ex[0].id, "s:p0");
  EXPECT_EQ(ex[0].gold, std::optional<std::string>("A"));
  EXPECT_EQ(ex[1].id, "s:n0");
  EXPECT_EQ(ex[1].span1, (Span{2, 4}));
  EXPECT_EQ(ex[1].label, 0);
}
