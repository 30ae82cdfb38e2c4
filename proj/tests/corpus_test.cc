/*
 * Copyright 2026 The QAC Context Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <gtest/gtest.h>

#include <sstream>

#include "oracles.h"
#include "qac/corpus.h"
#include "qac/synthetic.h"

namespace qac {
namespace {

constexpr std::int64_t kMin = 60'000;

LogEvent event(std::string user, std::int64_t t, std::string query, std::string prefix = "",
               std::vector<std::string> shown = {}, bool clicked = false) {
  return {std::move(user), t, std::move(query), std::move(prefix), std::move(shown), clicked};
}

TEST(Normalize, LowercasesAndStripsPunctuation) {
  const auto q = normalize("iPhone XS-Case!");
  EXPECT_EQ(q.text, "iphone xs case");
  EXPECT_EQ(q.tokens, (std::vector<std::string>{"iphone", "xs", "case"}));
}

TEST(Normalize, CollapsesWhitespaceAndTrims) {
  EXPECT_EQ(normalize("  NIKE!!   air\t\tmax  ").text, "nike air max");
  EXPECT_EQ(normalize("NIKE!!").text, "nike");
}

TEST(Normalize, NoAlphanumericsIsEmpty) {
  EXPECT_TRUE(normalize("!!! ---").empty());
  EXPECT_TRUE(normalize("").tokens.empty());
}

TEST(Normalize, Idempotent) {
  Rng rng(3);
  for (int i = 0; i < 500; ++i) {
    std::string raw;
    const auto len = rng.below(20);
    for (std::size_t c = 0; c < len; ++c) raw.push_back(static_cast<char>(32 + rng.below(95)));
    const auto once = normalize(raw);
    EXPECT_EQ(normalize(once.text), once) << raw;
    EXPECT_EQ(from_normalized(once.text), once);
  }
}

TEST(Segment, SplitsAtThirtyMinuteGap) {
  const std::vector<LogEvent> events = {
      event("u", 0, "a"), event("u", 29 * kMin, "b"), event("u", 58 * kMin, "c"),
      event("u", 90 * kMin, "d")};
  const auto sessions = segment(events);
  ASSERT_EQ(sessions.size(), 2u);
  EXPECT_EQ(sessions[0].queries.size(), 3u);
  EXPECT_EQ(sessions[1].queries.size(), 1u);
  EXPECT_EQ(sessions[0].session_id, "u/0");
  EXPECT_EQ(sessions[1].session_id, "u/1");
}

TEST(Segment, GapOfExactlyBoundaryStartsNewSession) {
  const std::vector<LogEvent> events = {event("u", 0, "a"), event("u", 30 * kMin, "b")};
  EXPECT_EQ(segment(events).size(), 2u);
  EXPECT_EQ(segment(events, 31).size(), 1u);
}

TEST(Segment, OrdersByUserThenTimeAndDropsEmptyQueries) {
  const std::vector<LogEvent> events = {event("v", 5, "x"), event("u", 9, "late"),
                                        event("u", 1, "early"), event("u", 3, "?!")};
  const auto sessions = segment(events);
  ASSERT_EQ(sessions.size(), 2u);
  EXPECT_EQ(sessions[0].user_id, "u");
  ASSERT_EQ(sessions[0].queries.size(), 2u);
  EXPECT_EQ(sessions[0].queries[0].query.text, "early");
  EXPECT_EQ(sessions[0].queries[0].event_index, 2u);
  EXPECT_EQ(sessions[1].user_id, "v");
}

TEST(Segment, PropertiesOnSyntheticLog) {
  auto spec = default_synthetic_spec();
  spec.users = 60;
  const auto events = generate_synthetic_log(spec, 5);
  const auto sessions = segment(events);
  std::size_t queries = 0;
  std::vector<bool> used(events.size(), false);
  for (std::size_t i = 0; i < sessions.size(); ++i) {
    const auto& s = sessions[i];
    queries += s.queries.size();
    for (std::size_t k = 0; k < s.queries.size(); ++k) {
      EXPECT_FALSE(used[s.queries[k].event_index]);
      used[s.queries[k].event_index] = true;
      if (k > 0) {
        EXPECT_LT(s.queries[k].timestamp_ms - s.queries[k - 1].timestamp_ms, 30 * kMin);
      }
    }
    if (i > 0 && sessions[i - 1].user_id == s.user_id) {
      EXPECT_GE(s.queries.front().timestamp_ms - sessions[i - 1].queries.back().timestamp_ms,
                30 * kMin);
    }
  }
  EXPECT_EQ(queries, events.size());
  EXPECT_EQ(segment(events), sessions);
}

TEST(TrainingDocs, JoinsSessionQueriesAndSkipsSingletons) {
  const std::vector<LogEvent> events = {event("u", 0, "iPhone"), event("u", kMin, "iphone XS case"),
                                        event("w", 0, "lonely")};
  const auto docs = build_training_docs(segment(events));
  ASSERT_EQ(docs.size(), 1u);
  EXPECT_EQ(docs[0].text, "iphone iphone xs case");
}

TEST(Impressions, PositiveNegativesAndContext) {
  const std::vector<LogEvent> events = {
      event("u", 0, "nike", "ni", {"nike", "nintendo"}, true),
      event("u", kMin, "Adidas Shoes", "ad", {"adidas", "Adidas shoes", "adidas shoes", "apple"},
            true),
  };
  const auto sessions = segment(events);
  const auto set = build_impressions(sessions, events, 10);
  ASSERT_EQ(set.impressions.size(), 2u);
  EXPECT_EQ(set.skipped, 0u);
  const auto& second = set.impressions[1];
  EXPECT_EQ(second.group_id, 11u);
  EXPECT_EQ(second.step, 2);
  EXPECT_EQ(second.prefix, "ad");
  ASSERT_EQ(second.context.size(), 1u);
  EXPECT_EQ(second.context[0].text, "nike");
  // "apple" fails the prefix; the duplicate "adidas shoes" collapses.
  ASSERT_EQ(second.candidates.size(), 2u);
  EXPECT_EQ(second.candidates[0].query.text, "adidas");
  EXPECT_EQ(second.candidates[0].label, 0);
  EXPECT_EQ(second.candidates[1].label, 1);
  EXPECT_EQ(second.positive_index(), 1);
  EXPECT_FALSE(set.impressions[0].has_context());
}

TEST(Impressions, SkipsWhenPositiveMissingOrPrefixUnusable) {
  const std::vector<LogEvent> events = {
      event("u", 0, "nike", "ni", {"nintendo"}, true),     // positive not shown
      event("u", 1, "nike", "", {"nike"}, true),           // empty prefix
      event("u", 2, "nike", "ad", {"adidas"}, true),       // prefix mismatch
      event("u", 3, "nike", "ni", {"nike"}, false),        // not clicked: no impression
  };
  const auto set = build_impressions(segment(events), events);
  EXPECT_TRUE(set.impressions.empty());
  EXPECT_EQ(set.skipped, 3u);
}

TEST(Impressions, ExactlyOnePositiveOnSyntheticLog) {
  auto spec = default_synthetic_spec();
  spec.users = 40;
  const auto events = generate_synthetic_log(spec, 9);
  const auto set = build_impressions(segment(events), events);
  ASSERT_FALSE(set.impressions.empty());
  for (const auto& imp : set.impressions) {
    int positives = 0;
    for (const auto& c : imp.candidates) {
      positives += c.label;
      EXPECT_TRUE(matches_prefix(c.query.text, imp.prefix));
    }
    EXPECT_EQ(positives, 1);
    EXPECT_EQ(imp.context.size(), static_cast<std::size_t>(imp.step - 1));
  }
}

TEST(LogFile, RoundTrip) {
  auto spec = default_synthetic_spec();
  spec.users = 10;
  const auto events = generate_synthetic_log(spec, 2);
  std::stringstream buf;
  write_log(buf, events);
  EXPECT_EQ(read_log(buf), events);
}

TEST(LogFile, RejectsReservedSeparators) {
  std::stringstream buf;
  const std::vector<LogEvent> bad = {event("u", 0, "a\tb")};
  EXPECT_THROW(write_log(buf, bad), FormatError);
  const std::vector<LogEvent> pipe = {event("u", 0, "a", "a", {"a|b"}, true)};
  EXPECT_THROW(write_log(buf, pipe), FormatError);
}

TEST(LogFile, RejectsMalformedInput) {
  std::stringstream empty;
  EXPECT_THROW(read_log(empty), FormatError);
  std::stringstream header("wrong\n");
  EXPECT_THROW(read_log(header), FormatError);
  std::stringstream columns(std::string(kLogHeader) + "\nu\t1\tq\n");
  EXPECT_THROW(read_log(columns), FormatError);
  std::stringstream clicked(std::string(kLogHeader) + "\nu\t1\tq\tq\tq\t2\n");
  EXPECT_THROW(read_log(clicked), FormatError);
  std::stringstream ts(std::string(kLogHeader) + "\nu\tx1\tq\tq\tq\t1\n");
  EXPECT_THROW(read_log(ts), FormatError);
}

TEST(JsonLines, SessionAndImpressionRoundTrip) {
  auto spec = default_synthetic_spec();
  spec.users = 20;
  const auto events = generate_synthetic_log(spec, 4);
  const auto sessions = segment(events);
  const auto impressions = build_impressions(sessions, events).impressions;
  const auto dir = oracle::scratch_dir("jsonl");
  write_sessions_file((dir / "s.jsonl").string(), sessions);
  write_impressions_file((dir / "i.jsonl").string(), impressions);
  EXPECT_EQ(read_sessions_file((dir / "s.jsonl").string()), sessions);
  EXPECT_EQ(read_impressions_file((dir / "i.jsonl").string()), impressions);
  EXPECT_THROW(session_from_json_line("{\"user_id\": 3}"), FormatError);
  EXPECT_THROW(impression_from_json_line("not json"), FormatError);
}

TEST(Synthetic, DeterministicAndShapedLikeTheSpec) {
  const auto spec = default_synthetic_spec();
  const auto a = generate_synthetic_log(spec, 7);
  EXPECT_EQ(a, generate_synthetic_log(spec, 7));
  EXPECT_NE(a, generate_synthetic_log(spec, 8));
  const auto sessions = segment(a);
  EXPECT_NEAR(static_cast<double>(sessions.size()), 5000.0, 50.0);
  std::size_t single = 0;
  for (const auto& s : sessions) single += s.queries.size() == 1 ? 1 : 0;
  EXPECT_NEAR(static_cast<double>(single) / sessions.size(), 0.47, 0.03);
}

TEST(Synthetic, RejectsEmptyVocabulary) {
  SyntheticSpec spec;
  EXPECT_THROW(generate_synthetic_log(spec, 1), std::invalid_argument);
  spec.clusters.push_back({"empty", {}, {}, {}});
  EXPECT_THROW(generate_synthetic_log(spec, 1), std::invalid_argument);
}

}  // namespace
}  // namespace qac
