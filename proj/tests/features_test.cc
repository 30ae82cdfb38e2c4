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

#include <set>

#include "oracles.h"
#include "qac/features.h"
#include "qac/synthetic.h"

namespace qac {
namespace {

std::vector<NormalizedQuery> queries(std::initializer_list<const char*> texts) {
  std::vector<NormalizedQuery> out;
  for (const char* t : texts) out.push_back(normalize(t));
  return out;
}

EmbeddingModel frozen_model(std::uint64_t seed) {
  TrainConfig cfg;
  cfg.dim = 8;
  cfg.bucket_count = 211;
  Dictionary dict({{"nike", 9}, {"adidas", 8}, {"shoes", 7}, {"shower", 6}, {"curtain", 5}},
                  cfg.bucket_count, cfg.n_min, cfg.n_max);
  auto model = initialize_model(std::move(dict), cfg);
  Rng rng(seed);
  for (Eigen::Index i = 0; i < model.input.size(); ++i) {
    model.input.data()[i] = static_cast<float>(rng.uniform(-1, 1));
  }
  return model;
}

int col(const FeatureSchema& s, const char* name) {
  const int c = s.index_of(name);
  EXPECT_GE(c, 0) << name;
  return c;
}

TEST(Schema, VariantsSelectFeatureGroups) {
  const auto base = schema_for(Variant::kBaseline);
  EXPECT_EQ(base.size(), kBaselineFeatureCount);
  for (const auto& f : base.features) EXPECT_EQ(f.group, FeatureGroup::kBaseline);

  const auto textual = schema_for(Variant::kTextual);
  EXPECT_EQ(textual.size(), kBaselineFeatureCount + kTokenFeatureCount + kQueryFeatureCount +
                                kSessionFeatureCount);
  const auto emb = schema_for(Variant::kEmbedding);
  EXPECT_EQ(emb.size(), kBaselineFeatureCount + kEmbeddingFeatureCount + kPresenceFeatureCount);

  const auto all = schema_for(Variant::kTextualEmbedding);
  std::set<FeatureGroup> groups;
  std::set<std::string> names;
  for (const auto& f : all.features) {
    groups.insert(f.group);
    names.insert(f.name);
  }
  EXPECT_EQ(groups.size(), 6u);
  EXPECT_EQ(names.size(), all.size());
  EXPECT_EQ(all.size(), textual.size() + kEmbeddingFeatureCount + kPresenceFeatureCount);
  EXPECT_EQ(all.version, "qacfeat-1/textual_embedding");
  EXPECT_EQ(all.index_of("nope"), -1);
}

TEST(Variant, NamesRoundTrip) {
  for (const auto v : kAllVariants) EXPECT_EQ(parse_variant(to_string(v)), v);
  EXPECT_FALSE(parse_variant("mpc").has_value());
  EXPECT_TRUE(uses_embeddings(Variant::kEmbedding));
  EXPECT_FALSE(uses_embeddings(Variant::kTextual));
}

TEST(EmbeddingFeatures, EmptyContextIsAllZero) {
  const auto model = frozen_model(1);
  const auto f = embedding_features({}, normalize("nike"), model);
  for (const double v : f.cosines) EXPECT_EQ(v, 0.0);
  for (const double v : f.presence) EXPECT_EQ(v, 0.0);
}

TEST(EmbeddingFeatures, CandidateEqualToLastQueryHasUnitCosine) {
  const auto model = frozen_model(2);
  const auto ctx = queries({"adidas", "nike shoes"});
  const auto f = embedding_features(ctx, normalize("nike shoes"), model);
  EXPECT_NEAR(f.cosines[1], 1.0, 1e-12);
}

TEST(EmbeddingFeatures, MatchesIndependentRecompute) {
  const auto model = frozen_model(3);
  const auto ctx = queries({"nike", "adidas shoes"});
  const auto cand = normalize("shower curtain");
  const auto f = embedding_features(ctx, cand, model);

  auto vec = [&](const std::vector<std::string>& tokens) {
    Eigen::VectorXd v = Eigen::VectorXd::Zero(model.dim());
    for (const auto& t : tokens) {
      const auto rows = model.dictionary.extract_ngrams(t);
      Eigen::VectorXd tv = Eigen::VectorXd::Zero(model.dim());
      for (const auto r : rows) tv += model.input.row(r).transpose().cast<double>();
      v += tv / static_cast<double>(rows.size());
    }
    return Eigen::VectorXd(v / static_cast<double>(tokens.size()));
  };
  auto cos = [](const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    return a.dot(b) / (a.norm() * b.norm());
  };
  const auto vc = vec({"nike", "adidas", "shoes"});
  const auto vq = vec({"shower", "curtain"});
  EXPECT_NEAR(f.cosines[0], cos(vc, vq), 1e-6);
  EXPECT_NEAR(f.cosines[1], cos(vec({"adidas", "shoes"}), vq), 1e-6);
  EXPECT_NEAR(f.cosines[2], cos(vec({"nike"}), vq), 1e-6);
  EXPECT_EQ(f.cosines[3], 0.0);
  EXPECT_EQ(f.presence, (std::array<double, 3>{1, 1, 0}));
}

TEST(EmbeddingFeatures, UsesOnlyTheLastThreeQueries) {
  const auto model = frozen_model(4);
  const auto five = queries({"shower", "curtain", "nike", "adidas", "shoes"});
  const auto three = queries({"nike", "adidas", "shoes"});
  const auto cand = normalize("nike shoes");
  const auto a = embedding_features(five, cand, model);
  const auto b = embedding_features(three, cand, model);
  for (int k = 1; k < 4; ++k) EXPECT_EQ(a.cosines[k], b.cosines[k]);
  EXPECT_NE(a.cosines[0], b.cosines[0]);
  EXPECT_EQ(a.presence, (std::array<double, 3>{1, 1, 1}));
}

TEST(TokenFeatures, HandCountedOverlap) {
  const auto schema = schema_for(Variant::kTextual);
  const auto ctx = queries({"nike", "adidas"});
  const auto f = token_features(ctx, normalize("adidas shoes"));
  auto at = [&](const char* name) { return f[static_cast<std::size_t>(col(schema, name) - 9)]; };
  EXPECT_DOUBLE_EQ(at("ratio_used_terms"), 0.5);
  EXPECT_DOUBLE_EQ(at("ratio_new_terms"), 0.5);
  EXPECT_DOUBLE_EQ(at("avg_terms_prev"), 1.0);
  EXPECT_DOUBLE_EQ(at("terms_added_from_last"), 1.0);
  EXPECT_DOUBLE_EQ(at("terms_retained_from_last"), 1.0);
  EXPECT_DOUBLE_EQ(at("terms_removed_from_last"), 0.0);
  EXPECT_DOUBLE_EQ(at("term_occurrences_in_prev"), 1.0);
  EXPECT_DOUBLE_EQ(at("term_count_delta_from_last"), 1.0);
}

TEST(TokenFeatures, CandidateEqualToLastQuery) {
  const auto schema = schema_for(Variant::kTextual);
  const auto ctx = queries({"nike", "nike air max"});
  const auto f = token_features(ctx, normalize("nike air max"));
  auto at = [&](const char* name) { return f[static_cast<std::size_t>(col(schema, name) - 9)]; };
  EXPECT_EQ(at("terms_added_from_last"), 0.0);
  EXPECT_EQ(at("terms_removed_from_last"), 0.0);
  EXPECT_EQ(at("terms_retained_from_last"), 3.0);
  EXPECT_EQ(at("term_count_trend"), 1.0);
  EXPECT_EQ(at("median_terms_prev"), 2.0);
}

TEST(TokenFeatures, EmptyContextIsAllZero) {
  for (const double v : token_features({}, normalize("nike"))) EXPECT_EQ(v, 0.0);
}

TEST(QueryFeatures, CandidateEqualToLastQuery) {
  const auto ctx = queries({"adidas", "nike air"});
  const auto f = query_features(ctx, normalize("nike air"));
  EXPECT_EQ(f[0], 1.0);
  EXPECT_EQ(f[1], 1.0);
  for (std::size_t k = 2; k < f.size(); ++k) EXPECT_EQ(f[k], 1.0) << k;
}

TEST(QueryFeatures, DisjointAlphabetsAreZero) {
  const auto ctx = queries({"abc"});
  const auto f = query_features(ctx, normalize("xyz"));
  for (const double v : f) EXPECT_EQ(v, 0.0);
}

TEST(QueryFeatures, TokenJaccardHandCount) {
  const auto schema = schema_for(Variant::kTextual);
  const auto ctx = queries({"iphone"});
  const auto f = query_features(ctx, normalize("iphone case"));
  EXPECT_DOUBLE_EQ(f[static_cast<std::size_t>(col(schema, "token_jaccard_last") - 9 - 16)], 0.5);
  // Bigrams {<s> iphone, iphone </s>} vs {<s> iphone, iphone case, case </s>}.
  EXPECT_DOUBLE_EQ(f[6], 1.0 / 4.0);
}

TEST(Jaccard, PaddedTrigramsAndEdgeCases) {
  EXPECT_EQ(char_trigram_set("ab"), (std::vector<std::string>{"^ab", "ab$"}));
  EXPECT_EQ(char_trigram_set("a"), (std::vector<std::string>{"^a$"}));
  EXPECT_EQ(char_trigram_set(""), (std::vector<std::string>{"^$"}));
  EXPECT_EQ(jaccard({}, {}), 0.0);
  EXPECT_DOUBLE_EQ(jaccard({"a", "b"}, {"b", "c"}), 1.0 / 3.0);
  EXPECT_EQ(token_bigram_set(normalize("a b")),
            (std::vector<std::string>{"<s> a", "a b", "b </s>"}));
}

TEST(SessionFeatures, HandCounts) {
  EXPECT_EQ(session_features({}), (std::array<double, 3>{1, 0, 0}));
  EXPECT_EQ(session_features(queries({"nike", "nike air"})), (std::array<double, 3>{3, 2, 1}));
  EXPECT_EQ(session_features(queries({"a", "a", "a"})), (std::array<double, 3>{4, 1, 1}));
}

TEST(BaselineFeatures, DirectComputation) {
  const auto f = baseline_features("sh", normalize("shoes"), 1, 5);
  EXPECT_EQ(f, (std::array<double, 9>{2, 1, 5, 1, 5, std::log(6.0), 1, 0.4, 0}));
  const auto same = baseline_features("nike air", normalize("nike air"), 3, 0);
  EXPECT_EQ(same[5], 0.0);
  EXPECT_EQ(same[7], 1.0);
  EXPECT_EQ(same[8], 1.0);
  EXPECT_EQ(baseline_features("nike", normalize("nike air"), 1, 1)[8], 1.0);
  EXPECT_THROW(baseline_features("ad", normalize("nike"), 1, 1), std::invalid_argument);
}

TEST(MpcRanks, PopularityThenText) {
  const auto index = PrefixIndex::from_counts({{"sha", 3}, {"shb", 3}, {"shc", 9}});
  const auto cands = queries({"shb", "sha", "shc", "shd"});
  EXPECT_EQ(mpc_ranks(cands, index), (std::vector<int>{3, 2, 1, 4}));
}

struct Fixture {
  std::vector<Impression> impressions;
  PrefixIndex index;
  EmbeddingModel model;
};

Fixture synthetic_fixture(int users) {
  auto spec = default_synthetic_spec();
  spec.users = users;
  const auto events = generate_synthetic_log(spec, 13);
  const auto sessions = segment(events);
  Fixture fx;
  fx.impressions = build_impressions(sessions, events).impressions;
  std::vector<NormalizedQuery> issued;
  for (const auto& s : sessions) {
    for (const auto& q : s.queries) issued.push_back(q.query);
  }
  fx.index = PrefixIndex::build(issued);
  TrainConfig cfg;
  cfg.dim = 16;
  cfg.min_count = 2;
  cfg.bucket_count = 5000;
  cfg.epochs = 1;
  fx.model = train(build_training_docs(sessions), cfg);
  return fx;
}

TEST(Extract, RowsGroupsAndLabels) {
  const auto fx = synthetic_fixture(40);
  for (const auto v : kAllVariants) {
    const auto result = extract(fx.impressions, &fx.model, fx.index, v);
    const auto& m = result.matrix;
    std::size_t expected_rows = 0;
    for (const auto& imp : fx.impressions) expected_rows += imp.candidates.size();
    EXPECT_EQ(m.rows(), expected_rows);
    EXPECT_EQ(m.values.rows(), static_cast<Eigen::Index>(expected_rows));
    EXPECT_EQ(m.values.cols(), static_cast<Eigen::Index>(schema_for(v).size()));
    EXPECT_EQ(m.groups(), fx.impressions.size());
    EXPECT_EQ(result.skipped, 0u);
    for (std::size_t g = 0; g < m.groups(); ++g) {
      int sum = 0;
      for (auto r = m.group_offsets[g]; r < m.group_offsets[g + 1]; ++r) sum += m.labels[r];
      EXPECT_EQ(sum, 1);
      EXPECT_EQ(m.group_has_context[g], fx.impressions[g].has_context());
    }
    EXPECT_TRUE(m.values.allFinite());
  }
}

TEST(Extract, PureAndPermutationEquivariant) {
  const auto fx = synthetic_fixture(20);
  const auto v = Variant::kTextualEmbedding;
  const auto a = extract(fx.impressions, &fx.model, fx.index, v).matrix;
  const auto b = extract(fx.impressions, &fx.model, fx.index, v).matrix;
  EXPECT_EQ(a.values, b.values);

  Rng rng(5);
  for (const auto& imp : fx.impressions) {
    if (imp.candidates.size() < 3) continue;
    auto shuffled = imp;
    std::vector<std::size_t> perm(imp.candidates.size());
    std::iota(perm.begin(), perm.end(), 0);
    for (std::size_t i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
    for (std::size_t i = 0; i < perm.size(); ++i) shuffled.candidates[i] = imp.candidates[perm[i]];
    const std::vector<Impression> one = {imp}, other = {shuffled};
    const auto m1 = extract(one, &fx.model, fx.index, v).matrix;
    const auto m2 = extract(other, &fx.model, fx.index, v).matrix;
    for (std::size_t i = 0; i < perm.size(); ++i) {
      EXPECT_EQ(m2.values.row(static_cast<Eigen::Index>(i)),
                m1.values.row(static_cast<Eigen::Index>(perm[i])));
      EXPECT_EQ(m2.labels[i], m1.labels[perm[i]]);
    }
  }
}

TEST(Extract, SkipsImpressionsWithoutOnePositive) {
  const auto fx = synthetic_fixture(10);
  auto bad = fx.impressions;
  bad[0].candidates[static_cast<std::size_t>(bad[0].positive_index())].label = 0;
  const auto result = extract(bad, &fx.model, fx.index, Variant::kBaseline);
  EXPECT_EQ(result.skipped, 1u);
  EXPECT_EQ(result.matrix.groups(), bad.size() - 1);
}

TEST(Extract, EmbeddingVariantNeedsModel) {
  const auto fx = synthetic_fixture(5);
  EXPECT_THROW(extract(fx.impressions, nullptr, fx.index, Variant::kEmbedding),
               std::invalid_argument);
  EXPECT_NO_THROW(extract(fx.impressions, nullptr, fx.index, Variant::kTextual));
}

TEST(Extract, FuzzedQueriesStayFiniteAndInRange) {
  const auto model = frozen_model(8);
  const auto schema = schema_for(Variant::kTextualEmbedding);
  Rng rng(17);
  auto random_query = [&] {
    std::string raw;
    const auto len = rng.below(16);
    for (std::size_t i = 0; i < len; ++i) raw.push_back(static_cast<char>(1 + rng.below(255)));
    return normalize(raw);
  };
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<NormalizedQuery> ctx;
    for (std::size_t k = 0, n = rng.below(5); k < n; ++k) {
      auto q = random_query();
      if (!q.empty()) ctx.push_back(q);
    }
    auto cand = random_query();
    if (cand.empty()) cand = normalize("x");
    const std::string prefix = cand.text.substr(0, 1);
    const std::vector<NormalizedQuery> cands = {cand};
    const auto rows = group_features(Variant::kTextualEmbedding, ctx, prefix, cands,
                                     PrefixIndex(), &model);
    ASSERT_TRUE(rows.allFinite());
    for (std::size_t c = 0; c < schema.size(); ++c) {
      const auto& name = schema.features[c].name;
      const double v = rows(0, static_cast<Eigen::Index>(c));
      if (name.find("jaccard") != std::string::npos || name.rfind("ratio_", 0) == 0) {
        EXPECT_GE(v, 0.0) << name;
        EXPECT_LE(v, 1.0) << name;
      }
      if (name.find("cosine") != std::string::npos) {
        EXPECT_GE(v, -1.0) << name;
        EXPECT_LE(v, 1.0) << name;
      }
    }
  }
}

TEST(ContextGroups, KeepsOnlyGroupsWithContext) {
  const auto fx = synthetic_fixture(20);
  const auto m = extract(fx.impressions, &fx.model, fx.index, Variant::kEmbedding).matrix;
  const auto c = context_groups(m);
  std::size_t expected = 0;
  for (std::size_t g = 0; g < m.groups(); ++g) expected += m.group_has_context[g] ? 1 : 0;
  ASSERT_EQ(c.groups(), expected);
  ASSERT_GT(expected, 0u);
  EXPECT_EQ(c.values.rows(), static_cast<Eigen::Index>(c.rows()));
  const int flag = c.schema.index_of("has_prev_query1");
  for (Eigen::Index r = 0; r < c.values.rows(); ++r) EXPECT_EQ(c.values(r, flag), 1.0);
}

}  // namespace
}  // namespace qac
