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

#ifndef QAC_FEATURES_H_
#define QAC_FEATURES_H_

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "qac/corpus.h"
#include "qac/prefix_index.h"
#include "qac/subword.h"

namespace qac {

enum class FeatureGroup { kBaseline, kEmbedding, kPresence, kTextualToken, kTextualQuery, kTextualSession };

std::string_view to_string(FeatureGroup group);

/// The four ranker variants: which feature groups each one sees.
enum class Variant { kBaseline, kTextual, kEmbedding, kTextualEmbedding };

inline constexpr std::array<Variant, 4> kAllVariants = {
    Variant::kBaseline, Variant::kTextual, Variant::kEmbedding, Variant::kTextualEmbedding};

std::string_view to_string(Variant variant);
/// Accepts "baseline", "textual", "embedding", "textual_embedding".
std::optional<Variant> parse_variant(std::string_view name);

bool uses_embeddings(Variant variant);

struct FeatureSpec {
  std::string name;
  FeatureGroup group;

  friend bool operator==(const FeatureSpec&, const FeatureSpec&) = default;
};

struct FeatureSchema {
  std::string version;
  std::vector<FeatureSpec> features;

  std::size_t size() const { return features.size(); }
  /// Column of `name`, or -1.
  int index_of(std::string_view name) const;

  friend bool operator==(const FeatureSchema&, const FeatureSchema&) = default;
};

inline constexpr std::string_view kFeatureSetVersion = "qacfeat-1";

/// "qacfeat-1/<variant>" with the variant's groups in a fixed order:
/// baseline, textual (token, query, session), embedding, presence.
FeatureSchema schema_for(Variant variant);

inline constexpr std::size_t kBaselineFeatureCount = 9;
inline constexpr std::size_t kEmbeddingFeatureCount = 4;
inline constexpr std::size_t kPresenceFeatureCount = 3;
inline constexpr std::size_t kTokenFeatureCount = 16;
inline constexpr std::size_t kQueryFeatureCount = 7;
inline constexpr std::size_t kSessionFeatureCount = 3;

struct EmbeddingFeatures {
  // user_context_cosine, prev_query{1,2,3}_cosine.
  std::array<double, kEmbeddingFeatureCount> cosines{};
  // has_prev_query{1,2,3}.
  std::array<double, kPresenceFeatureCount> presence{};
};

/// Context-side vectors, computed once per impression.
struct ContextVectors {
  Vector<float> context;
  // Vectors of q_{T-1}, q_{T-2}, q_{T-3} when present.
  std::vector<Vector<float>> previous;
};

ContextVectors context_vectors(std::span<const NormalizedQuery> context,
                               const EmbeddingModel& model);

EmbeddingFeatures embedding_features(const ContextVectors& context,
                                     const Vector<float>& candidate_vector);
EmbeddingFeatures embedding_features(std::span<const NormalizedQuery> context,
                                     const NormalizedQuery& candidate, const EmbeddingModel& model);

std::array<double, kTokenFeatureCount> token_features(std::span<const NormalizedQuery> context,
                                                      const NormalizedQuery& candidate);
std::array<double, kQueryFeatureCount> query_features(std::span<const NormalizedQuery> context,
                                                      const NormalizedQuery& candidate);
std::array<double, kSessionFeatureCount> session_features(std::span<const NormalizedQuery> context);

/// Throws std::invalid_argument when the candidate does not start with the
/// prefix.
std::array<double, kBaselineFeatureCount> baseline_features(std::string_view prefix,
                                                            const NormalizedQuery& candidate,
                                                            int mpc_rank,
                                                            std::uint64_t popularity);

/// Jaccard of two sets given as sorted unique vectors; 0 when both are empty.
double jaccard(const std::vector<std::string>& a, const std::vector<std::string>& b);

/// Sorted unique 3-grams of "^text$" (whole padded text when shorter).
std::vector<std::string> char_trigram_set(std::string_view text);
/// Sorted unique token bigrams of "<s> tokens </s>".
std::vector<std::string> token_bigram_set(const NormalizedQuery& q);

/// Rows aligned to a schema, grouped by impression.
struct FeatureMatrix {
  FeatureSchema schema;
  Eigen::MatrixXd values;  // rows x schema.size()
  std::vector<int> labels;
  std::vector<std::uint64_t> group_ids;
  std::vector<int> mpc_ranks;  // 1-based within the group
  std::vector<std::string> candidates;
  // Row offsets of each group; group g spans [offsets[g], offsets[g+1]).
  std::vector<std::size_t> group_offsets = {0};
  std::vector<bool> group_has_context;

  std::size_t rows() const { return labels.size(); }
  std::size_t groups() const { return group_offsets.size() - 1; }
};

/// 1-based MPC rank of each candidate in the given order: popularity
/// descending, ties by text.
std::vector<int> mpc_ranks(std::span<const NormalizedQuery> candidates, const PrefixIndex& index);

/// Feature rows for one impression-shaped input (no labels needed). Rows
/// follow `candidates` order.
Eigen::MatrixXd group_features(Variant variant, std::span<const NormalizedQuery> context,
                               std::string_view prefix,
                               std::span<const NormalizedQuery> candidates,
                               const PrefixIndex& index, const EmbeddingModel* model);

struct ExtractResult {
  FeatureMatrix matrix;
  // Impressions skipped because they lack exactly one positive.
  std::size_t skipped = 0;
};

/// Rows follow each impression's candidate order. `model` may be null for
/// variants without embedding features; otherwise std::invalid_argument.
ExtractResult extract(std::span<const Impression> impressions, const EmbeddingModel* model,
                      const PrefixIndex& index, Variant variant);

/// The groups that carry session context, in their original order.
FeatureMatrix context_groups(const FeatureMatrix& matrix);

}  // namespace qac

#endif  // QAC_FEATURES_H_
