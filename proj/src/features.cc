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

#include "qac/features.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>

namespace qac {
namespace {

using TokenSet = std::vector<std::string>;

TokenSet token_set(const NormalizedQuery& q) {
  TokenSet s = q.tokens;
  std::sort(s.begin(), s.end());
  s.erase(std::unique(s.begin(), s.end()), s.end());
  return s;
}

std::size_t intersection_size(const TokenSet& a, const TokenSet& b) {
  std::size_t n = 0;
  auto i = a.begin();
  auto j = b.begin();
  while (i != a.end() && j != b.end()) {
    if (*i < *j) {
      ++i;
    } else if (*j < *i) {
      ++j;
    } else {
      ++n;
      ++i;
      ++j;
    }
  }
  return n;
}

double ratio(double num, double den) { return den > 0 ? num / den : 0.0; }

void append(std::vector<FeatureSpec>& out, FeatureGroup group,
            std::initializer_list<const char*> names) {
  for (const char* n : names) out.push_back({n, group});
}

void append_baseline(std::vector<FeatureSpec>& f) {
  append(f, FeatureGroup::kBaseline,
         {"prefix_chars", "prefix_tokens", "candidate_chars", "candidate_tokens", "popularity",
          "log_popularity", "mpc_rank", "prefix_length_ratio", "prefix_at_token_boundary"});
}

void append_textual(std::vector<FeatureSpec>& f) {
  append(f, FeatureGroup::kTextualToken,
         {"ratio_new_terms", "ratio_used_terms", "avg_terms_prev", "median_terms_prev",
          "term_count_trend", "terms_added_from_last", "terms_retained_from_last",
          "terms_removed_from_last", "terms_added_from_all_prev", "term_occurrences_in_prev",
          "used_terms_count", "term_count_delta_from_last", "ratio_added_from_last",
          "ratio_retained_from_last", "ratio_removed_from_last", "ratio_occurrences_in_prev"});
  append(f, FeatureGroup::kTextualQuery,
         {"freq_in_prev", "repeat_flag", "char3_jaccard_last", "char3_jaccard_max",
          "token_jaccard_last", "token_jaccard_max", "bigram_jaccard_last"});
  append(f, FeatureGroup::kTextualSession,
         {"position_in_session", "unique_terms_in_session", "common_terms_in_session"});
}

void append_embedding(std::vector<FeatureSpec>& f) {
  append(f, FeatureGroup::kEmbedding,
         {"user_context_cosine", "prev_query1_cosine", "prev_query2_cosine",
          "prev_query3_cosine"});
  append(f, FeatureGroup::kPresence, {"has_prev_query1", "has_prev_query2", "has_prev_query3"});
}

bool uses_textual(Variant v) { return v == Variant::kTextual || v == Variant::kTextualEmbedding; }

}  // namespace

std::string_view to_string(FeatureGroup group) {
  switch (group) {
    case FeatureGroup::kBaseline: return "baseline";
    case FeatureGroup::kEmbedding: return "embedding";
    case FeatureGroup::kPresence: return "presence";
    case FeatureGroup::kTextualToken: return "textual_token";
    case FeatureGroup::kTextualQuery: return "textual_query";
    case FeatureGroup::kTextualSession: return "textual_session";
  }
  return "unknown";
}

std::string_view to_string(Variant variant) {
  switch (variant) {
    case Variant::kBaseline: return "baseline";
    case Variant::kTextual: return "textual";
    case Variant::kEmbedding: return "embedding";
    case Variant::kTextualEmbedding: return "textual_embedding";
  }
  return "unknown";
}

std::optional<Variant> parse_variant(std::string_view name) {
  for (const Variant v : kAllVariants) {
    if (to_string(v) == name) return v;
  }
  return std::nullopt;
}

bool uses_embeddings(Variant v) {
  return v == Variant::kEmbedding || v == Variant::kTextualEmbedding;
}

int FeatureSchema::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < features.size(); ++i) {
    if (features[i].name == name) return static_cast<int>(i);
  }
  return -1;
}

FeatureSchema schema_for(Variant variant) {
  FeatureSchema schema;
  schema.version = std::string(kFeatureSetVersion) + "/" + std::string(to_string(variant));
  append_baseline(schema.features);
  if (uses_textual(variant)) append_textual(schema.features);
  if (uses_embeddings(variant)) append_embedding(schema.features);
  return schema;
}

ContextVectors context_vectors(std::span<const NormalizedQuery> context,
                               const EmbeddingModel& model) {
  ContextVectors cv;
  cv.context = context_vector(model, context);
  for (std::size_t k = 1; k <= kPresenceFeatureCount && k <= context.size(); ++k) {
    cv.previous.push_back(query_vector(model, context[context.size() - k]));
  }
  return cv;
}

EmbeddingFeatures embedding_features(const ContextVectors& context,
                                     const Vector<float>& candidate_vector) {
  EmbeddingFeatures f;
  if (context.previous.empty()) return f;
  f.cosines[0] = cosine(context.context, candidate_vector);
  for (std::size_t k = 0; k < context.previous.size() && k < kPresenceFeatureCount; ++k) {
    f.cosines[k + 1] = cosine(context.previous[k], candidate_vector);
    f.presence[k] = 1.0;
  }
  return f;
}

EmbeddingFeatures embedding_features(std::span<const NormalizedQuery> context,
                                     const NormalizedQuery& candidate,
                                     const EmbeddingModel& model) {
  return embedding_features(context_vectors(context, model), query_vector(model, candidate));
}

std::array<double, kTokenFeatureCount> token_features(std::span<const NormalizedQuery> context,
                                                      const NormalizedQuery& candidate) {
  std::array<double, kTokenFeatureCount> f{};
  if (context.empty()) return f;

  const TokenSet cand = token_set(candidate);
  const TokenSet last = token_set(context.back());
  TokenSet prev;
  std::vector<double> lengths;
  std::map<std::string, int> occurrences;
  double context_tokens = 0;
  for (const auto& q : context) {
    prev.insert(prev.end(), q.tokens.begin(), q.tokens.end());
    lengths.push_back(static_cast<double>(q.tokens.size()));
    for (const auto& t : q.tokens) ++occurrences[t];
    context_tokens += static_cast<double>(q.tokens.size());
  }
  std::sort(prev.begin(), prev.end());
  prev.erase(std::unique(prev.begin(), prev.end()), prev.end());

  const auto nq = static_cast<double>(cand.size());
  const auto used = static_cast<double>(intersection_size(cand, prev));
  const double added_all = nq - used;
  const auto retained = static_cast<double>(intersection_size(cand, last));
  const double added_last = nq - retained;
  const double removed_last = static_cast<double>(last.size()) - retained;

  const double mean = std::accumulate(lengths.begin(), lengths.end(), 0.0) / lengths.size();
  std::vector<double> sorted = lengths;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t m = sorted.size();
  const double median = m % 2 ? sorted[m / 2] : 0.5 * (sorted[m / 2 - 1] + sorted[m / 2]);

  double trend = 0.0;
  if (m >= 2) {
    const double xbar = 0.5 * static_cast<double>(m - 1);
    double num = 0.0;
    for (std::size_t i = 0; i < m; ++i) num += (static_cast<double>(i) - xbar) * (lengths[i] - mean);
    trend = num > 0 ? 1.0 : (num < 0 ? -1.0 : 0.0);
  }

  double occ = 0.0;
  for (const auto& t : cand) {
    const auto it = occurrences.find(t);
    if (it != occurrences.end()) occ += it->second;
  }

  f[0] = ratio(added_all, nq);
  f[1] = ratio(used, nq);
  f[2] = mean;
  f[3] = median;
  f[4] = trend;
  f[5] = added_last;
  f[6] = retained;
  f[7] = removed_last;
  f[8] = added_all;
  f[9] = occ;
  f[10] = used;
  f[11] = static_cast<double>(candidate.tokens.size()) -
          static_cast<double>(context.back().tokens.size());
  f[12] = ratio(added_last, nq);
  f[13] = ratio(retained, nq);
  f[14] = ratio(removed_last, static_cast<double>(last.size()));
  f[15] = ratio(occ, context_tokens);
  return f;
}

double jaccard(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  const std::size_t inter = intersection_size(a, b);
  const std::size_t uni = a.size() + b.size() - inter;
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

std::vector<std::string> char_trigram_set(std::string_view text) {
  const std::string padded = "^" + std::string(text) + "$";
  std::vector<std::string> grams;
  if (padded.size() < 3) {
    grams.push_back(padded);
  } else {
    for (std::size_t i = 0; i + 3 <= padded.size(); ++i) grams.push_back(padded.substr(i, 3));
  }
  std::sort(grams.begin(), grams.end());
  grams.erase(std::unique(grams.begin(), grams.end()), grams.end());
  return grams;
}

std::vector<std::string> token_bigram_set(const NormalizedQuery& q) {
  std::vector<std::string> toks;
  toks.reserve(q.tokens.size() + 2);
  toks.push_back("<s>");
  toks.insert(toks.end(), q.tokens.begin(), q.tokens.end());
  toks.push_back("</s>");
  std::vector<std::string> grams;
  for (std::size_t i = 0; i + 1 < toks.size(); ++i) grams.push_back(toks[i] + " " + toks[i + 1]);
  std::sort(grams.begin(), grams.end());
  grams.erase(std::unique(grams.begin(), grams.end()), grams.end());
  return grams;
}

std::array<double, kQueryFeatureCount> query_features(std::span<const NormalizedQuery> context,
                                                      const NormalizedQuery& candidate) {
  std::array<double, kQueryFeatureCount> f{};
  if (context.empty()) return f;
  const auto cand_chars = char_trigram_set(candidate.text);
  const auto cand_tokens = token_set(candidate);
  double freq = 0.0;
  double char_max = 0.0;
  double token_max = 0.0;
  for (const auto& q : context) {
    if (q.text == candidate.text) freq += 1.0;
    char_max = std::max(char_max, jaccard(cand_chars, char_trigram_set(q.text)));
    token_max = std::max(token_max, jaccard(cand_tokens, token_set(q)));
  }
  const NormalizedQuery& last = context.back();
  f[0] = freq;
  f[1] = freq > 0 ? 1.0 : 0.0;
  f[2] = jaccard(cand_chars, char_trigram_set(last.text));
  f[3] = char_max;
  f[4] = jaccard(cand_tokens, token_set(last));
  f[5] = token_max;
  f[6] = jaccard(token_bigram_set(candidate), token_bigram_set(last));
  return f;
}

std::array<double, kSessionFeatureCount> session_features(std::span<const NormalizedQuery> context) {
  std::map<std::string, int> queries_with_token;
  for (const auto& q : context) {
    for (const auto& t : token_set(q)) ++queries_with_token[t];
  }
  double common = 0.0;
  for (const auto& [t, n] : queries_with_token) {
    if (n >= 2) common += 1.0;
  }
  return {static_cast<double>(context.size()) + 1.0,
          static_cast<double>(queries_with_token.size()), common};
}

std::array<double, kBaselineFeatureCount> baseline_features(std::string_view prefix,
                                                            const NormalizedQuery& candidate,
                                                            int mpc_rank,
                                                            std::uint64_t popularity) {
  if (!matches_prefix(candidate.text, prefix)) {
    throw std::invalid_argument("candidate '" + candidate.text + "' does not start with prefix '" +
                                std::string(prefix) + "'");
  }
  const NormalizedQuery p = from_normalized(prefix);
  const auto prefix_chars = static_cast<double>(prefix.size());
  const auto cand_chars = static_cast<double>(candidate.text.size());
  const bool boundary =
      prefix.size() == candidate.text.size() || candidate.text[prefix.size()] == ' ';
  const auto pop = static_cast<double>(popularity);
  return {prefix_chars,
          static_cast<double>(p.tokens.size()),
          cand_chars,
          static_cast<double>(candidate.tokens.size()),
          pop,
          std::log1p(pop),
          static_cast<double>(mpc_rank),
          ratio(prefix_chars, cand_chars),
          boundary ? 1.0 : 0.0};
}

std::vector<int> mpc_ranks(std::span<const NormalizedQuery> candidates, const PrefixIndex& index) {
  std::vector<std::size_t> order(candidates.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<std::uint64_t> pop(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) pop[i] = index.popularity(candidates[i].text);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (pop[a] != pop[b]) return pop[a] > pop[b];
    if (candidates[a].text != candidates[b].text) return candidates[a].text < candidates[b].text;
    return a < b;
  });
  std::vector<int> ranks(candidates.size());
  for (std::size_t r = 0; r < order.size(); ++r) ranks[order[r]] = static_cast<int>(r) + 1;
  return ranks;
}

Eigen::MatrixXd group_features(Variant variant, std::span<const NormalizedQuery> context,
                               std::string_view prefix,
                               std::span<const NormalizedQuery> candidates,
                               const PrefixIndex& index, const EmbeddingModel* model) {
  if (uses_embeddings(variant) && model == nullptr) {
    throw std::invalid_argument("variant " + std::string(to_string(variant)) +
                                " needs an embedding model");
  }
  const std::size_t width = schema_for(variant).size();
  Eigen::MatrixXd out(static_cast<Eigen::Index>(candidates.size()), static_cast<Eigen::Index>(width));
  const std::vector<int> ranks = mpc_ranks(candidates, index);

  std::optional<ContextVectors> cv;
  if (uses_embeddings(variant)) cv = context_vectors(context, *model);
  const auto session = session_features(context);

  for (std::size_t r = 0; r < candidates.size(); ++r) {
    const NormalizedQuery& cand = candidates[r];
    Eigen::Index col = 0;
    auto put = [&](const auto& values) {
      for (const double v : values) out(static_cast<Eigen::Index>(r), col++) = v;
    };
    put(baseline_features(prefix, cand, ranks[r], index.popularity(cand.text)));
    if (uses_textual(variant)) {
      put(token_features(context, cand));
      put(query_features(context, cand));
      put(session);
    }
    if (cv) {
      const EmbeddingFeatures ef = embedding_features(*cv, query_vector(*model, cand));
      put(ef.cosines);
      put(ef.presence);
    }
  }
  return out;
}

ExtractResult extract(std::span<const Impression> impressions, const EmbeddingModel* model,
                      const PrefixIndex& index, Variant variant) {
  ExtractResult result;
  FeatureMatrix& m = result.matrix;
  m.schema = schema_for(variant);

  std::vector<Eigen::MatrixXd> blocks;
  std::size_t total_rows = 0;
  for (const Impression& imp : impressions) {
    int positives = 0;
    for (const auto& c : imp.candidates) positives += c.label == 1 ? 1 : 0;
    if (positives != 1) {
      ++result.skipped;
      continue;
    }
    std::vector<NormalizedQuery> cands;
    cands.reserve(imp.candidates.size());
    for (const auto& c : imp.candidates) cands.push_back(c.query);
    const std::vector<int> ranks = mpc_ranks(cands, index);
    blocks.push_back(group_features(variant, imp.context, imp.prefix, cands, index, model));
    for (std::size_t r = 0; r < cands.size(); ++r) {
      m.labels.push_back(imp.candidates[r].label);
      m.group_ids.push_back(imp.group_id);
      m.mpc_ranks.push_back(ranks[r]);
      m.candidates.push_back(cands[r].text);
    }
    total_rows += cands.size();
    m.group_offsets.push_back(total_rows);
    m.group_has_context.push_back(imp.has_context());
  }

  m.values.resize(static_cast<Eigen::Index>(total_rows), static_cast<Eigen::Index>(m.schema.size()));
  Eigen::Index row = 0;
  for (const auto& b : blocks) {
    m.values.middleRows(row, b.rows()) = b;
    row += b.rows();
  }
  return result;
}

FeatureMatrix context_groups(const FeatureMatrix& matrix) {
  FeatureMatrix out;
  out.schema = matrix.schema;
  std::vector<Eigen::Index> rows;
  for (std::size_t g = 0; g < matrix.groups(); ++g) {
    if (!matrix.group_has_context[g]) continue;
    for (auto r = matrix.group_offsets[g]; r < matrix.group_offsets[g + 1]; ++r) {
      rows.push_back(static_cast<Eigen::Index>(r));
      out.labels.push_back(matrix.labels[r]);
      out.group_ids.push_back(matrix.group_ids[r]);
      out.mpc_ranks.push_back(matrix.mpc_ranks[r]);
      out.candidates.push_back(matrix.candidates[r]);
    }
    out.group_offsets.push_back(rows.size());
    out.group_has_context.push_back(true);
  }
  out.values = matrix.values(rows, Eigen::all);
  return out;
}

}  // namespace qac
