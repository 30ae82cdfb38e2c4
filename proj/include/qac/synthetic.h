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

#ifndef QAC_SYNTHETIC_H_
#define QAC_SYNTHETIC_H_

#include <cstdint>
#include <string>
#include <vector>

#include "qac/corpus.h"

namespace qac {

/// A shopping intent. Queries are composed from its tokens: a brand, a
/// product, "brand product" and "modifier product".
struct IntentCluster {
  std::string name;
  std::vector<std::string> brands;
  std::vector<std::string> products;
  std::vector<std::string> modifiers;
};

/// Knobs of the synthetic log. Defaults give roughly 5k sessions with 47%
/// single-query sessions and a median of 3 queries among the rest.
struct SyntheticSpec {
  std::vector<IntentCluster> clusters;
  int users = 1000;
  int sessions_per_user = 5;
  double single_query_fraction = 0.47;
  // Relative weights of multi-query session lengths 2, 3, 4, ...
  std::vector<double> multi_query_length_weights = {0.3, 0.3, 0.2, 0.12, 0.08};
  // Probability that a follow-up query edits the previous one (shares a token).
  double reformulation_prob = 0.35;
  // Probability that a follow-up query jumps to a random other intent.
  double intent_switch_prob = 0.1;
  double click_prob = 0.85;
  int shown_candidates = 10;
  // Typed prefix length as a fraction of the query length.
  double prefix_fraction_min = 0.1;
  double prefix_fraction_max = 0.3;
  // Zipf exponent of within-cluster query popularity.
  double zipf_exponent = 1.0;
  // Probability that the raw query text carries casing/punctuation noise.
  double raw_noise_prob = 0.2;
  std::int64_t start_timestamp_ms = 1'546'300'800'000;
};

/// Eight shopping verticals (shoes, apparel, tv, phones, home, kitchen, toys,
/// auto) with overlapping first letters across verticals.
std::vector<IntentCluster> default_clusters();

/// default_clusters() with every other knob at its default.
SyntheticSpec default_synthetic_spec();

/// Every query the generator can emit for `cluster`, in a fixed order.
std::vector<std::string> cluster_queries(const IntentCluster& cluster);

/// Deterministic given `seed`. Throws std::invalid_argument for a spec
/// without clusters or with an empty cluster.
std::vector<LogEvent> generate_synthetic_log(const SyntheticSpec& spec, std::uint64_t seed);

}  // namespace qac

#endif  // QAC_SYNTHETIC_H_
