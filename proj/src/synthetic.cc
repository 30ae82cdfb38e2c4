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

#include "qac/synthetic.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <stdexcept>

#include "qac/random.h"

namespace qac {
namespace {

constexpr std::int64_t kMinute = 60'000;

struct UniverseQuery {
  std::string text;
  std::vector<std::string> tokens;
  int cluster = 0;
  double weight = 0.0;
};

struct Universe {
  std::vector<UniverseQuery> queries;
  // Query ids per cluster, and the cumulative weights for sampling.
  std::vector<std::vector<std::size_t>> by_cluster;
  std::vector<std::vector<double>> cumulative;
};

std::size_t sample_cumulative(const std::vector<double>& cumulative, Rng& rng) {
  const double r = rng.uniform() * cumulative.back();
  const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), r);
  return std::min<std::size_t>(it - cumulative.begin(), cumulative.size() - 1);
}

Universe build_universe(const SyntheticSpec& spec, Rng& rng) {
  Universe u;
  u.by_cluster.resize(spec.clusters.size());
  u.cumulative.resize(spec.clusters.size());
  for (std::size_t c = 0; c < spec.clusters.size(); ++c) {
    const auto texts = cluster_queries(spec.clusters[c]);
    std::vector<std::size_t> order(texts.size());
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    double total = 0.0;
    for (std::size_t r = 0; r < order.size(); ++r) {
      UniverseQuery q;
      q.text = texts[order[r]];
      q.tokens = normalize(q.text).tokens;
      q.cluster = static_cast<int>(c);
      q.weight = 1.0 / std::pow(static_cast<double>(r + 1), spec.zipf_exponent);
      total += q.weight;
      u.by_cluster[c].push_back(u.queries.size());
      u.cumulative[c].push_back(total);
      u.queries.push_back(std::move(q));
    }
  }
  return u;
}

bool shares_token(const UniverseQuery& a, const UniverseQuery& b) {
  for (const auto& t : a.tokens) {
    if (std::find(b.tokens.begin(), b.tokens.end(), t) != b.tokens.end()) return true;
  }
  return false;
}

std::size_t sample_reformulation(const Universe& u, std::size_t prev, Rng& rng) {
  const int c = u.queries[prev].cluster;
  std::vector<std::size_t> ids;
  std::vector<double> cumulative;
  double total = 0.0;
  for (const std::size_t id : u.by_cluster[c]) {
    if (id == prev || !shares_token(u.queries[id], u.queries[prev])) continue;
    total += u.queries[id].weight;
    ids.push_back(id);
    cumulative.push_back(total);
  }
  if (ids.empty()) return prev;
  return ids[sample_cumulative(cumulative, rng)];
}

std::string noisy(const std::string& text, Rng& rng) {
  std::string out = text;
  switch (rng.below(3)) {
    case 0:
      for (char& ch : out) {
        if (ch >= 'a' && ch <= 'z') ch = static_cast<char>(ch - 'a' + 'A');
      }
      break;
    case 1:
      std::replace(out.begin(), out.end(), ' ', '-');
      break;
    default:
      out[0] = static_cast<char>(out[0] >= 'a' && out[0] <= 'z' ? out[0] - 'a' + 'A' : out[0]);
      out += "!";
      break;
  }
  return out;
}

// Candidates with the highest true popularity among those matching `prefix`;
// ties by text. The issued query replaces the last slot when missing.
std::vector<std::string> shown_list(const Universe& u, const std::string& prefix,
                                    std::size_t issued, std::size_t n) {
  std::vector<std::size_t> matching;
  for (std::size_t i = 0; i < u.queries.size(); ++i) {
    if (matches_prefix(u.queries[i].text, prefix)) matching.push_back(i);
  }
  std::sort(matching.begin(), matching.end(), [&](std::size_t a, std::size_t b) {
    if (u.queries[a].weight != u.queries[b].weight) return u.queries[a].weight > u.queries[b].weight;
    return u.queries[a].text < u.queries[b].text;
  });
  if (matching.size() > n) matching.resize(n);
  if (std::find(matching.begin(), matching.end(), issued) == matching.end()) {
    matching.back() = issued;
  }
  std::vector<std::string> out;
  out.reserve(matching.size());
  for (const std::size_t id : matching) out.push_back(u.queries[id].text);
  return out;
}

}  // namespace

std::vector<std::string> cluster_queries(const IntentCluster& cluster) {
  std::vector<std::string> out;
  for (const auto& b : cluster.brands) out.push_back(b);
  for (const auto& p : cluster.products) out.push_back(p);
  for (const auto& b : cluster.brands) {
    for (const auto& p : cluster.products) out.push_back(b + " " + p);
  }
  for (const auto& m : cluster.modifiers) {
    for (const auto& p : cluster.products) out.push_back(m + " " + p);
  }
  return out;
}

std::vector<IntentCluster> default_clusters() {
  return {
      {"shoes",
       {"nike", "adidas", "puma", "reebok", "converse"},
       {"shoes", "sneakers", "sandals", "boots", "socks", "shorts"},
       {"mens", "womens", "running", "white"}},
      {"apparel",
       {"levis", "hanes", "carhartt", "patagonia", "columbia"},
       {"jeans", "jacket", "hoodie", "shirt", "sweater", "vest"},
       {"black", "vintage", "large", "wool"}},
      {"tv",
       {"samsung", "sony", "lg", "sharp", "vizio"},
       {"tv", "soundbar", "remote", "projector", "receiver", "speaker"},
       {"smart", "4k", "oled", "wireless"}},
      {"phones",
       {"iphone", "galaxy", "pixel", "motorola", "oneplus"},
       {"case", "charger", "screen", "cable", "battery", "holder"},
       {"xs", "unlocked", "leather", "magnetic"}},
      {"home",
       {"ikea", "kohler", "dyson", "keurig", "pyrex"},
       {"shower", "sheets", "shelf", "lamp", "vacuum", "rug"},
       {"queen", "cotton", "led", "bamboo"}},
      {"kitchen",
       {"kitchenaid", "cuisinart", "lodge", "ninja", "instant"},
       {"mixer", "skillet", "blender", "pot", "knife", "toaster"},
       {"cast", "ceramic", "steel", "nonstick"}},
      {"toys",
       {"lego", "barbie", "hasbro", "nerf", "pokemon"},
       {"set", "doll", "cards", "figure", "blaster", "puzzle"},
       {"rare", "kids", "collector", "mini"}},
      {"auto",
       {"ford", "toyota", "honda", "bosch", "michelin"},
       {"tires", "brakes", "mirror", "wipers", "headlight", "alternator"},
       {"front", "rear", "oem", "winter"}},
  };
}

SyntheticSpec default_synthetic_spec() {
  SyntheticSpec spec;
  spec.clusters = default_clusters();
  return spec;
}

std::vector<LogEvent> generate_synthetic_log(const SyntheticSpec& spec, std::uint64_t seed) {
  if (spec.clusters.empty()) throw std::invalid_argument("synthetic spec has an empty vocabulary");
  for (const auto& c : spec.clusters) {
    if (c.brands.empty() && c.products.empty()) {
      throw std::invalid_argument("synthetic cluster '" + c.name + "' has an empty vocabulary");
    }
  }
  if (spec.shown_candidates < 1) throw std::invalid_argument("shown_candidates must be >= 1");
  if (spec.multi_query_length_weights.empty()) {
    throw std::invalid_argument("multi_query_length_weights must not be empty");
  }

  Rng rng(seed);
  const Universe u = build_universe(spec, rng);
  std::vector<double> length_cumulative;
  double acc = 0.0;
  for (const double w : spec.multi_query_length_weights) length_cumulative.push_back(acc += w);

  std::vector<LogEvent> events;
  const int num_clusters = static_cast<int>(spec.clusters.size());
  for (int user = 0; user < spec.users; ++user) {
    char user_id[16];
    std::snprintf(user_id, sizeof(user_id), "u%05d", user);
    std::int64_t t = spec.start_timestamp_ms + static_cast<std::int64_t>(rng.uniform(0, 360)) * kMinute;

    for (int s = 0; s < spec.sessions_per_user; ++s) {
      int length = 1;
      if (!rng.bernoulli(spec.single_query_fraction)) {
        length = 2 + static_cast<int>(sample_cumulative(length_cumulative, rng));
      }
      int cluster = static_cast<int>(rng.below(num_clusters));
      std::size_t prev = u.by_cluster[cluster][sample_cumulative(u.cumulative[cluster], rng)];

      for (int k = 0; k < length; ++k) {
        std::size_t current = prev;
        if (k > 0) {
          if (rng.bernoulli(spec.intent_switch_prob)) {
            cluster = static_cast<int>(rng.below(num_clusters));
            current = u.by_cluster[cluster][sample_cumulative(u.cumulative[cluster], rng)];
          } else if (rng.bernoulli(spec.reformulation_prob)) {
            current = sample_reformulation(u, prev, rng);
          } else {
            current = u.by_cluster[cluster][sample_cumulative(u.cumulative[cluster], rng)];
          }
          t += static_cast<std::int64_t>(rng.uniform(10'000, 10 * kMinute));
        }
        const UniverseQuery& q = u.queries[current];

        LogEvent e;
        e.user_id = user_id;
        e.timestamp_ms = t;
        e.raw_query = rng.bernoulli(spec.raw_noise_prob) ? noisy(q.text, rng) : q.text;
        e.clicked = rng.bernoulli(spec.click_prob);
        if (e.clicked) {
          const double frac = rng.uniform(spec.prefix_fraction_min, spec.prefix_fraction_max);
          const auto len = static_cast<std::size_t>(std::lround(frac * q.text.size()));
          const std::string prefix = q.text.substr(0, std::clamp<std::size_t>(len, 1, q.text.size()));
          e.prefix = prefix;
          e.shown_candidates = shown_list(u, normalize(prefix).text, current,
                                          static_cast<std::size_t>(spec.shown_candidates));
        }
        events.push_back(std::move(e));
        prev = current;
      }
      t += static_cast<std::int64_t>(rng.uniform(35, 14 * 60)) * kMinute;
    }
  }
  return events;
}

}  // namespace qac
