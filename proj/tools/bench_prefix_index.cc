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

// Latency of mpc_top_n over random prefixes of indexed queries.
//
//   bench_prefix_index [--queries N] [--lookups N] [--top-n N] [--seed S]

#include <algorithm>
#include <chrono>
#include <cstdio>

#include "CLI11.hpp"
#include "qac/prefix_index.h"
#include "qac/random.h"

int main(int argc, char** argv) {
  CLI::App app{"MPC prefix index micro-benchmark"};
  std::size_t queries = 200'000;
  std::size_t lookups = 100'000;
  std::size_t top_n = 10;
  std::uint64_t seed = 1;
  app.add_option("--queries", queries)->check(CLI::PositiveNumber);
  app.add_option("--lookups", lookups)->check(CLI::PositiveNumber);
  app.add_option("--top-n", top_n)->check(CLI::PositiveNumber);
  app.add_option("--seed", seed);
  CLI11_PARSE(app, argc, argv);

  qac::Rng rng(seed);
  std::vector<qac::Completion> counts;
  counts.reserve(queries);
  for (std::size_t i = 0; i < queries; ++i) {
    std::string q;
    const auto len = 3 + rng.below(12);
    for (std::size_t c = 0; c < len; ++c) q.push_back(static_cast<char>('a' + rng.below(8)));
    counts.push_back({q, 1 + rng.below(1000)});
  }
  const auto index = qac::PrefixIndex::from_counts(counts);

  std::vector<std::string> prefixes;
  for (std::size_t i = 0; i < lookups; ++i) {
    const auto& q = index.entries()[rng.below(index.size())].query;
    prefixes.push_back(q.substr(0, 1 + rng.below(std::min<std::size_t>(q.size(), 4))));
  }

  std::vector<double> micros;
  micros.reserve(lookups);
  std::size_t returned = 0;
  for (const auto& p : prefixes) {
    const auto start = std::chrono::steady_clock::now();
    returned += index.mpc_top_n(p, top_n).size();
    micros.push_back(
        std::chrono::duration<double, std::micro>(std::chrono::steady_clock::now() - start)
            .count());
  }
  std::sort(micros.begin(), micros.end());
  auto pct = [&](double q) { return micros[static_cast<std::size_t>(q * (micros.size() - 1))]; };
  std::printf("index entries %zu, lookups %zu, results %zu\n", index.size(), lookups, returned);
  std::printf("p50 %.1f us  p90 %.1f us  p99 %.1f us  max %.1f us\n", pct(0.5), pct(0.9),
              pct(0.99), micros.back());
  return 0;
}
