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

#include "qac/prefix_index.h"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <map>
#include <queue>
#include <stdexcept>

#include "binary_io.h"

namespace qac {
namespace {

// Strict weak order used for MPC results: more popular first, then text.
bool ranks_before(const Completion& a, const Completion& b) {
  if (a.popularity != b.popularity) return a.popularity > b.popularity;
  return a.query < b.query;
}

}  // namespace

PrefixIndex PrefixIndex::build(std::span<const NormalizedQuery> queries,
                               std::uint64_t min_popularity) {
  std::map<std::string, std::uint64_t> counts;
  for (const auto& q : queries) {
    if (!q.empty()) ++counts[q.text];
  }
  PrefixIndex index;
  for (auto& [text, count] : counts) {
    if (count < std::max<std::uint64_t>(1, min_popularity)) continue;
    index.entries_.push_back({text, count});
    index.total_ += count;
  }
  return index;
}

PrefixIndex PrefixIndex::from_counts(std::vector<Completion> counts) {
  std::map<std::string, std::uint64_t> merged;
  for (auto& c : counts) {
    if (c.popularity == 0) throw std::invalid_argument("popularity must be >= 1: " + c.query);
    if (c.query.empty()) throw std::invalid_argument("empty query in index");
    merged[std::move(c.query)] += c.popularity;
  }
  PrefixIndex index;
  for (auto& [text, count] : merged) {
    index.entries_.push_back({text, count});
    index.total_ += count;
  }
  return index;
}

std::pair<std::size_t, std::size_t> PrefixIndex::prefix_range(std::string_view prefix) const {
  const auto lo = std::lower_bound(
      entries_.begin(), entries_.end(), prefix,
      [](const Completion& c, std::string_view p) { return std::string_view(c.query) < p; });
  // Entries sharing the prefix are contiguous from lo; find the first that
  // does not start with it.
  const auto hi = std::partition_point(lo, entries_.end(), [&](const Completion& c) {
    return matches_prefix(c.query, prefix);
  });
  return {static_cast<std::size_t>(lo - entries_.begin()),
          static_cast<std::size_t>(hi - entries_.begin())};
}

std::vector<Completion> PrefixIndex::mpc_top_n(std::string_view prefix, std::size_t n) const {
  if (n == 0) throw std::invalid_argument("n must be >= 1");
  const auto [begin, end] = prefix_range(prefix);

  // Max-heap on "ranks worse", so the top is the weakest kept completion.
  auto worse_on_top = [this](std::size_t a, std::size_t b) {
    return ranks_before(entries_[a], entries_[b]);
  };
  std::priority_queue<std::size_t, std::vector<std::size_t>, decltype(worse_on_top)> heap(
      worse_on_top);
  for (std::size_t i = begin; i < end; ++i) {
    if (heap.size() < n) {
      heap.push(i);
    } else if (ranks_before(entries_[i], entries_[heap.top()])) {
      heap.pop();
      heap.push(i);
    }
  }
  std::vector<Completion> out(heap.size());
  for (std::size_t k = out.size(); k > 0; --k) {
    out[k - 1] = entries_[heap.top()];
    heap.pop();
  }
  return out;
}

std::uint64_t PrefixIndex::popularity(std::string_view query) const {
  const auto it = std::lower_bound(
      entries_.begin(), entries_.end(), query,
      [](const Completion& c, std::string_view q) { return std::string_view(c.query) < q; });
  return it != entries_.end() && it->query == query ? it->popularity : 0;
}

void save_index(const PrefixIndex& index, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.write(kIndexMagic, sizeof(kIndexMagic));
  binary::put<std::uint32_t>(out, kIndexFormatVersion);
  binary::put<std::uint64_t>(out, index.total_count());
  binary::put<std::uint64_t>(out, index.size());
  for (const auto& e : index.entries()) {
    binary::put_string(out, e.query);
    binary::put<std::uint64_t>(out, e.popularity);
  }
  if (!out) throw std::runtime_error("failed writing " + path);
}

PrefixIndex load_index(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  binary::Reader r(in, "prefix index " + path);
  char magic[sizeof(kIndexMagic)];
  r.read_bytes(magic, sizeof(magic));
  if (std::memcmp(magic, kIndexMagic, sizeof(magic)) != 0) {
    throw FormatError("prefix index " + path + ": bad magic bytes");
  }
  const auto version = r.get<std::uint32_t>();
  if (version != kIndexFormatVersion) {
    throw FormatError("prefix index " + path + ": unsupported version " + std::to_string(version));
  }
  const auto total = r.get<std::uint64_t>();
  const auto n = r.get<std::uint64_t>();
  std::vector<Completion> entries;
  std::uint64_t sum = 0;
  for (std::uint64_t i = 0; i < n; ++i) {
    Completion c;
    c.query = r.get_string();
    c.popularity = r.get<std::uint64_t>();
    if (c.popularity == 0 || (!entries.empty() && !(entries.back().query < c.query))) {
      throw FormatError("prefix index " + path + ": corrupt entry table");
    }
    sum += c.popularity;
    entries.push_back(std::move(c));
  }
  r.expect_end();
  if (sum != total) throw FormatError("prefix index " + path + ": total count mismatch");
  return PrefixIndex::from_counts(std::move(entries));
}

}  // namespace qac
