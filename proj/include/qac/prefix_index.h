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

#ifndef QAC_PREFIX_INDEX_H_
#define QAC_PREFIX_INDEX_H_

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "qac/corpus.h"

namespace qac {

struct Completion {
  std::string query;
  std::uint64_t popularity = 0;

  friend bool operator==(const Completion&, const Completion&) = default;
};

/// Most Popular Completion index over normalized queries.
///
/// Queries are stored in lexicographic order, which is the leaf order of a
/// character trie: the subtree under any prefix is one contiguous range, so
/// descending to a prefix is two binary searches and top-n is a bounded heap
/// over that range.
class PrefixIndex {
 public:
  PrefixIndex() = default;

  /// Aggregates issue counts per distinct non-empty text; queries seen fewer
  /// than `min_popularity` times are dropped.
  static PrefixIndex build(std::span<const NormalizedQuery> queries,
                           std::uint64_t min_popularity = 1);

  /// Builds directly from (text, popularity) pairs. Texts must be normalized;
  /// duplicates are summed and zero popularities rejected.
  static PrefixIndex from_counts(std::vector<Completion> counts);

  /// Stored queries starting with `prefix`, by popularity descending then
  /// text ascending, at most n. Throws std::invalid_argument for n == 0.
  std::vector<Completion> mpc_top_n(std::string_view prefix, std::size_t n) const;

  /// 0 when the query is not stored.
  std::uint64_t popularity(std::string_view query) const;

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  std::uint64_t total_count() const { return total_; }
  const std::vector<Completion>& entries() const { return entries_; }

  friend bool operator==(const PrefixIndex&, const PrefixIndex&) = default;

 private:
  std::pair<std::size_t, std::size_t> prefix_range(std::string_view prefix) const;

  std::vector<Completion> entries_;  // sorted by query
  std::uint64_t total_ = 0;
};

inline constexpr char kIndexMagic[4] = {'Q', 'I', 'D', 'X'};
inline constexpr std::uint32_t kIndexFormatVersion = 1;

void save_index(const PrefixIndex& index, const std::string& path);
/// Throws FormatError on bad magic, version mismatch, truncation or
/// unsorted entries.
PrefixIndex load_index(const std::string& path);

}  // namespace qac

#endif  // QAC_PREFIX_INDEX_H_
