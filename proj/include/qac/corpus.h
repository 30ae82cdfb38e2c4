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

#ifndef QAC_CORPUS_H_
#define QAC_CORPUS_H_

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace qac {

// Raised for malformed input files and records.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One row of the raw query log.
struct LogEvent {
  std::string user_id;
  std::int64_t timestamp_ms = 0;
  std::string raw_query;
  // What the user had typed when the query was issued; may be empty.
  std::string prefix;
  // QAC list displayed at issue time, in display order.
  std::vector<std::string> shown_candidates;
  // Whether the issued query was picked from the QAC list.
  bool clicked = false;

  friend bool operator==(const LogEvent&, const LogEvent&) = default;
};

/// Lowercase [a-z0-9 ] text plus its whitespace tokens.
struct NormalizedQuery {
  std::string text;
  std::vector<std::string> tokens;

  bool empty() const { return text.empty(); }
  friend bool operator==(const NormalizedQuery&, const NormalizedQuery&) = default;
};

/// Lowercases, replaces every non-alphanumeric byte by a space, collapses
/// whitespace runs and trims. Input without alphanumerics yields an empty
/// query.
NormalizedQuery normalize(std::string_view raw);

/// Builds a NormalizedQuery from text that is already normalized.
NormalizedQuery from_normalized(std::string_view text);

/// True when `text` starts with `prefix` (both normalized).
bool matches_prefix(std::string_view text, std::string_view prefix);

struct TimedQuery {
  NormalizedQuery query;
  std::int64_t timestamp_ms = 0;
  // Position of the source event in the stream handed to segment().
  std::size_t event_index = 0;

  friend bool operator==(const TimedQuery&, const TimedQuery&) = default;
};

struct Session {
  std::string session_id;
  std::string user_id;
  std::vector<TimedQuery> queries;

  friend bool operator==(const Session&, const Session&) = default;
};

inline constexpr int kDefaultSessionBoundaryMinutes = 30;

/// Splits each user's events into sessions. A new session starts whenever the
/// gap to the previous query is >= `boundary_minutes`. Events whose query
/// normalizes to empty are dropped. Sessions are ordered by user id, then
/// time; session ids are "<user_id>/<ordinal>".
std::vector<Session> segment(std::span<const LogEvent> events,
                             int boundary_minutes = kDefaultSessionBoundaryMinutes);

struct TrainingDocument {
  std::string text;

  friend bool operator==(const TrainingDocument&, const TrainingDocument&) = default;
};

/// One document per session with at least two queries: the space-joined
/// query texts in issue order.
std::vector<TrainingDocument> build_training_docs(std::span<const Session> sessions);

struct LabeledCandidate {
  NormalizedQuery query;
  int label = 0;

  friend bool operator==(const LabeledCandidate&, const LabeledCandidate&) = default;
};

/// A prefix -> candidates ranking event with its session context.
struct Impression {
  std::uint64_t group_id = 0;
  std::string session_id;
  // 1-based position T of the issued query inside its session.
  int step = 1;
  // <q_1 ... q_{T-1}>, possibly empty.
  std::vector<NormalizedQuery> context;
  std::string prefix;
  std::vector<LabeledCandidate> candidates;

  bool has_context() const { return !context.empty(); }
  // Index of the label-1 candidate, or -1.
  int positive_index() const;

  friend bool operator==(const Impression&, const Impression&) = default;
};

struct ImpressionSet {
  std::vector<Impression> impressions;
  // Clicked events dropped because the positive was not among the shown
  // candidates, the prefix was empty, or the positive did not match it.
  std::size_t skipped = 0;
};

/// Emits one impression per clicked event: the issued query is the
/// positive, the other shown candidates matching the prefix are negatives.
/// `events` must be the same stream that was segmented. Group ids are
/// assigned sequentially starting at `first_group_id`.
ImpressionSet build_impressions(std::span<const Session> sessions,
                                std::span<const LogEvent> events,
                                std::uint64_t first_group_id = 1);

// Log file: TSV with a header line, columns
// user_id timestamp_ms raw_query prefix shown_candidates(|-separated) clicked.
inline constexpr std::string_view kLogHeader =
    "user_id\ttimestamp_ms\traw_query\tprefix\tshown_candidates\tclicked";

void write_log(std::ostream& out, std::span<const LogEvent> events);
std::vector<LogEvent> read_log(std::istream& in);
void write_log_file(const std::string& path, std::span<const LogEvent> events);
std::vector<LogEvent> read_log_file(const std::string& path);

// Line-delimited JSON records. Field names are listed in docs/formats.md.
std::string session_to_json_line(const Session& session);
Session session_from_json_line(std::string_view line);
std::string impression_to_json_line(const Impression& impression);
Impression impression_from_json_line(std::string_view line);

void write_sessions_file(const std::string& path, std::span<const Session> sessions);
std::vector<Session> read_sessions_file(const std::string& path);
void write_impressions_file(const std::string& path,
                            std::span<const Impression> impressions);
std::vector<Impression> read_impressions_file(const std::string& path);

}  // namespace qac

#endif  // QAC_CORPUS_H_
