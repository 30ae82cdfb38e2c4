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

#include "qac/corpus.h"

#include <algorithm>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <unordered_set>

#include "json.hpp"

namespace qac {
namespace {

using json = nlohmann::json;

bool is_alnum_ascii(unsigned char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9');
}

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    if (pos == std::string_view::npos) {
      out.emplace_back(s.substr(start));
      return out;
    }
    out.emplace_back(s.substr(start, pos - start));
    start = pos + 1;
  }
}

std::int64_t parse_int(const std::string& s, std::size_t line_no) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw FormatError("log line " + std::to_string(line_no) + ": bad integer '" + s + "'");
  }
}

json query_list(std::span<const NormalizedQuery> queries) {
  json arr = json::array();
  for (const auto& q : queries) arr.push_back(q.text);
  return arr;
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) lines.push_back(std::move(line));
  }
  return lines;
}

std::ofstream open_for_write(const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  return out;
}

}  // namespace

NormalizedQuery normalize(std::string_view raw) {
  NormalizedQuery q;
  q.text.reserve(raw.size());
  bool pending_space = false;
  for (const char ch : raw) {
    const auto c = static_cast<unsigned char>(ch);
    if (!is_alnum_ascii(c)) {
      pending_space = !q.text.empty();
      continue;
    }
    if (pending_space) {
      q.text.push_back(' ');
      pending_space = false;
    }
    q.text.push_back(static_cast<char>(c >= 'A' && c <= 'Z' ? c - 'A' + 'a' : c));
  }
  if (!q.text.empty()) q.tokens = split(q.text, ' ');
  return q;
}

NormalizedQuery from_normalized(std::string_view text) {
  NormalizedQuery q;
  q.text = std::string(text);
  if (!q.text.empty()) q.tokens = split(q.text, ' ');
  return q;
}

bool matches_prefix(std::string_view text, std::string_view prefix) {
  return text.substr(0, prefix.size()) == prefix;
}

int Impression::positive_index() const {
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (candidates[i].label == 1) return static_cast<int>(i);
  }
  return -1;
}

std::vector<Session> segment(std::span<const LogEvent> events, int boundary_minutes) {
  const std::int64_t boundary_ms = static_cast<std::int64_t>(boundary_minutes) * 60'000;
  std::map<std::string, std::vector<std::size_t>> by_user;
  for (std::size_t i = 0; i < events.size(); ++i) by_user[events[i].user_id].push_back(i);

  std::vector<Session> sessions;
  for (auto& [user, indices] : by_user) {
    std::stable_sort(indices.begin(), indices.end(), [&](std::size_t a, std::size_t b) {
      return events[a].timestamp_ms < events[b].timestamp_ms;
    });
    int ordinal = 0;
    Session current;
    std::int64_t last_ts = 0;
    for (const std::size_t idx : indices) {
      const LogEvent& e = events[idx];
      NormalizedQuery q = normalize(e.raw_query);
      if (q.empty()) continue;
      if (!current.queries.empty() && e.timestamp_ms - last_ts >= boundary_ms) {
        sessions.push_back(std::move(current));
        current = Session{};
      }
      if (current.queries.empty()) {
        current.user_id = user;
        current.session_id = user + "/" + std::to_string(ordinal++);
      }
      current.queries.push_back({std::move(q), e.timestamp_ms, idx});
      last_ts = e.timestamp_ms;
    }
    if (!current.queries.empty()) sessions.push_back(std::move(current));
  }
  return sessions;
}

std::vector<TrainingDocument> build_training_docs(std::span<const Session> sessions) {
  std::vector<TrainingDocument> docs;
  for (const Session& s : sessions) {
    if (s.queries.size() < 2) continue;
    std::string text;
    for (const auto& tq : s.queries) {
      if (!text.empty()) text.push_back(' ');
      text += tq.query.text;
    }
    docs.push_back({std::move(text)});
  }
  return docs;
}

ImpressionSet build_impressions(std::span<const Session> sessions,
                                std::span<const LogEvent> events,
                                std::uint64_t first_group_id) {
  ImpressionSet out;
  std::uint64_t next_group = first_group_id;
  for (const Session& s : sessions) {
    for (std::size_t t = 0; t < s.queries.size(); ++t) {
      const TimedQuery& tq = s.queries[t];
      if (tq.event_index >= events.size()) {
        throw std::out_of_range("session " + s.session_id + " references a missing event");
      }
      const LogEvent& e = events[tq.event_index];
      if (!e.clicked) continue;

      const NormalizedQuery prefix = normalize(e.prefix);
      const NormalizedQuery& positive = tq.query;
      if (prefix.empty() || !matches_prefix(positive.text, prefix.text)) {
        ++out.skipped;
        continue;
      }

      Impression imp;
      std::unordered_set<std::string> seen;
      bool found = false;
      for (const std::string& raw : e.shown_candidates) {
        NormalizedQuery c = normalize(raw);
        if (c.empty() || !matches_prefix(c.text, prefix.text)) continue;
        if (!seen.insert(c.text).second) continue;
        const int label = c.text == positive.text ? 1 : 0;
        found = found || label == 1;
        imp.candidates.push_back({std::move(c), label});
      }
      if (!found) {
        ++out.skipped;
        continue;
      }
      imp.group_id = next_group++;
      imp.session_id = s.session_id;
      imp.step = static_cast<int>(t) + 1;
      imp.prefix = prefix.text;
      imp.context.reserve(t);
      for (std::size_t k = 0; k < t; ++k) imp.context.push_back(s.queries[k].query);
      out.impressions.push_back(std::move(imp));
    }
  }
  return out;
}

void write_log(std::ostream& out, std::span<const LogEvent> events) {
  auto check = [](std::string_view field, std::string_view forbidden) {
    if (field.find_first_of(forbidden) != std::string_view::npos) {
      throw FormatError("log field contains a reserved separator: '" + std::string(field) + "'");
    }
  };
  out << kLogHeader << '\n';
  for (const LogEvent& e : events) {
    check(e.user_id, "\t\n\r");
    check(e.raw_query, "\t\n\r");
    check(e.prefix, "\t\n\r");
    for (const auto& c : e.shown_candidates) check(c, "\t\n\r|");
    out << e.user_id << '\t' << e.timestamp_ms << '\t' << e.raw_query << '\t' << e.prefix
        << '\t';
    for (std::size_t i = 0; i < e.shown_candidates.size(); ++i) {
      if (i) out << '|';
      out << e.shown_candidates[i];
    }
    out << '\t' << (e.clicked ? 1 : 0) << '\n';
  }
}

std::vector<LogEvent> read_log(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw FormatError("log file is empty; a header line is required");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kLogHeader) throw FormatError("log header mismatch: '" + line + "'");

  std::vector<LogEvent> events;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cols = split(line, '\t');
    if (cols.size() != 6) {
      throw FormatError("log line " + std::to_string(line_no) + ": expected 6 columns, got " +
                        std::to_string(cols.size()));
    }
    LogEvent e;
    e.user_id = cols[0];
    e.timestamp_ms = parse_int(cols[1], line_no);
    if (e.timestamp_ms < 0) {
      throw FormatError("log line " + std::to_string(line_no) + ": negative timestamp");
    }
    e.raw_query = cols[2];
    e.prefix = cols[3];
    if (!cols[4].empty()) e.shown_candidates = split(cols[4], '|');
    if (cols[5] != "0" && cols[5] != "1") {
      throw FormatError("log line " + std::to_string(line_no) + ": clicked must be 0 or 1");
    }
    e.clicked = cols[5] == "1";
    events.push_back(std::move(e));
  }
  return events;
}

void write_log_file(const std::string& path, std::span<const LogEvent> events) {
  auto out = open_for_write(path);
  write_log(out, events);
}

std::vector<LogEvent> read_log_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  return read_log(in);
}

std::string session_to_json_line(const Session& session) {
  json queries = json::array();
  for (const auto& tq : session.queries) {
    queries.push_back(
        {{"text", tq.query.text}, {"timestamp_ms", tq.timestamp_ms}, {"event", tq.event_index}});
  }
  const json j = {{"session_id", session.session_id},
                  {"user_id", session.user_id},
                  {"queries", std::move(queries)}};
  return j.dump();
}

Session session_from_json_line(std::string_view line) {
  try {
    const json j = json::parse(line);
    Session s;
    s.session_id = j.at("session_id").get<std::string>();
    s.user_id = j.at("user_id").get<std::string>();
    for (const auto& q : j.at("queries")) {
      s.queries.push_back({from_normalized(q.at("text").get<std::string>()),
                           q.at("timestamp_ms").get<std::int64_t>(),
                           q.at("event").get<std::size_t>()});
    }
    return s;
  } catch (const json::exception& e) {
    throw FormatError(std::string("bad session record: ") + e.what());
  }
}

std::string impression_to_json_line(const Impression& imp) {
  json candidates = json::array();
  for (const auto& c : imp.candidates) {
    candidates.push_back({{"text", c.query.text}, {"label", c.label}});
  }
  const json j = {{"group_id", imp.group_id},     {"session_id", imp.session_id},
                  {"step", imp.step},             {"context", query_list(imp.context)},
                  {"prefix", imp.prefix},         {"candidates", std::move(candidates)}};
  return j.dump();
}

Impression impression_from_json_line(std::string_view line) {
  try {
    const json j = json::parse(line);
    Impression imp;
    imp.group_id = j.at("group_id").get<std::uint64_t>();
    imp.session_id = j.at("session_id").get<std::string>();
    imp.step = j.at("step").get<int>();
    for (const auto& q : j.at("context")) imp.context.push_back(from_normalized(q.get<std::string>()));
    imp.prefix = j.at("prefix").get<std::string>();
    for (const auto& c : j.at("candidates")) {
      imp.candidates.push_back(
          {from_normalized(c.at("text").get<std::string>()), c.at("label").get<int>()});
    }
    return imp;
  } catch (const json::exception& e) {
    throw FormatError(std::string("bad impression record: ") + e.what());
  }
}

void write_sessions_file(const std::string& path, std::span<const Session> sessions) {
  auto out = open_for_write(path);
  for (const auto& s : sessions) out << session_to_json_line(s) << '\n';
}

std::vector<Session> read_sessions_file(const std::string& path) {
  std::vector<Session> sessions;
  for (const auto& line : read_lines(path)) sessions.push_back(session_from_json_line(line));
  return sessions;
}

void write_impressions_file(const std::string& path, std::span<const Impression> impressions) {
  auto out = open_for_write(path);
  for (const auto& imp : impressions) out << impression_to_json_line(imp) << '\n';
}

std::vector<Impression> read_impressions_file(const std::string& path) {
  std::vector<Impression> impressions;
  for (const auto& line : read_lines(path)) impressions.push_back(impression_from_json_line(line));
  return impressions;
}

}  // namespace qac
