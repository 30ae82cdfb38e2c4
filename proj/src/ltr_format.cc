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

#include "qac/ltr_format.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <optional>
#include <sstream>

namespace qac {
namespace {

std::optional<FeatureGroup> parse_group(std::string_view s) {
  for (const FeatureGroup g :
       {FeatureGroup::kBaseline, FeatureGroup::kEmbedding, FeatureGroup::kPresence,
        FeatureGroup::kTextualToken, FeatureGroup::kTextualQuery, FeatureGroup::kTextualSession}) {
    if (to_string(g) == s) return g;
  }
  return std::nullopt;
}

template <typename Int>
Int parse_int(std::string_view s, const std::string& where) {
  Int v{};
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw FormatError(where + ": bad integer '" + std::string(s) + "'");
  }
  return v;
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) throw std::runtime_error("cannot format double");
  return std::string(buf, ptr);
}

double parse_double(std::string_view s) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw FormatError("bad number '" + std::string(s) + "'");
  }
  return v;
}

std::string schema_sidecar_path(const std::string& matrix_path) { return matrix_path + ".schema"; }

void write_schema(const FeatureSchema& schema, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "version\t" << schema.version << '\n';
  for (std::size_t i = 0; i < schema.features.size(); ++i) {
    out << i + 1 << '\t' << schema.features[i].name << '\t' << to_string(schema.features[i].group)
        << '\n';
  }
}

FeatureSchema read_schema(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  FeatureSchema schema;
  std::string line;
  if (!std::getline(in, line) || line.rfind("version\t", 0) != 0) {
    throw FormatError(path + ": missing version line");
  }
  schema.version = line.substr(8);
  std::size_t expected = 1;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string idx, name, group;
    if (!std::getline(fields, idx, '\t') || !std::getline(fields, name, '\t') ||
        !std::getline(fields, group)) {
      throw FormatError(path + ": bad schema line '" + line + "'");
    }
    if (parse_int<std::size_t>(idx, path) != expected++) {
      throw FormatError(path + ": schema indices must be consecutive");
    }
    const auto g = parse_group(group);
    if (!g) throw FormatError(path + ": unknown feature group '" + group + "'");
    schema.features.push_back({name, *g});
  }
  return schema;
}

void write_matrix(const FeatureMatrix& m, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  for (std::size_t r = 0; r < m.rows(); ++r) {
    out << m.labels[r] << " qid:" << m.group_ids[r];
    for (Eigen::Index c = 0; c < m.values.cols(); ++c) {
      out << ' ' << c + 1 << ':' << format_double(m.values(static_cast<Eigen::Index>(r), c));
    }
    out << " # " << m.candidates[r] << '\n';
  }
  if (!out) throw std::runtime_error("failed writing " + path);
  write_schema(m.schema, schema_sidecar_path(path));
}

FeatureMatrix read_matrix(const std::string& path) {
  FeatureMatrix m;
  m.schema = read_schema(schema_sidecar_path(path));
  const auto width = static_cast<Eigen::Index>(m.schema.size());

  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<double> flat;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::string where = path + ":" + std::to_string(line_no);
    std::string body = line;
    std::string comment;
    if (const auto hash = line.find(" # "); hash != std::string::npos) {
      body = line.substr(0, hash);
      comment = line.substr(hash + 3);
    }
    std::istringstream fields(body);
    std::string label, qid;
    if (!(fields >> label >> qid) || qid.rfind("qid:", 0) != 0) {
      throw FormatError(where + ": expected '<label> qid:<id>'");
    }
    m.labels.push_back(parse_int<int>(label, where));
    m.group_ids.push_back(parse_int<std::uint64_t>(std::string_view(qid).substr(4), where));
    m.candidates.push_back(comment);

    Eigen::Index expected = 1;
    std::string tok;
    while (fields >> tok) {
      const auto colon = tok.find(':');
      if (colon == std::string::npos) throw FormatError(where + ": bad feature '" + tok + "'");
      if (parse_int<Eigen::Index>(std::string_view(tok).substr(0, colon), where) != expected++) {
        throw FormatError(where + ": feature indices must be dense and ordered");
      }
      flat.push_back(parse_double(std::string_view(tok).substr(colon + 1)));
    }
    if (expected - 1 != width) {
      throw FormatError(where + ": expected " + std::to_string(width) + " features");
    }
  }

  const auto rows = static_cast<Eigen::Index>(m.labels.size());
  m.values = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      flat.data(), rows, width);

  const int rank_col = m.schema.index_of("mpc_rank");
  const int position_col = m.schema.index_of("position_in_session");
  const int presence_col = m.schema.index_of("has_prev_query1");
  for (std::size_t r = 0; r < m.labels.size(); ++r) {
    m.mpc_ranks.push_back(rank_col >= 0 ? static_cast<int>(m.values(static_cast<Eigen::Index>(r), rank_col))
                                        : static_cast<int>(r - m.group_offsets.back()) + 1);
    const bool last_in_group = r + 1 == m.labels.size() || m.group_ids[r + 1] != m.group_ids[r];
    if (last_in_group) {
      m.group_offsets.push_back(r + 1);
      bool has_context = false;
      if (position_col >= 0) has_context = m.values(static_cast<Eigen::Index>(r), position_col) > 1.0;
      if (presence_col >= 0) has_context = m.values(static_cast<Eigen::Index>(r), presence_col) > 0.0;
      m.group_has_context.push_back(has_context);
    }
  }
  std::vector<std::uint64_t> seen;
  for (std::size_t g = 0; g < m.groups(); ++g) seen.push_back(m.group_ids[m.group_offsets[g]]);
  std::sort(seen.begin(), seen.end());
  if (std::adjacent_find(seen.begin(), seen.end()) != seen.end()) {
    throw FormatError(path + ": rows of a group are not contiguous");
  }
  return m;
}

}  // namespace qac
