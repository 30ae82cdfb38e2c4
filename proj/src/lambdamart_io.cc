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

// Model text layout:
//
//   qac-lambdamart 1
//   schema <version> <feature count>
//   learning_rate <eta>
//   config <key>=<value> ...
//   trees <count>
//   tree <node count>
//   <feature> <threshold> <left> <right> <value>     (one line per node)
//
// Feature names live in the "<path>.schema" sidecar.

#include <charconv>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "qac/lambdamart.h"
#include "qac/ltr_format.h"

namespace qac {
namespace {

class LineReader {
 public:
  LineReader(std::istream& in, std::string path) : in_(in), path_(std::move(path)) {}

  std::vector<std::string> next() {
    std::string line;
    while (std::getline(in_, line)) {
      ++line_no_;
      if (line.empty()) continue;
      std::istringstream s(line);
      std::vector<std::string> out;
      for (std::string tok; s >> tok;) out.push_back(tok);
      return out;
    }
    throw error("unexpected end of file");
  }

  std::vector<std::string> expect(std::string_view keyword, std::size_t fields) {
    auto tok = next();
    if (tok.empty() || tok[0] != keyword || tok.size() != fields + 1) {
      throw error("expected '" + std::string(keyword) + "' with " + std::to_string(fields) +
                  " field(s)");
    }
    return tok;
  }

  void expect_end() {
    std::string line;
    while (std::getline(in_, line)) {
      ++line_no_;
      if (!line.empty()) throw error("trailing content");
    }
  }

  FormatError error(const std::string& what) const {
    return FormatError(path_ + ":" + std::to_string(line_no_) + ": " + what);
  }

  template <typename Int>
  Int integer(const std::string& s) const {
    Int v{};
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) throw error("bad integer '" + s + "'");
    return v;
  }

  double real(const std::string& s) const {
    try {
      return parse_double(s);
    } catch (const FormatError&) {
      throw error("bad number '" + s + "'");
    }
  }

 private:
  std::istream& in_;
  std::string path_;
  std::size_t line_no_ = 0;
};

std::string config_line(const RankerConfig& c) {
  std::ostringstream out;
  out << "config trees=" << c.trees << " max_leaves=" << c.max_leaves
      << " min_leaf_rows=" << c.min_leaf_rows << " learning_rate=" << format_double(c.learning_rate)
      << " feature_fraction=" << format_double(c.feature_fraction) << " seed=" << c.seed
      << " max_bins=" << c.max_bins << " ndcg_weight=" << (c.ndcg_weight ? 1 : 0)
      << " holdout_fraction=" << format_double(c.holdout_fraction)
      << " early_stopping_rounds=" << c.early_stopping_rounds;
  return out.str();
}

RankerConfig parse_config(const LineReader& reader, const std::vector<std::string>& tok) {
  std::map<std::string, std::string> kv;
  for (std::size_t i = 1; i < tok.size(); ++i) {
    const auto eq = tok[i].find('=');
    if (eq == std::string::npos) throw reader.error("bad config entry '" + tok[i] + "'");
    kv[tok[i].substr(0, eq)] = tok[i].substr(eq + 1);
  }
  auto get = [&](const char* key) -> const std::string& {
    const auto it = kv.find(key);
    if (it == kv.end()) throw reader.error(std::string("missing config key ") + key);
    return it->second;
  };
  RankerConfig c;
  c.trees = reader.integer<int>(get("trees"));
  c.max_leaves = reader.integer<int>(get("max_leaves"));
  c.min_leaf_rows = reader.integer<int>(get("min_leaf_rows"));
  c.learning_rate = reader.real(get("learning_rate"));
  c.feature_fraction = reader.real(get("feature_fraction"));
  c.seed = reader.integer<std::uint64_t>(get("seed"));
  c.max_bins = reader.integer<int>(get("max_bins"));
  c.ndcg_weight = reader.integer<int>(get("ndcg_weight")) != 0;
  c.holdout_fraction = reader.real(get("holdout_fraction"));
  c.early_stopping_rounds = reader.integer<int>(get("early_stopping_rounds"));
  if (kv.size() != 10) throw reader.error("unknown config keys");
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw reader.error(e.what());
  }
  return c;
}

}  // namespace

void save_ensemble(const TreeEnsemble& ensemble, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << kEnsembleMagic << ' ' << kEnsembleFormatVersion << '\n';
  out << "schema " << ensemble.schema.version << ' ' << ensemble.schema.size() << '\n';
  out << "learning_rate " << format_double(ensemble.learning_rate) << '\n';
  out << config_line(ensemble.config) << '\n';
  out << "trees " << ensemble.trees.size() << '\n';
  for (const auto& t : ensemble.trees) {
    out << "tree " << t.nodes.size() << '\n';
    for (const auto& n : t.nodes) {
      out << n.feature << ' ' << format_double(n.threshold) << ' ' << n.left << ' ' << n.right
          << ' ' << format_double(n.value) << '\n';
    }
  }
  if (!out) throw std::runtime_error("failed writing " + path);
  write_schema(ensemble.schema, schema_sidecar_path(path));
}

TreeEnsemble load_ensemble(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  LineReader reader(in, path);

  const auto head = reader.expect(kEnsembleMagic, 1);
  if (reader.integer<int>(head[1]) != kEnsembleFormatVersion) {
    throw reader.error("unsupported model version " + head[1]);
  }
  TreeEnsemble e;
  const auto schema = reader.expect("schema", 2);
  const auto width = reader.integer<std::size_t>(schema[2]);
  e.learning_rate = reader.real(reader.expect("learning_rate", 1)[1]);
  auto config = reader.next();
  if (config.empty() || config[0] != "config") throw reader.error("expected 'config'");
  e.config = parse_config(reader, config);

  const auto count = reader.integer<std::size_t>(reader.expect("trees", 1)[1]);
  for (std::size_t t = 0; t < count; ++t) {
    const auto nodes = reader.integer<std::size_t>(reader.expect("tree", 1)[1]);
    if (nodes == 0) throw reader.error("empty tree");
    Tree tree;
    for (std::size_t i = 0; i < nodes; ++i) {
      const auto tok = reader.next();
      if (tok.size() != 5) throw reader.error("expected 5 node fields");
      TreeNode n;
      n.feature = reader.integer<int>(tok[0]);
      n.threshold = reader.real(tok[1]);
      n.left = reader.integer<int>(tok[2]);
      n.right = reader.integer<int>(tok[3]);
      n.value = reader.real(tok[4]);
      const auto self = static_cast<int>(i);
      const auto limit = static_cast<int>(nodes);
      if (n.feature >= static_cast<int>(width) ||
          (!n.is_leaf() && (n.left <= self || n.right <= self || n.left >= limit ||
                            n.right >= limit))) {
        throw reader.error("invalid node");
      }
      tree.nodes.push_back(n);
    }
    e.trees.push_back(std::move(tree));
  }
  reader.expect_end();

  const auto sidecar = schema_sidecar_path(path);
  if (!std::filesystem::exists(sidecar)) {
    throw FormatError(path + ": missing schema sidecar " + sidecar);
  }
  e.schema = read_schema(sidecar);
  if (e.schema.version != schema[1] || e.schema.size() != width) {
    throw FormatError(path + ": schema sidecar does not match the model (expected '" + schema[1] +
                      "' with " + schema[2] + " features)");
  }
  return e;
}

}  // namespace qac
