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

#include "qac/pipeline.h"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "json.hpp"
#include "qac/corpus.h"
#include "qac/ltr_format.h"
#include "qac/prefix_index.h"
#include "qac/synthetic.h"

namespace qac {
namespace {

using Json = nlohmann::ordered_json;
namespace fs = std::filesystem;

// Calls f(key, field, affects_artifacts) for every setting, in output order.
template <typename Config, typename F>
void visit(Config& c, F&& f) {
  f("run_root", c.run_root, false);
  f("log", c.log_path, true);
  f("synth.seed", c.synth_seed, true);
  f("synth.users", c.synth.users, true);
  f("synth.sessions_per_user", c.synth.sessions_per_user, true);
  f("synth.single_query_fraction", c.synth.single_query_fraction, true);
  f("synth.reformulation_prob", c.synth.reformulation_prob, true);
  f("synth.intent_switch_prob", c.synth.intent_switch_prob, true);
  f("synth.click_prob", c.synth.click_prob, true);
  f("synth.shown_candidates", c.synth.shown_candidates, true);
  f("synth.prefix_fraction_min", c.synth.prefix_fraction_min, true);
  f("synth.prefix_fraction_max", c.synth.prefix_fraction_max, true);
  f("synth.zipf_exponent", c.synth.zipf_exponent, true);
  f("synth.raw_noise_prob", c.synth.raw_noise_prob, true);
  f("session_boundary_minutes", c.session_boundary_minutes, true);
  f("test_fraction", c.test_fraction, true);
  f("top_n", c.top_n, true);
  f("index.min_popularity", c.min_popularity, true);
  f("embedding.dim", c.embedding.dim, true);
  f("embedding.window", c.embedding.window, true);
  f("embedding.negatives", c.embedding.negatives, true);
  f("embedding.epochs", c.embedding.epochs, true);
  f("embedding.learning_rate", c.embedding.learning_rate, true);
  f("embedding.min_count", c.embedding.min_count, true);
  f("embedding.n_min", c.embedding.n_min, true);
  f("embedding.n_max", c.embedding.n_max, true);
  f("embedding.bucket_count", c.embedding.bucket_count, true);
  f("embedding.seed", c.embedding.seed, true);
  f("embedding.workers", c.embedding.workers, true);
  f("ranker.trees", c.ranker.trees, true);
  f("ranker.max_leaves", c.ranker.max_leaves, true);
  f("ranker.min_leaf_rows", c.ranker.min_leaf_rows, true);
  f("ranker.learning_rate", c.ranker.learning_rate, true);
  f("ranker.feature_fraction", c.ranker.feature_fraction, true);
  f("ranker.seed", c.ranker.seed, true);
  f("ranker.max_bins", c.ranker.max_bins, true);
  f("ranker.ndcg_weight", c.ranker.ndcg_weight, true);
  f("ranker.holdout_fraction", c.ranker.holdout_fraction, true);
  f("ranker.early_stopping_rounds", c.ranker.early_stopping_rounds, true);
  f("variants", c.variants, true);
  f("eval.iterations", c.eval_iterations, true);
  f("eval.level", c.eval_level, true);
  f("eval.seed", c.eval_seed, true);
  f("threads", c.threads, false);
  f("serve.host", c.serve_host, false);
  f("serve.port", c.serve_port, false);
  f("serve.session_ttl_minutes", c.serve_session_ttl_minutes, false);
  f("serve.cors_origin", c.serve_cors_origin, false);
  f("pdp.grid", c.pdp_grid, false);
}

Json to_json_value(const std::vector<Variant>& v) {
  Json out = Json::array();
  for (const auto x : v) out.push_back(std::string(to_string(x)));
  return out;
}
template <typename T>
Json to_json_value(const T& v) {
  return v;
}

std::vector<Variant> parse_variants(const std::vector<std::string>& names) {
  std::vector<Variant> out;
  for (const auto& n : names) {
    const auto v = parse_variant(n);
    if (!v) throw std::invalid_argument("unknown variant '" + n + "'");
    out.push_back(*v);
  }
  return out;
}

void from_json_value(const Json& j, std::vector<Variant>& out) {
  out = parse_variants(j.get<std::vector<std::string>>());
}
void from_json_value(const Json& j, bool& out) {
  if (!j.is_boolean()) throw std::invalid_argument("expected a boolean");
  out = j.get<bool>();
}
void from_json_value(const Json& j, std::string& out) {
  if (!j.is_string()) throw std::invalid_argument("expected a string");
  out = j.get<std::string>();
}
void from_json_value(const Json& j, double& out) {
  if (!j.is_number()) throw std::invalid_argument("expected a number");
  out = j.get<double>();
}
template <typename Int>
void from_json_value(const Json& j, Int& out) {
  if (!j.is_number_integer()) throw std::invalid_argument("expected an integer");
  if constexpr (std::is_unsigned_v<Int>) {
    if (j.is_number_unsigned()) {
      out = static_cast<Int>(j.get<std::uint64_t>());
    } else if (j.get<std::int64_t>() >= 0) {
      out = static_cast<Int>(j.get<std::int64_t>());
    } else {
      throw std::invalid_argument("expected a non-negative integer");
    }
  } else {
    out = j.get<Int>();
  }
}

void parse_text(std::string_view s, std::vector<Variant>& out) {
  std::vector<std::string> names;
  std::string cur;
  for (const char c : s) {
    if (c == ',') {
      names.push_back(cur);
      cur.clear();
    } else if (c != ' ') {
      cur.push_back(c);
    }
  }
  names.push_back(cur);
  out = parse_variants(names);
}
void parse_text(std::string_view s, bool& out) {
  if (s == "true" || s == "1") {
    out = true;
  } else if (s == "false" || s == "0") {
    out = false;
  } else {
    throw std::invalid_argument("expected true/false");
  }
}
void parse_text(std::string_view s, std::string& out) { out = std::string(s); }
void parse_text(std::string_view s, double& out) { out = parse_double(s); }
template <typename Int>
void parse_text(std::string_view s, Int& out) {
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw std::invalid_argument("expected an integer");
  }
}

std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::vector<Session> read_sessions(const fs::path& path) {
  return read_sessions_file(path.string());
}

std::string seconds_since(std::chrono::steady_clock::time_point start) {
  const double s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.1fs", s);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

}  // namespace

TrainConfig PipelineConfig::default_embedding_config() {
  TrainConfig c;
  c.bucket_count = 100'000;
  c.min_count = 5;
  return c;
}

std::string PipelineConfig::to_json() const {
  Json j = Json::object();
  visit(*this, [&](const char* key, const auto& value, bool) { j[key] = to_json_value(value); });
  return j.dump(2) + "\n";
}

PipelineConfig PipelineConfig::from_json(std::string_view text) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw std::invalid_argument("config must be a JSON object");
  PipelineConfig c;
  std::set<std::string> known;
  visit(c, [&](const char* key, auto& value, bool) {
    known.insert(key);
    const auto it = j.find(key);
    if (it == j.end()) return;
    try {
      from_json_value(*it, value);
    } catch (const std::exception& e) {
      throw std::invalid_argument(std::string("config key '") + key + "': " + e.what());
    }
  });
  for (const auto& [key, _] : j.items()) {
    if (!known.count(key)) throw std::invalid_argument("unknown config key '" + key + "'");
  }
  return c;
}

void PipelineConfig::set(std::string_view key, std::string_view value) {
  bool found = false;
  visit(*this, [&](const char* name, auto& field, bool) {
    if (key != name) return;
    found = true;
    try {
      parse_text(value, field);
    } catch (const std::exception& e) {
      throw std::invalid_argument("override '" + std::string(key) + "=" + std::string(value) +
                                  "': " + e.what());
    }
  });
  if (!found) throw std::invalid_argument("unknown config key '" + std::string(key) + "'");
}

void PipelineConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(what);
  };
  require(!run_root.empty(), "run_root must not be empty");
  require(synth.users >= 1, "synth.users must be >= 1");
  require(synth.sessions_per_user >= 1, "synth.sessions_per_user must be >= 1");
  require(session_boundary_minutes >= 1, "session_boundary_minutes must be >= 1");
  require(test_fraction > 0.0 && test_fraction < 1.0, "test_fraction must be in (0, 1)");
  require(top_n >= 1, "top_n must be >= 1");
  require(min_popularity >= 1, "index.min_popularity must be >= 1");
  embedding.validate();
  ranker.validate();
  require(!variants.empty(), "variants must not be empty");
  std::set<Variant> unique(variants.begin(), variants.end());
  require(unique.size() == variants.size(), "variants must not repeat");
  require(eval_iterations >= 1, "eval.iterations must be >= 1");
  require(eval_level > 0.0 && eval_level < 1.0, "eval.level must be in (0, 1)");
  require(threads >= 1, "threads must be >= 1");
  require(serve_port >= 0 && serve_port <= 65535, "serve.port must be in [0, 65535]");
  require(serve_session_ttl_minutes >= 1, "serve.session_ttl_minutes must be >= 1");
  require(pdp_grid >= 1, "pdp.grid must be >= 1");
}

std::string PipelineConfig::hash() const {
  Json j = Json::object();
  visit(*this, [&](const char* key, const auto& value, bool affects) {
    if (affects) j[key] = to_json_value(value);
  });
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a64(j.dump())));
  return buf;
}

PipelineConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open config " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return PipelineConfig::from_json(buf.str());
}

MissingArtifact::MissingArtifact(const fs::path& path, std::string_view producer)
    : std::runtime_error("missing " + path.string() + "; run `qac " + std::string(producer) +
                         "` first"),
      producer_(producer) {}

Pipeline::Pipeline(PipelineConfig config, std::ostream* log)
    : config_(std::move(config)), log_(log) {
  config_.validate();
  run_dir_ = fs::path(config_.run_root) / config_.hash();
}

void Pipeline::note(const std::string& line) const {
  if (log_) *log_ << "[qac] " << line << '\n' << std::flush;
}

fs::path Pipeline::require(const fs::path& path, std::string_view producer) const {
  if (!fs::exists(path)) throw MissingArtifact(path, producer);
  return path;
}

fs::path Pipeline::log_file() const {
  return config_.log_path.empty() ? run_dir_ / "log.tsv" : fs::path(config_.log_path);
}
fs::path Pipeline::sessions_file(bool test) const {
  return run_dir_ / (test ? "sessions_test.jsonl" : "sessions_train.jsonl");
}
fs::path Pipeline::impressions_file(bool test) const {
  return run_dir_ / (test ? "impressions_test.jsonl" : "impressions_train.jsonl");
}
fs::path Pipeline::embeddings_file() const { return run_dir_ / "embeddings.bin"; }
fs::path Pipeline::index_file() const { return run_dir_ / "index.bin"; }
fs::path Pipeline::matrix_file(Variant variant, bool test) const {
  return run_dir_ /
         ("features_" + std::string(to_string(variant)) + (test ? "_test.ltr" : "_train.ltr"));
}
fs::path Pipeline::ranker_file(Variant variant) const {
  return run_dir_ / ("ranker_" + std::string(to_string(variant)) + ".model");
}
fs::path Pipeline::report_file(std::string_view extension) const {
  return run_dir_ / ("report." + std::string(extension));
}

void Pipeline::synth() {
  if (!config_.log_path.empty()) {
    throw std::invalid_argument("config names an input log; synth writes only inside the run dir");
  }
  fs::create_directories(run_dir_);
  const auto events = generate_synthetic_log(config_.synth, config_.synth_seed);
  write_log_file(log_file().string(), events);
  note("synth: " + std::to_string(events.size()) + " events -> " + log_file().string());
}

void Pipeline::segment() {
  fs::create_directories(run_dir_);
  const auto events = read_log_file(require(log_file(), "synth").string());
  auto sessions = qac::segment(events, config_.session_boundary_minutes);

  // Chronological split on session start; the latest sessions form the test set.
  std::vector<std::size_t> order(sessions.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto ta = sessions[a].queries.front().timestamp_ms;
    const auto tb = sessions[b].queries.front().timestamp_ms;
    if (ta != tb) return ta < tb;
    return sessions[a].session_id < sessions[b].session_id;
  });
  const auto n_test = static_cast<std::size_t>(
      std::llround(config_.test_fraction * static_cast<double>(sessions.size())));
  std::vector<bool> is_test(sessions.size(), false);
  for (std::size_t k = sessions.size() - n_test; k < sessions.size(); ++k) is_test[order[k]] = true;
  std::vector<Session> train;
  std::vector<Session> test;
  for (std::size_t i = 0; i < sessions.size(); ++i) {
    (is_test[i] ? test : train).push_back(std::move(sessions[i]));
  }

  const auto train_imp = build_impressions(train, events, 1);
  const auto test_imp = build_impressions(test, events, train_imp.impressions.size() + 1);
  write_sessions_file(sessions_file(false).string(), train);
  write_sessions_file(sessions_file(true).string(), test);
  write_impressions_file(impressions_file(false).string(), train_imp.impressions);
  write_impressions_file(impressions_file(true).string(), test_imp.impressions);

  const auto with_context = std::count_if(test_imp.impressions.begin(), test_imp.impressions.end(),
                                          [](const Impression& i) { return i.has_context(); });
  note("segment: " + std::to_string(train.size()) + " train / " + std::to_string(test.size()) +
       " test sessions; " + std::to_string(train_imp.impressions.size()) + " train / " +
       std::to_string(test_imp.impressions.size()) + " test impressions (" +
       std::to_string(with_context) + " test with context); skipped " +
       std::to_string(train_imp.skipped + test_imp.skipped));
}

void Pipeline::train_embeddings() {
  const auto sessions = read_sessions(require(sessions_file(false), "segment"));
  const auto docs = build_training_docs(sessions);
  const auto start = std::chrono::steady_clock::now();
  TrainStats stats;
  const auto model = train(docs, config_.embedding, &stats);
  save_model(model, embeddings_file().string());
  std::string losses;
  for (const double l : stats.epoch_loss) losses += " " + format_double(l);
  note("train-embeddings: " + std::to_string(docs.size()) + " documents, " +
       std::to_string(model.dictionary.word_count()) + " words, epoch loss" + losses + " (" +
       seconds_since(start) + ")");
}

void Pipeline::build_index() {
  const auto sessions = read_sessions(require(sessions_file(false), "segment"));
  std::vector<NormalizedQuery> queries;
  for (const auto& s : sessions) {
    for (const auto& q : s.queries) queries.push_back(q.query);
  }
  const auto index =
      PrefixIndex::build(queries, static_cast<std::uint64_t>(config_.min_popularity));
  save_index(index, index_file().string());
  note("build-index: " + std::to_string(index.size()) + " distinct queries, total count " +
       std::to_string(index.total_count()));
}

void Pipeline::extract() {
  const auto index = load_index(require(index_file(), "build-index").string());
  const bool need_model = std::any_of(config_.variants.begin(), config_.variants.end(),
                                      [](Variant v) { return uses_embeddings(v); });
  std::optional<EmbeddingModel> model;
  if (need_model) model = load_model(require(embeddings_file(), "train-embeddings").string());
  for (const bool test : {false, true}) {
    const auto impressions =
        read_impressions_file(require(impressions_file(test), "segment").string());
    for (const auto variant : config_.variants) {
      const auto start = std::chrono::steady_clock::now();
      const auto result =
          qac::extract(impressions, model ? &*model : nullptr, index, variant);
      write_matrix(result.matrix, matrix_file(variant, test).string());
      note("extract: " + std::string(to_string(variant)) + (test ? " test " : " train ") +
           std::to_string(result.matrix.rows()) + " rows x " +
           std::to_string(result.matrix.schema.size()) + " features (" + seconds_since(start) +
           ")");
    }
  }
}

void Pipeline::train_ranker() {
  for (const auto variant : config_.variants) {
    const auto matrix = read_matrix(require(matrix_file(variant, false), "extract").string());
    const auto start = std::chrono::steady_clock::now();
    FitOptions options;
    options.threads = config_.threads;
    const auto ensemble = fit(matrix, config_.ranker, options);
    save_ensemble(ensemble, ranker_file(variant).string());
    note("train-ranker: " + std::string(to_string(variant)) + " " +
         std::to_string(ensemble.trees.size()) + " trees (" + seconds_since(start) + ")");
  }
}

std::vector<ModelRanking> Pipeline::rankings() const {
  const auto impressions =
      read_impressions_file(require(impressions_file(true), "segment").string());
  std::map<std::uint64_t, bool> has_context;
  for (const auto& imp : impressions) has_context[imp.group_id] = imp.has_context();

  std::vector<ModelRanking> models;
  for (const auto variant : config_.variants) {
    const auto model_path = require(ranker_file(variant), "train-ranker");
    const auto matrix = read_matrix(require(matrix_file(variant, true), "extract").string());
    const auto ensemble = load_ensemble(model_path.string());
    const Eigen::VectorXd scores = predict(ensemble, matrix);

    if (models.empty()) {
      ModelRanking mpc{std::string(kMpcModel), {}};
      for (std::size_t g = 0; g < matrix.groups(); ++g) {
        const auto b = matrix.group_offsets[g];
        const auto n = matrix.group_offsets[g + 1] - b;
        const std::vector<double> zeros(n, 0.0);
        const auto order = rank_by_score(zeros, {matrix.mpc_ranks.data() + b, n});
        const auto it = has_context.find(matrix.group_ids[b]);
        if (it == has_context.end()) {
          throw std::runtime_error("test matrix group " + std::to_string(matrix.group_ids[b]) +
                                   " is not in the test impressions; rerun `qac extract`");
        }
        mpc.impressions.push_back(
            make_ranked(matrix.group_ids[b], order, {matrix.labels.data() + b, n}, it->second));
      }
      models.push_back(std::move(mpc));
    }

    ModelRanking ranked{std::string(to_string(variant)), {}};
    for (std::size_t g = 0; g < matrix.groups(); ++g) {
      const auto b = matrix.group_offsets[g];
      const auto n = matrix.group_offsets[g + 1] - b;
      const auto order = rank_by_score({scores.data() + b, n}, {matrix.mpc_ranks.data() + b, n});
      const auto it = has_context.find(matrix.group_ids[b]);
      ranked.impressions.push_back(make_ranked(matrix.group_ids[b], order,
                                               {matrix.labels.data() + b, n},
                                               it != has_context.end() && it->second));
    }
    models.push_back(std::move(ranked));
  }
  return models;
}

std::vector<MetricReport> Pipeline::evaluate() {
  const auto models = rankings();
  EvalOptions options;
  options.iterations = config_.eval_iterations;
  options.level = config_.eval_level;
  options.seed = config_.eval_seed;
  options.threads = config_.threads;
  auto reports = qac::evaluate(models, options);
  write_text(report_file("txt"), format_table(reports));
  write_text(report_file("json"), to_json(reports));
  write_text(report_file("csv"), to_csv(reports));
  note("evaluate: reports in " + run_dir_.string());
  return reports;
}

std::vector<MetricReport> Pipeline::run_all() {
  if (config_.log_path.empty()) synth();
  segment();
  train_embeddings();
  build_index();
  extract();
  train_ranker();
  return evaluate();
}

std::vector<Neighbor> Pipeline::neighbors(std::string_view query, std::size_t k) const {
  const auto model = load_model(require(embeddings_file(), "train-embeddings").string());
  return nearest_neighbors(model, query, k);
}

std::vector<PdPoint> Pipeline::pdp(Variant variant, std::string_view feature, int grid,
                                  bool context_only) const {
  const auto ensemble = load_ensemble(require(ranker_file(variant), "train-ranker").string());
  auto matrix = read_matrix(require(matrix_file(variant, true), "extract").string());
  if (context_only) matrix = context_groups(matrix);
  const auto points = partial_dependence(ensemble, matrix, feature, grid);
  std::string csv = "value,mean_score\n";
  for (const auto& p : points) csv += format_double(p.value) + "," + format_double(p.mean_score) + "\n";
  write_text(run_dir_ / ("pdp_" + std::string(to_string(variant)) + "_" + std::string(feature) +
                         (context_only ? "_context" : "") + ".csv"),
             csv);
  return points;
}

}  // namespace qac
