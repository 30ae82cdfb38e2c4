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

#ifndef QAC_PIPELINE_H_
#define QAC_PIPELINE_H_

#include <filesystem>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "qac/evaluation.h"
#include "qac/features.h"
#include "qac/lambdamart.h"
#include "qac/subword.h"
#include "qac/synthetic.h"

namespace qac {

/// Flat configuration. Keys use dots ("embedding.dim"); see to_json() for
/// the full list with defaults.
struct PipelineConfig {
  std::string run_root = "runs";
  // Input log. Empty means the log written by `synth` inside the run dir.
  std::string log_path;
  std::uint64_t synth_seed = 7;
  SyntheticSpec synth = default_synthetic_spec();
  int session_boundary_minutes = 30;
  double test_fraction = 0.2;
  int top_n = 10;
  std::int64_t min_popularity = 1;
  TrainConfig embedding = default_embedding_config();
  RankerConfig ranker;
  std::vector<Variant> variants = {kAllVariants.begin(), kAllVariants.end()};
  int eval_iterations = 1000;
  double eval_level = 0.95;
  std::uint64_t eval_seed = 1;
  int threads = 1;
  std::string serve_host = "127.0.0.1";
  int serve_port = 8080;
  int serve_session_ttl_minutes = 30;
  std::string serve_cors_origin = "*";
  int pdp_grid = 20;

  static TrainConfig default_embedding_config();

  /// Every key with its effective value, in a fixed order.
  std::string to_json() const;
  /// Keys absent from `text` keep their defaults; unknown keys throw
  /// std::invalid_argument.
  static PipelineConfig from_json(std::string_view text);
  /// Applies one "key=value" style override.
  void set(std::string_view key, std::string_view value);
  /// Throws std::invalid_argument.
  void validate() const;
  /// Hex digest of the settings that affect artifacts. Threads and serving
  /// options are excluded.
  std::string hash() const;
};

PipelineConfig load_config(const std::string& path);

/// Raised when a command needs an artifact that an earlier command makes.
class MissingArtifact : public std::runtime_error {
 public:
  MissingArtifact(const std::filesystem::path& path, std::string_view producer);
  const std::string& producer() const { return producer_; }

 private:
  std::string producer_;
};

/// Artifacts of one run live under <run_root>/<config hash>/.
class Pipeline {
 public:
  /// `log` receives progress lines; null silences them.
  explicit Pipeline(PipelineConfig config, std::ostream* log = nullptr);

  const PipelineConfig& config() const { return config_; }
  const std::filesystem::path& run_dir() const { return run_dir_; }

  std::filesystem::path log_file() const;
  std::filesystem::path sessions_file(bool test) const;
  std::filesystem::path impressions_file(bool test) const;
  std::filesystem::path embeddings_file() const;
  std::filesystem::path index_file() const;
  std::filesystem::path matrix_file(Variant variant, bool test) const;
  std::filesystem::path ranker_file(Variant variant) const;
  std::filesystem::path report_file(std::string_view extension) const;

  void synth();
  void segment();
  void train_embeddings();
  void build_index();
  void extract();
  void train_ranker();
  /// Test-set rankings: MPC first, then one per variant.
  std::vector<ModelRanking> rankings() const;
  /// Writes report.txt, report.json and report.csv; returns the reports.
  std::vector<MetricReport> evaluate();
  /// synth (only without an input log) through evaluate.
  std::vector<MetricReport> run_all();

  std::vector<Neighbor> neighbors(std::string_view query, std::size_t k) const;
  /// Computed on the test matrix, or on its groups with session context;
  /// also written as CSV in the run dir.
  std::vector<PdPoint> pdp(Variant variant, std::string_view feature, int grid,
                           bool context_only = false) const;

 private:
  void note(const std::string& line) const;
  std::filesystem::path require(const std::filesystem::path& path, std::string_view producer) const;

  PipelineConfig config_;
  std::ostream* log_;
  std::filesystem::path run_dir_;
};

}  // namespace qac

#endif  // QAC_PIPELINE_H_
