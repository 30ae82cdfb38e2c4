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

// qac: command-line driver for the suggestion pipeline.
//
//   qac [--config FILE] [--set key=value ...] [--threads N] <command> ...
//
// Artifacts go to <run_root>/<config hash>/. Every command echoes the
// effective config to stderr before doing any work.

#include <csignal>
#include <cstdio>
#include <iostream>

#include "CLI11.hpp"
#include "qac/ltr_format.h"
#include "qac/pipeline.h"
#include "qac/prefix_index.h"
#include "qac/suggest_service.h"
// After Eigen: httplib pulls in <resolv.h>, whose _res macro breaks Eigen.
#include "httplib.h"

namespace {

qac::Variant variant_or_throw(const std::string& name) {
  const auto v = qac::parse_variant(name);
  if (!v) throw std::invalid_argument("unknown variant '" + name + "'");
  return *v;
}

httplib::Server* g_server = nullptr;

void stop_server(int) {
  if (g_server) g_server->stop();
}

int serve(const qac::Pipeline& pipeline) {
  const auto& cfg = pipeline.config();
  std::map<qac::Variant, std::string> rankers;
  for (const auto v : cfg.variants) rankers[v] = pipeline.ranker_file(v).string();
  if (!std::filesystem::exists(pipeline.index_file())) {
    throw qac::MissingArtifact(pipeline.index_file(), "build-index");
  }
  auto models = qac::load_service_models(pipeline.index_file().string(),
                                         pipeline.embeddings_file().string(), rankers);
  qac::ServiceConfig service_cfg;
  service_cfg.top_n = cfg.top_n;
  service_cfg.session_ttl_minutes = cfg.serve_session_ttl_minutes;
  service_cfg.cors_origin = cfg.serve_cors_origin;
  qac::SuggestService service(models, service_cfg);

  httplib::Server server;
  service.register_routes(server);
  g_server = &server;
  std::signal(SIGINT, stop_server);
  std::signal(SIGTERM, stop_server);
  std::cerr << "[qac] serve: models";
  for (const auto& name : service.model_names()) std::cerr << ' ' << name;
  std::cerr << "; listening on " << cfg.serve_host << ':' << cfg.serve_port << std::endl;
  if (!server.listen(cfg.serve_host, cfg.serve_port)) {
    std::cerr << "qac: cannot listen on " << cfg.serve_host << ':' << cfg.serve_port << '\n';
    return 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Personalized query auto-completion pipeline"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::vector<std::string> overrides;
  int threads = 0;
  app.add_option("-c,--config", config_path, "JSON config file");
  app.add_option("--set", overrides, "Override a config key (key=value); repeatable");
  app.add_option("--threads", threads, "Worker threads for ranker training and bootstrap")
      ->check(CLI::PositiveNumber);

  auto* synth = app.add_subcommand("synth", "Generate the synthetic query log");
  auto* segment = app.add_subcommand("segment", "Sessionize the log and build impressions");
  auto* embeddings = app.add_subcommand("train-embeddings", "Train subword embeddings");
  auto* build_index = app.add_subcommand("build-index", "Build the MPC prefix index");
  auto* extract = app.add_subcommand("extract", "Write LTR feature matrices per variant");
  auto* train_ranker = app.add_subcommand("train-ranker", "Train one LambdaMART model per variant");
  auto* evaluate = app.add_subcommand("evaluate", "Evaluate all variants against MPC");
  auto* run = app.add_subcommand("run", "Run synth through evaluate");
  auto* show_config = app.add_subcommand("config", "Print the effective config and run dir");

  auto* neighbors = app.add_subcommand("neighbors", "Nearest vocabulary words to a query");
  std::string query;
  std::size_t k = 10;
  neighbors->add_option("query", query, "Query text")->required();
  neighbors->add_option("-k", k, "Neighbors to print")->check(CLI::PositiveNumber);

  std::string pdp_variant = "embedding";
  std::string pdp_feature = "user_context_cosine";
  int pdp_grid = 0;
  bool pdp_context = false;
  auto add_pdp_options = [&](CLI::App* cmd) {
    cmd->add_flag("--context-only", pdp_context, "Average over impressions with session context");
    cmd->add_option("--variant", pdp_variant, "Ranker variant");
    cmd->add_option("--feature", pdp_feature, "Feature name");
    cmd->add_option("--grid", pdp_grid, "Grid points")->check(CLI::PositiveNumber);
  };
  auto* pdp = app.add_subcommand("pdp", "Partial dependence of one feature");
  add_pdp_options(pdp);

  auto* index_cmd = app.add_subcommand("index", "Prefix index operations");
  index_cmd->require_subcommand(1);
  auto* index_build = index_cmd->add_subcommand("build", "Same as build-index");
  auto* index_query = index_cmd->add_subcommand("query", "Print MPC completions");
  std::string prefix;
  std::size_t top_n = 0;
  index_query->add_option("prefix", prefix, "Prefix (normalized before lookup)")->required();
  index_query->add_option("-n", top_n, "Completions to print")->check(CLI::PositiveNumber);

  auto* ranker_cmd = app.add_subcommand("ranker", "Ranker operations");
  ranker_cmd->require_subcommand(1);
  auto* ranker_train = ranker_cmd->add_subcommand("train", "Same as train-ranker");
  auto* ranker_score = ranker_cmd->add_subcommand("score", "Score an LTR matrix file");
  std::string score_variant = "embedding";
  std::string matrix_path;
  ranker_score->add_option("--variant", score_variant, "Ranker variant");
  ranker_score->add_option("matrix", matrix_path, "LTR matrix (defaults to the test matrix)");
  auto* ranker_pdp = ranker_cmd->add_subcommand("pdp", "Same as pdp");
  add_pdp_options(ranker_pdp);

  auto* serve_cmd = app.add_subcommand("serve", "Serve suggestions over HTTP");
  int port = -1;
  serve_cmd->add_option("--port", port, "Listen port (overrides serve.port)");

  CLI11_PARSE(app, argc, argv);

  try {
    qac::PipelineConfig config;
    if (!config_path.empty()) config = qac::load_config(config_path);
    for (const auto& o : overrides) {
      const auto eq = o.find('=');
      if (eq == std::string::npos) throw std::invalid_argument("--set expects key=value: " + o);
      config.set(o.substr(0, eq), o.substr(eq + 1));
    }
    if (threads > 0) config.threads = threads;
    if (port >= 0) config.serve_port = port;
    if (pdp_grid > 0) config.pdp_grid = pdp_grid;
    config.validate();

    qac::Pipeline pipeline(config, &std::cerr);
    std::cerr << "[qac] effective config (run dir " << pipeline.run_dir().string() << "):\n"
              << config.to_json();

    if (synth->parsed()) pipeline.synth();
    if (segment->parsed()) pipeline.segment();
    if (embeddings->parsed()) pipeline.train_embeddings();
    if (build_index->parsed() || index_build->parsed()) pipeline.build_index();
    if (extract->parsed()) pipeline.extract();
    if (train_ranker->parsed() || ranker_train->parsed()) pipeline.train_ranker();
    if (evaluate->parsed()) std::cout << qac::format_table(pipeline.evaluate());
    if (run->parsed()) std::cout << qac::format_table(pipeline.run_all());
    if (show_config->parsed()) {
      std::cout << config.to_json();
      std::cout << "run_dir " << pipeline.run_dir().string() << '\n';
    }
    if (neighbors->parsed()) {
      for (const auto& n : pipeline.neighbors(query, k)) {
        std::printf("%s\t%.6f\n", n.word.c_str(), n.cosine);
      }
    }
    if (pdp->parsed() || ranker_pdp->parsed()) {
      std::cout << "value,mean_score\n";
      for (const auto& p :
           pipeline.pdp(variant_or_throw(pdp_variant), pdp_feature, config.pdp_grid, pdp_context)) {
        std::cout << qac::format_double(p.value) << ',' << qac::format_double(p.mean_score)
                  << '\n';
      }
    }
    if (index_query->parsed()) {
      if (!std::filesystem::exists(pipeline.index_file())) {
        throw qac::MissingArtifact(pipeline.index_file(), "build-index");
      }
      const auto index = qac::load_index(pipeline.index_file().string());
      const auto n = top_n > 0 ? top_n : static_cast<std::size_t>(config.top_n);
      for (const auto& c : index.mpc_top_n(qac::normalize(prefix).text, n)) {
        std::cout << c.query << '\t' << c.popularity << '\n';
      }
    }
    if (ranker_score->parsed()) {
      const auto variant = variant_or_throw(score_variant);
      const auto model_path = pipeline.ranker_file(variant);
      if (!std::filesystem::exists(model_path)) throw qac::MissingArtifact(model_path, "train-ranker");
      const auto path =
          matrix_path.empty() ? pipeline.matrix_file(variant, true).string() : matrix_path;
      const auto matrix = qac::read_matrix(path);
      const auto scores = qac::predict(qac::load_ensemble(model_path.string()), matrix);
      for (std::size_t r = 0; r < matrix.rows(); ++r) {
        std::cout << matrix.group_ids[r] << '\t' << matrix.candidates[r] << '\t'
                  << qac::format_double(scores[static_cast<Eigen::Index>(r)]) << '\n';
      }
    }
    if (serve_cmd->parsed()) return serve(pipeline);
  } catch (const std::exception& e) {
    std::cerr << "qac: error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
