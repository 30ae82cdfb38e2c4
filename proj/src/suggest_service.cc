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

#include "qac/suggest_service.h"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <random>

#include "httplib.h"
#include "json.hpp"

namespace qac {
namespace {

using Json = nlohmann::ordered_json;

Json result_json(const SuggestResult& r) {
  Json out;
  out["prefix"] = r.prefix;
  out["model"] = r.model;
  out["context_length"] = r.context_length;
  out["suggestions"] = Json::array();
  for (const auto& s : r.suggestions) {
    Json item;
    item["query"] = s.query;
    item["score"] = s.score;
    item["mpc_rank"] = s.mpc_rank;
    if (!s.features.empty()) {
      Json f = Json::object();
      for (const auto& [name, value] : s.features) f[name] = value;
      item["features"] = std::move(f);
    }
    out["suggestions"].push_back(std::move(item));
  }
  return out;
}

void send_json(httplib::Response& res, int status, const Json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

template <typename Handler>
httplib::Server::Handler guarded(Handler handler) {
  return [handler](const httplib::Request& req, httplib::Response& res) {
    try {
      send_json(res, 200, handler(req));
    } catch (const ServiceError& e) {
      send_json(res, e.status(), Json{{"error", e.what()}});
    } catch (const nlohmann::json::exception& e) {
      send_json(res, 400, Json{{"error", std::string("bad request body: ") + e.what()}});
    } catch (const std::exception& e) {
      send_json(res, 500, Json{{"error", e.what()}});
    }
  };
}

std::string param(const httplib::Request& req, const char* name) {
  return req.has_param(name) ? req.get_param_value(name) : std::string();
}

}  // namespace

Clock system_clock() {
  return [] {
    return std::chrono::duration_cast<std::chrono::milliseconds>(
               std::chrono::system_clock::now().time_since_epoch())
        .count();
  };
}

SuggestService::SuggestService(std::shared_ptr<const ServiceModels> models, ServiceConfig config,
                               Clock clock)
    : models_(std::move(models)), config_(std::move(config)), clock_(std::move(clock)) {
  if (!models_) throw std::invalid_argument("service needs models");
  if (config_.top_n < 1) throw std::invalid_argument("top_n must be >= 1");
  if (config_.session_ttl_minutes < 1) throw std::invalid_argument("session TTL must be >= 1");
}

std::int64_t SuggestService::ttl_ms() const {
  return static_cast<std::int64_t>(config_.session_ttl_minutes) * 60'000;
}

std::string SuggestService::create_session() {
  evict_expired();
  static thread_local std::random_device device;
  auto session = std::make_shared<LiveSession>();
  session->created_ms = session->last_active_ms = clock_();
  for (;;) {
    std::string token;
    for (int i = 0; i < 4; ++i) {
      char buf[9];
      std::snprintf(buf, sizeof(buf), "%08x", static_cast<unsigned>(device()));
      token += buf;
    }
    std::unique_lock lock(sessions_mutex_);
    if (sessions_.emplace(token, session).second) return token;
  }
}

std::shared_ptr<SuggestService::LiveSession> SuggestService::find(const std::string& token) {
  std::shared_ptr<LiveSession> session;
  {
    std::shared_lock lock(sessions_mutex_);
    const auto it = sessions_.find(token);
    if (it != sessions_.end()) session = it->second;
  }
  if (!session) throw ServiceError(404, "unknown session");
  const auto now = clock_();
  bool expired = false;
  {
    std::lock_guard lock(session->mutex);
    expired = now - session->last_active_ms > ttl_ms();
    if (!expired) session->last_active_ms = now;
  }
  if (expired) {
    std::unique_lock lock(sessions_mutex_);
    sessions_.erase(token);
    throw ServiceError(404, "session expired");
  }
  return session;
}

std::size_t SuggestService::evict_expired() {
  const auto now = clock_();
  std::unique_lock lock(sessions_mutex_);
  return std::erase_if(sessions_, [&](const auto& entry) {
    std::lock_guard session_lock(entry.second->mutex);
    return now - entry.second->last_active_ms > ttl_ms();
  });
}

std::size_t SuggestService::live_sessions() const {
  std::shared_lock lock(sessions_mutex_);
  return sessions_.size();
}

std::vector<std::string> SuggestService::model_names() const {
  std::vector<std::string> names = {"mpc"};
  for (const auto& [variant, _] : models_->rankers) names.emplace_back(to_string(variant));
  return names;
}

SuggestResult SuggestService::suggest(const std::string& session, std::string_view prefix,
                                      std::string_view model, bool explain) {
  const auto live = find(session);
  std::optional<Variant> variant;
  if (model != "mpc") {
    variant = parse_variant(model);
    if (!variant) throw ServiceError(400, "unknown model '" + std::string(model) + "'");
    if (!models_->rankers.count(*variant)) {
      throw ServiceError(400, "model '" + std::string(model) + "' is not loaded");
    }
  }
  const auto normalized = normalize(prefix);
  if (normalized.empty()) throw ServiceError(400, "prefix is empty after normalization");

  std::vector<NormalizedQuery> context;
  {
    std::lock_guard lock(live->mutex);
    for (const auto& q : live->queries) context.push_back(q.query);
  }

  SuggestResult result;
  result.prefix = normalized.text;
  result.model = std::string(model);
  result.context_length = context.size();
  const auto completions =
      models_->index.mpc_top_n(normalized.text, static_cast<std::size_t>(config_.top_n));
  if (!variant) {
    for (std::size_t i = 0; i < completions.size(); ++i) {
      result.suggestions.push_back({completions[i].query,
                                    static_cast<double>(completions[i].popularity),
                                    static_cast<int>(i) + 1,
                                    {}});
    }
    return result;
  }

  std::vector<NormalizedQuery> candidates;
  std::vector<int> ranks;
  for (std::size_t i = 0; i < completions.size(); ++i) {
    candidates.push_back(from_normalized(completions[i].query));
    ranks.push_back(static_cast<int>(i) + 1);
  }
  const auto& ensemble = models_->rankers.at(*variant);
  const Eigen::MatrixXd rows =
      group_features(*variant, context, normalized.text, candidates, models_->index,
                     models_->embeddings ? &*models_->embeddings : nullptr);
  const Eigen::VectorXd scores = predict(ensemble, rows);
  const auto order =
      rank_by_score({scores.data(), static_cast<std::size_t>(scores.size())}, ranks);
  for (const auto r : order) {
    Suggestion s{candidates[r].text, scores[static_cast<Eigen::Index>(r)], ranks[r], {}};
    if (explain) {
      for (std::size_t c = 0; c < ensemble.schema.size(); ++c) {
        s.features.emplace_back(ensemble.schema.features[c].name,
                                rows(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)));
      }
    }
    result.suggestions.push_back(std::move(s));
  }
  return result;
}

std::pair<std::string, std::size_t> SuggestService::issue(const std::string& session,
                                                          std::string_view query) {
  const auto live = find(session);
  auto normalized = normalize(query);
  if (normalized.empty()) throw ServiceError(400, "query is empty after normalization");
  std::lock_guard lock(live->mutex);
  const auto text = normalized.text;
  live->queries.push_back({std::move(normalized), clock_(), live->queries.size()});
  return {text, live->queries.size()};
}

std::vector<std::string> SuggestService::context(const std::string& session) {
  const auto live = find(session);
  std::lock_guard lock(live->mutex);
  std::vector<std::string> out;
  for (const auto& q : live->queries) out.push_back(q.query.text);
  return out;
}

void SuggestService::register_routes(httplib::Server& server) {
  server.set_default_headers({{"Access-Control-Allow-Origin", config_.cors_origin},
                              {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"},
                              {"Access-Control-Allow-Headers", "Content-Type"}});
  server.Options(".*", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

  server.Get("/healthz", guarded([](const httplib::Request&) { return Json{{"status", "ok"}}; }));

  server.Get("/models", guarded([this](const httplib::Request&) {
               Json models = Json::array();
               models.push_back(Json{{"name", "mpc"}, {"schema_version", nullptr}});
               for (const auto& [variant, ensemble] : models_->rankers) {
                 models.push_back(Json{{"name", std::string(to_string(variant))},
                                       {"schema_version", ensemble.schema.version},
                                       {"trees", ensemble.trees.size()}});
               }
               return Json{{"models", models}, {"top_n", config_.top_n}};
             }));

  server.Post("/session", guarded([this](const httplib::Request&) {
                return Json{{"session_token", create_session()}};
              }));

  server.Get("/suggest", guarded([this](const httplib::Request& req) {
               const auto model = req.has_param("model") ? param(req, "model") : "mpc";
               const auto explain = param(req, "explain");
               return result_json(suggest(param(req, "session"), param(req, "prefix"), model,
                                          explain == "1" || explain == "true"));
             }));

  server.Post("/issue", guarded([this](const httplib::Request& req) {
                const auto body = Json::parse(req.body);
                if (!body.is_object() || !body.contains("session") || !body.contains("query")) {
                  throw ServiceError(400, "body must be {\"session\": ..., \"query\": ...}");
                }
                const auto [text, length] = issue(body.at("session").get<std::string>(),
                                                  body.at("query").get<std::string>());
                return Json{{"query", text}, {"context_length", length}};
              }));

  server.Get("/context", guarded([this](const httplib::Request& req) {
               const auto token = param(req, "session");
               return Json{{"session_token", token}, {"queries", context(token)}};
             }));
}

std::shared_ptr<const ServiceModels> load_service_models(
    const std::string& index_path, const std::string& embeddings_path,
    const std::map<Variant, std::string>& ranker_paths) {
  auto models = std::make_shared<ServiceModels>();
  models->index = load_index(index_path);
  bool need_embeddings = false;
  for (const auto& [variant, path] : ranker_paths) {
    if (!std::filesystem::exists(path)) continue;
    auto ensemble = load_ensemble(path);
    check_schema(ensemble, schema_for(variant));
    models->rankers.emplace(variant, std::move(ensemble));
    need_embeddings = need_embeddings || uses_embeddings(variant);
  }
  if (need_embeddings) models->embeddings = load_model(embeddings_path);
  return models;
}

}  // namespace qac
