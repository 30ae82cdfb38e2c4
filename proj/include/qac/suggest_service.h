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

// HTTP+JSON suggestion service. Field names are listed in docs/formats.md.
//
//   POST /session                      -> {"session_token"}
//   GET  /suggest?prefix&session&model[&explain=1]
//   POST /issue {"session","query"}    -> {"query","context_length"}
//   GET  /context?session              -> {"session_token","queries"}
//   GET  /healthz, GET /models

#ifndef QAC_SUGGEST_SERVICE_H_
#define QAC_SUGGEST_SERVICE_H_

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "qac/corpus.h"
#include "qac/features.h"
#include "qac/lambdamart.h"
#include "qac/prefix_index.h"
#include "qac/subword.h"

namespace httplib {
class Server;
}

namespace qac {

/// Immutable artifacts shared by all requests.
struct ServiceModels {
  PrefixIndex index;
  std::optional<EmbeddingModel> embeddings;
  std::map<Variant, TreeEnsemble> rankers;
};

struct ServiceConfig {
  int top_n = 10;
  int session_ttl_minutes = 30;
  std::string cors_origin = "*";
};

/// Milliseconds since an arbitrary epoch.
using Clock = std::function<std::int64_t()>;
Clock system_clock();

/// Carries the HTTP status the error maps to.
class ServiceError : public std::runtime_error {
 public:
  ServiceError(int status, const std::string& what) : std::runtime_error(what), status_(status) {}
  int status() const { return status_; }

 private:
  int status_;
};

struct Suggestion {
  std::string query;
  double score = 0.0;
  int mpc_rank = 0;
  // Filled when explanations are requested: (feature name, value).
  std::vector<std::pair<std::string, double>> features;
};

struct SuggestResult {
  std::string prefix;  // normalized
  std::string model;
  std::size_t context_length = 0;
  std::vector<Suggestion> suggestions;
};

class SuggestService {
 public:
  SuggestService(std::shared_ptr<const ServiceModels> models, ServiceConfig config,
                 Clock clock = system_clock());

  /// 128-bit random token as 32 hex digits.
  std::string create_session();
  /// Throws ServiceError(404) for unknown or expired sessions, 400 for an
  /// unknown or unloaded model, 400 for a prefix that normalizes to empty.
  SuggestResult suggest(const std::string& session, std::string_view prefix,
                        std::string_view model, bool explain);
  /// Returns the stored (normalized) query and the new context length.
  std::pair<std::string, std::size_t> issue(const std::string& session, std::string_view query);
  std::vector<std::string> context(const std::string& session);
  /// "mpc" followed by the loaded ranker variants.
  std::vector<std::string> model_names() const;
  std::size_t live_sessions() const;
  /// Drops sessions idle for longer than the TTL; returns how many.
  std::size_t evict_expired();

  const ServiceModels& models() const { return *models_; }
  const ServiceConfig& config() const { return config_; }

  /// Installs the HTTP routes and CORS handling on `server`.
  void register_routes(httplib::Server& server);

 private:
  struct LiveSession {
    std::mutex mutex;
    std::vector<TimedQuery> queries;
    std::int64_t created_ms = 0;
    std::int64_t last_active_ms = 0;
  };

  std::shared_ptr<LiveSession> find(const std::string& token);
  std::int64_t ttl_ms() const;

  std::shared_ptr<const ServiceModels> models_;
  ServiceConfig config_;
  Clock clock_;
  mutable std::shared_mutex sessions_mutex_;
  std::unordered_map<std::string, std::shared_ptr<LiveSession>> sessions_;
};

/// Loads the index, embeddings (if any variant needs them) and every
/// ranker found under the given paths.
std::shared_ptr<const ServiceModels> load_service_models(
    const std::string& index_path, const std::string& embeddings_path,
    const std::map<Variant, std::string>& ranker_paths);

}  // namespace qac

#endif  // QAC_SUGGEST_SERVICE_H_
