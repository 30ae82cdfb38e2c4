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

#include <gtest/gtest.h>

#include <algorithm>
#include <thread>

#include "checks.h"
#include "json.hpp"
#include "qac/suggest_service.h"
// Last: its resolver headers define macros that clash with Eigen.
#include "httplib.h"

namespace qac {
namespace {

using nlohmann::json;

// Two topics that never share a document.
EmbeddingModel topic_model() {
  Rng rng(5);
  const std::vector<std::string> sport = {"nike", "adidas", "shoes", "sneakers", "running"};
  const std::vector<std::string> bath = {"shower", "curtain", "bathroom", "towel", "soap"};
  std::vector<TrainingDocument> docs;
  for (int d = 0; d < 1200; ++d) {
    auto words = d % 2 == 0 ? sport : bath;
    for (std::size_t i = words.size() - 1; i > 0; --i) {
      std::swap(words[i], words[rng.below(i + 1)]);
    }
    std::string text;
    for (std::size_t i = 0; i < 4; ++i) text += (i ? " " : "") + words[i];
    docs.push_back({text});
  }
  return train(docs, checks::planted_config());
}

// Score rises with user_context_cosine in 0.01 steps.
TreeEnsemble cosine_ranker() {
  TreeEnsemble e;
  e.schema = schema_for(Variant::kEmbedding);
  e.learning_rate = 1.0;
  const int f = e.schema.index_of("user_context_cosine");
  for (int k = -100; k < 100; ++k) {
    e.trees.push_back(Tree{{TreeNode{f, k / 100.0, 1, 2, 0}, TreeNode{-1, 0, -1, -1, 0.0},
                            TreeNode{-1, 0, -1, -1, 1.0}}});
  }
  return e;
}

std::shared_ptr<const ServiceModels> test_models() {
  static const auto models = [] {
    auto m = std::make_shared<ServiceModels>();
    m->index = PrefixIndex::from_counts(
        {{"shoes", 5}, {"shower curtain", 9}, {"shirt", 2}, {"nike", 7}, {"adidas", 4}});
    m->embeddings = topic_model();
    m->rankers.emplace(Variant::kEmbedding, cosine_ranker());
    TreeEnsemble flat;
    flat.schema = schema_for(Variant::kBaseline);
    m->rankers.emplace(Variant::kBaseline, flat);
    return std::shared_ptr<const ServiceModels>(m);
  }();
  return models;
}

struct FakeClock {
  std::shared_ptr<std::int64_t> now = std::make_shared<std::int64_t>(1'000'000);
  Clock clock() const {
    return [n = now] { return *n; };
  }
  void advance_minutes(int m) { *now += std::int64_t{m} * 60'000; }
};

std::vector<std::string> queries_of(const SuggestResult& r) {
  std::vector<std::string> out;
  for (const auto& s : r.suggestions) out.push_back(s.query);
  return out;
}

int status_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const ServiceError& e) {
    return e.status();
  }
  return 200;
}

TEST(Service, TokensAreUniqueHex) {
  SuggestService service(test_models(), {});
  const auto a = service.create_session();
  const auto b = service.create_session();
  EXPECT_EQ(a.size(), 32u);
  EXPECT_TRUE(std::all_of(a.begin(), a.end(), [](char c) { return std::isxdigit(c) != 0; }));
  EXPECT_NE(a, b);
  EXPECT_EQ(service.live_sessions(), 2u);
}

TEST(Service, MpcScoresArePopularity) {
  SuggestService service(test_models(), {});
  const auto s = service.create_session();
  const auto r = service.suggest(s, "SH", "mpc", false);
  EXPECT_EQ(r.prefix, "sh");
  EXPECT_EQ(queries_of(r), (std::vector<std::string>{"shower curtain", "shoes", "shirt"}));
  EXPECT_EQ(r.suggestions[0].score, 9.0);
  EXPECT_EQ(r.suggestions[2].mpc_rank, 3);
}

TEST(Service, ErrorStatuses) {
  SuggestService service(test_models(), {});
  const auto s = service.create_session();
  EXPECT_EQ(status_of([&] { service.suggest("nope", "sh", "mpc", false); }), 404);
  EXPECT_EQ(status_of([&] { service.suggest(s, "sh", "bogus", false); }), 400);
  EXPECT_EQ(status_of([&] { service.suggest(s, "sh", "textual", false); }), 400);
  EXPECT_EQ(status_of([&] { service.suggest(s, "?!", "mpc", false); }), 400);
  EXPECT_EQ(status_of([&] { service.issue(s, "   "); }), 400);
  EXPECT_EQ(status_of([&] { service.context("nope"); }), 404);
}

TEST(Service, SessionsExpireAfterIdleTtl) {
  FakeClock clock;
  ServiceConfig cfg;
  cfg.session_ttl_minutes = 30;
  SuggestService service(test_models(), cfg, clock.clock());
  const auto s = service.create_session();
  clock.advance_minutes(29);
  EXPECT_EQ(service.context(s).size(), 0u);  // touching renews the session
  clock.advance_minutes(29);
  EXPECT_NO_THROW(service.issue(s, "nike"));
  clock.advance_minutes(31);
  EXPECT_EQ(status_of([&] { service.context(s); }), 404);
  EXPECT_EQ(service.live_sessions(), 0u);
}

TEST(Service, EvictExpiredDropsOnlyIdleSessions) {
  FakeClock clock;
  SuggestService service(test_models(), {}, clock.clock());
  service.create_session();
  clock.advance_minutes(20);
  const auto fresh = service.create_session();
  clock.advance_minutes(15);
  EXPECT_EQ(service.evict_expired(), 1u);
  EXPECT_EQ(service.live_sessions(), 1u);
  EXPECT_NO_THROW(service.context(fresh));
}

TEST(Service, IssueNormalizesAndAppends) {
  SuggestService service(test_models(), {});
  const auto s = service.create_session();
  const auto [text, length] = service.issue(s, "NIKE!!");
  EXPECT_EQ(text, "nike");
  EXPECT_EQ(length, 1u);
  service.issue(s, "Adidas   Shoes");
  EXPECT_EQ(service.context(s), (std::vector<std::string>{"nike", "adidas shoes"}));
  EXPECT_EQ(service.suggest(s, "sh", "mpc", false).context_length, 2u);
}

TEST(Service, ContextSteersEmbeddingRanker) {
  SuggestService service(test_models(), {});
  const auto s = service.create_session();
  EXPECT_EQ(service.suggest(s, "sh", "mpc", false).suggestions[0].query, "shower curtain");
  service.issue(s, "nike");
  service.issue(s, "adidas");
  const auto r = service.suggest(s, "sh", "embedding", false);
  ASSERT_EQ(r.suggestions.size(), 3u);
  EXPECT_EQ(r.suggestions[0].query, "shoes");
  EXPECT_EQ(r.suggestions[0].mpc_rank, 2);

  const auto other = service.create_session();
  service.issue(other, "bathroom towel");
  EXPECT_EQ(service.suggest(other, "sh", "embedding", false).suggestions[0].query,
            "shower curtain");
}

TEST(Service, UntrainedRankerFallsBackToMpcOrder) {
  SuggestService service(test_models(), {});
  const auto s = service.create_session();
  service.issue(s, "nike");
  EXPECT_EQ(queries_of(service.suggest(s, "sh", "baseline", false)),
            queries_of(service.suggest(s, "sh", "mpc", false)));
}

TEST(Service, ExplainUsesLastThreeQueriesForPreviousCosines) {
  SuggestService service(test_models(), {});
  const auto s = service.create_session();
  const std::vector<std::string> issued = {"towel", "soap", "nike", "running shoes", "adidas"};
  for (const auto& q : issued) service.issue(s, q);
  const auto r = service.suggest(s, "sh", "embedding", true);
  const auto& model = *test_models()->embeddings;
  std::vector<NormalizedQuery> context;
  for (const auto& q : issued) context.push_back(normalize(q));
  for (const auto& sug : r.suggestions) {
    std::map<std::string, double> f(sug.features.begin(), sug.features.end());
    ASSERT_EQ(f.size(), schema_for(Variant::kEmbedding).size());
    const auto cand = query_vector(model, normalize(sug.query));
    EXPECT_NEAR(f["user_context_cosine"], cosine(context_vector(model, std::span(context)), cand),
                1e-6);
    for (int k = 1; k <= 3; ++k) {
      const auto prev = query_vector(model, context[context.size() - static_cast<std::size_t>(k)]);
      EXPECT_NEAR(f["prev_query" + std::to_string(k) + "_cosine"], cosine(prev, cand), 1e-6);
      EXPECT_EQ(f["has_prev_query" + std::to_string(k)], 1.0);
    }
  }
  EXPECT_TRUE(service.suggest(s, "sh", "embedding", false).suggestions[0].features.empty());
}

TEST(Service, ModelNames) {
  SuggestService service(test_models(), {});
  EXPECT_EQ(service.model_names(), (std::vector<std::string>{"mpc", "baseline", "embedding"}));
}

class Http : public ::testing::Test {
 protected:
  void SetUp() override {
    ServiceConfig cfg;
    cfg.cors_origin = "http://localhost:3000";
    service_ = std::make_unique<SuggestService>(test_models(), cfg);
    service_->register_routes(server_);
    port_ = server_.bind_to_any_port("127.0.0.1");
    ASSERT_GT(port_, 0);
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
    client_ = std::make_unique<httplib::Client>("127.0.0.1", port_);
  }
  void TearDown() override {
    server_.stop();
    thread_.join();
  }

  std::string new_session() {
    const auto res = client_->Post("/session", "", "application/json");
    return json::parse(res->body)["session_token"];
  }

  httplib::Server server_;
  std::unique_ptr<SuggestService> service_;
  std::unique_ptr<httplib::Client> client_;
  std::thread thread_;
  int port_ = 0;
};

TEST_F(Http, HealthAndModels) {
  auto res = client_->Get("/healthz");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 200);
  EXPECT_EQ(json::parse(res->body)["status"], "ok");
  EXPECT_EQ(res->get_header_value("Access-Control-Allow-Origin"), "http://localhost:3000");
  res = client_->Get("/models");
  const auto body = json::parse(res->body);
  EXPECT_EQ(body["models"].size(), 3u);
  EXPECT_EQ(body["models"][0]["name"], "mpc");
  EXPECT_EQ(body["models"][2]["schema_version"], schema_for(Variant::kEmbedding).version);
  EXPECT_EQ(body["top_n"], 10);
}

TEST_F(Http, PreflightIsNoContent) {
  const auto res = client_->Options("/suggest");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 204);
  EXPECT_EQ(res->get_header_value("Access-Control-Allow-Methods"), "GET, POST, OPTIONS");
  EXPECT_EQ(res->get_header_value("Access-Control-Allow-Headers"), "Content-Type");
}

TEST_F(Http, SessionIssueContextSuggest) {
  const auto token = new_session();
  auto res = client_->Post("/issue", json{{"session", token}, {"query", "NIKE!!"}}.dump(),
                           "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 200);
  EXPECT_EQ(json::parse(res->body), (json{{"query", "nike"}, {"context_length", 1}}));
  client_->Post("/issue", json{{"session", token}, {"query", "adidas"}}.dump(), "application/json");

  res = client_->Get("/context?session=" + token);
  auto body = json::parse(res->body);
  EXPECT_EQ(body["session_token"], token);
  EXPECT_EQ(body["queries"], (json{"nike", "adidas"}));

  res = client_->Get("/suggest?prefix=sh&session=" + token + "&model=embedding&explain=1");
  EXPECT_EQ(res->status, 200);
  body = json::parse(res->body);
  EXPECT_EQ(body["prefix"], "sh");
  EXPECT_EQ(body["model"], "embedding");
  EXPECT_EQ(body["context_length"], 2);
  EXPECT_EQ(body["suggestions"][0]["query"], "shoes");
  EXPECT_TRUE(body["suggestions"][0]["features"].contains("user_context_cosine"));

  res = client_->Get("/suggest?prefix=sh&session=" + token);
  body = json::parse(res->body);
  EXPECT_EQ(body["model"], "mpc");
  EXPECT_EQ(body["suggestions"][0]["query"], "shower curtain");
  EXPECT_FALSE(body["suggestions"][0].contains("features"));
}

TEST_F(Http, ErrorsCarryStatusAndMessage) {
  const auto token = new_session();
  auto res = client_->Get("/suggest?prefix=sh&session=missing");
  EXPECT_EQ(res->status, 404);
  EXPECT_TRUE(json::parse(res->body).contains("error"));
  EXPECT_EQ(client_->Get("/suggest?prefix=sh&model=nope&session=" + token)->status, 400);
  EXPECT_EQ(client_->Get("/suggest?prefix=%21%21&session=" + token)->status, 400);
  EXPECT_EQ(client_->Post("/issue", "{not json", "application/json")->status, 400);
  EXPECT_EQ(client_->Post("/issue", R"({"session": "x"})", "application/json")->status, 400);
  EXPECT_EQ(client_->Post("/issue", json{{"session", "x"}, {"query", "a"}}.dump(),
                          "application/json")
                ->status,
            404);
  EXPECT_EQ(client_->Get("/context?session=missing")->status, 404);
}

}  // namespace
}  // namespace qac
