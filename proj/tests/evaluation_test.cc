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

#include <sstream>

#include "checks.h"
#include "json.hpp"
#include "oracles.h"
#include "qac/evaluation.h"
#include "qac/random.h"

namespace qac {
namespace {

std::vector<RankedImpression> random_impressions(std::uint64_t seed, std::size_t n,
                                                 double context_rate = 0.5) {
  Rng rng(seed);
  std::vector<RankedImpression> out;
  for (std::size_t i = 0; i < n; ++i) {
    const auto size = 1 + rng.below(10);
    out.push_back({100 + i, rng.below(size + 1), size, rng.bernoulli(context_rate)});
  }
  return out;
}

TEST(Metrics, MatchIndependentOracles) {
  EXPECT_LE(checks::metric_oracle_error(1000, 1), 1e-12);
  EXPECT_LE(checks::metric_oracle_error(500, 2), 1e-12);
}

TEST(Metrics, HandValues) {
  const std::vector<RankedImpression> data = {{1, 1, 5, false}, {2, 4, 5, false}, {3, 0, 5, false}};
  EXPECT_DOUBLE_EQ(mrr(data), (1.0 + 0.25) / 3);
  EXPECT_DOUBLE_EQ(sr_at_k(data, 1), 1.0 / 3);
  EXPECT_DOUBLE_EQ(sr_at_k(data, 4), 2.0 / 3);
  EXPECT_DOUBLE_EQ(ndcg(data), (1.0 + 1.0 / std::log2(5.0)) / 3);
  EXPECT_DOUBLE_EQ(ndcg(data, 3), 1.0 / 3);
  EXPECT_DOUBLE_EQ(map_at_k(data, 3), 1.0 / 3);
}

TEST(Metrics, SingleRelevantIdentities) {
  const auto data = random_impressions(3, 400);
  EXPECT_DOUBLE_EQ(map_at_k(data), mrr(data));
  EXPECT_DOUBLE_EQ(map_at_k(data, 1), sr_at_k(data, 1));
  for (std::size_t k = 1; k < 5; ++k) EXPECT_LE(sr_at_k(data, k), sr_at_k(data, k + 1));
  EXPECT_LE(mrr(data), ndcg(data));
}

TEST(Metrics, EmptyInputThrows) {
  const std::vector<RankedImpression> none;
  EXPECT_THROW(mrr(none), std::invalid_argument);
  EXPECT_THROW(sr_at_k(none, 1), std::invalid_argument);
  EXPECT_THROW(ndcg(none), std::invalid_argument);
  EXPECT_THROW(map_at_k(none), std::invalid_argument);
}

TEST(MakeRanked, FindsFirstRelevantPosition) {
  const std::vector<int> labels = {0, 0, 1, 0};
  const std::vector<std::size_t> order = {3, 2, 0, 1};
  const auto r = make_ranked(9, order, labels, true);
  EXPECT_EQ(r.hit_rank, 2u);
  EXPECT_EQ(r.list_size, 4u);
  EXPECT_EQ(r.group_id, 9u);
  EXPECT_TRUE(r.has_context);
  const std::vector<std::size_t> without = {0, 1};
  EXPECT_EQ(make_ranked(9, without, labels, false).hit_rank, 0u);
}

TEST(PercentileInterval, InterpolatesBetweenOrderStatistics) {
  const auto a = percentile_interval({5, 1, 4, 2, 3}, 0.5);
  EXPECT_DOUBLE_EQ(a.lower, 2.0);
  EXPECT_DOUBLE_EQ(a.upper, 4.0);
  const auto b = percentile_interval({10, 20}, 0.5);
  EXPECT_DOUBLE_EQ(b.lower, 12.5);
  EXPECT_DOUBLE_EQ(b.upper, 17.5);
  EXPECT_THROW(percentile_interval({}, 0.95), std::invalid_argument);
  EXPECT_THROW(percentile_interval({1}, 1.0), std::invalid_argument);
}

TEST(Bootstrap, SamplesAreInRangeAndSeeded) {
  const auto a = bootstrap_sample(50, 3, 7);
  EXPECT_EQ(a, bootstrap_sample(50, 3, 7));
  EXPECT_NE(a, bootstrap_sample(50, 3, 8));
  EXPECT_NE(a, bootstrap_sample(50, 4, 7));
  for (const auto i : a) EXPECT_LT(i, 50u);
}

TEST(Bootstrap, MatchesManualResampling) {
  const auto data = random_impressions(4, 120);
  const auto ci = bootstrap_ci(mrr, data, 200, 0.9, 5);
  std::vector<double> values;
  for (std::uint64_t it = 0; it < 200; ++it) {
    std::vector<RankedImpression> sample;
    for (const auto i : bootstrap_sample(data.size(), 5, it)) sample.push_back(data[i]);
    values.push_back(mrr(sample));
  }
  const auto expect = percentile_interval(values, 0.9);
  EXPECT_EQ(ci.lower, expect.lower);
  EXPECT_EQ(ci.upper, expect.upper);
}

TEST(Bootstrap, DeterministicAndThreadIndependent) {
  const auto data = random_impressions(5, 300);
  const auto a = bootstrap_ci(mrr, data, 1000, 0.95, 42, 1);
  const auto b = bootstrap_ci(mrr, data, 1000, 0.95, 42, 1);
  const auto c = bootstrap_ci(mrr, data, 1000, 0.95, 42, 3);
  EXPECT_EQ(a.lower, b.lower);
  EXPECT_EQ(a.upper, b.upper);
  EXPECT_EQ(a.lower, c.lower);
  EXPECT_EQ(a.upper, c.upper);
  EXPECT_LE(a.lower, mrr(data));
  EXPECT_GE(a.upper, mrr(data));
}

std::vector<ModelRanking> three_models() {
  auto mpc = random_impressions(6, 200, 0.4);
  auto better = mpc;
  auto worse = mpc;
  for (auto& r : better) {
    if (r.hit_rank > 1) --r.hit_rank;
  }
  for (auto& r : worse) {
    if (r.hit_rank > 0 && r.hit_rank < r.list_size) ++r.hit_rank;
  }
  return {{"mpc", mpc}, {"better", better}, {"worse", worse}};
}

TEST(Evaluate, MpcIsItsOwnBaseline) {
  EvalOptions opts;
  opts.iterations = 200;
  const auto reports = evaluate(three_models(), opts);
  ASSERT_EQ(reports.size(), 2u);
  for (const auto& r : reports) {
    for (const auto& metric : r.metrics) {
      const auto& c = r.at(metric, "mpc");
      EXPECT_EQ(c.ratio, 1.0);
      EXPECT_EQ(c.ci_lower, 1.0);
      EXPECT_EQ(c.ci_upper, 1.0);
    }
  }
}

TEST(Evaluate, RatiosFollowRankQuality) {
  EvalOptions opts;
  opts.iterations = 300;
  const auto reports = evaluate(three_models(), opts);
  const auto& whole = reports[0];
  EXPECT_EQ(whole.slice, Slice::kWhole);
  EXPECT_EQ(whole.impressions, 200u);
  EXPECT_GT(whole.at("MRR", "better").ratio, 1.0);
  EXPECT_LT(whole.at("MRR", "worse").ratio, 1.0);
  for (const auto& metric : whole.metrics) {
    for (const auto& model : whole.models) {
      const auto& c = whole.at(metric, model);
      EXPECT_LE(c.ci_lower, c.ratio);
      EXPECT_GE(c.ci_upper, c.ratio);
    }
  }
  const auto data = three_models();
  EXPECT_DOUBLE_EQ(whole.at("MRR", "better").value, mrr(data[1].impressions));
  std::vector<RankedImpression> ctx;
  for (const auto& r : data[1].impressions) {
    if (r.has_context) ctx.push_back(r);
  }
  EXPECT_EQ(reports[1].slice, Slice::kContextOnly);
  EXPECT_EQ(reports[1].impressions, ctx.size());
  EXPECT_DOUBLE_EQ(reports[1].at("MRR", "better").value, mrr(ctx));
  EXPECT_THROW(whole.at("MRR", "nobody"), std::out_of_range);
}

TEST(Evaluate, DeterministicAcrossThreads) {
  EvalOptions a;
  a.iterations = 150;
  auto b = a;
  b.threads = 4;
  EXPECT_EQ(to_csv(evaluate(three_models(), a)), to_csv(evaluate(three_models(), b)));
}

TEST(Evaluate, EmptySliceIsOmitted) {
  auto models = three_models();
  for (auto& m : models) {
    for (auto& r : m.impressions) r.has_context = false;
  }
  EvalOptions opts;
  opts.iterations = 10;
  const auto reports = evaluate(models, opts);
  ASSERT_EQ(reports.size(), 1u);
  EXPECT_EQ(reports[0].slice, Slice::kWhole);
}

TEST(Evaluate, RejectsInconsistentInput) {
  auto models = three_models();
  EvalOptions opts;
  opts.iterations = 10;
  auto no_mpc = models;
  no_mpc[0].name = "popular";
  EXPECT_THROW(evaluate(no_mpc, opts), std::invalid_argument);
  auto shuffled = models;
  std::swap(shuffled[1].impressions[0], shuffled[1].impressions[1]);
  EXPECT_THROW(evaluate(shuffled, opts), std::invalid_argument);
  auto short_list = models;
  short_list[2].impressions.pop_back();
  EXPECT_THROW(evaluate(short_list, opts), std::invalid_argument);
}

TEST(Report, CsvAndJsonLayout) {
  EvalOptions opts;
  opts.iterations = 20;
  const auto reports = evaluate(three_models(), opts);
  const auto csv = to_csv(reports);
  std::istringstream lines(csv);
  std::string header;
  std::getline(lines, header);
  EXPECT_EQ(header, "slice,metric,model,value,ratio,ci_lower,ci_upper");
  std::size_t rows = 0;
  for (std::string l; std::getline(lines, l);) ++rows;
  EXPECT_EQ(rows, 2 * default_metrics().size() * 3);
  EXPECT_NE(csv.find("context_only,MRR,better,"), std::string::npos);

  const auto json = nlohmann::json::parse(to_json(reports));
  ASSERT_EQ(json.size(), 2u);
  EXPECT_EQ(json[0]["slice"], "whole");
  EXPECT_EQ(json[0]["impressions"], 200);
  EXPECT_EQ(json[0]["metrics"][0]["metric"], "MRR");
  EXPECT_DOUBLE_EQ(json[0]["metrics"][0]["values"]["better"]["ratio"].get<double>(),
                   reports[0].at("MRR", "better").ratio);

  const auto table = format_table(reports);
  EXPECT_NE(table.find("slice: whole (200 impressions)"), std::string::npos);
  EXPECT_NE(table.find("context_only"), std::string::npos);
}

}  // namespace
}  // namespace qac
