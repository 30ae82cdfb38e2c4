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

#ifndef QAC_EVALUATION_H_
#define QAC_EVALUATION_H_

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace qac {

/// One ranked list reduced to where its single relevant candidate landed.
struct RankedImpression {
  std::uint64_t group_id = 0;
  // 1-based position of the relevant candidate; 0 when it is not in the list.
  std::size_t hit_rank = 0;
  std::size_t list_size = 0;
  bool has_context = false;
};

/// `order[k]` is the row placed at position k; labels are per row.
RankedImpression make_ranked(std::uint64_t group_id, std::span<const std::size_t> order,
                             std::span<const int> labels, bool has_context);

/// Binary-gain discount at 1-based rank, shared with ranker training.
inline double rank_discount(std::size_t rank) {
  return 1.0 / std::log2(static_cast<double>(rank) + 1.0);
}

// Each metric throws std::invalid_argument on an empty set.
double mrr(std::span<const RankedImpression> data);
double sr_at_k(std::span<const RankedImpression> data, std::size_t k);
double ndcg(std::span<const RankedImpression> data, std::optional<std::size_t> cutoff = {});
double map_at_k(std::span<const RankedImpression> data, std::optional<std::size_t> k = {});

/// A metric that is a mean of per-impression values.
struct MetricDef {
  std::string name;
  std::function<double(const RankedImpression&)> per_impression;
};

/// MRR, SR@1-3, nDCG, MAP, MAP@1, MAP@3.
std::vector<MetricDef> default_metrics();

struct Interval {
  double lower = 0.0;
  double upper = 0.0;
};

/// Percentile interval with linear interpolation between order statistics.
Interval percentile_interval(std::vector<double> samples, double level);

/// Resample with replacement, `iterations` times. Iteration i draws from its
/// own generator seeded from (seed, i), so results do not depend on `threads`.
Interval bootstrap_ci(const std::function<double(std::span<const RankedImpression>)>& metric,
                      std::span<const RankedImpression> data, int iterations = 1000,
                      double level = 0.95, std::uint64_t seed = 1, int threads = 1);

/// Indices drawn for bootstrap iteration `iteration`.
std::vector<std::size_t> bootstrap_sample(std::size_t n, std::uint64_t seed, std::uint64_t iteration);

struct ModelRanking {
  std::string name;
  std::vector<RankedImpression> impressions;
};

inline constexpr std::string_view kMpcModel = "mpc";

enum class Slice { kWhole, kContextOnly };
std::string_view to_string(Slice slice);

struct EvalOptions {
  int iterations = 1000;
  double level = 0.95;
  std::uint64_t seed = 1;
  int threads = 1;
  std::vector<MetricDef> metrics = default_metrics();
  std::vector<Slice> slices = {Slice::kWhole, Slice::kContextOnly};
};

struct MetricCell {
  double value = 0.0;
  double ratio = 0.0;  // value / MPC value
  double ci_lower = 0.0;
  double ci_upper = 0.0;
};

struct MetricReport {
  Slice slice = Slice::kWhole;
  std::size_t impressions = 0;
  std::vector<std::string> models;
  std::vector<std::string> metrics;
  // cells[metric][model]
  std::vector<std::vector<MetricCell>> cells;

  /// Throws std::out_of_range for unknown names.
  const MetricCell& at(std::string_view metric, std::string_view model) const;
};

/// One report per non-empty slice. Ratio CIs come from a paired bootstrap:
/// each resample is shared by all models. Throws std::invalid_argument when
/// "mpc" is missing or the models disagree on the impressions.
std::vector<MetricReport> evaluate(const std::vector<ModelRanking>& models,
                                   const EvalOptions& options = {});

/// Metrics as rows, models as columns, slices stacked.
std::string format_table(const std::vector<MetricReport>& reports);
std::string to_json(const std::vector<MetricReport>& reports);
/// slice,metric,model,value,ratio,ci_lower,ci_upper
std::string to_csv(const std::vector<MetricReport>& reports);

}  // namespace qac

#endif  // QAC_EVALUATION_H_
