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

#include "qac/evaluation.h"

#include <algorithm>
#include <cstdio>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "parallel.h"
#include "qac/random.h"

namespace qac {
namespace {

void require_nonempty(std::span<const RankedImpression> data) {
  if (data.empty()) throw std::invalid_argument("metric over an empty impression set");
}

double reciprocal(const RankedImpression& r) {
  return r.hit_rank > 0 ? 1.0 / static_cast<double>(r.hit_rank) : 0.0;
}

bool hit_within(const RankedImpression& r, std::size_t k) { return r.hit_rank > 0 && r.hit_rank <= k; }

template <typename Fn>
double mean_of(std::span<const RankedImpression> data, Fn fn) {
  require_nonempty(data);
  double total = 0.0;
  for (const auto& r : data) total += fn(r);
  return total / static_cast<double>(data.size());
}

double ratio(double value, double base) {
  if (base != 0.0) return value / base;
  return value == 0.0 ? 1.0 : std::numeric_limits<double>::infinity();
}

std::string fixed(double v, int digits = 6) {
  if (!std::isfinite(v)) return v > 0 ? "inf" : (v < 0 ? "-inf" : "nan");
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

nlohmann::ordered_json number(double v) {
  if (!std::isfinite(v)) return nullptr;
  return v;
}

}  // namespace

RankedImpression make_ranked(std::uint64_t group_id, std::span<const std::size_t> order,
                             std::span<const int> labels, bool has_context) {
  RankedImpression r{group_id, 0, order.size(), has_context};
  for (std::size_t k = 0; k < order.size(); ++k) {
    if (labels[order[k]] == 1) {
      r.hit_rank = k + 1;
      break;
    }
  }
  return r;
}

double mrr(std::span<const RankedImpression> data) { return mean_of(data, reciprocal); }

double sr_at_k(std::span<const RankedImpression> data, std::size_t k) {
  if (k == 0) throw std::invalid_argument("k must be >= 1");
  return mean_of(data, [k](const RankedImpression& r) { return hit_within(r, k) ? 1.0 : 0.0; });
}

double ndcg(std::span<const RankedImpression> data, std::optional<std::size_t> cutoff) {
  if (cutoff && *cutoff == 0) throw std::invalid_argument("cutoff must be >= 1");
  const auto k = cutoff.value_or(std::numeric_limits<std::size_t>::max());
  // Single relevant item with gain 1, so IDCG = 1.
  return mean_of(data, [k](const RankedImpression& r) {
    return hit_within(r, k) ? rank_discount(r.hit_rank) : 0.0;
  });
}

double map_at_k(std::span<const RankedImpression> data, std::optional<std::size_t> k) {
  if (k && *k == 0) throw std::invalid_argument("k must be >= 1");
  const auto limit = k.value_or(std::numeric_limits<std::size_t>::max());
  return mean_of(data, [limit](const RankedImpression& r) {
    return hit_within(r, limit) ? reciprocal(r) : 0.0;
  });
}

std::vector<MetricDef> default_metrics() {
  std::vector<MetricDef> m;
  m.push_back({"MRR", reciprocal});
  for (std::size_t k = 1; k <= 3; ++k) {
    m.push_back({"SR@" + std::to_string(k),
                 [k](const RankedImpression& r) { return hit_within(r, k) ? 1.0 : 0.0; }});
  }
  m.push_back({"nDCG", [](const RankedImpression& r) {
                 return r.hit_rank > 0 ? rank_discount(r.hit_rank) : 0.0;
               }});
  m.push_back({"MAP", reciprocal});
  for (const std::size_t k : {1, 3}) {
    m.push_back({"MAP@" + std::to_string(k),
                 [k](const RankedImpression& r) { return hit_within(r, k) ? reciprocal(r) : 0.0; }});
  }
  return m;
}

Interval percentile_interval(std::vector<double> samples, double level) {
  if (samples.empty()) throw std::invalid_argument("no bootstrap samples");
  if (!(level > 0.0 && level < 1.0)) throw std::invalid_argument("level must be in (0, 1)");
  std::sort(samples.begin(), samples.end());
  auto quantile = [&](double q) {
    const double pos = q * static_cast<double>(samples.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, samples.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    if (frac == 0.0) return samples[lo];
    return samples[lo] + frac * (samples[hi] - samples[lo]);
  };
  const double tail = (1.0 - level) / 2.0;
  return {quantile(tail), quantile(1.0 - tail)};
}

std::vector<std::size_t> bootstrap_sample(std::size_t n, std::uint64_t seed,
                                          std::uint64_t iteration) {
  Rng rng(splitmix64(seed) + iteration);
  std::vector<std::size_t> idx(n);
  for (auto& i : idx) i = static_cast<std::size_t>(rng.below(n));
  return idx;
}

Interval bootstrap_ci(const std::function<double(std::span<const RankedImpression>)>& metric,
                      std::span<const RankedImpression> data, int iterations, double level,
                      std::uint64_t seed, int threads) {
  if (iterations < 1) throw std::invalid_argument("iterations must be >= 1");
  require_nonempty(data);
  std::vector<double> values(static_cast<std::size_t>(iterations));
  parallel_for(values.size(), threads, [&](std::size_t i) {
    const auto idx = bootstrap_sample(data.size(), seed, i);
    std::vector<RankedImpression> sample;
    sample.reserve(idx.size());
    for (const auto j : idx) sample.push_back(data[j]);
    values[i] = metric(sample);
  });
  return percentile_interval(std::move(values), level);
}

std::string_view to_string(Slice slice) {
  return slice == Slice::kWhole ? "whole" : "context_only";
}

const MetricCell& MetricReport::at(std::string_view metric, std::string_view model) const {
  const auto mi = std::find(metrics.begin(), metrics.end(), metric);
  const auto mo = std::find(models.begin(), models.end(), model);
  if (mi == metrics.end() || mo == models.end()) {
    throw std::out_of_range("no cell for " + std::string(metric) + "/" + std::string(model));
  }
  return cells[static_cast<std::size_t>(mi - metrics.begin())]
              [static_cast<std::size_t>(mo - models.begin())];
}

std::vector<MetricReport> evaluate(const std::vector<ModelRanking>& models,
                                   const EvalOptions& options) {
  const auto mpc_it = std::find_if(models.begin(), models.end(),
                                   [](const ModelRanking& m) { return m.name == kMpcModel; });
  if (mpc_it == models.end()) throw std::invalid_argument("evaluation requires the 'mpc' model");
  const auto mpc = static_cast<std::size_t>(mpc_it - models.begin());
  const auto& reference = models[mpc].impressions;
  for (const auto& m : models) {
    if (m.impressions.size() != reference.size()) {
      throw std::invalid_argument("model '" + m.name + "' has a different impression count");
    }
    for (std::size_t i = 0; i < reference.size(); ++i) {
      if (m.impressions[i].group_id != reference[i].group_id ||
          m.impressions[i].has_context != reference[i].has_context) {
        throw std::invalid_argument("model '" + m.name + "' disagrees on impression order");
      }
    }
  }

  std::vector<MetricReport> reports;
  for (const Slice slice : options.slices) {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < reference.size(); ++i) {
      if (slice == Slice::kWhole || reference[i].has_context) rows.push_back(i);
    }
    if (rows.empty()) continue;
    const auto n = rows.size();
    const auto nm = models.size();
    const auto nk = options.metrics.size();

    // per[k][m][i]: metric k of model m on slice row i.
    std::vector<std::vector<std::vector<double>>> per(nk, std::vector<std::vector<double>>(nm));
    MetricReport report;
    report.slice = slice;
    report.impressions = n;
    for (const auto& m : models) report.models.push_back(m.name);
    report.cells.assign(nk, std::vector<MetricCell>(nm));
    for (std::size_t k = 0; k < nk; ++k) {
      report.metrics.push_back(options.metrics[k].name);
      for (std::size_t m = 0; m < nm; ++m) {
        auto& v = per[k][m];
        v.reserve(n);
        double total = 0.0;
        for (const auto i : rows) {
          v.push_back(options.metrics[k].per_impression(models[m].impressions[i]));
          total += v.back();
        }
        report.cells[k][m].value = total / static_cast<double>(n);
      }
      for (std::size_t m = 0; m < nm; ++m) {
        report.cells[k][m].ratio = ratio(report.cells[k][m].value, report.cells[k][mpc].value);
      }
    }

    // samples[it][k * nm + m] holds the resampled ratio.
    const auto iterations = static_cast<std::size_t>(std::max(options.iterations, 1));
    const std::uint64_t slice_seed = splitmix64(options.seed + static_cast<std::uint64_t>(slice));
    std::vector<std::vector<double>> samples(iterations);
    parallel_for(iterations, options.threads, [&](std::size_t it) {
      const auto idx = bootstrap_sample(n, slice_seed, it);
      auto& out = samples[it];
      out.resize(nk * nm);
      std::vector<double> means(nm);
      for (std::size_t k = 0; k < nk; ++k) {
        for (std::size_t m = 0; m < nm; ++m) {
          double total = 0.0;
          for (const auto j : idx) total += per[k][m][j];
          means[m] = total / static_cast<double>(n);
        }
        for (std::size_t m = 0; m < nm; ++m) out[k * nm + m] = ratio(means[m], means[mpc]);
      }
    });
    for (std::size_t k = 0; k < nk; ++k) {
      for (std::size_t m = 0; m < nm; ++m) {
        std::vector<double> col(iterations);
        for (std::size_t it = 0; it < iterations; ++it) col[it] = samples[it][k * nm + m];
        const auto ci = percentile_interval(std::move(col), options.level);
        auto& cell = report.cells[k][m];
        // A percentile interval can miss a point estimate on skewed data;
        // widen it so it always brackets the reported value.
        cell.ci_lower = std::min(ci.lower, cell.ratio);
        cell.ci_upper = std::max(ci.upper, cell.ratio);
      }
    }
    reports.push_back(std::move(report));
  }
  return reports;
}

std::string format_table(const std::vector<MetricReport>& reports) {
  std::ostringstream out;
  for (const auto& r : reports) {
    out << "slice: " << to_string(r.slice) << " (" << r.impressions << " impressions)\n";
    out << "ratio to mpc [95% CI]\n";
    char cell[96];
    std::snprintf(cell, sizeof(cell), "%-8s", "metric");
    out << cell;
    for (const auto& m : r.models) {
      std::snprintf(cell, sizeof(cell), " %-26s", m.c_str());
      out << cell;
    }
    out << '\n';
    for (std::size_t k = 0; k < r.metrics.size(); ++k) {
      std::snprintf(cell, sizeof(cell), "%-8s", r.metrics[k].c_str());
      out << cell;
      for (const auto& c : r.cells[k]) {
        const std::string text =
            fixed(c.ratio, 4) + " [" + fixed(c.ci_lower, 4) + ", " + fixed(c.ci_upper, 4) + "]";
        std::snprintf(cell, sizeof(cell), " %-26s", text.c_str());
        out << cell;
      }
      out << '\n';
    }
    out << "raw values\n";
    for (std::size_t k = 0; k < r.metrics.size(); ++k) {
      std::snprintf(cell, sizeof(cell), "%-8s", r.metrics[k].c_str());
      out << cell;
      for (const auto& c : r.cells[k]) {
        std::snprintf(cell, sizeof(cell), " %-26s", fixed(c.value).c_str());
        out << cell;
      }
      out << '\n';
    }
    out << '\n';
  }
  return out.str();
}

std::string to_json(const std::vector<MetricReport>& reports) {
  auto root = nlohmann::ordered_json::array();
  for (const auto& r : reports) {
    nlohmann::ordered_json slice;
    slice["slice"] = to_string(r.slice);
    slice["impressions"] = r.impressions;
    slice["models"] = r.models;
    auto metrics = nlohmann::ordered_json::array();
    for (std::size_t k = 0; k < r.metrics.size(); ++k) {
      nlohmann::ordered_json metric;
      metric["metric"] = r.metrics[k];
      for (std::size_t m = 0; m < r.models.size(); ++m) {
        const auto& c = r.cells[k][m];
        metric["values"][r.models[m]] = {{"value", number(c.value)},
                                         {"ratio", number(c.ratio)},
                                         {"ci_lower", number(c.ci_lower)},
                                         {"ci_upper", number(c.ci_upper)}};
      }
      metrics.push_back(std::move(metric));
    }
    slice["metrics"] = std::move(metrics);
    root.push_back(std::move(slice));
  }
  return root.dump(2) + "\n";
}

std::string to_csv(const std::vector<MetricReport>& reports) {
  std::ostringstream out;
  out << "slice,metric,model,value,ratio,ci_lower,ci_upper\n";
  for (const auto& r : reports) {
    for (std::size_t k = 0; k < r.metrics.size(); ++k) {
      for (std::size_t m = 0; m < r.models.size(); ++m) {
        const auto& c = r.cells[k][m];
        out << to_string(r.slice) << ',' << r.metrics[k] << ',' << r.models[m] << ','
            << fixed(c.value) << ',' << fixed(c.ratio) << ',' << fixed(c.ci_lower) << ','
            << fixed(c.ci_upper) << '\n';
      }
    }
  }
  return out.str();
}

}  // namespace qac
