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

#include "qac/lambdamart.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "parallel.h"
#include "qac/evaluation.h"
#include "qac/random.h"

namespace qac {
namespace {

constexpr double kRidge = 1e-6;
constexpr double kMinGain = 1e-12;

bool valid_group(std::span<const int> labels) {
  return labels.size() >= 2 && std::count(labels.begin(), labels.end(), 1) == 1 &&
         std::all_of(labels.begin(), labels.end(), [](int l) { return l == 0 || l == 1; });
}

// Training view: the usable rows, renumbered 0..n-1, grouped.
struct TrainSet {
  std::vector<std::size_t> rows;  // indices into the source matrix
  std::vector<std::size_t> offsets = {0};
  std::vector<int> labels;
  std::vector<int> mpc_ranks;
};

// Per-feature quantized columns. bins[f][r] is the first edge >= x.
struct Binned {
  std::vector<std::vector<double>> edges;
  std::vector<std::vector<std::uint8_t>> bins;
};

Binned bin_features(const Eigen::MatrixXd& values, const std::vector<std::size_t>& rows,
                    int max_bins, int threads) {
  const auto features = static_cast<std::size_t>(values.cols());
  Binned b;
  b.edges.resize(features);
  b.bins.resize(features);
  parallel_for(features, threads, [&](std::size_t f) {
    const auto col = static_cast<Eigen::Index>(f);
    std::vector<double> sorted(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      sorted[i] = values(static_cast<Eigen::Index>(rows[i]), col);
    }
    std::sort(sorted.begin(), sorted.end());
    std::vector<double> unique = sorted;
    unique.erase(std::unique(unique.begin(), unique.end()), unique.end());
    auto& edges = b.edges[f];
    if (unique.size() <= static_cast<std::size_t>(max_bins)) {
      edges = std::move(unique);
    } else {
      const auto n = sorted.size();
      const auto m = static_cast<std::size_t>(max_bins);
      for (std::size_t k = 1; k <= m; ++k) {
        const double edge = sorted[std::max<std::size_t>(k * n / m, 1) - 1];
        if (edges.empty() || edge > edges.back()) edges.push_back(edge);
      }
      if (edges.back() < sorted.back()) edges.back() = sorted.back();
    }
    auto& column = b.bins[f];
    column.resize(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const double x = values(static_cast<Eigen::Index>(rows[i]), col);
      column[i] = static_cast<std::uint8_t>(std::lower_bound(edges.begin(), edges.end(), x) -
                                            edges.begin());
    }
  });
  return b;
}

struct Histogram {
  // Indexed [feature][bin].
  std::vector<std::vector<double>> sum;
  std::vector<std::vector<std::uint32_t>> count;
};

struct Split {
  double gain = 0.0;
  int feature = -1;
  int bin = -1;
};

struct Leaf {
  int node = 0;
  std::vector<std::uint32_t> rows;  // ascending
  double sum = 0.0;
  Histogram hist;
  Split best;
};

class TreeBuilder {
 public:
  TreeBuilder(const Binned& binned, const RankerConfig& config, int threads)
      : binned_(binned), config_(config), threads_(threads) {}

  // Grows one tree on `target` and returns it with Newton leaf values.
  // leaf_of[r] receives the node index of row r's leaf.
  Tree grow(const Eigen::VectorXd& target, const Eigen::VectorXd& hessian,
            const std::vector<int>& features, std::vector<int>& leaf_of) {
    features_ = &features;
    target_ = &target;
    Tree tree;
    tree.nodes.emplace_back();
    std::vector<Leaf> leaves(1);
    leaves[0].rows.resize(static_cast<std::size_t>(target.size()));
    std::iota(leaves[0].rows.begin(), leaves[0].rows.end(), 0u);
    leaves[0].sum = sum_rows(leaves[0].rows);
    leaves[0].hist = histogram(leaves[0].rows);
    leaves[0].best = best_split(leaves[0]);

    while (static_cast<int>(leaves.size()) < config_.max_leaves) {
      std::size_t pick = leaves.size();
      for (std::size_t i = 0; i < leaves.size(); ++i) {
        if (leaves[i].best.gain > kMinGain &&
            (pick == leaves.size() || leaves[i].best.gain > leaves[pick].best.gain)) {
          pick = i;
        }
      }
      if (pick == leaves.size()) break;

      Leaf parent = std::move(leaves[pick]);
      const auto f = static_cast<std::size_t>(parent.best.feature);
      const auto bin = static_cast<std::uint8_t>(parent.best.bin);
      Leaf left;
      Leaf right;
      for (const auto r : parent.rows) {
        (binned_.bins[f][r] <= bin ? left.rows : right.rows).push_back(r);
      }
      left.sum = sum_rows(left.rows);
      right.sum = sum_rows(right.rows);
      Leaf& small = left.rows.size() <= right.rows.size() ? left : right;
      Leaf& large = &small == &left ? right : left;
      small.hist = histogram(small.rows);
      large.hist = subtract(parent.hist, small.hist);

      auto& node = tree.nodes[static_cast<std::size_t>(parent.node)];
      node.feature = parent.best.feature;
      node.threshold = binned_.edges[f][bin];
      node.left = static_cast<int>(tree.nodes.size());
      node.right = node.left + 1;
      left.node = node.left;
      right.node = node.right;
      tree.nodes.emplace_back();
      tree.nodes.emplace_back();

      left.best = best_split(left);
      right.best = best_split(right);
      leaves[pick] = std::move(left);
      leaves.push_back(std::move(right));
    }

    for (const auto& leaf : leaves) {
      double g = 0.0;
      double h = 0.0;
      for (const auto r : leaf.rows) {
        g += target[r];
        h += hessian[r];
        leaf_of[r] = leaf.node;
      }
      tree.nodes[static_cast<std::size_t>(leaf.node)].value = g / (h + kRidge);
    }
    return tree;
  }

 private:
  double sum_rows(const std::vector<std::uint32_t>& rows) const {
    double s = 0.0;
    for (const auto r : rows) s += (*target_)[r];
    return s;
  }

  Histogram histogram(const std::vector<std::uint32_t>& rows) const {
    const auto nf = binned_.edges.size();
    Histogram h;
    h.sum.resize(nf);
    h.count.resize(nf);
    parallel_for(features_->size(), threads_, [&](std::size_t k) {
      const auto f = static_cast<std::size_t>((*features_)[k]);
      auto& sum = h.sum[f];
      auto& count = h.count[f];
      sum.assign(binned_.edges[f].size(), 0.0);
      count.assign(binned_.edges[f].size(), 0);
      const auto& column = binned_.bins[f];
      for (const auto r : rows) {
        sum[column[r]] += (*target_)[r];
        ++count[column[r]];
      }
    });
    return h;
  }

  Histogram subtract(const Histogram& parent, const Histogram& child) const {
    Histogram h = parent;
    for (const int fi : *features_) {
      const auto f = static_cast<std::size_t>(fi);
      for (std::size_t b = 0; b < h.sum[f].size(); ++b) {
        h.sum[f][b] -= child.sum[f][b];
        h.count[f][b] -= child.count[f][b];
      }
    }
    return h;
  }

  Split best_split(const Leaf& leaf) const {
    const auto n = static_cast<double>(leaf.rows.size());
    const auto min_rows = static_cast<std::uint32_t>(config_.min_leaf_rows);
    if (leaf.rows.size() < 2 * static_cast<std::size_t>(min_rows)) return {};
    const double parent_score = leaf.sum * leaf.sum / n;
    std::vector<Split> per_feature(features_->size());
    parallel_for(features_->size(), threads_, [&](std::size_t k) {
      const auto f = static_cast<std::size_t>((*features_)[k]);
      const auto& sum = leaf.hist.sum[f];
      const auto& count = leaf.hist.count[f];
      double left_sum = 0.0;
      std::uint32_t left_n = 0;
      Split best;
      for (std::size_t b = 0; b + 1 < sum.size(); ++b) {
        left_sum += sum[b];
        left_n += count[b];
        const auto right_n = static_cast<std::uint32_t>(leaf.rows.size()) - left_n;
        if (left_n < min_rows) continue;
        if (right_n < min_rows) break;
        const double right_sum = leaf.sum - left_sum;
        const double gain = left_sum * left_sum / left_n + right_sum * right_sum / right_n -
                            parent_score;
        if (gain > best.gain) best = {gain, static_cast<int>(f), static_cast<int>(b)};
      }
      per_feature[k] = best;
    });
    Split best;
    for (const auto& s : per_feature) {
      if (s.feature >= 0 && s.gain > best.gain) best = s;
    }
    return best;
  }

  const Binned& binned_;
  const RankerConfig& config_;
  int threads_;
  const std::vector<int>* features_ = nullptr;
  const Eigen::VectorXd* target_ = nullptr;
};

double reciprocal_rank(std::span<const double> scores, std::span<const int> labels,
                       std::span<const int> mpc_ranks) {
  const auto order = rank_by_score(scores, mpc_ranks);
  for (std::size_t k = 0; k < order.size(); ++k) {
    if (labels[order[k]] == 1) return 1.0 / static_cast<double>(k + 1);
  }
  return 0.0;
}

double mean_reciprocal_rank(const TrainSet& set, const Eigen::VectorXd& scores) {
  double total = 0.0;
  const std::size_t groups = set.offsets.size() - 1;
  for (std::size_t g = 0; g < groups; ++g) {
    const auto b = set.offsets[g];
    const auto n = set.offsets[g + 1] - b;
    total += reciprocal_rank({scores.data() + b, n}, {set.labels.data() + b, n},
                             {set.mpc_ranks.data() + b, n});
  }
  return groups > 0 ? total / static_cast<double>(groups) : 0.0;
}

std::vector<int> sample_features(int count, double fraction, std::uint64_t seed, int tree) {
  std::vector<int> all(static_cast<std::size_t>(count));
  std::iota(all.begin(), all.end(), 0);
  if (fraction >= 1.0) return all;
  const auto keep = static_cast<std::size_t>(
      std::max(1L, std::lround(fraction * static_cast<double>(count))));
  Rng rng(splitmix64(seed) ^ static_cast<std::uint64_t>(tree));
  for (std::size_t i = 0; i < keep; ++i) {
    const auto j = i + rng.below(all.size() - i);
    std::swap(all[i], all[j]);
  }
  all.resize(keep);
  std::sort(all.begin(), all.end());
  return all;
}

}  // namespace

void RankerConfig::validate() const {
  if (trees < 0) throw std::invalid_argument("trees must be >= 0");
  if (max_leaves < 2) throw std::invalid_argument("max_leaves must be >= 2");
  if (min_leaf_rows < 1) throw std::invalid_argument("min_leaf_rows must be >= 1");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be > 0");
  if (!(feature_fraction > 0.0 && feature_fraction <= 1.0)) {
    throw std::invalid_argument("feature_fraction must be in (0, 1]");
  }
  if (max_bins < 2 || max_bins > 256) throw std::invalid_argument("max_bins must be in [2, 256]");
  if (!(holdout_fraction >= 0.0 && holdout_fraction < 1.0)) {
    throw std::invalid_argument("holdout_fraction must be in [0, 1)");
  }
  if (early_stopping_rounds < 1) throw std::invalid_argument("early_stopping_rounds must be >= 1");
}

bool Tree::uses_feature(int feature) const {
  return std::any_of(nodes.begin(), nodes.end(),
                     [feature](const TreeNode& n) { return n.feature == feature; });
}

void check_schema(const TreeEnsemble& ensemble, const FeatureSchema& schema) {
  if (ensemble.schema != schema) {
    throw std::invalid_argument("feature schema mismatch: model expects '" +
                                ensemble.schema.version + "' (" +
                                std::to_string(ensemble.schema.size()) + " features), got '" +
                                schema.version + "' (" + std::to_string(schema.size()) + ")");
  }
}

Eigen::VectorXd predict(const TreeEnsemble& ensemble, const Eigen::MatrixXd& rows) {
  if (rows.rows() > 0 && rows.cols() != static_cast<Eigen::Index>(ensemble.schema.size())) {
    throw std::invalid_argument("feature count mismatch");
  }
  Eigen::VectorXd out(rows.rows());
  for (Eigen::Index r = 0; r < rows.rows(); ++r) out[r] = score(ensemble, rows.row(r));
  return out;
}

Eigen::VectorXd predict(const TreeEnsemble& ensemble, const FeatureMatrix& matrix) {
  check_schema(ensemble, matrix.schema);
  return predict(ensemble, matrix.values);
}

LambdaResult lambda_gradients(std::span<const double> scores, std::span<const int> labels,
                              std::span<const std::size_t> offsets, bool ndcg_weight) {
  if (scores.size() != labels.size()) throw std::invalid_argument("scores/labels size mismatch");
  if (offsets.empty() || offsets.front() != 0 || offsets.back() != scores.size()) {
    throw std::invalid_argument("group offsets do not cover the rows");
  }
  LambdaResult out;
  out.lambda = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(scores.size()));
  out.hessian = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(scores.size()));
  std::vector<std::size_t> order;
  std::vector<std::size_t> rank;
  for (std::size_t g = 0; g + 1 < offsets.size(); ++g) {
    const auto b = offsets[g];
    const auto n = offsets[g + 1] - b;
    if (!valid_group(labels.subspan(b, n))) {
      ++out.skipped;
      continue;
    }
    order.resize(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t x, std::size_t y) { return scores[b + x] > scores[b + y]; });
    rank.resize(n);
    for (std::size_t k = 0; k < n; ++k) rank[order[k]] = k + 1;

    const auto pos = static_cast<std::size_t>(
        std::find(labels.begin() + static_cast<std::ptrdiff_t>(b),
                  labels.begin() + static_cast<std::ptrdiff_t>(b + n), 1) -
        labels.begin());
    const auto i = static_cast<Eigen::Index>(pos);
    for (std::size_t k = 0; k < n; ++k) {
      const auto j = static_cast<Eigen::Index>(b + k);
      if (j == i) continue;
      const double rho = 1.0 / (1.0 + std::exp(scores[pos] - scores[b + k]));
      const double w =
          ndcg_weight ? std::abs(rank_discount(rank[pos - b]) - rank_discount(rank[k])) : 1.0;
      out.lambda[i] += rho * w;
      out.lambda[j] -= rho * w;
      const double h = rho * (1.0 - rho) * w;
      out.hessian[i] += h;
      out.hessian[j] += h;
    }
  }
  return out;
}

TreeEnsemble fit(const FeatureMatrix& matrix, const RankerConfig& config,
                 const FitOptions& options) {
  config.validate();
  if (matrix.values.cols() != static_cast<Eigen::Index>(matrix.schema.size())) {
    throw std::invalid_argument("matrix width does not match its schema");
  }
  TreeEnsemble ensemble;
  ensemble.learning_rate = config.learning_rate;
  ensemble.schema = matrix.schema;
  ensemble.config = config;

  TrainSet train;
  TrainSet holdout;
  Rng split_rng(config.seed ^ 0x686f6c646f7574ULL);
  for (std::size_t g = 0; g < matrix.groups(); ++g) {
    const auto b = matrix.group_offsets[g];
    const auto e = matrix.group_offsets[g + 1];
    if (!valid_group({matrix.labels.data() + b, e - b})) continue;
    TrainSet& dest =
        config.holdout_fraction > 0.0 && split_rng.bernoulli(config.holdout_fraction) ? holdout
                                                                                         : train;
    for (auto r = b; r < e; ++r) {
      dest.rows.push_back(r);
      dest.labels.push_back(matrix.labels[r]);
      dest.mpc_ranks.push_back(matrix.mpc_ranks[r]);
    }
    dest.offsets.push_back(dest.rows.size());
  }
  if (train.offsets.size() < 2) throw std::invalid_argument("no valid training groups");

  const auto n = train.rows.size();
  const auto width = static_cast<int>(matrix.values.cols());
  Eigen::VectorXd scores = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
  if (config.trees == 0 || width == 0) return ensemble;

  const Binned binned = bin_features(matrix.values, train.rows, config.max_bins, options.threads);
  TreeBuilder builder(binned, config, options.threads);
  std::vector<int> leaf_of(n);

  Eigen::VectorXd holdout_scores = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(holdout.rows.size()));
  double best_holdout = -1.0;
  std::size_t best_trees = 0;

  for (int t = 0; t < config.trees; ++t) {
    const auto grad = lambda_gradients({scores.data(), n}, train.labels, train.offsets,
                                       config.ndcg_weight);
    const auto features = sample_features(width, config.feature_fraction, config.seed, t);
    Tree tree = builder.grow(grad.lambda, grad.hessian, features, leaf_of);
    for (std::size_t r = 0; r < n; ++r) {
      scores[static_cast<Eigen::Index>(r)] +=
          config.learning_rate * tree.nodes[static_cast<std::size_t>(leaf_of[r])].value;
    }
    ensemble.trees.push_back(std::move(tree));
    if (options.observer) options.observer(t + 1, scores);

    if (!holdout.rows.empty()) {
      const Tree& last = ensemble.trees.back();
      for (std::size_t r = 0; r < holdout.rows.size(); ++r) {
        holdout_scores[static_cast<Eigen::Index>(r)] +=
            config.learning_rate *
            last.leaf_value(matrix.values.row(static_cast<Eigen::Index>(holdout.rows[r])));
      }
      const double mrr = mean_reciprocal_rank(holdout, holdout_scores);
      if (mrr > best_holdout) {
        best_holdout = mrr;
        best_trees = ensemble.trees.size();
      } else if (ensemble.trees.size() - best_trees >=
                 static_cast<std::size_t>(config.early_stopping_rounds)) {
        break;
      }
    }
  }
  if (!holdout.rows.empty()) ensemble.trees.resize(best_trees);
  return ensemble;
}

std::vector<std::size_t> rank_by_score(std::span<const double> scores,
                                       std::span<const int> mpc_ranks) {
  if (scores.size() != mpc_ranks.size()) throw std::invalid_argument("scores/ranks size mismatch");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    if (mpc_ranks[a] != mpc_ranks[b]) return mpc_ranks[a] < mpc_ranks[b];
    return a < b;
  });
  return order;
}

std::vector<std::size_t> rank_group(const TreeEnsemble& ensemble, const Eigen::MatrixXd& rows,
                                    std::span<const int> mpc_ranks) {
  const Eigen::VectorXd s = predict(ensemble, rows);
  return rank_by_score({s.data(), static_cast<std::size_t>(s.size())}, mpc_ranks);
}

std::vector<PdPoint> partial_dependence(const TreeEnsemble& ensemble, const FeatureMatrix& matrix,
                                        std::string_view feature, int grid_size) {
  check_schema(ensemble, matrix.schema);
  const int col = matrix.schema.index_of(feature);
  if (col < 0) throw std::invalid_argument("unknown feature: " + std::string(feature));
  if (grid_size < 1) throw std::invalid_argument("grid_size must be >= 1");
  if (matrix.values.rows() == 0) throw std::invalid_argument("empty matrix");

  const auto column = matrix.values.col(col);
  const double lo = column.minCoeff();
  const double hi = column.maxCoeff();
  std::vector<double> grid;
  if (lo == hi || grid_size == 1) {
    grid.push_back(lo);
  } else {
    for (int k = 0; k < grid_size; ++k) {
      grid.push_back(k + 1 == grid_size ? hi : lo + (hi - lo) * k / (grid_size - 1));
    }
  }

  // Trees that never test the feature contribute a per-row constant.
  std::vector<const Tree*> varying;
  Eigen::VectorXd fixed = Eigen::VectorXd::Zero(matrix.values.rows());
  for (const auto& t : ensemble.trees) {
    if (t.uses_feature(col)) {
      varying.push_back(&t);
    } else {
      for (Eigen::Index r = 0; r < matrix.values.rows(); ++r) {
        fixed[r] += ensemble.learning_rate * t.leaf_value(matrix.values.row(r));
      }
    }
  }
  std::vector<PdPoint> out;
  Eigen::RowVectorXd x;
  for (const double v : grid) {
    double total = 0.0;
    for (Eigen::Index r = 0; r < matrix.values.rows(); ++r) {
      x = matrix.values.row(r);
      x[col] = v;
      double s = fixed[r];
      for (const Tree* t : varying) s += ensemble.learning_rate * t->leaf_value(x);
      total += s;
    }
    out.push_back({v, total / static_cast<double>(matrix.values.rows())});
  }
  return out;
}

}  // namespace qac
