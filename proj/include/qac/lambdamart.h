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

#ifndef QAC_LAMBDAMART_H_
#define QAC_LAMBDAMART_H_

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "qac/features.h"

namespace qac {

struct RankerConfig {
  int trees = 300;
  int max_leaves = 31;
  int min_leaf_rows = 20;
  double learning_rate = 0.1;
  double feature_fraction = 1.0;
  std::uint64_t seed = 1;
  int max_bins = 256;
  // Weight each pair by |delta nDCG|. Off gives plain pairwise lambdas.
  bool ndcg_weight = true;
  // Fraction of groups held out for early stopping; 0 disables.
  double holdout_fraction = 0.0;
  int early_stopping_rounds = 20;

  /// Throws std::invalid_argument.
  void validate() const;

  friend bool operator==(const RankerConfig&, const RankerConfig&) = default;
};

struct TreeNode {
  // -1 marks a leaf.
  int feature = -1;
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double value = 0.0;

  bool is_leaf() const { return feature < 0; }

  friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

/// Node 0 is the root. x[feature] <= threshold goes left.
struct Tree {
  std::vector<TreeNode> nodes;

  template <typename Row>
  double leaf_value(const Row& x) const {
    int i = 0;
    while (!nodes[static_cast<std::size_t>(i)].is_leaf()) {
      const auto& n = nodes[static_cast<std::size_t>(i)];
      i = x[n.feature] <= n.threshold ? n.left : n.right;
    }
    return nodes[static_cast<std::size_t>(i)].value;
  }

  bool uses_feature(int feature) const;

  friend bool operator==(const Tree&, const Tree&) = default;
};

struct TreeEnsemble {
  std::vector<Tree> trees;
  double learning_rate = 0.1;
  FeatureSchema schema;
  RankerConfig config;

  friend bool operator==(const TreeEnsemble&, const TreeEnsemble&) = default;
};

/// Throws std::invalid_argument when the schemas differ.
void check_schema(const TreeEnsemble& ensemble, const FeatureSchema& schema);

/// Sum of learning-rate-scaled leaf values. No schema check.
template <typename Row>
double score(const TreeEnsemble& ensemble, const Row& x) {
  double s = 0.0;
  for (const auto& t : ensemble.trees) s += ensemble.learning_rate * t.leaf_value(x);
  return s;
}

/// Scores every row after checking the matrix schema.
Eigen::VectorXd predict(const TreeEnsemble& ensemble, const FeatureMatrix& matrix);
Eigen::VectorXd predict(const TreeEnsemble& ensemble, const Eigen::MatrixXd& rows);

struct LambdaResult {
  Eigen::VectorXd lambda;
  Eigen::VectorXd hessian;
  // Groups left at zero: fewer than 2 rows or not exactly one positive.
  std::size_t skipped = 0;
};

/// Groups are [offsets[g], offsets[g+1]). Positive lambda pushes a row up.
LambdaResult lambda_gradients(std::span<const double> scores, std::span<const int> labels,
                              std::span<const std::size_t> offsets, bool ndcg_weight = true);

/// Called after each boosting round with the training scores so far.
using FitObserver = std::function<void(int round, const Eigen::VectorXd& train_scores)>;

struct FitOptions {
  int threads = 1;
  FitObserver observer;
};

/// Throws std::invalid_argument when no group is usable for training.
TreeEnsemble fit(const FeatureMatrix& matrix, const RankerConfig& config,
                 const FitOptions& options = {});

/// Row order by descending score; ties by ascending MPC rank, then row.
std::vector<std::size_t> rank_by_score(std::span<const double> scores,
                                       std::span<const int> mpc_ranks);

std::vector<std::size_t> rank_group(const TreeEnsemble& ensemble, const Eigen::MatrixXd& rows,
                                    std::span<const int> mpc_ranks);

struct PdPoint {
  double value;
  double mean_score;
};

/// Mean score with `feature` forced to each point of an even grid over its
/// observed range. A constant feature yields one point. Throws
/// std::invalid_argument for unknown features.
std::vector<PdPoint> partial_dependence(const TreeEnsemble& ensemble, const FeatureMatrix& matrix,
                                        std::string_view feature, int grid_size = 20);

inline constexpr std::string_view kEnsembleMagic = "qac-lambdamart";
inline constexpr int kEnsembleFormatVersion = 1;

/// Text model plus a "<path>.schema" sidecar.
void save_ensemble(const TreeEnsemble& ensemble, const std::string& path);
/// Throws FormatError on malformed files or a sidecar that disagrees.
TreeEnsemble load_ensemble(const std::string& path);

}  // namespace qac

#endif  // QAC_LAMBDAMART_H_
