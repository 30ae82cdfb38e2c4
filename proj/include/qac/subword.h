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

// Subword skip-gram embeddings with negative sampling.
//
// A word w is represented by the set G_w of its boundary-padded character
// n-grams (hashed into buckets) plus its own dictionary row. The score of a
// (word, context word) pair is
//
//   s(w, c) = sum_{g in G_w} z_g . v_c
//
// where z_g are rows of the input matrix and v_c rows of the output matrix.
// Training minimizes l(s(w_t, w_c)) + sum_n l(-s(w_t, n)) with
// l(x) = log(1 + e^-x) over skip-gram pairs and unigram^0.75 negatives.

#ifndef QAC_SUBWORD_H_
#define QAC_SUBWORD_H_

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "qac/corpus.h"

namespace qac {

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

struct TrainConfig {
  int dim = 50;
  // Maximum context radius; the effective radius is drawn from [1, window].
  int window = 5;
  int negatives = 5;
  int epochs = 5;
  // Decays linearly to zero over all epochs.
  double learning_rate = 0.05;
  int min_count = 20;
  int n_min = 3;
  int n_max = 6;
  std::int64_t bucket_count = 2'000'000;
  std::uint64_t seed = 1;
  // 1 is the deterministic reference mode. More workers apply lock-free,
  // racy updates to the shared matrices and are not reproducible.
  int workers = 1;

  // Throws std::invalid_argument on a non-positive knob or n_min > n_max.
  // epochs may be 0.
  void validate() const;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

/// The boundary-padded character n-grams of `token`, n in [n_min, n_max],
/// ordered by length then position.
std::vector<std::string> char_ngrams(std::string_view token, int n_min, int n_max);

/// 32-bit FNV-1a.
std::uint32_t hash_ngram(std::string_view gram);

class Dictionary {
 public:
  struct Entry {
    std::string word;
    std::int64_t count = 0;

    friend bool operator==(const Entry&, const Entry&) = default;
  };

  Dictionary() = default;
  // Entries are kept in the given order.
  Dictionary(std::vector<Entry> words, std::int64_t bucket_count, int n_min, int n_max);

  // Counts whitespace tokens of `docs`, keeps those with count >= min_count,
  // ordered by count descending then lexicographically.
  static Dictionary build(std::span<const TrainingDocument> docs, const TrainConfig& config);

  Eigen::Index word_count() const { return static_cast<Eigen::Index>(words_.size()); }
  std::int64_t bucket_count() const { return bucket_count_; }
  int n_min() const { return n_min_; }
  int n_max() const { return n_max_; }
  Eigen::Index input_rows() const { return word_count() + bucket_count_; }
  const std::vector<Entry>& words() const { return words_; }

  // Dictionary index of `word`, or -1.
  Eigen::Index find(std::string_view word) const;

  // Input-matrix rows representing `token`: its dictionary index first (when
  // present), then one hashed bucket per n-gram, each offset by word_count().
  std::vector<Eigen::Index> extract_ngrams(std::string_view token) const;

  friend bool operator==(const Dictionary& a, const Dictionary& b) {
    return a.words_ == b.words_ && a.bucket_count_ == b.bucket_count_ && a.n_min_ == b.n_min_ &&
           a.n_max_ == b.n_max_;
  }

 private:
  std::vector<Entry> words_;
  std::unordered_map<std::string, Eigen::Index> index_;
  std::int64_t bucket_count_ = 0;
  int n_min_ = 3;
  int n_max_ = 6;
};

template <typename Scalar>
struct BasicEmbeddingModel {
  Dictionary dictionary;
  TrainConfig config;
  // (word_count + bucket_count) x dim: word rows then n-gram buckets (z_g).
  RowMatrix<Scalar> input;
  // word_count x dim: context vectors (v_c).
  RowMatrix<Scalar> output;

  Eigen::Index dim() const { return input.cols(); }

  template <typename Other>
  BasicEmbeddingModel<Other> cast() const {
    return {dictionary, config, input.template cast<Other>(), output.template cast<Other>()};
  }
};

using EmbeddingModel = BasicEmbeddingModel<float>;

/// Input uniform in [-1/dim, 1/dim], output zero.
EmbeddingModel initialize_model(Dictionary dictionary, const TrainConfig& config);

struct TrainStats {
  // Mean per-example loss of each epoch.
  std::vector<double> epoch_loss;
  std::int64_t examples = 0;
};

/// Throws std::invalid_argument("no trainable tokens") when no token reaches
/// min_count.
EmbeddingModel train(std::span<const TrainingDocument> docs, const TrainConfig& config,
                     TrainStats* stats = nullptr);

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// log(1 + e^-x), stable for large |x|.
inline double logistic_loss(double x) {
  return x > 0 ? std::log1p(std::exp(-x)) : -x + std::log1p(std::exp(x));
}

/// s(w, c) for a word given by its input rows and a context word index.
template <typename Scalar>
Scalar score(const BasicEmbeddingModel<Scalar>& model, std::span<const Eigen::Index> input_rows,
             Eigen::Index context) {
  Scalar s = 0;
  for (const Eigen::Index g : input_rows) s += model.input.row(g).dot(model.output.row(context));
  return s;
}

/// s(w, c) by token. Throws std::out_of_range when `context` is not a
/// dictionary word.
template <typename Scalar>
Scalar score(const BasicEmbeddingModel<Scalar>& model, std::string_view word,
             std::string_view context) {
  const Eigen::Index c = model.dictionary.find(context);
  if (c < 0) throw std::out_of_range("context word not in dictionary: " + std::string(context));
  const auto rows = model.dictionary.extract_ngrams(word);
  return score<Scalar>(model, rows, c);
}

/// Loss and gradients of one (w_t, w_c, negatives) example.
template <typename Scalar>
struct ExampleGradient {
  Scalar loss = 0;
  // dL/dz_g, shared by every input row of w_t (once per occurrence).
  Vector<Scalar> input_grad;
  // dL/dv for each output row in [target, negatives...], aligned with
  // output_rows; repeated rows contribute additively.
  std::vector<Eigen::Index> output_rows;
  RowMatrix<Scalar> output_grads;
};

template <typename Scalar>
ExampleGradient<Scalar> example_gradient(const BasicEmbeddingModel<Scalar>& model,
                                         std::span<const Eigen::Index> input_rows,
                                         Eigen::Index target,
                                         std::span<const Eigen::Index> negatives) {
  const Eigen::Index dim = model.dim();
  Vector<Scalar> hidden = Vector<Scalar>::Zero(dim);
  for (const Eigen::Index g : input_rows) hidden += model.input.row(g).transpose();

  ExampleGradient<Scalar> out;
  out.input_grad = Vector<Scalar>::Zero(dim);
  out.output_rows.reserve(negatives.size() + 1);
  out.output_grads.resize(static_cast<Eigen::Index>(negatives.size()) + 1, dim);

  auto accumulate = [&](Eigen::Index row, Eigen::Index slot, bool positive) {
    const double s = static_cast<double>(hidden.dot(model.output.row(row).transpose()));
    // d/ds l(s) = -sigmoid(-s); d/ds l(-s) = sigmoid(s).
    const double ds = positive ? -sigmoid(-s) : sigmoid(s);
    out.loss += static_cast<Scalar>(positive ? logistic_loss(s) : logistic_loss(-s));
    out.input_grad += static_cast<Scalar>(ds) * model.output.row(row).transpose();
    out.output_grads.row(slot) = static_cast<Scalar>(ds) * hidden.transpose();
    out.output_rows.push_back(row);
  };
  accumulate(target, 0, true);
  for (std::size_t i = 0; i < negatives.size(); ++i) {
    accumulate(negatives[i], static_cast<Eigen::Index>(i) + 1, false);
  }
  return out;
}

/// One SGD update on a single example; returns its loss before the update.
template <typename Scalar>
Scalar sgd_step(BasicEmbeddingModel<Scalar>& model, std::span<const Eigen::Index> input_rows,
                Eigen::Index target, std::span<const Eigen::Index> negatives, Scalar lr) {
  const ExampleGradient<Scalar> grad = example_gradient(model, input_rows, target, negatives);
  for (std::size_t i = 0; i < grad.output_rows.size(); ++i) {
    model.output.row(grad.output_rows[i]) -= lr * grad.output_grads.row(static_cast<Eigen::Index>(i));
  }
  for (const Eigen::Index g : input_rows) model.input.row(g) -= lr * grad.input_grad.transpose();
  return grad.loss;
}

/// Sum of the token's input rows divided by their number; zero when the
/// token has no rows.
template <typename Scalar>
Vector<Scalar> token_vector(const BasicEmbeddingModel<Scalar>& model, std::string_view token) {
  Vector<Scalar> v = Vector<Scalar>::Zero(model.dim());
  const auto rows = model.dictionary.extract_ngrams(token);
  if (rows.empty()) return v;
  for (const Eigen::Index g : rows) v += model.input.row(g).transpose();
  return v / static_cast<Scalar>(rows.size());
}

template <typename Scalar>
Vector<Scalar> tokens_vector(const BasicEmbeddingModel<Scalar>& model,
                             std::span<const std::string> tokens) {
  Vector<Scalar> v = Vector<Scalar>::Zero(model.dim());
  if (tokens.empty()) return v;
  for (const auto& t : tokens) v += token_vector(model, t);
  return v / static_cast<Scalar>(tokens.size());
}

/// Mean of the query's token vectors; zero for an empty query.
template <typename Scalar>
Vector<Scalar> query_vector(const BasicEmbeddingModel<Scalar>& model, const NormalizedQuery& q) {
  return tokens_vector(model, std::span<const std::string>(q.tokens));
}

/// query_vector of the whitespace join of all context queries.
template <typename Scalar>
Vector<Scalar> context_vector(const BasicEmbeddingModel<Scalar>& model,
                              std::span<const NormalizedQuery> context) {
  std::vector<std::string> tokens;
  for (const auto& q : context) tokens.insert(tokens.end(), q.tokens.begin(), q.tokens.end());
  return tokens_vector(model, std::span<const std::string>(tokens));
}

/// x.y / (|x| |y|), or 0 when either norm is 0. Computed in double.
template <typename A, typename B>
double cosine(const Eigen::MatrixBase<A>& x, const Eigen::MatrixBase<B>& y) {
  const auto xd = x.template cast<double>();
  const auto yd = y.template cast<double>();
  const double nx = xd.norm();
  const double ny = yd.norm();
  if (nx == 0.0 || ny == 0.0) return 0.0;
  return std::clamp(xd.dot(yd) / (nx * ny), -1.0, 1.0);
}

struct Neighbor {
  std::string word;
  double cosine = 0.0;

  friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

/// Top-k dictionary words by cosine to the normalized query's vector,
/// descending, ties lexicographic. Words that are tokens of the query are
/// skipped when `exclude_query_tokens` is set.
std::vector<Neighbor> nearest_neighbors(const EmbeddingModel& model, std::string_view query,
                                        std::size_t k, bool exclude_query_tokens = true);

// Model file: see docs/formats.md for the byte layout.
inline constexpr char kEmbeddingMagic[4] = {'Q', 'E', 'M', 'B'};
inline constexpr std::uint32_t kEmbeddingFormatVersion = 1;

void save_model(const EmbeddingModel& model, const std::string& path);
/// Throws FormatError on bad magic, version mismatch or truncation.
EmbeddingModel load_model(const std::string& path);

/// One line per dictionary word: `word v1 ... v_dim` (token vectors).
void export_text(const EmbeddingModel& model, const std::string& path);

}  // namespace qac

#endif  // QAC_SUBWORD_H_
