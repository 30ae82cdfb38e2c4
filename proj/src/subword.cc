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

#include "qac/subword.h"

#include <algorithm>
#include <atomic>
#include <map>
#include <thread>

#include "qac/random.h"

namespace qac {
namespace {

std::vector<std::string> split_ws(std::string_view s) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && s[i] == ' ') ++i;
    std::size_t j = i;
    while (j < s.size() && s[j] != ' ') ++j;
    if (j > i) out.emplace_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

// Documents as sequences of dictionary indices; out-of-vocabulary tokens are
// dropped.
std::vector<std::vector<Eigen::Index>> encode(std::span<const TrainingDocument> docs,
                                              const Dictionary& dict) {
  std::vector<std::vector<Eigen::Index>> out;
  out.reserve(docs.size());
  for (const auto& doc : docs) {
    std::vector<Eigen::Index> ids;
    for (const auto& tok : split_ws(doc.text)) {
      const Eigen::Index id = dict.find(tok);
      if (id >= 0) ids.push_back(id);
    }
    if (!ids.empty()) out.push_back(std::move(ids));
  }
  return out;
}

class NegativeSampler {
 public:
  explicit NegativeSampler(const Dictionary& dict) {
    double total = 0.0;
    for (const auto& e : dict.words()) {
      total += std::pow(static_cast<double>(e.count), 0.75);
      cumulative_.push_back(total);
    }
  }

  Eigen::Index draw(Rng& rng) const {
    const double r = rng.uniform() * cumulative_.back();
    const auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), r);
    return std::min<Eigen::Index>(it - cumulative_.begin(),
                                  static_cast<Eigen::Index>(cumulative_.size()) - 1);
  }

  std::size_t size() const { return cumulative_.size(); }

 private:
  std::vector<double> cumulative_;
};

struct WorkerState {
  std::vector<double> loss_sum;
  std::vector<std::int64_t> examples;
};

void run_worker(EmbeddingModel& model, const std::vector<std::vector<Eigen::Index>>& docs,
                std::size_t begin, std::size_t end, const NegativeSampler& sampler,
                const std::vector<std::vector<Eigen::Index>>& word_rows, std::uint64_t seed,
                std::atomic<std::int64_t>& processed, std::int64_t total_tokens,
                WorkerState& state) {
  const TrainConfig& cfg = model.config;
  Rng rng(seed);
  std::vector<Eigen::Index> negatives(static_cast<std::size_t>(cfg.negatives));
  const bool can_sample = sampler.size() > 1;
  state.loss_sum.assign(static_cast<std::size_t>(cfg.epochs), 0.0);
  state.examples.assign(static_cast<std::size_t>(cfg.epochs), 0);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t d = begin; d < end; ++d) {
      const auto& doc = docs[d];
      const double progress =
          static_cast<double>(processed.load(std::memory_order_relaxed)) / total_tokens;
      const auto lr = static_cast<float>(cfg.learning_rate * std::max(0.0, 1.0 - progress));
      for (std::size_t t = 0; t < doc.size(); ++t) {
        const auto radius = static_cast<std::ptrdiff_t>(1 + rng.below(cfg.window));
        for (std::ptrdiff_t off = -radius; off <= radius; ++off) {
          const std::ptrdiff_t c = static_cast<std::ptrdiff_t>(t) + off;
          if (off == 0 || c < 0 || c >= static_cast<std::ptrdiff_t>(doc.size())) continue;
          const Eigen::Index target = doc[static_cast<std::size_t>(c)];
          std::size_t n_neg = 0;
          if (can_sample) {
            for (; n_neg < negatives.size(); ++n_neg) {
              Eigen::Index neg;
              do {
                neg = sampler.draw(rng);
              } while (neg == target);
              negatives[n_neg] = neg;
            }
          }
          const float loss = sgd_step<float>(
              model, word_rows[static_cast<std::size_t>(doc[t])], target,
              std::span<const Eigen::Index>(negatives.data(), n_neg), lr);
          state.loss_sum[static_cast<std::size_t>(epoch)] += loss;
          ++state.examples[static_cast<std::size_t>(epoch)];
        }
      }
      processed.fetch_add(static_cast<std::int64_t>(doc.size()), std::memory_order_relaxed);
    }
  }
}

}  // namespace

void TrainConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(std::string("invalid embedding config: ") + what);
  };
  require(dim > 0, "dim must be positive");
  require(window > 0, "window must be positive");
  require(negatives > 0, "negatives must be positive");
  require(epochs >= 0, "epochs must be non-negative");
  require(learning_rate > 0, "learning_rate must be positive");
  require(min_count > 0, "min_count must be positive");
  require(n_min > 0 && n_max > 0, "n-gram sizes must be positive");
  require(n_min <= n_max, "n_min must not exceed n_max");
  require(bucket_count > 0, "bucket_count must be positive");
  require(workers > 0, "workers must be positive");
}

std::vector<std::string> char_ngrams(std::string_view token, int n_min, int n_max) {
  const std::string padded = "<" + std::string(token) + ">";
  std::vector<std::string> out;
  for (int n = n_min; n <= n_max; ++n) {
    const auto len = static_cast<std::size_t>(n);
    if (len > padded.size()) break;
    for (std::size_t i = 0; i + len <= padded.size(); ++i) out.push_back(padded.substr(i, len));
  }
  return out;
}

std::uint32_t hash_ngram(std::string_view gram) {
  std::uint32_t h = 2166136261u;
  for (const char c : gram) {
    h ^= static_cast<std::uint8_t>(c);
    h *= 16777619u;
  }
  return h;
}

Dictionary::Dictionary(std::vector<Entry> words, std::int64_t bucket_count, int n_min, int n_max)
    : words_(std::move(words)), bucket_count_(bucket_count), n_min_(n_min), n_max_(n_max) {
  index_.reserve(words_.size());
  for (std::size_t i = 0; i < words_.size(); ++i) {
    if (!index_.emplace(words_[i].word, static_cast<Eigen::Index>(i)).second) {
      throw std::invalid_argument("duplicate dictionary word: " + words_[i].word);
    }
  }
}

Dictionary Dictionary::build(std::span<const TrainingDocument> docs, const TrainConfig& config) {
  std::map<std::string, std::int64_t> counts;
  for (const auto& doc : docs) {
    for (auto& tok : split_ws(doc.text)) ++counts[std::move(tok)];
  }
  std::vector<Entry> words;
  for (auto& [w, c] : counts) {
    if (c >= config.min_count) words.push_back({w, c});
  }
  std::stable_sort(words.begin(), words.end(),
                   [](const Entry& a, const Entry& b) { return a.count > b.count; });
  return Dictionary(std::move(words), config.bucket_count, config.n_min, config.n_max);
}

Eigen::Index Dictionary::find(std::string_view word) const {
  const auto it = index_.find(std::string(word));
  return it == index_.end() ? -1 : it->second;
}

std::vector<Eigen::Index> Dictionary::extract_ngrams(std::string_view token) const {
  std::vector<Eigen::Index> rows;
  const Eigen::Index id = find(token);
  if (id >= 0) rows.push_back(id);
  for (const auto& gram : char_ngrams(token, n_min_, n_max_)) {
    rows.push_back(word_count() +
                   static_cast<Eigen::Index>(hash_ngram(gram) % static_cast<std::uint64_t>(bucket_count_)));
  }
  return rows;
}

EmbeddingModel initialize_model(Dictionary dictionary, const TrainConfig& config) {
  config.validate();
  EmbeddingModel model;
  model.config = config;
  model.input.resize(dictionary.input_rows(), config.dim);
  model.output = RowMatrix<float>::Zero(dictionary.word_count(), config.dim);
  model.dictionary = std::move(dictionary);
  Rng rng(config.seed);
  const double bound = 1.0 / config.dim;
  float* data = model.input.data();
  for (Eigen::Index i = 0; i < model.input.size(); ++i) {
    data[i] = static_cast<float>(rng.uniform(-bound, bound));
  }
  return model;
}

EmbeddingModel train(std::span<const TrainingDocument> docs, const TrainConfig& config,
                     TrainStats* stats) {
  config.validate();
  Dictionary dict = Dictionary::build(docs, config);
  if (dict.word_count() == 0) throw std::invalid_argument("no trainable tokens");

  const auto encoded = encode(docs, dict);
  EmbeddingModel model = initialize_model(std::move(dict), config);

  std::vector<std::vector<Eigen::Index>> word_rows;
  word_rows.reserve(static_cast<std::size_t>(model.dictionary.word_count()));
  for (const auto& e : model.dictionary.words()) {
    word_rows.push_back(model.dictionary.extract_ngrams(e.word));
  }

  std::int64_t tokens = 0;
  for (const auto& d : encoded) tokens += static_cast<std::int64_t>(d.size());
  const std::int64_t total = std::max<std::int64_t>(1, tokens * config.epochs);
  const NegativeSampler sampler(model.dictionary);
  std::atomic<std::int64_t> processed{0};

  const auto workers = static_cast<std::size_t>(
      std::min<std::size_t>(static_cast<std::size_t>(config.workers), std::max<std::size_t>(1, encoded.size())));
  std::vector<WorkerState> states(workers);
  if (workers == 1) {
    run_worker(model, encoded, 0, encoded.size(), sampler, word_rows, splitmix64(config.seed + 1),
               processed, total, states[0]);
  } else {
    std::vector<std::thread> threads;
    for (std::size_t w = 0; w < workers; ++w) {
      const std::size_t begin = encoded.size() * w / workers;
      const std::size_t end = encoded.size() * (w + 1) / workers;
      threads.emplace_back(run_worker, std::ref(model), std::cref(encoded), begin, end,
                           std::cref(sampler), std::cref(word_rows),
                           splitmix64(config.seed + 1 + w), std::ref(processed), total,
                           std::ref(states[w]));
    }
    for (auto& t : threads) t.join();
  }

  if (stats != nullptr) {
    stats->epoch_loss.assign(static_cast<std::size_t>(config.epochs), 0.0);
    stats->examples = 0;
    for (int e = 0; e < config.epochs; ++e) {
      double sum = 0.0;
      std::int64_t n = 0;
      for (const auto& s : states) {
        sum += s.loss_sum[static_cast<std::size_t>(e)];
        n += s.examples[static_cast<std::size_t>(e)];
      }
      stats->epoch_loss[static_cast<std::size_t>(e)] = n > 0 ? sum / static_cast<double>(n) : 0.0;
      stats->examples += n;
    }
  }
  return model;
}

std::vector<Neighbor> nearest_neighbors(const EmbeddingModel& model, std::string_view query,
                                        std::size_t k, bool exclude_query_tokens) {
  if (k == 0) throw std::invalid_argument("k must be >= 1");
  const NormalizedQuery q = normalize(query);
  const Vector<float> qv = query_vector(model, q);
  std::vector<Neighbor> all;
  for (const auto& e : model.dictionary.words()) {
    if (exclude_query_tokens &&
        std::find(q.tokens.begin(), q.tokens.end(), e.word) != q.tokens.end()) {
      continue;
    }
    all.push_back({e.word, cosine(qv, token_vector(model, e.word))});
  }
  const auto better = [](const Neighbor& a, const Neighbor& b) {
    if (a.cosine != b.cosine) return a.cosine > b.cosine;
    return a.word < b.word;
  };
  const std::size_t keep = std::min(k, all.size());
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(keep), all.end(), better);
  all.resize(keep);
  return all;
}

}  // namespace qac
