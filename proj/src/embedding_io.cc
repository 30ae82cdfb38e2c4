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

#include <bit>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "binary_io.h"
#include "qac/subword.h"

namespace qac {
namespace {

void put_matrix(std::ostream& out, const RowMatrix<float>& m) {
  binary::put<std::uint64_t>(out, static_cast<std::uint64_t>(m.rows()));
  binary::put<std::uint64_t>(out, static_cast<std::uint64_t>(m.cols()));
  const float* data = m.data();
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(data),
              static_cast<std::streamsize>(m.size() * sizeof(float)));
  } else {
    for (Eigen::Index i = 0; i < m.size(); ++i) binary::put<float>(out, data[i]);
  }
}

RowMatrix<float> get_matrix(binary::Reader& in, Eigen::Index rows, Eigen::Index cols) {
  const auto r = in.get<std::uint64_t>();
  const auto c = in.get<std::uint64_t>();
  if (r != static_cast<std::uint64_t>(rows) || c != static_cast<std::uint64_t>(cols)) {
    throw FormatError("embedding model: matrix shape does not match dictionary/config");
  }
  RowMatrix<float> m(rows, cols);
  float* data = m.data();
  if constexpr (std::endian::native == std::endian::little) {
    in.read_bytes(reinterpret_cast<char*>(data), static_cast<std::size_t>(m.size()) * sizeof(float));
  } else {
    for (Eigen::Index i = 0; i < m.size(); ++i) data[i] = in.get<float>();
  }
  return m;
}

}  // namespace

void save_model(const EmbeddingModel& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.write(kEmbeddingMagic, sizeof(kEmbeddingMagic));
  binary::put<std::uint32_t>(out, kEmbeddingFormatVersion);

  const TrainConfig& c = model.config;
  binary::put<std::int32_t>(out, c.dim);
  binary::put<std::int32_t>(out, c.window);
  binary::put<std::int32_t>(out, c.negatives);
  binary::put<std::int32_t>(out, c.epochs);
  binary::put<double>(out, c.learning_rate);
  binary::put<std::int32_t>(out, c.min_count);
  binary::put<std::int32_t>(out, c.n_min);
  binary::put<std::int32_t>(out, c.n_max);
  binary::put<std::int64_t>(out, c.bucket_count);
  binary::put<std::uint64_t>(out, c.seed);
  binary::put<std::int32_t>(out, c.workers);

  const Dictionary& d = model.dictionary;
  binary::put<std::uint64_t>(out, static_cast<std::uint64_t>(d.word_count()));
  for (const auto& e : d.words()) {
    binary::put_string(out, e.word);
    binary::put<std::int64_t>(out, e.count);
  }
  put_matrix(out, model.input);
  put_matrix(out, model.output);
  if (!out) throw std::runtime_error("failed writing " + path);
}

EmbeddingModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  binary::Reader r(in, "embedding model " + path);

  char magic[sizeof(kEmbeddingMagic)];
  r.read_bytes(magic, sizeof(magic));
  if (std::memcmp(magic, kEmbeddingMagic, sizeof(magic)) != 0) {
    throw FormatError("embedding model " + path + ": bad magic bytes");
  }
  const auto version = r.get<std::uint32_t>();
  if (version != kEmbeddingFormatVersion) {
    throw FormatError("embedding model " + path + ": unsupported version " +
                      std::to_string(version));
  }

  TrainConfig c;
  c.dim = r.get<std::int32_t>();
  c.window = r.get<std::int32_t>();
  c.negatives = r.get<std::int32_t>();
  c.epochs = r.get<std::int32_t>();
  c.learning_rate = r.get<double>();
  c.min_count = r.get<std::int32_t>();
  c.n_min = r.get<std::int32_t>();
  c.n_max = r.get<std::int32_t>();
  c.bucket_count = r.get<std::int64_t>();
  c.seed = r.get<std::uint64_t>();
  c.workers = r.get<std::int32_t>();
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw FormatError("embedding model " + path + ": " + e.what());
  }
  if (c.dim > (1 << 16) || c.bucket_count > (std::int64_t{1} << 32)) {
    throw FormatError("embedding model " + path + ": implausible matrix dimensions");
  }

  const auto words = r.get<std::uint64_t>();
  if (words > (1ull << 31)) throw FormatError("embedding model " + path + ": implausible word count");
  std::vector<Dictionary::Entry> entries;
  entries.reserve(static_cast<std::size_t>(words));
  for (std::uint64_t i = 0; i < words; ++i) {
    Dictionary::Entry e;
    e.word = r.get_string();
    e.count = r.get<std::int64_t>();
    entries.push_back(std::move(e));
  }

  EmbeddingModel model;
  try {
    model.dictionary = Dictionary(std::move(entries), c.bucket_count, c.n_min, c.n_max);
  } catch (const std::invalid_argument& e) {
    throw FormatError("embedding model " + path + ": " + e.what());
  }
  model.config = c;
  model.input = get_matrix(r, model.dictionary.input_rows(), c.dim);
  model.output = get_matrix(r, model.dictionary.word_count(), c.dim);
  r.expect_end();
  return model;
}

void export_text(const EmbeddingModel& model, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  char buf[32];
  for (const auto& e : model.dictionary.words()) {
    const Vector<float> v = token_vector(model, e.word);
    out << e.word;
    for (Eigen::Index i = 0; i < v.size(); ++i) {
      std::snprintf(buf, sizeof(buf), " %.6g", static_cast<double>(v[i]));
      out << buf;
    }
    out << '\n';
  }
}

}  // namespace qac
