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

// LTR text format for feature matrices:
//
//   <label> qid:<group_id> 1:<v1> 2:<v2> ... # <candidate text>
//
// Values use the shortest decimal form that round-trips a double. The schema
// lives in a sidecar file "<path>.schema":
//
//   version<TAB><schema version>
//   <1-based index><TAB><feature name><TAB><group>

#ifndef QAC_LTR_FORMAT_H_
#define QAC_LTR_FORMAT_H_

#include <string>

#include "qac/features.h"

namespace qac {

std::string format_double(double v);
/// Strict parse of a whole string; throws FormatError.
double parse_double(std::string_view s);

std::string schema_sidecar_path(const std::string& matrix_path);

void write_schema(const FeatureSchema& schema, const std::string& path);
FeatureSchema read_schema(const std::string& path);

/// Writes the matrix and its schema sidecar.
void write_matrix(const FeatureMatrix& matrix, const std::string& path);
/// Reads the matrix and its sidecar. Rows of one group must be contiguous.
FeatureMatrix read_matrix(const std::string& path);

}  // namespace qac

#endif  // QAC_LTR_FORMAT_H_
