// Copyright 2026 The LILAC Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include "lilac/nn/tensor.hpp"

namespace lilac::testing {

inline nn::Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, nn::Rng& rng,
                                double scale = 1.0) {
  nn::Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-scale, scale);
  return m;
}

inline nn::Vector random_vector(Eigen::Index n, nn::Rng& rng, double scale = 1.0) {
  return random_matrix(n, 1, rng, scale);
}

// Naive triple loop, used as an oracle for Eigen products.
inline nn::Matrix naive_matmul(const nn::Matrix& a, const nn::Matrix& b) {
  nn::Matrix c = nn::Matrix::Zero(a.rows(), b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < b.cols(); ++j)
      for (Eigen::Index k = 0; k < a.cols(); ++k) c(i, j) += a(i, k) * b(k, j);
  return c;
}

}  // namespace lilac::testing
