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

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace lilac::nn {

// Dense storage used by every model in the library.
//
// Batches are stored feature-major: a batch of B samples with F features is
// an F x B matrix, one sample per column. Single samples are column vectors.
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline std::string shape_str(Eigen::Index rows, Eigen::Index cols) {
  return "(" + std::to_string(rows) + "x" + std::to_string(cols) + ")";
}

template <typename Derived>
void check_finite(const Eigen::DenseBase<Derived>& m, const char* what) {
  if (!m.allFinite()) {
    throw NumericError(std::string("non-finite value in ") + what);
  }
}

inline void require_rows(const Matrix& m, Eigen::Index rows, const char* what) {
  if (m.rows() != rows) {
    throw ShapeError(std::string(what) + ": expected " + std::to_string(rows) +
                     " rows, got " + shape_str(m.rows(), m.cols()));
  }
}

// A named tensor owned by a layer, with its accumulated gradient.
// Non-trainable params (batch-norm running statistics) are checkpointed but
// never touched by the optimizer.
struct Param {
  std::string name;
  Matrix value;
  Matrix grad;
  bool trainable = true;

  Param() = default;
  Param(std::string n, Eigen::Index rows, Eigen::Index cols,
        bool is_trainable = true)
      : name(std::move(n)),
        value(Matrix::Zero(rows, cols)),
        grad(Matrix::Zero(rows, cols)),
        trainable(is_trainable) {}

  void zero_grad() { grad.setZero(); }
  Eigen::Index size() const { return value.size(); }
};

using ParamList = std::vector<Param*>;
using ConstParamList = std::vector<const Param*>;

// Seeded generator with portable uniform/normal draws. The std <random>
// distributions are implementation-defined, so they are avoided wherever
// bit-identical results across toolchains matter.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Box-Muller; one draw per call.
  double normal(double mean = 0.0, double stddev = 1.0) {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return mean + stddev * std::sqrt(-2.0 * std::log(u1)) *
                      std::cos(2.0 * std::numbers::pi * u2);
  }

  // Uniform integer in [0, n).
  std::size_t index(std::size_t n) {
    return static_cast<std::size_t>(engine_() % n);
  }

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::swap(items[i - 1], items[index(i)]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

inline void fill_uniform(Matrix& m, double bound, Rng& rng) {
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      m(r, c) = rng.uniform(-bound, bound);
    }
  }
}

inline std::size_t count_parameters(const ConstParamList& params,
                                    bool trainable_only = true) {
  std::size_t n = 0;
  for (const Param* p : params) {
    if (!trainable_only || p->trainable) n += static_cast<std::size_t>(p->size());
  }
  return n;
}

}  // namespace lilac::nn
