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

#include <stdexcept>
#include <string>
#include <vector>

#include "lilac/nn/tensor.hpp"

namespace lilac::model {

using nn::Matrix;
using nn::Vector;

class DegenerateBasesError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Columns whose residual norm falls below this are treated as dependent.
inline constexpr double kDegenerateNorm = 1e-8;

// k x d matrix with orthonormal columns spanning the current control manifold.
struct ControlBases {
  Matrix basis;

  Eigen::Index action_dim() const { return basis.rows(); }
  Eigen::Index latent_dim() const { return basis.cols(); }
  bool operator==(const ControlBases&) const = default;
};

// Intermediate residuals of modified Gram-Schmidt, kept for the backward pass.
// residuals[j][i] is column j after it has been orthogonalized against the
// first i output columns (residuals[j][0] is the raw input column).
struct GramSchmidtTape {
  std::vector<std::vector<Vector>> residuals;
  std::vector<double> norms;
  Matrix q;
  bool recorded = false;
};

// Modified Gram-Schmidt over the columns of `m`, in index order.
inline Matrix gram_schmidt(const Matrix& m, GramSchmidtTape* tape = nullptr) {
  const Eigen::Index cols = m.cols();
  Matrix q(m.rows(), cols);
  if (tape != nullptr) {
    tape->residuals.assign(static_cast<std::size_t>(cols), {});
    tape->norms.assign(static_cast<std::size_t>(cols), 0.0);
  }
  for (Eigen::Index j = 0; j < cols; ++j) {
    Vector v = m.col(j);
    if (tape != nullptr) tape->residuals[j].push_back(v);
    for (Eigen::Index i = 0; i < j; ++i) {
      v -= q.col(i).dot(v) * q.col(i);
      if (tape != nullptr) tape->residuals[j].push_back(v);
    }
    const double norm = v.norm();
    if (!(norm >= kDegenerateNorm)) {
      throw DegenerateBasesError("degenerate bases: column " + std::to_string(j) +
                                 " has residual norm " + std::to_string(norm));
    }
    q.col(j) = v / norm;
    if (tape != nullptr) tape->norms[j] = norm;
  }
  if (tape != nullptr) {
    tape->q = q;
    tape->recorded = true;
  }
  return q;
}

// Reverse pass through the elementary steps of gram_schmidt():
//   q_j = v_j / |v_j|
//   v^(i+1) = v^(i) - (q_i . v^(i)) q_i
// Columns are visited last to first so each dq_i is complete (it collects
// contributions from every later column's projections) before it is used.
inline Matrix gram_schmidt_backward(const GramSchmidtTape& tape, const Matrix& dq_in) {
  if (!tape.recorded) throw std::logic_error("gram_schmidt_backward called before forward");
  const Matrix& q = tape.q;
  Matrix dq = dq_in;
  Matrix dm(q.rows(), q.cols());
  for (Eigen::Index j = q.cols(); j-- > 0;) {
    const double norm = tape.norms[j];
    const Vector qj = q.col(j);
    Vector dv = (dq.col(j) - qj * qj.dot(dq.col(j))) / norm;
    for (Eigen::Index i = j; i-- > 0;) {
      const Vector& before = tape.residuals[j][i];
      const Vector qi = q.col(i);
      const double r = qi.dot(before);
      const double dr = -dv.dot(qi);
      dq.col(i) += -r * dv + dr * before;
      dv += dr * qi;
    }
    dm.col(j) = dv;
  }
  return dm;
}

// a = B z. Orthonormal columns make |a| = |z|.
inline Vector decode(const ControlBases& bases, const Vector& z) {
  if (z.size() != bases.latent_dim()) {
    throw nn::ShapeError("decode: latent has " + std::to_string(z.size()) + " entries, bases have " +
                         std::to_string(bases.latent_dim()) + " columns");
  }
  return bases.basis * z;
}

}  // namespace lilac::model
