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
#include <vector>

#include "lilac/nn/tensor.hpp"

namespace lilac::nn {

struct AdamWOptions {
  double lr = 1e-3;
  double weight_decay = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// AdamW with decoupled weight decay and bias correction:
//   theta <- theta - lr * wd * theta
//   m <- b1 m + (1 - b1) g,  v <- b2 v + (1 - b2) g^2
//   theta <- theta - lr * m_hat / (sqrt(v_hat) + eps)
// Weight decay applies to every trainable tensor, biases included.
class AdamW {
 public:
  AdamW(ParamList params, AdamWOptions options = {})
      : params_(std::move(params)), options_(options) {
    for (Param* p : params_) {
      if (!p->trainable) continue;
      first_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
      second_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
    }
  }

  const AdamWOptions& options() const { return options_; }
  std::int64_t step_count() const { return step_; }

  void zero_grad() {
    for (Param* p : params_) p->zero_grad();
  }

  // Throws NumericError (before touching any parameter) on a non-finite gradient.
  void step() {
    for (Param* p : params_) {
      if (p->trainable) check_finite(p->grad, p->name.c_str());
    }
    ++step_;
    const double t = static_cast<double>(step_);
    const double correction1 = 1.0 - std::pow(options_.beta1, t);
    const double correction2 = 1.0 - std::pow(options_.beta2, t);
    std::size_t slot = 0;
    for (Param* p : params_) {
      if (!p->trainable) continue;
      Matrix& m = first_[slot];
      Matrix& v = second_[slot];
      ++slot;
      p->value *= 1.0 - options_.lr * options_.weight_decay;
      m = options_.beta1 * m + (1.0 - options_.beta1) * p->grad;
      v = options_.beta2 * v + (1.0 - options_.beta2) * p->grad.cwiseAbs2();
      p->value.array() -= options_.lr * (m.array() / correction1) /
                          ((v.array() / correction2).sqrt() + options_.eps);
    }
  }

  const std::vector<Matrix>& first_moments() const { return first_; }
  const std::vector<Matrix>& second_moments() const { return second_; }

 private:
  ParamList params_;
  AdamWOptions options_;
  std::vector<Matrix> first_;
  std::vector<Matrix> second_;
  std::int64_t step_ = 0;
};

}  // namespace lilac::nn
