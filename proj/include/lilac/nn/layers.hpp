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
#include <numbers>
#include <stdexcept>
#include <string>

#include "lilac/nn/tensor.hpp"

namespace lilac::nn {

// Every trainable module follows the same three-call contract:
//   infer(x)            eval-mode forward, const, no recording (thread-safe)
//   forward(x, tape)    training forward, records what backward needs
//   backward(tape, dy)  accumulates parameter gradients, returns dL/dx
// Calling backward with a tape that was never filled throws.

struct TapeBase {
  bool recorded = false;
  void require_recorded(const char* who) const {
    if (!recorded) {
      throw std::logic_error(std::string(who) + ": backward called before forward");
    }
  }
};

// ---------------------------------------------------------------------------
// Dense: y = W x + b

class Dense {
 public:
  struct Tape : TapeBase {
    Matrix x;
  };

  Dense() = default;
  Dense(const std::string& name, Eigen::Index in, Eigen::Index out)
      : weight(name + ".weight", out, in), bias(name + ".bias", out, 1) {}

  Eigen::Index in_dim() const { return weight.value.cols(); }
  Eigen::Index out_dim() const { return weight.value.rows(); }

  // PyTorch-style fan-in uniform initialization.
  void init(Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in_dim()));
    fill_uniform(weight.value, bound, rng);
    fill_uniform(bias.value, bound, rng);
  }

  Matrix infer(const Matrix& x) const {
    require_rows(x, in_dim(), weight.name.c_str());
    Matrix y = weight.value * x;
    y.colwise() += bias.value.col(0);
    return y;
  }

  Matrix forward(const Matrix& x, Tape& tape) const {
    Matrix y = infer(x);
    tape.x = x;
    tape.recorded = true;
    return y;
  }

  Matrix backward(const Tape& tape, const Matrix& dy) {
    tape.require_recorded("Dense");
    require_rows(dy, out_dim(), weight.name.c_str());
    weight.grad.noalias() += dy * tape.x.transpose();
    bias.grad.col(0) += dy.rowwise().sum();
    return weight.value.transpose() * dy;
  }

  void collect(ParamList& out) { out.push_back(&weight); out.push_back(&bias); }
  void collect(ConstParamList& out) const {
    out.push_back(&weight);
    out.push_back(&bias);
  }

  Param weight;
  Param bias;
};

// ---------------------------------------------------------------------------
// GELU, exact erf form: 0.5 x (1 + erf(x / sqrt 2)).

inline double gelu(double x) {
  return 0.5 * x * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
}

// d/dx gelu(x) = Phi(x) + x phi(x)
inline double gelu_grad(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  return cdf + x * pdf;
}

inline Matrix gelu(const Matrix& x) { return x.unaryExpr([](double v) { return gelu(v); }); }

inline Matrix gelu_backward(const Matrix& x, const Matrix& dy) {
  return dy.cwiseProduct(x.unaryExpr([](double v) { return gelu_grad(v); }));
}

// ---------------------------------------------------------------------------
// Batch normalization over the batch (column) axis, one statistic per feature.

class BatchNorm {
 public:
  enum class Mode { kTrain, kEval };

  struct Tape : TapeBase {
    Matrix xhat;
    Vector inv_std;
    bool batch_stats = true;
  };

  static constexpr double kDefaultEps = 1e-5;
  static constexpr double kDefaultMomentum = 0.1;

  BatchNorm() = default;
  BatchNorm(const std::string& name, Eigen::Index features)
      : gamma(name + ".gamma", features, 1),
        beta(name + ".beta", features, 1),
        running_mean(name + ".running_mean", features, 1, false),
        running_var(name + ".running_var", features, 1, false) {
    gamma.value.setOnes();
    running_var.value.setOnes();
  }

  Eigen::Index features() const { return gamma.value.rows(); }

  Matrix infer(const Matrix& x) const {
    require_rows(x, features(), gamma.name.c_str());
    const Vector inv_std = (running_var.value.col(0).array() + eps).rsqrt();
    Matrix y = x;
    y.colwise() -= running_mean.value.col(0);
    y = (inv_std.cwiseProduct(gamma.value.col(0))).asDiagonal() * y;
    y.colwise() += beta.value.col(0);
    return y;
  }

  // In train mode normalizes by batch statistics and folds them into the
  // running statistics with `momentum`; running_var tracks the unbiased
  // estimate. In eval mode behaves like infer() but records a tape.
  Matrix forward(const Matrix& x, Tape& tape) {
    require_rows(x, features(), gamma.name.c_str());
    const Eigen::Index batch = x.cols();
    if (mode == Mode::kEval) {
      tape.inv_std = (running_var.value.col(0).array() + eps).rsqrt();
      tape.xhat = x;
      tape.xhat.colwise() -= running_mean.value.col(0);
      tape.xhat = tape.inv_std.asDiagonal() * tape.xhat;
      tape.batch_stats = false;
    } else {
      if (batch < 2) {
        throw ShapeError("BatchNorm: train mode requires a batch of at least 2");
      }
      const Vector mean = x.rowwise().mean();
      Matrix centered = x;
      centered.colwise() -= mean;
      const Vector var = centered.array().square().rowwise().sum() / static_cast<double>(batch);
      tape.inv_std = (var.array() + eps).rsqrt();
      tape.xhat = tape.inv_std.asDiagonal() * centered;
      tape.batch_stats = true;
      const double unbias = static_cast<double>(batch) / static_cast<double>(batch - 1);
      running_mean.value.col(0) = (1.0 - momentum) * running_mean.value.col(0) + momentum * mean;
      running_var.value.col(0) =
          (1.0 - momentum) * running_var.value.col(0) + momentum * unbias * var;
    }
    tape.recorded = true;
    Matrix y = gamma.value.col(0).asDiagonal() * tape.xhat;
    y.colwise() += beta.value.col(0);
    return y;
  }

  Matrix backward(const Tape& tape, const Matrix& dy) {
    tape.require_recorded("BatchNorm");
    gamma.grad.col(0) += dy.cwiseProduct(tape.xhat).rowwise().sum();
    beta.grad.col(0) += dy.rowwise().sum();
    const Matrix dxhat = gamma.value.col(0).asDiagonal() * dy;
    if (!tape.batch_stats) {
      return tape.inv_std.asDiagonal() * dxhat;
    }
    const double batch = static_cast<double>(dy.cols());
    const Vector sum_dxhat = dxhat.rowwise().sum();
    const Vector sum_dxhat_xhat = dxhat.cwiseProduct(tape.xhat).rowwise().sum();
    Matrix dx = batch * dxhat;
    dx.colwise() -= sum_dxhat;
    dx -= sum_dxhat_xhat.asDiagonal() * tape.xhat;
    return (tape.inv_std / batch).asDiagonal() * dx;
  }

  void collect(ParamList& out) {
    out.insert(out.end(), {&gamma, &beta, &running_mean, &running_var});
  }
  void collect(ConstParamList& out) const {
    out.insert(out.end(), {&gamma, &beta, &running_mean, &running_var});
  }

  Param gamma;
  Param beta;
  Param running_mean;
  Param running_var;
  double eps = kDefaultEps;
  double momentum = kDefaultMomentum;
  Mode mode = Mode::kTrain;
};

// ---------------------------------------------------------------------------
// Two-layer MLP: Dense -> GELU -> Dense.

class Mlp {
 public:
  struct Tape : TapeBase {
    Dense::Tape fc1;
    Dense::Tape fc2;
    Matrix pre;
  };

  Mlp() = default;
  Mlp(const std::string& name, Eigen::Index in, Eigen::Index hidden, Eigen::Index out)
      : fc1(name + ".fc1", in, hidden), fc2(name + ".fc2", hidden, out) {}

  void init(Rng& rng) {
    fc1.init(rng);
    fc2.init(rng);
  }

  Eigen::Index in_dim() const { return fc1.in_dim(); }
  Eigen::Index out_dim() const { return fc2.out_dim(); }

  Matrix infer(const Matrix& x) const { return fc2.infer(gelu(fc1.infer(x))); }

  Matrix forward(const Matrix& x, Tape& tape) const {
    tape.pre = fc1.forward(x, tape.fc1);
    tape.recorded = true;
    return fc2.forward(gelu(tape.pre), tape.fc2);
  }

  Matrix backward(const Tape& tape, const Matrix& dy) {
    tape.require_recorded("Mlp");
    const Matrix dh = fc2.backward(tape.fc2, dy);
    return fc1.backward(tape.fc1, gelu_backward(tape.pre, dh));
  }

  void collect(ParamList& out) { fc1.collect(out); fc2.collect(out); }
  void collect(ConstParamList& out) const { fc1.collect(out); fc2.collect(out); }

  Dense fc1;
  Dense fc2;
};

// Mean squared error averaged over every element (features and batch).
inline double mse(const Matrix& prediction, const Matrix& target) {
  return (prediction - target).array().square().mean();
}

inline Matrix mse_grad(const Matrix& prediction, const Matrix& target) {
  return 2.0 * (prediction - target) / static_cast<double>(prediction.size());
}

}  // namespace lilac::nn
