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
#include <string>
#include <vector>

#include "lilac/nn/layers.hpp"

namespace lilac::nn {

// Column-wise softmax: each column of `scores` is one query's logits.
inline Matrix softmax_columns(const Matrix& scores) {
  Matrix out(scores.rows(), scores.cols());
  for (Eigen::Index c = 0; c < scores.cols(); ++c) {
    const double peak = scores.col(c).maxCoeff();
    out.col(c) = (scores.col(c).array() - peak).exp();
    out.col(c) /= out.col(c).sum();
  }
  return out;
}

// Sinusoidal positional encoding for positions 0..length-1 (width x length).
inline Matrix sinusoidal_positions(Eigen::Index width, Eigen::Index length) {
  Matrix pe(width, length);
  for (Eigen::Index pos = 0; pos < length; ++pos) {
    for (Eigen::Index i = 0; i < width; ++i) {
      const double exponent = static_cast<double>(2 * (i / 2)) / static_cast<double>(width);
      const double angle = static_cast<double>(pos) / std::pow(10000.0, exponent);
      pe(i, pos) = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  }
  return pe;
}

// A batch of variable-length token sequences packed side by side.
// tokens is width x (sum of lengths); lengths[s] columns belong to sequence s.
struct PackedSequences {
  Matrix tokens;
  std::vector<Eigen::Index> lengths;

  Eigen::Index count() const { return static_cast<Eigen::Index>(lengths.size()); }
};

// Single-head self-attention block with a residual feed-forward:
//   x1 = x  + Wo * attend(Wq x, Wk x, Wv x)
//   x2 = x1 + Mlp(x1)
class AttentionLayer {
 public:
  struct Tape : TapeBase {
    Dense::Tape q, k, v, o;
    Matrix queries, keys, values, attended;
    std::vector<Matrix> weights;  // per sequence, keys x queries
    Mlp::Tape ff;
  };

  AttentionLayer() = default;
  AttentionLayer(const std::string& name, Eigen::Index width)
      : query(name + ".query", width, width),
        key(name + ".key", width, width),
        value(name + ".value", width, width),
        output(name + ".output", width, width),
        feed_forward(name + ".ff", width, width, width) {}

  void init(Rng& rng) {
    query.init(rng);
    key.init(rng);
    value.init(rng);
    output.init(rng);
    feed_forward.init(rng);
  }

  Eigen::Index width() const { return query.in_dim(); }

  Matrix infer(const Matrix& x, const std::vector<Eigen::Index>& lengths) const {
    const Matrix q = query.infer(x);
    const Matrix k = key.infer(x);
    const Matrix v = value.infer(x);
    Matrix attended(x.rows(), x.cols());
    Eigen::Index offset = 0;
    for (Eigen::Index len : lengths) {
      const Matrix w = weights_for(q.middleCols(offset, len), k.middleCols(offset, len));
      attended.middleCols(offset, len) = v.middleCols(offset, len) * w;
      offset += len;
    }
    const Matrix x1 = x + output.infer(attended);
    return x1 + feed_forward.infer(x1);
  }

  Matrix forward(const Matrix& x, const std::vector<Eigen::Index>& lengths, Tape& tape) const {
    tape.queries = query.forward(x, tape.q);
    tape.keys = key.forward(x, tape.k);
    tape.values = value.forward(x, tape.v);
    tape.attended.resize(x.rows(), x.cols());
    tape.weights.clear();
    Eigen::Index offset = 0;
    for (Eigen::Index len : lengths) {
      tape.weights.push_back(
          weights_for(tape.queries.middleCols(offset, len), tape.keys.middleCols(offset, len)));
      tape.attended.middleCols(offset, len) =
          tape.values.middleCols(offset, len) * tape.weights.back();
      offset += len;
    }
    const Matrix x1 = x + output.forward(tape.attended, tape.o);
    tape.recorded = true;
    return x1 + feed_forward.forward(x1, tape.ff);
  }

  Matrix backward(const Tape& tape, const std::vector<Eigen::Index>& lengths, const Matrix& dy) {
    tape.require_recorded("AttentionLayer");
    const Matrix dx1 = dy + feed_forward.backward(tape.ff, dy);
    const Matrix dattended = output.backward(tape.o, dx1);
    Matrix dq(dy.rows(), dy.cols());
    Matrix dk(dy.rows(), dy.cols());
    Matrix dv(dy.rows(), dy.cols());
    const double scale = 1.0 / std::sqrt(static_cast<double>(width()));
    Eigen::Index offset = 0;
    for (std::size_t s = 0; s < lengths.size(); ++s) {
      const Eigen::Index len = lengths[s];
      const Matrix& w = tape.weights[s];  // w(j, i): weight of key j for query i
      const auto dout = dattended.middleCols(offset, len);
      dv.middleCols(offset, len) = dout * w.transpose();
      const Matrix dw = tape.values.middleCols(offset, len).transpose() * dout;
      Matrix dscores(len, len);
      for (Eigen::Index i = 0; i < len; ++i) {
        const double inner = w.col(i).dot(dw.col(i));
        dscores.col(i) = w.col(i).cwiseProduct((dw.col(i).array() - inner).matrix());
      }
      dscores *= scale;
      // scores(j, i) = k_j . q_i
      dq.middleCols(offset, len) = tape.keys.middleCols(offset, len) * dscores;
      dk.middleCols(offset, len) = tape.queries.middleCols(offset, len) * dscores.transpose();
      offset += len;
    }
    return dx1 + query.backward(tape.q, dq) + key.backward(tape.k, dk) +
           value.backward(tape.v, dv);
  }

  void collect(ParamList& out) {
    query.collect(out);
    key.collect(out);
    value.collect(out);
    output.collect(out);
    feed_forward.collect(out);
  }
  void collect(ConstParamList& out) const {
    query.collect(out);
    key.collect(out);
    value.collect(out);
    output.collect(out);
    feed_forward.collect(out);
  }

  Dense query;
  Dense key;
  Dense value;
  Dense output;
  Mlp feed_forward;

 private:
  Matrix weights_for(const Matrix& q, const Matrix& k) const {
    const double scale = 1.0 / std::sqrt(static_cast<double>(width()));
    return softmax_columns(scale * (k.transpose() * q));
  }
};

// Stack of attention layers with optional sinusoidal positions and a
// mean-pooled readout, one output column per sequence.
class AttentionEncoder {
 public:
  static constexpr int kLayers = 2;

  struct Tape : TapeBase {
    std::vector<AttentionLayer::Tape> layers;
  };

  AttentionEncoder() = default;
  AttentionEncoder(const std::string& name, Eigen::Index width, bool positional = true)
      : positional_(positional) {
    for (int i = 0; i < kLayers; ++i) {
      layers.emplace_back(name + ".layer" + std::to_string(i), width);
    }
  }

  void init(Rng& rng) {
    for (auto& layer : layers) layer.init(rng);
  }

  Eigen::Index width() const { return layers.front().width(); }
  bool positional() const { return positional_; }

  Matrix infer(const PackedSequences& seqs) const {
    Matrix x = with_positions(seqs);
    for (const auto& layer : layers) x = layer.infer(x, seqs.lengths);
    return mean_pool(x, seqs.lengths);
  }

  Matrix forward(const PackedSequences& seqs, Tape& tape) const {
    Matrix x = with_positions(seqs);
    tape.layers.resize(layers.size());
    for (std::size_t i = 0; i < layers.size(); ++i) {
      x = layers[i].forward(x, seqs.lengths, tape.layers[i]);
    }
    tape.recorded = true;
    return mean_pool(x, seqs.lengths);
  }

  // Returns the gradient with respect to the packed input tokens.
  Matrix backward(const Tape& tape, const std::vector<Eigen::Index>& lengths, const Matrix& dy) {
    tape.require_recorded("AttentionEncoder");
    Eigen::Index total = 0;
    for (Eigen::Index len : lengths) total += len;
    Matrix dx(dy.rows(), total);
    Eigen::Index offset = 0;
    for (std::size_t s = 0; s < lengths.size(); ++s) {
      const Eigen::Index len = lengths[s];
      dx.middleCols(offset, len) =
          (dy.col(static_cast<Eigen::Index>(s)) / static_cast<double>(len)).replicate(1, len);
      offset += len;
    }
    for (std::size_t i = layers.size(); i-- > 0;) {
      dx = layers[i].backward(tape.layers[i], lengths, dx);
    }
    return dx;
  }

  void collect(ParamList& out) {
    for (auto& layer : layers) layer.collect(out);
  }
  void collect(ConstParamList& out) const {
    for (const auto& layer : layers) layer.collect(out);
  }

  std::vector<AttentionLayer> layers;

 private:
  Matrix with_positions(const PackedSequences& seqs) const {
    if (seqs.lengths.empty()) throw ShapeError("AttentionEncoder: empty batch");
    Eigen::Index total = 0;
    for (Eigen::Index len : seqs.lengths) {
      if (len < 1) throw ShapeError("AttentionEncoder: empty sequence");
      total += len;
    }
    if (seqs.tokens.cols() != total) {
      throw ShapeError("AttentionEncoder: token count does not match lengths");
    }
    require_rows(seqs.tokens, width(), "AttentionEncoder");
    Matrix x = seqs.tokens;
    if (positional_) {
      Eigen::Index offset = 0;
      for (Eigen::Index len : seqs.lengths) {
        x.middleCols(offset, len) += sinusoidal_positions(width(), len);
        offset += len;
      }
    }
    return x;
  }

  static Matrix mean_pool(const Matrix& x, const std::vector<Eigen::Index>& lengths) {
    Matrix pooled(x.rows(), static_cast<Eigen::Index>(lengths.size()));
    Eigen::Index offset = 0;
    for (std::size_t s = 0; s < lengths.size(); ++s) {
      pooled.col(static_cast<Eigen::Index>(s)) = x.middleCols(offset, lengths[s]).rowwise().mean();
      offset += lengths[s];
    }
    return pooled;
  }

  bool positional_ = true;
};

}  // namespace lilac::nn
