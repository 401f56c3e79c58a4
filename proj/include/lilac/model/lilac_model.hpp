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
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "lilac/model/gram_schmidt.hpp"
#include "lilac/nn/checkpoint.hpp"
#include "lilac/nn/layers.hpp"

namespace lilac::model {

struct LilacConfig {
  int state_dim = 34;
  int hidden_dim = 128;
  int action_dim = 6;
  int latent_dim = 2;
  int language_dim = 128;

  void validate() const {
    if (state_dim < 1 || hidden_dim < 1 || action_dim < 1 || latent_dim < 1 || language_dim < 1) {
      throw std::invalid_argument("LilacConfig: every dimension must be >= 1");
    }
    if (latent_dim >= action_dim) {
      throw std::invalid_argument("LilacConfig: latent_dim must be smaller than action_dim");
    }
  }

  bool operator==(const LilacConfig&) const = default;
};

inline void to_json(nlohmann::json& j, const LilacConfig& c) {
  j = {{"state_dim", c.state_dim},       {"hidden_dim", c.hidden_dim},
       {"action_dim", c.action_dim},     {"latent_dim", c.latent_dim},
       {"language_dim", c.language_dim}};
}

inline void from_json(const nlohmann::json& j, LilacConfig& c) {
  j.at("state_dim").get_to(c.state_dim);
  j.at("hidden_dim").get_to(c.hidden_dim);
  j.at("action_dim").get_to(c.action_dim);
  j.at("latent_dim").get_to(c.latent_dim);
  j.at("language_dim").get_to(c.language_dim);
}

inline constexpr const char* kAlphaConvention =
    "alpha is a real in [0,1]; 1 uses state context, 0 replaces it with bias";
inline constexpr const char* kReshapeOrder =
    "projection output reshaped row-major to action_dim x latent_dim; "
    "columns orthonormalized in index order";

// One training minibatch, one sample per column.
struct ReconstructionBatch {
  Matrix states;      // state_dim x B
  Matrix embeddings;  // language_dim x B (retrieved exemplar embeddings)
  Vector alphas;      // B
  Matrix actions;     // action_dim x B

  Eigen::Index size() const { return states.cols(); }
};

struct LossResult {
  double loss = 0.0;
  std::size_t used = 0;
  std::size_t skipped = 0;  // samples whose bases were degenerate
};

inline Vector gate(const Vector& h_state, const Vector& bias, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw std::invalid_argument("gate: alpha must lie in [0, 1]");
  }
  if (h_state.size() != bias.size()) throw nn::ShapeError("gate: h_state and bias differ in size");
  return alpha * h_state + (1.0 - alpha) * bias;
}

// State- and language-conditioned autoencoder over robot actions.
//
//   h_state  = StateEncoder(BatchNorm(s))
//   h_lang   = LanguageEncoder(e)
//   h_gated  = alpha h_state + (1 - alpha) bias
//   h_fused  = gamma(h_lang) * h_gated + beta(h_lang)
//   B        = GramSchmidt(reshape(Projection(h_fused)))
//   a_hat    = B z                        (inference)
//   a_rec    = B Compress(a)              (training)
class LilacModel {
 public:
  LilacModel() = default;
  LilacModel(const LilacConfig& config, std::uint64_t seed) : config_(config) {
    config_.validate();
    const int m = config.hidden_dim;
    state_norm = nn::BatchNorm("state_norm", config.state_dim);
    state_encoder = nn::Mlp("state_encoder", config.state_dim, m, m);
    language_encoder = nn::Mlp("language_encoder", config.language_dim, m, m);
    gate_bias = nn::Param("gate_bias", m, 1);
    film_gamma = nn::Mlp("film_gamma", m, m, m);
    film_beta = nn::Mlp("film_beta", m, m, m);
    projection = nn::Mlp("projection", m, m, config.action_dim * config.latent_dim);
    compressor = nn::Mlp("compress", config.action_dim, m, config.latent_dim);

    nn::Rng rng(seed);
    state_encoder.init(rng);
    language_encoder.init(rng);
    nn::fill_uniform(gate_bias.value, 1.0 / std::sqrt(static_cast<double>(m)), rng);
    film_gamma.init(rng);
    film_beta.init(rng);
    projection.init(rng);
    compressor.init(rng);
    // Identity-centred FiLM: gamma starts near 1 rather than near 0.
    film_gamma.fc2.bias.value.setOnes();
  }

  const LilacConfig& config() const { return config_; }

  // --- inference (const, eval-mode batch norm) ---------------------------

  Vector encode_state(const Vector& state) const {
    require_size(state, config_.state_dim, "encode_state");
    return state_encoder.infer(state_norm.infer(state));
  }

  Vector encode_language(const Vector& embedding) const {
    require_size(embedding, config_.language_dim, "encode_language");
    return language_encoder.infer(embedding);
  }

  Vector film(const Vector& h_gated, const Vector& h_language) const {
    require_size(h_gated, config_.hidden_dim, "film");
    require_size(h_language, config_.hidden_dim, "film");
    return film_gamma.infer(h_language).col(0).cwiseProduct(h_gated) +
           film_beta.infer(h_language).col(0);
  }

  Matrix projection_matrix(const Vector& h_fused) const {
    return reshape_projection(projection.infer(h_fused).col(0));
  }

  ControlBases control_bases(const Vector& state, const Vector& embedding, double alpha) const {
    const Vector h_state = encode_state(state);
    const Vector h_gated = gate(h_state, gate_bias.value.col(0), alpha);
    const Vector h_fused = film(h_gated, encode_language(embedding));
    return ControlBases{gram_schmidt(projection_matrix(h_fused))};
  }

  Vector compress(const Vector& action) const {
    require_size(action, config_.action_dim, "compress");
    return compressor.infer(action);
  }

  // --- training ----------------------------------------------------------

  void set_training(bool training) {
    state_norm.mode = training ? nn::BatchNorm::Mode::kTrain : nn::BatchNorm::Mode::kEval;
  }

  // Mean squared reconstruction error over action dimensions and the
  // non-degenerate samples of the batch. With `accumulate` the analytic
  // gradient of that loss is added to every parameter's grad.
  LossResult reconstruction_loss(const ReconstructionBatch& batch, bool accumulate = true) {
    check_batch(batch);
    const Eigen::Index n = batch.size();
    const int k = config_.action_dim;
    const int d = config_.latent_dim;

    Tape tape;
    const Matrix normed = state_norm.forward(batch.states, tape.norm);
    const Matrix h_state = state_encoder.forward(normed, tape.state);
    const Matrix h_language = language_encoder.forward(batch.embeddings, tape.language);
    Matrix h_gated = h_state * batch.alphas.asDiagonal();
    h_gated += gate_bias.value * (Vector::Ones(n) - batch.alphas).transpose();
    const Matrix gamma = film_gamma.forward(h_language, tape.gamma);
    const Matrix beta = film_beta.forward(h_language, tape.beta);
    const Matrix h_fused = gamma.cwiseProduct(h_gated) + beta;
    const Matrix raw = projection.forward(h_fused, tape.projection);
    const Matrix latents = compressor.forward(batch.actions, tape.compress);

    std::vector<GramSchmidtTape> gs(static_cast<std::size_t>(n));
    std::vector<bool> valid(static_cast<std::size_t>(n), false);
    Matrix recon = Matrix::Zero(k, n);
    LossResult result;
    for (Eigen::Index c = 0; c < n; ++c) {
      try {
        const Matrix q = gram_schmidt(reshape_projection(raw.col(c)), &gs[c]);
        recon.col(c) = q * latents.col(c);
        valid[c] = true;
        ++result.used;
      } catch (const DegenerateBasesError& e) {
        spdlog::warn("reconstruction_loss: skipping sample {}: {}", c, e.what());
        ++result.skipped;
      }
    }
    if (result.used == 0) {
      result.loss = 0.0;
      return result;
    }
    const double denom = static_cast<double>(k) * static_cast<double>(result.used);
    Matrix diff = recon - batch.actions;
    for (Eigen::Index c = 0; c < n; ++c) {
      if (!valid[c]) diff.col(c).setZero();
    }
    result.loss = diff.squaredNorm() / denom;
    if (!std::isfinite(result.loss)) throw nn::NumericError("reconstruction loss is not finite");
    if (!accumulate) return result;

    const Matrix drecon = 2.0 * diff / denom;
    Matrix draw = Matrix::Zero(raw.rows(), n);
    Matrix dlatents = Matrix::Zero(d, n);
    for (Eigen::Index c = 0; c < n; ++c) {
      if (!valid[c]) continue;
      const Matrix& q = gs[c].q;
      const Matrix dq = drecon.col(c) * latents.col(c).transpose();
      dlatents.col(c) = q.transpose() * drecon.col(c);
      draw.col(c) = flatten_projection(gram_schmidt_backward(gs[c], dq));
    }
    compressor.backward(tape.compress, dlatents);
    const Matrix dfused = projection.backward(tape.projection, draw);
    const Matrix dgamma = dfused.cwiseProduct(h_gated);
    const Matrix dgated = dfused.cwiseProduct(gamma);
    Matrix dlanguage = film_gamma.backward(tape.gamma, dgamma);
    dlanguage += film_beta.backward(tape.beta, dfused);
    language_encoder.backward(tape.language, dlanguage);
    gate_bias.grad.col(0) += dgated * (Vector::Ones(n) - batch.alphas);
    const Matrix dstate = dgated * batch.alphas.asDiagonal();
    state_norm.backward(tape.norm, state_encoder.backward(tape.state, dstate));
    return result;
  }

  // --- parameters & checkpoints ------------------------------------------

  nn::ParamList parameters() {
    nn::ParamList out;
    state_norm.collect(out);
    state_encoder.collect(out);
    language_encoder.collect(out);
    out.push_back(&gate_bias);
    film_gamma.collect(out);
    film_beta.collect(out);
    projection.collect(out);
    compressor.collect(out);
    return out;
  }

  nn::ConstParamList parameters() const {
    nn::ConstParamList out;
    state_norm.collect(out);
    state_encoder.collect(out);
    language_encoder.collect(out);
    out.push_back(&gate_bias);
    film_gamma.collect(out);
    film_beta.collect(out);
    projection.collect(out);
    compressor.collect(out);
    return out;
  }

  std::size_t parameter_count() const { return nn::count_parameters(parameters()); }

  nn::Checkpoint to_checkpoint(const std::string& policy_type) const {
    nn::Checkpoint ckpt;
    ckpt.header["policy"] = policy_type;
    ckpt.header["config"] = config_;
    ckpt.header["alpha_convention"] = kAlphaConvention;
    ckpt.header["reshape_order"] = kReshapeOrder;
    ckpt.header["batchnorm"] = {{"eps", state_norm.eps}, {"momentum", state_norm.momentum}};
    nlohmann::json layers = nlohmann::json::array();
    for (const nn::Param* p : parameters()) layers.push_back(p->name);
    ckpt.header["layers"] = layers;
    ckpt.tensors = nn::capture(parameters());
    return ckpt;
  }

  static LilacModel from_checkpoint(const nn::Checkpoint& ckpt) {
    LilacModel model(ckpt.header.at("config").get<LilacConfig>(), 0);
    nn::restore(ckpt, model.parameters());
    return model;
  }

  nn::BatchNorm state_norm;
  nn::Mlp state_encoder;
  nn::Mlp language_encoder;
  nn::Param gate_bias;
  nn::Mlp film_gamma;
  nn::Mlp film_beta;
  nn::Mlp projection;
  nn::Mlp compressor;

 private:
  struct Tape {
    nn::BatchNorm::Tape norm;
    nn::Mlp::Tape state, language, gamma, beta, projection, compress;
  };

  Matrix reshape_projection(const Vector& flat) const {
    const int k = config_.action_dim;
    const int d = config_.latent_dim;
    Matrix m(k, d);
    for (int r = 0; r < k; ++r) {
      for (int c = 0; c < d; ++c) m(r, c) = flat(r * d + c);
    }
    return m;
  }

  Vector flatten_projection(const Matrix& m) const {
    const int d = config_.latent_dim;
    Vector flat(m.rows() * d);
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (int c = 0; c < d; ++c) flat(r * d + c) = m(r, c);
    }
    return flat;
  }

  static void require_size(const Vector& v, int n, const char* who) {
    if (v.size() != n) {
      throw nn::ShapeError(std::string(who) + ": expected length " + std::to_string(n) + ", got " +
                           std::to_string(v.size()));
    }
  }

  void check_batch(const ReconstructionBatch& b) const {
    const Eigen::Index n = b.size();
    if (n == 0) throw std::invalid_argument("reconstruction_loss: empty batch");
    nn::require_rows(b.states, config_.state_dim, "batch.states");
    nn::require_rows(b.embeddings, config_.language_dim, "batch.embeddings");
    nn::require_rows(b.actions, config_.action_dim, "batch.actions");
    if (b.embeddings.cols() != n || b.actions.cols() != n || b.alphas.size() != n) {
      throw nn::ShapeError("reconstruction_loss: batch members disagree on size");
    }
    if ((b.alphas.array() < 0.0).any() || (b.alphas.array() > 1.0).any()) {
      throw std::invalid_argument("reconstruction_loss: alpha outside [0, 1]");
    }
  }

  LilacConfig config_;
};

}  // namespace lilac::model
