#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <vector>

#include "sforge/autodiff.hpp"
#include "sforge/nn.hpp"
#include "sforge/rng.hpp"
#include "sforge/scene.hpp"
#include "sforge/scene_map.hpp"

namespace sforge {

using ad::Mat;

// Graph VAE over traffic scenes. Non-ego agents are modeled (one latent /
// conditioning column per non-ego agent, ascending id order); the ego
// participates in encoding as a graph node only. All position features are
// taken relative to the ego's current position, headings enter as (cos, sin),
// and local map context comes from a 5x3 grid of SDF probes in each agent's
// frame (forward 0..20 m, lateral +-3 m).
//
// Encoders: node MLP -> `mp_rounds` rounds of message passing on the fully
// connected agent graph (shared round weights, relative-pose edge features,
// mean aggregation in fixed column order) -> linear heads on non-ego nodes.
// The posterior encoder sees the future appended to each node's features.
//
// Decoder: per-agent GRU over the future horizon; each step consumes
// (state features, map probes at the current pose, z_i) and emits a bounded
// action (accel = 8*tanh, yaw rate = 1*tanh) integrated by the kinematic
// model. The conditioning c is not a decoder input; it only conditions the
// latent diffusion model.
struct VaeParams {
  int d_z = 32;
  int d_c = 64;
  int hidden = 128;
  int mp_rounds = 2;
  int t_hist = 4;
  int t_future = 12;

  // Prior encoder (conditioning head). Trained by nothing in the VAE loss:
  // it acts as a fixed random feature map over past + map context.
  nn::Linear pri_emb1, pri_emb2, pri_msg, pri_upd, pri_head;
  // Posterior encoder.
  nn::Linear post_emb1, post_emb2, post_msg, post_upd, post_mean, post_logstd;
  // Decoder.
  nn::Linear dec_h0;
  nn::Gru dec_gru;
  nn::Linear dec_accel, dec_yaw;

  static VaeParams init(uint64_t seed, int d_z = 32, int d_c = 64, int hidden = 128,
                        int mp_rounds = 2, int t_hist = 4, int t_future = 12);
  nn::NamedParams named_params();      // full set, checkpoint order
  nn::NamedParams trainable_params();  // posterior + decoder (the VAE loss reaches only these)
  uint64_t arch_hash() const;

  int node_feature_dim(bool with_future) const;
  int decoder_input_dim() const;
};

struct GaussianPosterior {
  Mat mean;     // d_z x N
  Mat log_std;  // d_z x N
};

// Conditioning vectors, one column per non-ego agent (ascending id).
Mat encode_prior(const Scenario& scenario, const VaeParams& params);
GaussianPosterior encode_posterior(const Scenario& scenario, const VaeParams& params);

// mean + exp(log_std) .* eps with eps ~ N(0, I) drawn column-major from rng.
Mat sample_posterior(const GaussianPosterior& posterior, Rng& rng);

// Sum over all entries of 0.5 * (exp(2*log_std) + mean^2 - 1 - 2*log_std).
double kl_divergence(const Mat& mean, const Mat& log_std);

// Differentiable decode. Positions per agent and step live on the tape;
// actions are materialized values for kinematically exact replay.
struct DecodedTape {
  ad::Var z;                 // d_z x N latent leaf (input or constant)
  std::vector<int> ids;      // non-ego agent ids, ascending == column order
  // pos[agent][step] = {x, y} scalar vars over the future horizon.
  std::vector<std::vector<std::array<ad::Var, 2>>> pos;
  std::vector<std::vector<AgentAction>> actions;  // extracted action values
};

DecodedTape decode_on_tape(ad::Tape& tape, const Mat& z, const Scenario& scenario,
                           const VaeParams& params, bool z_requires_grad,
                           bool params_trainable = false);

// Plain decode: future tracks (t_future states, current state excluded) for
// non-ego agents in ascending id order, integrated with kinematic_step so the
// recurrence holds exactly.
std::vector<AgentTrack> decode(const Mat& z, const Scenario& scenario, const VaeParams& params);

struct VaeTrainConfig {
  int epochs = 200;
  int batch_size = 16;
  double lr = 1e-3;
  double beta_kl = 0.1;
  double warmup_frac = 0.2;  // fraction of epochs to ramp beta linearly from 0
  double grad_clip = 5.0;    // global-norm clip; <= 0 disables
  uint64_t seed = 1;
  // Early stop once held-out reconstruction ADE (checked every eval_every
  // epochs) drops below target_ade; <= 0 disables.
  double target_ade = 0.0;
  int eval_every = 10;
};

struct VaeTrainStats {
  std::vector<double> train_loss;  // per epoch
  std::vector<double> val_ade;     // one entry per evaluation
  int epochs_run = 0;
};

// Minimizes mean position reconstruction error plus beta_kl * KL(posterior ||
// N(0, I)); Adam over the trainable parameters. Non-finite loss rolls the
// parameters back to the last finite epoch and throws TrainingError.
// Deterministic for fixed config and corpus regardless of worker count.
VaeTrainStats train_vae(VaeParams& params, const std::vector<Scenario>& train_set,
                        const std::vector<Scenario>& val_set, const VaeTrainConfig& cfg,
                        const std::function<void(int, double, double)>& on_epoch = {});

// Mean displacement between posterior-mean reconstructions and ground-truth
// futures over all non-ego agents and steps.
double reconstruction_ade(const VaeParams& params, const std::vector<Scenario>& scenes);

}  // namespace sforge
