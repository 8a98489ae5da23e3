#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "sforge/autodiff.hpp"
#include "sforge/nn.hpp"
#include "sforge/rng.hpp"

namespace sforge {

using ad::Mat;

// Variance schedule. beta[k] in (0,1) increases linearly; alpha_cum[k] is the
// running product of (1 - beta) and is strictly decreasing.
struct NoiseSchedule {
  int K = 0;
  std::vector<double> beta;
  std::vector<double> alpha_cum;
};

NoiseSchedule build_schedule(int K, double beta_start, double beta_end);

// Evenly spaced visit indices from K-1 downward: {K-1, K-1-s, ...}, one per
// inference step (stride s = K / steps; steps must divide K). The sampler
// appends the clean target (index 0 in ddim_step's boundary convention)
// after the last visited index.
std::vector<int> ddim_stride(int K, int steps);

// z^k = sqrt(alpha_cum[k]) * z0 + sqrt(1 - alpha_cum[k]) * eps
Mat forward_noise(const Mat& z0, int k, const Mat& eps, const NoiseSchedule& sched);

// z~0 = (z^k - sqrt(1 - alpha_cum[k]) * eps_hat) / sqrt(alpha_cum[k])
Mat predict_clean(const Mat& z_k, const Mat& eps_hat, int k, const NoiseSchedule& sched);

// Deterministic (eta = 0) reverse step to z^{k_prev}:
//   z^{k_prev} = sqrt(alpha_cum[k_prev]) * z~0 + sqrt(1 - alpha_cum[k_prev]) * eps_hat
// Boundary convention: k_prev = 0 targets the clean sample (its alpha is
// taken as 1), so the final step returns predict_clean exactly.
Mat ddim_step(const Mat& z_k, const Mat& eps_hat, int k, int k_prev, const NoiseSchedule& sched);

// Noise-prediction network: per-agent residual MLP over [z_i, c_i, temb(k)]
// with one cross-agent message-passing round. Latents are d_z x N matrices
// (one agent per column); conditioning is d_c x N, and d_c = 0 disables it.
struct DenoiserParams {
  int d_z = 32;
  int d_c = 64;
  int d_temb = 32;
  int hidden = 128;
  nn::Linear in;    // hidden x (d_z + d_c + d_temb)
  nn::Linear res1;  // hidden x hidden
  nn::Linear res2;
  nn::Linear res3;
  nn::Linear msg_update;  // hidden x (2*hidden), fuses node state with neighbor mean
  nn::Linear out;         // d_z x hidden, zero-initialized

  static DenoiserParams init(int d_z, int d_c, uint64_t seed, int d_temb = 32, int hidden = 128);
  nn::NamedParams named_params();
  uint64_t arch_hash() const;
};

struct DenoiserRefs {
  nn::LinearRef in, res1, res2, res3, msg_update, out;
};

DenoiserRefs bind(ad::Tape& tape, const DenoiserParams& params, bool trainable);

// Forward pass on a tape. `z` is d_z x N; `c` must be d_c x N (ignored when
// the model was built with d_c = 0). Output has the shape of `z`.
ad::Var denoiser_apply(ad::Tape& tape, const DenoiserParams& params, const DenoiserRefs& refs,
                       ad::Var z, ad::Var c, int k);

// Plain forward: builds a throwaway constant tape internally.
Mat denoiser_eval(const DenoiserParams& params, const Mat& z, const Mat& c, int k);

// One training example: a Gaussian posterior over the clean latent plus its
// conditioning. log_std of -1e3 (or lower) collapses to a point mass.
struct DenoiserTrainItem {
  Mat mu;       // d_z x N
  Mat log_std;  // d_z x N
  Mat c;        // d_c x N (0 x N when unconditioned)
};

struct DenoiserTrainConfig {
  int epochs = 200;
  int batch_size = 16;
  double lr = 5e-4;
  uint64_t seed = 1;
};

// Minimizes E ||eps - eps_theta(forward_noise(z0, k, eps), k, c)||^2 with
// Adam; z0 is reparameterized from each item's posterior per epoch. Returns
// the per-epoch mean loss curve. On a non-finite loss the parameters are
// rolled back to the end of the last finite epoch and TrainingError is
// thrown. Deterministic for a fixed config regardless of worker count.
std::vector<double> train_denoiser(DenoiserParams& params,
                                   const std::vector<DenoiserTrainItem>& dataset,
                                   const NoiseSchedule& sched, const DenoiserTrainConfig& cfg,
                                   const std::function<void(int, double)>& on_epoch = {});

struct SampleRequest {
  int sample_count = 10;
  int ddim_steps = 20;
  uint64_t seed = 0;
};

// Guidance callback: given the current noisy latent and step index, returns
// the routed objective gradient (same shape as z). Throwing GuidanceError
// makes the sampler fall back to an unguided step for that iteration; other
// exceptions propagate tagged with the candidate index.
struct GuidanceHook {
  std::function<Mat(const Mat& z, int k)> gradient;
  double scale = 0.0;
};

struct LatentSample {
  Mat z0;
  int fallback_steps = 0;  // guided steps that fell back to unguided
};

// Reverse-diffusion sampling of `sample_count` candidates. Each candidate c
// draws z^K from an Rng seeded with (seed + c) and runs the DDIM loop over
// ddim_stride(K, ddim_steps); when a hook with scale > 0 is supplied, the
// predicted noise is perturbed against the objective gradient so the update
// descends the objective. Pure function of the request (single- or
// multi-threaded alike). loop_seconds_out, when given, receives wall time
// spent inside the reverse loops only.
std::vector<LatentSample> sample_latents(const SampleRequest& req, const DenoiserParams& params,
                                         const NoiseSchedule& sched, const Mat& conditioning,
                                         int n_agents, const GuidanceHook* hook = nullptr,
                                         double* loop_seconds_out = nullptr);

}  // namespace sforge
