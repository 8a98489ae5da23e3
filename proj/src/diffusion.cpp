#include "sforge/diffusion.hpp"

#include <algorithm>
#include <cmath>

#include "sforge/errors.hpp"
#include "sforge/guidance.hpp"
#include "sforge/util.hpp"

namespace sforge {

NoiseSchedule build_schedule(int K, double beta_start, double beta_end) {
  if (K < 1) throw ValidationError("build_schedule: K must be >= 1");
  if (!(beta_start > 0.0) || !(beta_start <= beta_end) || !(beta_end < 1.0))
    throw ValidationError("build_schedule: need 0 < beta_start <= beta_end < 1");
  NoiseSchedule s;
  s.K = K;
  s.beta.resize(static_cast<size_t>(K));
  s.alpha_cum.resize(static_cast<size_t>(K));
  double prod = 1.0;
  for (int k = 0; k < K; ++k) {
    const double t = (K == 1) ? 0.0 : static_cast<double>(k) / (K - 1);
    s.beta[static_cast<size_t>(k)] = beta_start + t * (beta_end - beta_start);
    prod *= 1.0 - s.beta[static_cast<size_t>(k)];
    s.alpha_cum[static_cast<size_t>(k)] = prod;
  }
  return s;
}

std::vector<int> ddim_stride(int K, int steps) {
  if (K < 1 || steps < 1 || steps > K) throw ValidationError("ddim_stride: need 1 <= steps <= K");
  if (K % steps != 0) throw ValidationError("ddim_stride: steps must divide K");
  const int stride = K / steps;
  std::vector<int> visits(static_cast<size_t>(steps));
  for (int i = 0; i < steps; ++i) visits[static_cast<size_t>(i)] = K - 1 - i * stride;
  return visits;
}

namespace {

void check_step(int k, const NoiseSchedule& sched, const char* who) {
  if (k < 0 || k >= sched.K) throw ValidationError(std::string(who) + ": step index out of range");
}

}  // namespace

Mat forward_noise(const Mat& z0, int k, const Mat& eps, const NoiseSchedule& sched) {
  check_step(k, sched, "forward_noise");
  if (eps.rows() != z0.rows() || eps.cols() != z0.cols())
    throw ValidationError("forward_noise: eps shape mismatch");
  const double ac = sched.alpha_cum[static_cast<size_t>(k)];
  return std::sqrt(ac) * z0 + std::sqrt(1.0 - ac) * eps;
}

Mat predict_clean(const Mat& z_k, const Mat& eps_hat, int k, const NoiseSchedule& sched) {
  check_step(k, sched, "predict_clean");
  if (eps_hat.rows() != z_k.rows() || eps_hat.cols() != z_k.cols())
    throw ValidationError("predict_clean: eps_hat shape mismatch");
  const double ac = sched.alpha_cum[static_cast<size_t>(k)];
  return (z_k - std::sqrt(1.0 - ac) * eps_hat) / std::sqrt(ac);
}

Mat ddim_step(const Mat& z_k, const Mat& eps_hat, int k, int k_prev, const NoiseSchedule& sched) {
  check_step(k, sched, "ddim_step");
  if (k_prev < 0 || k_prev > k) throw ValidationError("ddim_step: need 0 <= k_prev <= k");
  if (k_prev == k && k != 0) throw ValidationError("ddim_step: k_prev must be below k");
  const Mat clean = predict_clean(z_k, eps_hat, k, sched);
  if (k_prev == 0) return clean;  // boundary convention: target alpha taken as 1
  const double ac = sched.alpha_cum[static_cast<size_t>(k_prev)];
  return std::sqrt(ac) * clean + std::sqrt(1.0 - ac) * eps_hat;
}

DenoiserParams DenoiserParams::init(int d_z, int d_c, uint64_t seed, int d_temb, int hidden) {
  if (d_z < 1 || d_c < 0 || hidden < 1) throw ValidationError("DenoiserParams: bad dimensions");
  DenoiserParams p;
  p.d_z = d_z;
  p.d_c = d_c;
  p.d_temb = d_temb;
  p.hidden = hidden;
  Rng rng(mix_seed(seed, 0x64656e6f69736572ull));  // "denoiser"
  p.in = nn::Linear::xavier(hidden, d_z + d_c + d_temb, rng);
  p.res1 = nn::Linear::xavier(hidden, hidden, rng);
  p.res2 = nn::Linear::xavier(hidden, hidden, rng);
  p.res3 = nn::Linear::xavier(hidden, hidden, rng);
  p.msg_update = nn::Linear::xavier(hidden, 2 * hidden, rng);
  // Zero output head: the untrained model predicts zero noise, which makes
  // the expected initial loss equal the latent dimensionality per agent.
  p.out = nn::Linear::zeros(d_z, hidden);
  return p;
}

nn::NamedParams DenoiserParams::named_params() {
  nn::NamedParams out_list;
  nn::collect(out_list, "in", in);
  nn::collect(out_list, "res1", res1);
  nn::collect(out_list, "res2", res2);
  nn::collect(out_list, "res3", res3);
  nn::collect(out_list, "msg_update", msg_update);
  nn::collect(out_list, "out", out);
  return out_list;
}

uint64_t DenoiserParams::arch_hash() const {
  const std::string desc = "denoiser:v1:d_z=" + std::to_string(d_z) + ":d_c=" + std::to_string(d_c) +
                           ":d_temb=" + std::to_string(d_temb) + ":hidden=" + std::to_string(hidden);
  return fnv1a64(desc);
}

DenoiserRefs bind(ad::Tape& tape, const DenoiserParams& params, bool trainable) {
  DenoiserRefs r;
  r.in = bind(tape, params.in, trainable);
  r.res1 = bind(tape, params.res1, trainable);
  r.res2 = bind(tape, params.res2, trainable);
  r.res3 = bind(tape, params.res3, trainable);
  r.msg_update = bind(tape, params.msg_update, trainable);
  r.out = bind(tape, params.out, trainable);
  return r;
}

ad::Var denoiser_apply(ad::Tape& tape, const DenoiserParams& params, const DenoiserRefs& refs,
                       ad::Var z, ad::Var c, int k) {
  using ad::Var;
  using ad::vconcat;
  const auto n = tape.value(z).cols();
  if (tape.value(z).rows() != params.d_z) throw ValidationError("denoiser_apply: z row mismatch");
  if (params.d_c > 0 &&
      (c.tape == nullptr || tape.value(c).rows() != params.d_c || tape.value(c).cols() != n))
    throw ValidationError("denoiser_apply: conditioning shape mismatch");

  const Mat temb = nn::time_embedding(k, params.d_temb);
  const Var tv = tape.constant(temb.replicate(1, n));
  const Var feats = params.d_c > 0 ? vconcat({z, c, tv}) : vconcat(z, tv);

  Var h = tanh(refs.in(feats));
  h = h + tanh(refs.res1(h));
  h = h + tanh(refs.res2(h));
  h = h + tanh(refs.res3(h));

  // One cross-agent round: each agent sees the mean of the other agents'
  // states; a single agent sees zeros.
  Var neighbors;
  if (n > 1) {
    const Var total = matmul(h, tape.constant(Mat::Ones(n, 1)));
    neighbors = (matmul(total, tape.constant(Mat::Ones(1, n))) - h) * (1.0 / static_cast<double>(n - 1));
  } else {
    neighbors = tape.constant(Mat::Zero(params.hidden, 1));
  }
  h = h + tanh(refs.msg_update(vconcat(h, neighbors)));
  return refs.out(h);
}

Mat denoiser_eval(const DenoiserParams& params, const Mat& z, const Mat& c, int k) {
  ad::Tape tape;
  const DenoiserRefs refs = bind(tape, params, false);
  const ad::Var zv = tape.constant(z);
  ad::Var cv;
  if (params.d_c > 0) cv = tape.constant(c);
  return tape.value(denoiser_apply(tape, params, refs, zv, cv, k));
}

namespace {

std::vector<Mat> collect_grads(ad::Tape& tape, const DenoiserRefs& refs) {
  std::vector<Mat> g;
  g.reserve(12);
  for (const nn::LinearRef* l : {&refs.in, &refs.res1, &refs.res2, &refs.res3, &refs.msg_update, &refs.out}) {
    g.push_back(tape.grad(l->w));
    g.push_back(tape.grad(l->b));
  }
  return g;
}

}  // namespace

std::vector<double> train_denoiser(DenoiserParams& params,
                                   const std::vector<DenoiserTrainItem>& dataset,
                                   const NoiseSchedule& sched, const DenoiserTrainConfig& cfg,
                                   const std::function<void(int, double)>& on_epoch) {
  if (dataset.empty()) throw TrainingError("train_denoiser: empty dataset");
  if (cfg.epochs < 1 || cfg.batch_size < 1) throw TrainingError("train_denoiser: bad config");
  for (const auto& item : dataset) {
    if (item.mu.rows() != params.d_z || item.log_std.rows() != params.d_z ||
        item.mu.cols() != item.log_std.cols())
      throw TrainingError("train_denoiser: latent shape mismatch in dataset");
    if (item.c.rows() != params.d_c || (params.d_c > 0 && item.c.cols() != item.mu.cols()))
      throw TrainingError("train_denoiser: conditioning shape mismatch in dataset");
  }

  nn::Adam opt;
  opt.lr = cfg.lr;
  const nn::NamedParams named = params.named_params();
  std::vector<Mat*> slots;
  for (const auto& [name, p] : named) slots.push_back(p);

  DenoiserParams last_good = params;
  nn::Adam last_good_opt = opt;
  std::vector<double> curve;
  curve.reserve(static_cast<size_t>(cfg.epochs));

  const size_t n_items = dataset.size();
  std::vector<size_t> order(n_items);
  for (size_t i = 0; i < n_items; ++i) order[i] = i;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng perm_rng(mix_seed(cfg.seed, 0x7065726dull, static_cast<uint64_t>(epoch)));
    for (size_t i = n_items; i > 1; --i) {
      const size_t j = static_cast<size_t>(perm_rng.uniform_int(0, static_cast<int64_t>(i) - 1));
      std::swap(order[i - 1], order[j]);
    }

    double epoch_loss_sum = 0.0;
    for (size_t start = 0; start < n_items; start += static_cast<size_t>(cfg.batch_size)) {
      const size_t b = std::min(static_cast<size_t>(cfg.batch_size), n_items - start);
      std::vector<double> losses(b, 0.0);
      std::vector<std::vector<Mat>> grads(b);

      parallel_for(b, [&](size_t bi) {
        const size_t item_idx = order[start + bi];
        const DenoiserTrainItem& item = dataset[item_idx];
        // Per-(epoch, item) stream keeps the draw independent of batch
        // composition and worker count.
        Rng rng(mix_seed(cfg.seed, static_cast<uint64_t>(epoch), static_cast<uint64_t>(item_idx)));
        const auto n = item.mu.cols();
        Mat eps_z(params.d_z, n), eps(params.d_z, n);
        for (int r = 0; r < params.d_z; ++r)
          for (Eigen::Index col = 0; col < n; ++col) eps_z(r, col) = rng.normal();
        const int k = static_cast<int>(rng.uniform_int(0, sched.K - 1));
        for (int r = 0; r < params.d_z; ++r)
          for (Eigen::Index col = 0; col < n; ++col) eps(r, col) = rng.normal();

        const Mat z0 = item.mu + item.log_std.array().exp().matrix().cwiseProduct(eps_z);
        const Mat z_k = forward_noise(z0, k, eps, sched);

        ad::Tape tape;
        const DenoiserRefs refs = bind(tape, params, true);
        const ad::Var zv = tape.constant(z_k);
        ad::Var cv;
        if (params.d_c > 0) cv = tape.constant(item.c);
        const ad::Var eps_hat = denoiser_apply(tape, params, refs, zv, cv, k);
        const ad::Var resid = tape.constant(eps) - eps_hat;
        const ad::Var loss = sum(resid * resid);
        losses[bi] = tape.scalar_value(loss);
        tape.backward(loss);
        grads[bi] = collect_grads(tape, refs);
      });

      double batch_loss = 0.0;
      for (double l : losses) batch_loss += l;
      if (!std::isfinite(batch_loss)) {
        params = last_good;
        throw TrainingError("train_denoiser: non-finite loss at epoch " + std::to_string(epoch) +
                            "; parameters rolled back to last finite epoch");
      }
      epoch_loss_sum += batch_loss;

      std::vector<Mat> total = grads[0];
      for (size_t bi = 1; bi < b; ++bi)
        for (size_t gi = 0; gi < total.size(); ++gi) total[gi] += grads[bi][gi];
      const double inv_b = 1.0 / static_cast<double>(b);
      for (Mat& g : total) g *= inv_b;
      opt.step(slots, total);
    }

    const double epoch_mean = epoch_loss_sum / static_cast<double>(n_items);
    curve.push_back(epoch_mean);
    if (on_epoch) on_epoch(epoch, epoch_mean);
    last_good = params;
    last_good_opt = opt;
  }
  (void)last_good_opt;
  return curve;
}

std::vector<LatentSample> sample_latents(const SampleRequest& req, const DenoiserParams& params,
                                         const NoiseSchedule& sched, const Mat& conditioning,
                                         int n_agents, const GuidanceHook* hook,
                                         double* loop_seconds_out) {
  if (req.sample_count < 1) throw ValidationError("sample_latents: sample_count must be >= 1");
  if (n_agents < 1) throw ValidationError("sample_latents: need at least one agent");
  if (params.d_c > 0 &&
      (conditioning.rows() != params.d_c || conditioning.cols() != n_agents))
    throw ValidationError("sample_latents: conditioning shape mismatch");
  const std::vector<int> visits = ddim_stride(sched.K, req.ddim_steps);

  std::vector<LatentSample> out(static_cast<size_t>(req.sample_count));
  std::vector<double> loop_seconds(static_cast<size_t>(req.sample_count), 0.0);

  parallel_for(static_cast<size_t>(req.sample_count), [&](size_t cand) {
    Rng rng(req.seed + static_cast<uint64_t>(cand));
    Mat z(params.d_z, n_agents);
    for (int r = 0; r < params.d_z; ++r)
      for (int col = 0; col < n_agents; ++col) z(r, col) = rng.normal();

    const double t0 = now_seconds();
    for (size_t i = 0; i < visits.size(); ++i) {
      const int k = visits[i];
      Mat eps_hat = denoiser_eval(params, z, conditioning, k);
      if (hook != nullptr && hook->scale > 0.0 && hook->gradient) {
        try {
          const Mat grad = hook->gradient(z, k);
          if (grad.rows() != z.rows() || grad.cols() != z.cols())
            throw GuidanceError("guidance gradient shape mismatch");
          if (!grad.allFinite()) throw GuidanceError("non-finite guidance gradient");
          // The DDIM update carries a negative coefficient on the injected
          // noise, so subtracting the negated gradient descends the
          // objective.
          eps_hat = guided_noise(eps_hat, -grad, hook->scale);
        } catch (const GuidanceError&) {
          out[cand].fallback_steps += 1;
        } catch (const Error& e) {
          throw GenerationError("candidate " + std::to_string(cand) + ": " + e.what());
        }
      }
      const int k_prev = (i + 1 < visits.size()) ? visits[i + 1] : 0;
      z = ddim_step(z, eps_hat, k, k_prev, sched);
    }
    loop_seconds[cand] = now_seconds() - t0;
    out[cand].z0 = std::move(z);
  });

  if (loop_seconds_out != nullptr) {
    double total = 0.0;
    for (double s : loop_seconds) total += s;
    *loop_seconds_out = total;
  }
  return out;
}

}  // namespace sforge
