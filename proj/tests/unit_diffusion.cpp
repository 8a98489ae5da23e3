#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "sforge/diffusion.hpp"
#include "sforge/errors.hpp"
#include "sforge/rng.hpp"

using sforge::DenoiserParams;
using sforge::DenoiserTrainConfig;
using sforge::DenoiserTrainItem;
using sforge::GuidanceHook;
using sforge::LatentSample;
using sforge::NoiseSchedule;
using sforge::Rng;
using sforge::SampleRequest;
using sforge::ad::Mat;

namespace {

Mat random_mat(int rows, int cols, Rng& rng) {
  Mat m(rows, cols);
  for (int c = 0; c < cols; ++c)
    for (int r = 0; r < rows; ++r) m(r, c) = rng.normal();
  return m;
}

}  // namespace

TEST_CASE("schedule reproduces hand-computed cumulative products") {
  const NoiseSchedule one = sforge::build_schedule(1, 0.1, 0.1);
  REQUIRE(one.K == 1);
  CHECK(one.beta[0] == doctest::Approx(0.1).epsilon(1e-15));
  CHECK(one.alpha_cum[0] == doctest::Approx(0.9).epsilon(1e-15));

  const NoiseSchedule two = sforge::build_schedule(2, 0.1, 0.2);
  REQUIRE(two.K == 2);
  CHECK(two.beta[0] == doctest::Approx(0.1).epsilon(1e-15));
  CHECK(two.beta[1] == doctest::Approx(0.2).epsilon(1e-15));
  CHECK(two.alpha_cum[0] == doctest::Approx(0.9).epsilon(1e-15));
  CHECK(two.alpha_cum[1] == doctest::Approx(0.72).epsilon(1e-15));
}

TEST_CASE("schedule alpha_cum decreases strictly inside (0, 1)") {
  const NoiseSchedule s = sforge::build_schedule(100, 1e-4, 5e-2);
  REQUIRE(static_cast<int>(s.alpha_cum.size()) == 100);
  for (int k = 0; k < 100; ++k) {
    CHECK(s.beta[static_cast<size_t>(k)] > 0.0);
    CHECK(s.beta[static_cast<size_t>(k)] < 1.0);
    CHECK(s.alpha_cum[static_cast<size_t>(k)] > 0.0);
    CHECK(s.alpha_cum[static_cast<size_t>(k)] < 1.0);
    if (k > 0)
      CHECK(s.alpha_cum[static_cast<size_t>(k)] < s.alpha_cum[static_cast<size_t>(k - 1)]);
  }
}

TEST_CASE("schedule rejects invalid bounds") {
  CHECK_THROWS_AS(sforge::build_schedule(0, 0.1, 0.2), sforge::ValidationError);
  CHECK_THROWS_AS(sforge::build_schedule(10, 0.0, 0.2), sforge::ValidationError);
  CHECK_THROWS_AS(sforge::build_schedule(10, 0.3, 0.2), sforge::ValidationError);
  CHECK_THROWS_AS(sforge::build_schedule(10, 0.1, 1.0), sforge::ValidationError);
}

TEST_CASE("ddim stride enumerates evenly spaced steps from the top") {
  const std::vector<int> want100 = {99, 94, 89, 84, 79, 74, 69, 64, 59, 54,
                                    49, 44, 39, 34, 29, 24, 19, 14, 9,  4};
  CHECK(sforge::ddim_stride(100, 20) == want100);
  CHECK(sforge::ddim_stride(8, 4) == std::vector<int>{7, 5, 3, 1});
  CHECK(sforge::ddim_stride(5, 5) == std::vector<int>{4, 3, 2, 1, 0});
  CHECK_THROWS_AS(sforge::ddim_stride(100, 7), sforge::ValidationError);
  CHECK_THROWS_AS(sforge::ddim_stride(100, 0), sforge::ValidationError);
  CHECK_THROWS_AS(sforge::ddim_stride(100, 101), sforge::ValidationError);
}

TEST_CASE("forward noise follows the closed form") {
  const NoiseSchedule s = sforge::build_schedule(10, 1e-3, 5e-2);
  Rng rng(5);
  const Mat z0 = random_mat(4, 3, rng);
  const Mat eps = random_mat(4, 3, rng);

  SUBCASE("zero signal") {
    const Mat got = sforge::forward_noise(Mat::Zero(4, 3), 6, eps, s);
    const Mat want = std::sqrt(1.0 - s.alpha_cum[6]) * eps;
    CHECK((got - want).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("no-noise limit") {
    const NoiseSchedule tiny = sforge::build_schedule(4, 1e-15, 1e-15);
    const Mat got = sforge::forward_noise(z0, 3, eps, tiny);
    CHECK((got - z0).cwiseAbs().maxCoeff() < 1e-6);
  }
  SUBCASE("hand formula") {
    const Mat got = sforge::forward_noise(z0, 2, eps, s);
    const Mat want = std::sqrt(s.alpha_cum[2]) * z0 + std::sqrt(1.0 - s.alpha_cum[2]) * eps;
    CHECK((got - want).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(sforge::forward_noise(z0, 10, eps, s), sforge::ValidationError);
    CHECK_THROWS_AS(sforge::forward_noise(z0, -1, eps, s), sforge::ValidationError);
    CHECK_THROWS_AS(sforge::forward_noise(z0, 1, Mat::Zero(2, 2), s), sforge::ValidationError);
  }
}

TEST_CASE("forward-noise variance matches 1 - alpha_cum over many draws") {
  const NoiseSchedule s = sforge::build_schedule(10, 1e-3, 5e-2);
  const int k = 7;
  Rng rng(99);
  const int n = 100000;
  double sum = 0.0, sum_sq = 0.0;
  const Mat z0 = Mat::Constant(1, 1, 0.37);
  for (int i = 0; i < n; ++i) {
    const Mat eps = random_mat(1, 1, rng);
    const double v = sforge::forward_noise(z0, k, eps, s)(0, 0);
    sum += v;
    sum_sq += v * v;
  }
  const double mean = sum / n;
  const double var = sum_sq / n - mean * mean;
  CHECK(var == doctest::Approx(1.0 - s.alpha_cum[k]).epsilon(0.02));
}

TEST_CASE("predict_clean inverts forward_noise for every step") {
  const NoiseSchedule s = sforge::build_schedule(100, 1e-4, 5e-2);
  Rng rng(21);
  const Mat z0 = random_mat(6, 2, rng);
  const Mat eps = random_mat(6, 2, rng);
  for (int k = 0; k < 100; ++k) {
    const Mat z_k = sforge::forward_noise(z0, k, eps, s);
    const Mat rec = sforge::predict_clean(z_k, eps, k, s);
    CHECK((rec - z0).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("predict_clean matches a hand-evaluated instance") {
  const NoiseSchedule s = sforge::build_schedule(5, 0.01, 0.05);
  Rng rng(31);
  const Mat z_k = random_mat(3, 2, rng);
  const Mat eps_hat = random_mat(3, 2, rng);
  const Mat got = sforge::predict_clean(z_k, eps_hat, 3, s);
  const double ac = s.alpha_cum[3];
  const Mat want = (z_k - std::sqrt(1.0 - ac) * eps_hat) / std::sqrt(ac);
  CHECK((got - want).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("ddim step tracks the exact trajectory and ends at predict_clean") {
  const NoiseSchedule s = sforge::build_schedule(100, 1e-4, 5e-2);
  Rng rng(41);
  const Mat z0 = random_mat(5, 3, rng);
  const Mat eps = random_mat(5, 3, rng);

  SUBCASE("exact eps moves along forward_noise marginals") {
    const Mat z99 = sforge::forward_noise(z0, 99, eps, s);
    const Mat z54 = sforge::ddim_step(z99, eps, 99, 54, s);
    const Mat want = sforge::forward_noise(z0, 54, eps, s);
    CHECK((z54 - want).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("two steps with exact eps reach z0") {
    const Mat z80 = sforge::forward_noise(z0, 80, eps, s);
    const Mat z40 = sforge::ddim_step(z80, eps, 80, 40, s);
    const Mat rec = sforge::ddim_step(z40, eps, 40, 0, s);
    CHECK((rec - z0).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("final step equals predict_clean bitwise") {
    const Mat z17 = sforge::forward_noise(z0, 17, eps, s);
    const Mat a = sforge::ddim_step(z17, eps, 17, 0, s);
    const Mat b = sforge::predict_clean(z17, eps, 17, s);
    CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("hand formula for an interior step") {
    const Mat z_k = random_mat(5, 3, rng);
    const Mat eps_hat = random_mat(5, 3, rng);
    const Mat clean = sforge::predict_clean(z_k, eps_hat, 60, s);
    const double acp = s.alpha_cum[30];
    const Mat want = std::sqrt(acp) * clean + std::sqrt(1.0 - acp) * eps_hat;
    const Mat got = sforge::ddim_step(z_k, eps_hat, 60, 30, s);
    CHECK((got - want).cwiseAbs().maxCoeff() < 1e-14);
  }
  SUBCASE("step index contract") {
    const Mat z = Mat::Zero(5, 3);
    CHECK_THROWS_AS(sforge::ddim_step(z, eps, 100, 50, s), sforge::ValidationError);
    CHECK_THROWS_AS(sforge::ddim_step(z, eps, 50, 50, s), sforge::ValidationError);
    CHECK_THROWS_AS(sforge::ddim_step(z, eps, 50, 60, s), sforge::ValidationError);
    CHECK_THROWS_AS(sforge::ddim_step(z, eps, 50, -1, s), sforge::ValidationError);
    CHECK_NOTHROW(sforge::ddim_step(z, eps, 0, 0, s));
  }
}

TEST_CASE("denoiser honors the shape contract and is deterministic") {
  const DenoiserParams p = DenoiserParams::init(6, 4, 11, 8, 16);
  Rng rng(3);
  const Mat z = random_mat(6, 3, rng);
  const Mat c = random_mat(4, 3, rng);
  const Mat a = sforge::denoiser_eval(p, z, c, 10);
  CHECK(a.rows() == 6);
  CHECK(a.cols() == 3);
  const Mat b = sforge::denoiser_eval(p, z, c, 10);
  CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
  // Different timestep embeddings give different predictions once trained;
  // at zero init the head nulls everything.
  CHECK(a.isZero(0.0));
  CHECK_THROWS_AS(sforge::denoiser_eval(p, z, random_mat(3, 3, rng), 10),
                  sforge::ValidationError);
}

TEST_CASE("denoiser supports unconditioned latents and single agents") {
  const DenoiserParams p = DenoiserParams::init(2, 0, 5, 4, 8);
  Rng rng(9);
  const Mat z1 = random_mat(2, 1, rng);
  const Mat out1 = sforge::denoiser_eval(p, z1, Mat(0, 1), 3);
  CHECK(out1.rows() == 2);
  CHECK(out1.cols() == 1);
  const Mat z4 = random_mat(2, 4, rng);
  const Mat out4 = sforge::denoiser_eval(p, z4, Mat(0, 4), 3);
  CHECK(out4.cols() == 4);
}

namespace {

std::vector<DenoiserTrainItem> cluster_corpus(int d_z, int n_agents, int count, uint64_t seed) {
  // Synthetic latent corpus: two tight clusters.
  std::vector<DenoiserTrainItem> data;
  Rng rng(seed);
  for (int i = 0; i < count; ++i) {
    DenoiserTrainItem item;
    item.mu = random_mat(d_z, n_agents, rng) * 0.05 +
              Mat::Constant(d_z, n_agents, i % 2 == 0 ? 1.5 : -1.5);
    item.log_std = Mat::Constant(d_z, n_agents, -1e3);
    item.c = Mat(0, n_agents);
    data.push_back(item);
  }
  return data;
}

}  // namespace

TEST_CASE("denoiser training starts near the analytic loss") {
  const int d_z = 4;
  const int n_agents = 2;
  DenoiserParams p = DenoiserParams::init(d_z, 0, 7, 8, 16);
  const NoiseSchedule sched = sforge::build_schedule(20, 1e-4, 5e-2);
  const auto data = cluster_corpus(d_z, n_agents, 48, 123);

  DenoiserTrainConfig cfg;
  cfg.epochs = 1;
  cfg.batch_size = 8;
  cfg.lr = 5e-4;
  cfg.seed = 3;
  const std::vector<double> curve = sforge::train_denoiser(p, data, sched, cfg);
  REQUIRE(static_cast<int>(curve.size()) == 1);

  // Untrained predictor outputs zero, so the first-epoch loss is the mean
  // squared norm of standard normal noise: d_z * n_agents.
  CHECK(curve[0] == doctest::Approx(d_z * n_agents).epsilon(0.2));
}

TEST_CASE("denoiser training loss descends over the first epochs") {
  const int d_z = 8;
  const int n_agents = 3;
  DenoiserParams p = DenoiserParams::init(d_z, 0, 7, 8, 24);
  const NoiseSchedule sched = sforge::build_schedule(20, 1e-4, 5e-2);
  const auto data = cluster_corpus(d_z, n_agents, 512, 123);

  DenoiserTrainConfig cfg;
  cfg.epochs = 10;
  cfg.batch_size = 16;
  cfg.lr = 1e-3;
  cfg.seed = 3;
  const std::vector<double> curve = sforge::train_denoiser(p, data, sched, cfg);
  REQUIRE(static_cast<int>(curve.size()) == 10);
  for (size_t i = 1; i < curve.size(); ++i) CHECK(curve[i] < curve[i - 1]);
}

TEST_CASE("denoiser training is bit-reproducible") {
  const NoiseSchedule sched = sforge::build_schedule(10, 1e-3, 2e-2);
  std::vector<DenoiserTrainItem> data;
  Rng rng(8);
  for (int i = 0; i < 6; ++i)
    data.push_back(DenoiserTrainItem{random_mat(3, 2, rng), Mat::Constant(3, 2, -2.0),
                                     random_mat(2, 2, rng)});
  DenoiserTrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 4;
  cfg.seed = 17;

  DenoiserParams a = DenoiserParams::init(3, 2, 1, 4, 8);
  DenoiserParams b = DenoiserParams::init(3, 2, 1, 4, 8);
  const std::vector<double> ca = sforge::train_denoiser(a, data, sched, cfg);
  const std::vector<double> cb = sforge::train_denoiser(b, data, sched, cfg);
  CHECK(ca == cb);
  const sforge::nn::NamedParams pa = a.named_params();
  const sforge::nn::NamedParams pb = b.named_params();
  REQUIRE(pa.size() == pb.size());
  for (size_t i = 0; i < pa.size(); ++i)
    CHECK((*pa[i].second - *pb[i].second).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("sampler is deterministic and produces distinct candidates") {
  const DenoiserParams p = DenoiserParams::init(3, 2, 2, 4, 8);
  const NoiseSchedule sched = sforge::build_schedule(20, 1e-4, 5e-2);
  Rng rng(6);
  const Mat c = random_mat(2, 2, rng);

  SampleRequest req;
  req.sample_count = 3;
  req.ddim_steps = 5;
  req.seed = 77;

  double secs = -1.0;
  const std::vector<LatentSample> a = sforge::sample_latents(req, p, sched, c, 2, nullptr, &secs);
  const std::vector<LatentSample> b = sforge::sample_latents(req, p, sched, c, 2);
  REQUIRE(a.size() == 3);
  CHECK(secs >= 0.0);
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].fallback_steps == 0);
    CHECK((a[i].z0 - b[i].z0).cwiseAbs().maxCoeff() == 0.0);
  }
  CHECK((a[0].z0 - a[1].z0).cwiseAbs().maxCoeff() > 0.0);
  CHECK((a[1].z0 - a[2].z0).cwiseAbs().maxCoeff() > 0.0);
  CHECK((a[0].z0 - a[2].z0).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("a zero-scale hook leaves sampling bitwise unchanged") {
  const DenoiserParams p = DenoiserParams::init(3, 0, 4, 4, 8);
  const NoiseSchedule sched = sforge::build_schedule(20, 1e-4, 5e-2);
  SampleRequest req;
  req.sample_count = 2;
  req.ddim_steps = 4;
  req.seed = 5;

  int calls = 0;
  GuidanceHook hook;
  hook.scale = 0.0;
  hook.gradient = [&calls](const Mat& z, int) {
    ++calls;
    return Mat::Ones(z.rows(), z.cols());
  };

  const auto guided = sforge::sample_latents(req, p, sched, Mat(0, 2), 2, &hook);
  const auto plain = sforge::sample_latents(req, p, sched, Mat(0, 2), 2);
  CHECK(calls == 0);
  for (size_t i = 0; i < guided.size(); ++i) {
    CHECK(guided[i].fallback_steps == 0);
    CHECK((guided[i].z0 - plain[i].z0).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("guided sampling visits the stride steps and perturbs the chain") {
  const DenoiserParams p = DenoiserParams::init(3, 0, 4, 4, 8);
  const NoiseSchedule sched = sforge::build_schedule(20, 1e-4, 5e-2);
  SampleRequest req;
  req.sample_count = 1;
  req.ddim_steps = 4;
  req.seed = 5;

  std::vector<int> seen;
  GuidanceHook hook;
  hook.scale = 0.5;
  hook.gradient = [&seen](const Mat& z, int k) {
    seen.push_back(k);
    return Mat::Constant(z.rows(), z.cols(), 0.01);
  };
  const auto guided = sforge::sample_latents(req, p, sched, Mat(0, 1), 1, &hook);
  CHECK(seen == sforge::ddim_stride(20, 4));
  CHECK(guided[0].fallback_steps == 0);

  const auto plain = sforge::sample_latents(req, p, sched, Mat(0, 1), 1);
  CHECK((guided[0].z0 - plain[0].z0).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("hook failures fall back to unguided steps") {
  const DenoiserParams p = DenoiserParams::init(3, 0, 4, 4, 8);
  const NoiseSchedule sched = sforge::build_schedule(20, 1e-4, 5e-2);
  SampleRequest req;
  req.sample_count = 1;
  req.ddim_steps = 4;
  req.seed = 9;

  SUBCASE("non-finite gradients") {
    GuidanceHook hook;
    hook.scale = 1.0;
    hook.gradient = [](const Mat& z, int) {
      return Mat::Constant(z.rows(), z.cols(), std::nan(""));
    };
    const auto guided = sforge::sample_latents(req, p, sched, Mat(0, 1), 1, &hook);
    const auto plain = sforge::sample_latents(req, p, sched, Mat(0, 1), 1);
    CHECK(guided[0].fallback_steps == 4);
    CHECK((guided[0].z0 - plain[0].z0).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("wrong shape") {
    GuidanceHook hook;
    hook.scale = 1.0;
    hook.gradient = [](const Mat&, int) { return Mat::Zero(1, 1); };
    const auto guided = sforge::sample_latents(req, p, sched, Mat(0, 1), 1, &hook);
    CHECK(guided[0].fallback_steps == 4);
  }
  SUBCASE("hook throwing a hard error propagates with the candidate index") {
    GuidanceHook hook;
    hook.scale = 1.0;
    hook.gradient = [](const Mat&, int) -> Mat {
      throw sforge::ConfigError("boom");
    };
    CHECK_THROWS_AS(sforge::sample_latents(req, p, sched, Mat(0, 1), 1, &hook),
                    sforge::GenerationError);
  }
}

TEST_CASE("sampler validates the request") {
  const DenoiserParams p = DenoiserParams::init(3, 2, 2, 4, 8);
  const NoiseSchedule sched = sforge::build_schedule(20, 1e-4, 5e-2);
  SampleRequest req;
  req.sample_count = 0;
  CHECK_THROWS_AS(sforge::sample_latents(req, p, sched, Mat::Zero(2, 2), 2),
                  sforge::ValidationError);
  req.sample_count = 1;
  req.ddim_steps = 3;  // does not divide 20
  CHECK_THROWS_AS(sforge::sample_latents(req, p, sched, Mat::Zero(2, 2), 2),
                  sforge::ValidationError);
  req.ddim_steps = 4;
  CHECK_THROWS_AS(sforge::sample_latents(req, p, sched, Mat::Zero(3, 2), 2),
                  sforge::ValidationError);
}
