#include "sforge/vae.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <utility>

#include "sforge/errors.hpp"
#include "sforge/kinematics.hpp"
#include "sforge/util.hpp"

namespace sforge {

namespace {

using ad::Tape;
using ad::Var;
using ad::vconcat;
using nn::GruRef;
using nn::LinearRef;

// 5x3 probe grid in the agent frame (forward x lateral), row-major over
// (forward, lateral). Shared by the encoder features and the decoder input.
constexpr int kProbeCount = 15;
constexpr double kForward[5] = {0.0, 5.0, 10.0, 15.0, 20.0};
constexpr double kLateral[3] = {-3.0, 0.0, 3.0};

// Fixed feature scaling keeping encoder inputs within the tanh linear range.
constexpr double kPosScale = 0.1;
constexpr double kSpeedScale = 0.1;
constexpr double kSdfScale = 0.1;

constexpr double kAccelBound = 8.0;   // [m/s^2]
constexpr double kYawBound = 1.0;     // [rad/s]
constexpr double kLogStdBound = 4.0;  // smooth tanh bound on the log-std head

double probe_forward(int k) { return kForward[k / 3]; }
double probe_lateral(int k) { return kLateral[k % 3]; }

void check_scenario(const Scenario& sc, const VaeParams& p, bool need_future) {
  if (sc.t_hist != p.t_hist || sc.t_future != p.t_future)
    throw ValidationError("vae: scenario horizon does not match the model");
  if (!(sc.dt > 0.0)) throw ValidationError("vae: scenario dt must be positive");
  if (sc.map.rows <= 0 || sc.map.cols <= 0) throw ValidationError("vae: scenario has no map");
  int egos = 0;
  for (const Agent& a : sc.agents) {
    if (a.role == Role::kEgo) ++egos;
    if (a.past.size() != static_cast<size_t>(sc.t_hist) + 1)
      throw ValidationError("vae: agent past must cover t_hist + 1 states");
    if (need_future &&
        (!a.future || a.future->size() != static_cast<size_t>(sc.t_future)))
      throw ValidationError("vae: agent future must cover t_future states");
  }
  if (egos != 1) throw ValidationError("vae: scenario must have exactly one ego");
  if (sc.agents.size() < 2) throw ValidationError("vae: scenario needs a non-ego agent");
}

// Encoder column order: non-ego agents ascending by id, then the ego. Heads
// read the non-ego columns as one contiguous block.
std::vector<int> column_order(const Scenario& sc) {
  std::vector<int> cols = sc.non_ego_indices();
  for (size_t i = 0; i < sc.agents.size(); ++i)
    if (sc.agents[i].role == Role::kEgo) cols.push_back(static_cast<int>(i));
  return cols;
}

void write_state_features(const AgentState& s, double ego_x, double ego_y, Mat& f, int r, int c) {
  f(r + 0, c) = (s.x - ego_x) * kPosScale;
  f(r + 1, c) = (s.y - ego_y) * kPosScale;
  f(r + 2, c) = std::cos(s.heading);
  f(r + 3, c) = std::sin(s.heading);
  f(r + 4, c) = s.speed * kSpeedScale;
}

void write_probe_features(const AgentState& s, const SceneMap& map, Mat& f, int r, int c) {
  const double ch = std::cos(s.heading);
  const double sh = std::sin(s.heading);
  for (int k = 0; k < kProbeCount; ++k) {
    const double fwd = probe_forward(k);
    const double lat = probe_lateral(k);
    const double px = s.x + fwd * ch - lat * sh;
    const double py = s.y + fwd * sh + lat * ch;
    f(r + k, c) = map.sdf_query(px, py) * kSdfScale;
  }
}

Mat node_features(const Scenario& sc, const std::vector<int>& cols, const VaeParams& p,
                  bool with_future) {
  const AgentState& ego_now = sc.ego().current();
  Mat f = Mat::Zero(p.node_feature_dim(with_future), static_cast<Eigen::Index>(cols.size()));
  for (size_t c = 0; c < cols.size(); ++c) {
    const Agent& a = sc.agents[static_cast<size_t>(cols[c])];
    const int cc = static_cast<int>(c);
    int r = 0;
    for (const AgentState& s : a.past) {
      write_state_features(s, ego_now.x, ego_now.y, f, r, cc);
      r += 5;
    }
    f(r++, cc) = a.role == Role::kEgo ? 1.0 : 0.0;
    write_probe_features(a.current(), sc.map, f, r, cc);
    r += kProbeCount;
    if (with_future)
      for (const AgentState& s : *a.future) {
        write_state_features(s, ego_now.x, ego_now.y, f, r, cc);
        r += 5;
      }
  }
  return f;
}

// Relative-pose edge features into target column i, one column per source.
Mat edge_features(const Scenario& sc, const std::vector<int>& cols, size_t target) {
  const AgentState& ti = sc.agents[static_cast<size_t>(cols[target])].current();
  Mat e(5, static_cast<Eigen::Index>(cols.size()));
  for (size_t j = 0; j < cols.size(); ++j) {
    const AgentState& sj = sc.agents[static_cast<size_t>(cols[j])].current();
    e(0, static_cast<Eigen::Index>(j)) = (sj.x - ti.x) * kPosScale;
    e(1, static_cast<Eigen::Index>(j)) = (sj.y - ti.y) * kPosScale;
    e(2, static_cast<Eigen::Index>(j)) = std::cos(sj.heading - ti.heading);
    e(3, static_cast<Eigen::Index>(j)) = std::sin(sj.heading - ti.heading);
    e(4, static_cast<Eigen::Index>(j)) = sj.speed * kSpeedScale;
  }
  return e;
}

struct TrunkRefs {
  LinearRef emb1, emb2, msg, upd;
};

TrunkRefs bind_trunk(Tape& tape, const nn::Linear& emb1, const nn::Linear& emb2,
                     const nn::Linear& msg, const nn::Linear& upd, bool trainable) {
  return TrunkRefs{nn::bind(tape, emb1, trainable), nn::bind(tape, emb2, trainable),
                   nn::bind(tape, msg, trainable), nn::bind(tape, upd, trainable)};
}

// Node MLP plus mp_rounds shared-weight message rounds; returns the hidden
// node matrix over all columns.
Var encode_trunk(Tape& tape, const Scenario& sc, const std::vector<int>& cols,
                 const VaeParams& p, const TrunkRefs& refs, bool with_future) {
  const int n = static_cast<int>(cols.size());
  Var h = tanh(refs.emb2(tanh(refs.emb1(tape.constant(node_features(sc, cols, p, with_future))))));

  std::vector<Var> edges;
  edges.reserve(cols.size());
  for (size_t i = 0; i < cols.size(); ++i)
    edges.push_back(tape.constant(edge_features(sc, cols, i)));

  for (int round = 0; round < p.mp_rounds; ++round) {
    Var m{};
    if (n == 1) {
      m = tape.constant(Mat::Zero(p.hidden, 1));
    } else {
      bool first = true;
      for (int i = 0; i < n; ++i) {
        // Mean message into i over the other columns.
        const Var msgs = tanh(refs.msg(vconcat(h, edges[static_cast<size_t>(i)])));
        const Var mi =
            (row_sum(msgs) - block(msgs, 0, i, p.hidden, 1)) * (1.0 / (n - 1));
        Mat onehot = Mat::Zero(1, n);
        onehot(0, i) = 1.0;
        const Var placed = matmul(mi, tape.constant(onehot));
        m = first ? placed : m + placed;
        first = false;
      }
    }
    h = tanh(refs.upd(vconcat(h, m)));
  }
  return h;
}

struct PosteriorVars {
  Var mean;
  Var log_std;
};

PosteriorVars posterior_on_tape(Tape& tape, const Scenario& sc, const std::vector<int>& cols,
                                const VaeParams& p, const TrunkRefs& trunk,
                                const LinearRef& mean_head, const LinearRef& logstd_head,
                                int n_non_ego) {
  const Var h = encode_trunk(tape, sc, cols, p, trunk, /*with_future=*/true);
  const Var h_ne = block(h, 0, 0, p.hidden, n_non_ego);
  PosteriorVars out;
  out.mean = mean_head(h_ne);
  out.log_std = tanh(logstd_head(h_ne) * (1.0 / kLogStdBound)) * kLogStdBound;
  return out;
}

struct DecoderRefs {
  LinearRef h0;
  GruRef gru;
  LinearRef accel, yaw;
};

DecoderRefs bind_decoder(Tape& tape, const VaeParams& p, bool trainable) {
  return DecoderRefs{nn::bind(tape, p.dec_h0, trainable), nn::bind(tape, p.dec_gru, trainable),
                     nn::bind(tape, p.dec_accel, trainable), nn::bind(tape, p.dec_yaw, trainable)};
}

// Batched GRU rollout over the future horizon; per-step 1 x n position rows
// stay on the tape, action values are extracted for kinematic replay.
struct RolloutRows {
  std::vector<Var> x, y;                          // one row per future step
  std::vector<std::vector<AgentAction>> actions;  // [agent][step]
};

RolloutRows decode_rows(Tape& tape, Var z, const Scenario& sc, const std::vector<int>& ne_idx,
                        const VaeParams& /*params*/, const DecoderRefs& dec) {
  const int n = static_cast<int>(ne_idx.size());
  const double dt = sc.dt;
  const GridView grid = sc.map.grid_view();
  const AgentState& ego_now = sc.ego().current();

  Mat x0(1, n), y0(1, n), th0(1, n), v0(1, n);
  for (int i = 0; i < n; ++i) {
    const AgentState& s = sc.agents[static_cast<size_t>(ne_idx[static_cast<size_t>(i)])].current();
    x0(0, i) = s.x;
    y0(0, i) = s.y;
    th0(0, i) = s.heading;
    v0(0, i) = s.speed;
  }
  Var x = tape.constant(x0);
  Var y = tape.constant(y0);
  Var th = tape.constant(th0);
  Var v = tape.constant(v0);
  Var c = cos(th);
  Var s = sin(th);

  Mat fwd(kProbeCount, 1), lat(kProbeCount, 1);
  for (int k = 0; k < kProbeCount; ++k) {
    fwd(k, 0) = probe_forward(k);
    lat(k, 0) = probe_lateral(k);
  }
  const Var fv = tape.constant(fwd);
  const Var lv = tape.constant(lat);
  const Var ones15 = tape.constant(Mat::Ones(kProbeCount, 1));

  Var h = tanh(dec.h0(z));
  RolloutRows out;
  out.actions.assign(static_cast<size_t>(n), {});
  for (int t = 0; t < sc.t_future; ++t) {
    const Var dx = tape.affine(x, kPosScale, -ego_now.x * kPosScale);
    const Var dy = tape.affine(y, kPosScale, -ego_now.y * kPosScale);
    const Var state5 = vconcat({dx, dy, c, s, v * kSpeedScale});
    const Var px = matmul(ones15, x) + matmul(fv, c) - matmul(lv, s);
    const Var py = matmul(ones15, y) + matmul(fv, s) + matmul(lv, c);
    const Var probes = tape.grid_sample(grid, px, py) * kSdfScale;
    h = dec.gru.step(vconcat({state5, probes, z}), h);
    const Var accel = tanh(dec.accel(h)) * kAccelBound;
    const Var yaw = tanh(dec.yaw(h)) * kYawBound;

    // Same association as the kinematic step; heading stays unwrapped on the
    // tape (trig is periodic, gradients are unaffected).
    x = x + (v * c) * dt;
    y = y + (v * s) * dt;
    th = th + yaw * dt;
    v = relu(v + accel * dt);
    c = cos(th);
    s = sin(th);
    out.x.push_back(x);
    out.y.push_back(y);

    const Mat& av = tape.value(accel);
    const Mat& wv = tape.value(yaw);
    for (int i = 0; i < n; ++i)
      out.actions[static_cast<size_t>(i)].push_back(AgentAction{av(0, i), wv(0, i)});
  }
  return out;
}

void check_latent(const Mat& z, const VaeParams& p, size_t n_non_ego) {
  if (z.rows() != p.d_z || z.cols() != static_cast<Eigen::Index>(n_non_ego))
    throw ValidationError("vae: latent must be d_z x (non-ego agent count)");
  if (!z.allFinite()) throw ValidationError("vae: non-finite latent");
}

}  // namespace

VaeParams VaeParams::init(uint64_t seed, int d_z, int d_c, int hidden, int mp_rounds, int t_hist,
                          int t_future) {
  if (d_z <= 0 || d_c <= 0 || hidden <= 0 || mp_rounds <= 0 || t_hist < 0 || t_future <= 0)
    throw ConfigError("vae: invalid architecture dimensions");
  VaeParams p;
  p.d_z = d_z;
  p.d_c = d_c;
  p.hidden = hidden;
  p.mp_rounds = mp_rounds;
  p.t_hist = t_hist;
  p.t_future = t_future;
  {
    Rng rng(mix_seed(seed, 0x7072696f72));  // prior stream
    p.pri_emb1 = nn::Linear::xavier(hidden, p.node_feature_dim(false), rng);
    p.pri_emb2 = nn::Linear::xavier(hidden, hidden, rng);
    p.pri_msg = nn::Linear::xavier(hidden, hidden + 5, rng);
    p.pri_upd = nn::Linear::xavier(hidden, 2 * hidden, rng);
    p.pri_head = nn::Linear::xavier(d_c, hidden, rng);
  }
  {
    Rng rng(mix_seed(seed, 0x706f7374));  // posterior stream
    p.post_emb1 = nn::Linear::xavier(hidden, p.node_feature_dim(true), rng);
    p.post_emb2 = nn::Linear::xavier(hidden, hidden, rng);
    p.post_msg = nn::Linear::xavier(hidden, hidden + 5, rng);
    p.post_upd = nn::Linear::xavier(hidden, 2 * hidden, rng);
    p.post_mean = nn::Linear::xavier(d_z, hidden, rng);
    p.post_logstd = nn::Linear::xavier(d_z, hidden, rng);
  }
  {
    Rng rng(mix_seed(seed, 0x646563));  // decoder stream
    p.dec_h0 = nn::Linear::xavier(hidden, d_z, rng);
    p.dec_gru = nn::Gru::xavier(hidden, p.decoder_input_dim(), rng);
    // Zero action heads: the initial decode is a constant-velocity rollout.
    p.dec_accel = nn::Linear::zeros(1, hidden);
    p.dec_yaw = nn::Linear::zeros(1, hidden);
  }
  return p;
}

int VaeParams::node_feature_dim(bool with_future) const {
  return 5 * (t_hist + 1) + 1 + kProbeCount + (with_future ? 5 * t_future : 0);
}

int VaeParams::decoder_input_dim() const { return 5 + kProbeCount + d_z; }

nn::NamedParams VaeParams::named_params() {
  nn::NamedParams out;
  nn::collect(out, "pri_emb1", pri_emb1);
  nn::collect(out, "pri_emb2", pri_emb2);
  nn::collect(out, "pri_msg", pri_msg);
  nn::collect(out, "pri_upd", pri_upd);
  nn::collect(out, "pri_head", pri_head);
  nn::collect(out, "post_emb1", post_emb1);
  nn::collect(out, "post_emb2", post_emb2);
  nn::collect(out, "post_msg", post_msg);
  nn::collect(out, "post_upd", post_upd);
  nn::collect(out, "post_mean", post_mean);
  nn::collect(out, "post_logstd", post_logstd);
  nn::collect(out, "dec_h0", dec_h0);
  nn::collect(out, "dec_gru", dec_gru);
  nn::collect(out, "dec_accel", dec_accel);
  nn::collect(out, "dec_yaw", dec_yaw);
  return out;
}

nn::NamedParams VaeParams::trainable_params() {
  nn::NamedParams out;
  nn::collect(out, "post_emb1", post_emb1);
  nn::collect(out, "post_emb2", post_emb2);
  nn::collect(out, "post_msg", post_msg);
  nn::collect(out, "post_upd", post_upd);
  nn::collect(out, "post_mean", post_mean);
  nn::collect(out, "post_logstd", post_logstd);
  nn::collect(out, "dec_h0", dec_h0);
  nn::collect(out, "dec_gru", dec_gru);
  nn::collect(out, "dec_accel", dec_accel);
  nn::collect(out, "dec_yaw", dec_yaw);
  return out;
}

uint64_t VaeParams::arch_hash() const {
  return fnv1a64("vae:v1:d_z=" + std::to_string(d_z) + ":d_c=" + std::to_string(d_c) +
                 ":hidden=" + std::to_string(hidden) + ":mp_rounds=" + std::to_string(mp_rounds) +
                 ":t_hist=" + std::to_string(t_hist) + ":t_future=" + std::to_string(t_future));
}

Mat encode_prior(const Scenario& scenario, const VaeParams& params) {
  check_scenario(scenario, params, /*need_future=*/false);
  const std::vector<int> cols = column_order(scenario);
  const int n_ne = static_cast<int>(cols.size()) - 1;
  Tape tape;
  const TrunkRefs trunk = bind_trunk(tape, params.pri_emb1, params.pri_emb2, params.pri_msg,
                                     params.pri_upd, /*trainable=*/false);
  const Var h = encode_trunk(tape, scenario, cols, params, trunk, /*with_future=*/false);
  const LinearRef head = nn::bind(tape, params.pri_head, /*trainable=*/false);
  return tape.value(head(block(h, 0, 0, params.hidden, n_ne)));
}

GaussianPosterior encode_posterior(const Scenario& scenario, const VaeParams& params) {
  check_scenario(scenario, params, /*need_future=*/true);
  const std::vector<int> cols = column_order(scenario);
  const int n_ne = static_cast<int>(cols.size()) - 1;
  Tape tape;
  const TrunkRefs trunk = bind_trunk(tape, params.post_emb1, params.post_emb2, params.post_msg,
                                     params.post_upd, /*trainable=*/false);
  const LinearRef mean_head = nn::bind(tape, params.post_mean, false);
  const LinearRef logstd_head = nn::bind(tape, params.post_logstd, false);
  const PosteriorVars post =
      posterior_on_tape(tape, scenario, cols, params, trunk, mean_head, logstd_head, n_ne);
  return GaussianPosterior{tape.value(post.mean), tape.value(post.log_std)};
}

Mat sample_posterior(const GaussianPosterior& posterior, Rng& rng) {
  if (posterior.mean.rows() != posterior.log_std.rows() ||
      posterior.mean.cols() != posterior.log_std.cols())
    throw ValidationError("sample_posterior: mean / log_std shape mismatch");
  Mat eps(posterior.mean.rows(), posterior.mean.cols());
  for (Eigen::Index c = 0; c < eps.cols(); ++c)
    for (Eigen::Index r = 0; r < eps.rows(); ++r) eps(r, c) = rng.normal();
  return posterior.mean + (posterior.log_std.array().exp() * eps.array()).matrix();
}

double kl_divergence(const Mat& mean, const Mat& log_std) {
  if (mean.rows() != log_std.rows() || mean.cols() != log_std.cols())
    throw ValidationError("kl_divergence: shape mismatch");
  return 0.5 * ((2.0 * log_std.array()).exp() + mean.array().square() - 1.0 -
                2.0 * log_std.array())
                   .sum();
}

DecodedTape decode_on_tape(ad::Tape& tape, const Mat& z, const Scenario& scenario,
                           const VaeParams& params, bool z_requires_grad, bool params_trainable) {
  check_scenario(scenario, params, /*need_future=*/false);
  const std::vector<int> ne_idx = scenario.non_ego_indices();
  check_latent(z, params, ne_idx.size());

  DecodedTape out;
  out.z = tape.input(z, z_requires_grad);
  const DecoderRefs dec = bind_decoder(tape, params, params_trainable);
  RolloutRows rows = decode_rows(tape, out.z, scenario, ne_idx, params, dec);

  out.ids.reserve(ne_idx.size());
  for (const int idx : ne_idx) out.ids.push_back(scenario.agents[static_cast<size_t>(idx)].id);
  out.actions = std::move(rows.actions);
  out.pos.resize(ne_idx.size());
  for (size_t i = 0; i < ne_idx.size(); ++i) {
    out.pos[i].reserve(rows.x.size());
    for (size_t t = 0; t < rows.x.size(); ++t)
      out.pos[i].push_back({block(rows.x[t], 0, static_cast<int>(i), 1, 1),
                            block(rows.y[t], 0, static_cast<int>(i), 1, 1)});
  }
  return out;
}

std::vector<AgentTrack> decode(const Mat& z, const Scenario& scenario, const VaeParams& params) {
  check_scenario(scenario, params, /*need_future=*/false);
  const std::vector<int> ne_idx = scenario.non_ego_indices();
  check_latent(z, params, ne_idx.size());

  Tape tape;
  const Var zv = tape.constant(z);
  const DecoderRefs dec = bind_decoder(tape, params, /*trainable=*/false);
  const RolloutRows rows = decode_rows(tape, zv, scenario, ne_idx, params, dec);

  std::vector<AgentTrack> tracks;
  tracks.reserve(ne_idx.size());
  for (size_t i = 0; i < ne_idx.size(); ++i) {
    // Exact kinematic replay of the extracted actions.
    AgentTrack track =
        rollout(scenario.agents[static_cast<size_t>(ne_idx[i])].current(), rows.actions[i],
                scenario.dt);
    track.erase(track.begin());
    tracks.push_back(std::move(track));
  }
  return tracks;
}

namespace {

struct TrainRefs {
  TrunkRefs trunk;
  LinearRef mean_head, logstd_head;
  DecoderRefs dec;
};

// Var handles aligned with VaeParams::trainable_params() order.
std::vector<Var> ref_slots(const TrainRefs& r) {
  std::vector<Var> v;
  const auto lin = [&v](const LinearRef& l) {
    v.push_back(l.w);
    v.push_back(l.b);
  };
  lin(r.trunk.emb1);
  lin(r.trunk.emb2);
  lin(r.trunk.msg);
  lin(r.trunk.upd);
  lin(r.mean_head);
  lin(r.logstd_head);
  lin(r.dec.h0);
  lin(r.dec.gru.r_x);
  lin(r.dec.gru.r_h);
  lin(r.dec.gru.u_x);
  lin(r.dec.gru.u_h);
  lin(r.dec.gru.n_x);
  lin(r.dec.gru.n_h);
  lin(r.dec.accel);
  lin(r.dec.yaw);
  return v;
}

struct ItemResult {
  double loss = 0.0;
  std::vector<Mat> grads;
};

ItemResult train_item(const Scenario& sc, const VaeParams& p, double beta, uint64_t item_seed) {
  const std::vector<int> cols = column_order(sc);
  const std::vector<int> ne_idx = sc.non_ego_indices();
  const int n = static_cast<int>(ne_idx.size());

  Tape tape;
  TrainRefs refs{bind_trunk(tape, p.post_emb1, p.post_emb2, p.post_msg, p.post_upd, true),
                 nn::bind(tape, p.post_mean, true), nn::bind(tape, p.post_logstd, true),
                 bind_decoder(tape, p, true)};
  const PosteriorVars post =
      posterior_on_tape(tape, sc, cols, p, refs.trunk, refs.mean_head, refs.logstd_head, n);

  Rng rng(item_seed);
  Mat eps(p.d_z, n);
  for (int c = 0; c < n; ++c)
    for (int r = 0; r < p.d_z; ++r) eps(r, c) = rng.normal();
  const Var z = post.mean + exp(post.log_std) * tape.constant(eps);

  const RolloutRows rows = decode_rows(tape, z, sc, ne_idx, p, refs.dec);

  // Mean squared position error over (agent, step).
  Var se{};
  for (int t = 0; t < sc.t_future; ++t) {
    Mat gx(1, n), gy(1, n);
    for (int i = 0; i < n; ++i) {
      const AgentState& s =
          (*sc.agents[static_cast<size_t>(ne_idx[static_cast<size_t>(i)])].future)[static_cast<size_t>(t)];
      gx(0, i) = s.x;
      gy(0, i) = s.y;
    }
    const Var ex = rows.x[static_cast<size_t>(t)] - tape.constant(gx);
    const Var ey = rows.y[static_cast<size_t>(t)] - tape.constant(gy);
    const Var step_err = sum(ex * ex + ey * ey);
    se = t == 0 ? step_err : se + step_err;
  }
  const Var recon = se * (1.0 / (n * sc.t_future));

  // Per-dimension averaged KL to the standard normal prior.
  const Var ls2 = post.log_std * 2.0;
  const Var kl = sum(exp(ls2) + post.mean * post.mean - ls2 - 1.0) * (0.5 / (p.d_z * n));

  const Var loss = recon + kl * beta;
  tape.backward(loss);

  ItemResult out;
  out.loss = tape.scalar_value(loss);
  for (const Var slot : ref_slots(refs)) out.grads.push_back(tape.grad(slot));
  return out;
}

}  // namespace

VaeTrainStats train_vae(VaeParams& params, const std::vector<Scenario>& train_set,
                        const std::vector<Scenario>& val_set, const VaeTrainConfig& cfg,
                        const std::function<void(int, double, double)>& on_epoch) {
  if (cfg.epochs <= 0 || cfg.batch_size <= 0 || !(cfg.lr > 0.0))
    throw ConfigError("train_vae: epochs, batch_size, and lr must be positive");
  if (!(cfg.beta_kl >= 0.0) || !(cfg.warmup_frac >= 0.0) || cfg.warmup_frac > 1.0)
    throw ConfigError("train_vae: invalid beta_kl / warmup_frac");
  if (train_set.empty()) throw ValidationError("train_vae: empty training set");
  for (const Scenario& sc : train_set) check_scenario(sc, params, /*need_future=*/true);
  for (const Scenario& sc : val_set) check_scenario(sc, params, /*need_future=*/true);

  const nn::NamedParams trainable = params.trainable_params();
  std::vector<Mat*> slots;
  slots.reserve(trainable.size());
  for (const auto& [name, mat] : trainable) slots.push_back(mat);

  nn::Adam opt;
  opt.lr = cfg.lr;

  const int n_items = static_cast<int>(train_set.size());
  const int warm_epochs = std::max(1, static_cast<int>(std::lround(cfg.warmup_frac * cfg.epochs)));

  VaeTrainStats stats;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<Mat> snapshot;
    snapshot.reserve(slots.size());
    for (const Mat* m : slots) snapshot.push_back(*m);

    const double beta = cfg.beta_kl * std::min(1.0, static_cast<double>(epoch + 1) / warm_epochs);

    std::vector<int> perm(static_cast<size_t>(n_items));
    std::iota(perm.begin(), perm.end(), 0);
    Rng shuffle_rng(mix_seed(cfg.seed, 0x7065726d, static_cast<uint64_t>(epoch)));
    for (int i = n_items - 1; i > 0; --i)
      std::swap(perm[static_cast<size_t>(i)],
                perm[static_cast<size_t>(shuffle_rng.uniform_int(0, i))]);

    double loss_sum = 0.0;
    for (int start = 0; start < n_items; start += cfg.batch_size) {
      const int bsize = std::min(cfg.batch_size, n_items - start);
      std::vector<ItemResult> results(static_cast<size_t>(bsize));
      parallel_for(bsize, [&](int k) {
        const int oi = perm[static_cast<size_t>(start + k)];
        // Noise streams key on the original item index, so batching and
        // worker count never change the draw.
        results[static_cast<size_t>(k)] =
            train_item(train_set[static_cast<size_t>(oi)], params, beta,
                       mix_seed(cfg.seed, static_cast<uint64_t>(epoch), static_cast<uint64_t>(oi)));
      });

      std::vector<Mat> grads = std::move(results[0].grads);
      loss_sum += results[0].loss;
      for (int k = 1; k < bsize; ++k) {
        for (size_t g = 0; g < grads.size(); ++g) grads[g] += results[static_cast<size_t>(k)].grads[g];
        loss_sum += results[static_cast<size_t>(k)].loss;
      }
      const double inv_b = 1.0 / bsize;
      for (Mat& g : grads) g *= inv_b;

      if (cfg.grad_clip > 0.0) {
        double sq = 0.0;
        for (const Mat& g : grads) sq += g.squaredNorm();
        const double norm = std::sqrt(sq);
        if (norm > cfg.grad_clip) {
          const double scale = cfg.grad_clip / norm;
          for (Mat& g : grads) g *= scale;
        }
      }
      opt.step(slots, grads);
    }

    const double epoch_loss = loss_sum / n_items;
    stats.train_loss.push_back(epoch_loss);
    stats.epochs_run = epoch + 1;

    bool finite = std::isfinite(epoch_loss);
    for (const Mat* m : slots)
      if (!m->allFinite()) finite = false;
    if (!finite) {
      for (size_t i = 0; i < slots.size(); ++i) *slots[i] = snapshot[i];
      throw TrainingError("train_vae: non-finite loss at epoch " + std::to_string(epoch) +
                          "; parameters rolled back");
    }

    double ade = -1.0;
    const bool eval_now = !val_set.empty() && cfg.target_ade > 0.0 && cfg.eval_every > 0 &&
                          ((epoch + 1) % cfg.eval_every == 0 || epoch + 1 == cfg.epochs);
    if (eval_now) {
      ade = reconstruction_ade(params, val_set);
      stats.val_ade.push_back(ade);
    }
    if (on_epoch) on_epoch(epoch, epoch_loss, ade);
    if (eval_now && ade < cfg.target_ade) break;
  }
  return stats;
}

double reconstruction_ade(const VaeParams& params, const std::vector<Scenario>& scenes) {
  if (scenes.empty()) throw ValidationError("reconstruction_ade: empty scene list");
  std::vector<std::pair<double, long>> acc(scenes.size(), {0.0, 0});
  parallel_for(static_cast<int>(scenes.size()), [&](int i) {
    const Scenario& sc = scenes[static_cast<size_t>(i)];
    check_scenario(sc, params, /*need_future=*/true);
    const GaussianPosterior post = encode_posterior(sc, params);
    const std::vector<AgentTrack> tracks = decode(post.mean, sc, params);
    const std::vector<int> ne_idx = sc.non_ego_indices();
    double s = 0.0;
    long count = 0;
    for (size_t a = 0; a < ne_idx.size(); ++a) {
      const AgentTrack& gt = *sc.agents[static_cast<size_t>(ne_idx[a])].future;
      for (size_t t = 0; t < gt.size(); ++t) {
        s += std::hypot(tracks[a][t].x - gt[t].x, tracks[a][t].y - gt[t].y);
        ++count;
      }
    }
    acc[static_cast<size_t>(i)] = {s, count};
  });
  double total = 0.0;
  long count = 0;
  for (const auto& [s, c] : acc) {
    total += s;
    count += c;
  }
  return total / static_cast<double>(count);
}

}  // namespace sforge
