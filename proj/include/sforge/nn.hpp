#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "sforge/autodiff.hpp"
#include "sforge/rng.hpp"

namespace sforge::nn {

using ad::Mat;
using ad::Tape;
using ad::Var;

// Dense layer parameters. `w` is out x in, `b` is out x 1.
struct Linear {
  Mat w;
  Mat b;

  static Linear xavier(int out, int in, Rng& rng);
  static Linear zeros(int out, int in);
  int out_dim() const { return static_cast<int>(w.rows()); }
  int in_dim() const { return static_cast<int>(w.cols()); }
};

// A Linear registered on a tape for a single forward pass. Applying it to an
// in x n matrix treats columns as independent samples; the bias broadcasts
// across columns.
struct LinearRef {
  Var w;
  Var b;
  Var operator()(Var x) const;
};

LinearRef bind(Tape& tape, const Linear& layer, bool trainable);

// Gated recurrent cell. Gates take the input and hidden contributions through
// separate dense layers (both carry a bias, matching the common convention):
//   r  = sigmoid(r_x(x) + r_h(h))
//   u  = sigmoid(u_x(x) + u_h(h))
//   n  = tanh(n_x(x) + r .* n_h(h))
//   h' = (1 - u) .* n + u .* h
struct Gru {
  Linear r_x, r_h, u_x, u_h, n_x, n_h;

  static Gru xavier(int hidden, int in, Rng& rng);
  int hidden_dim() const { return r_h.out_dim(); }
};

struct GruRef {
  LinearRef r_x, r_h, u_x, u_h, n_x, n_h;
  Var step(Var x, Var h) const;
};

GruRef bind(Tape& tape, const Gru& cell, bool trainable);

// Transformer-style sinusoidal embedding of an integer step index.
// dim must be even; returns a dim x 1 vector of interleaved (sin, cos) pairs.
Mat time_embedding(int step, int dim);

// Adam with bias correction. State is lazily shaped on the first step and
// must afterwards always be fed the same parameter list in the same order.
struct Adam {
  double lr = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int64_t t = 0;
  std::vector<Mat> m;
  std::vector<Mat> v;

  void step(const std::vector<Mat*>& params, const std::vector<Mat>& grads);
};

using NamedParams = std::vector<std::pair<std::string, Mat*>>;
using NamedParamsConst = std::vector<std::pair<std::string, const Mat*>>;

NamedParamsConst as_const_params(const NamedParams& params);

// Collect Linear / Gru parameters under a name prefix, in declaration order.
void collect(NamedParams& out, const std::string& prefix, Linear& layer);
void collect(NamedParams& out, const std::string& prefix, Gru& cell);

// Checkpoint framing shared by all model files:
//   8-byte magic, u64 little-endian header length, JSON header, then the raw
//   little-endian float64 array payloads in header-declared order
//   (column-major within each array).
// save_checkpoint augments `header` with the array directory and writes
// atomically. load_checkpoint verifies magic and the (name, rows, cols)
// directory against `params` in order, fills the matrices, and returns the
// header for caller-side architecture validation.
void save_checkpoint(const std::string& path, const std::string& magic, std::string header_json,
                     const NamedParamsConst& params);
std::string load_checkpoint(const std::string& path, const std::string& magic,
                            const NamedParams& params);

// Header-only read, so callers can size a model from stored hyperparameters
// before asking load_checkpoint to fill it.
std::string read_checkpoint_header(const std::string& path, const std::string& magic);

}  // namespace sforge::nn
