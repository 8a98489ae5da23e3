#include "sforge/nn.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "sforge/errors.hpp"
#include "sforge/util.hpp"

namespace sforge::nn {

using json = nlohmann::json;

Linear Linear::xavier(int out, int in, Rng& rng) {
  if (out < 1 || in < 1) throw ValidationError("Linear: dimensions must be positive");
  Linear l;
  l.w.resize(out, in);
  const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
  for (int i = 0; i < out; ++i)
    for (int j = 0; j < in; ++j) l.w(i, j) = rng.uniform(-limit, limit);
  l.b = Mat::Zero(out, 1);
  return l;
}

Linear Linear::zeros(int out, int in) {
  if (out < 1 || in < 1) throw ValidationError("Linear: dimensions must be positive");
  Linear l;
  l.w = Mat::Zero(out, in);
  l.b = Mat::Zero(out, 1);
  return l;
}

Var LinearRef::operator()(Var x) const {
  Tape& t = *x.tape;
  const auto cols = t.value(x).cols();
  const Var y = matmul(w, x);
  if (cols == 1) return y + b;
  // Broadcast the bias across sample columns via an outer product with a
  // constant ones row; its backward reduces the output adjoint by row sums.
  const Var ones = t.constant(Mat::Ones(1, cols));
  return y + matmul(b, ones);
}

LinearRef bind(Tape& tape, const Linear& layer, bool trainable) {
  LinearRef r;
  r.w = trainable ? tape.input(layer.w) : tape.constant(layer.w);
  r.b = trainable ? tape.input(layer.b) : tape.constant(layer.b);
  return r;
}

Gru Gru::xavier(int hidden, int in, Rng& rng) {
  Gru g;
  g.r_x = Linear::xavier(hidden, in, rng);
  g.r_h = Linear::xavier(hidden, hidden, rng);
  g.u_x = Linear::xavier(hidden, in, rng);
  g.u_h = Linear::xavier(hidden, hidden, rng);
  g.n_x = Linear::xavier(hidden, in, rng);
  g.n_h = Linear::xavier(hidden, hidden, rng);
  return g;
}

Var GruRef::step(Var x, Var h) const {
  const Var r = sigmoid(r_x(x) + r_h(h));
  const Var u = sigmoid(u_x(x) + u_h(h));
  const Var n = tanh(n_x(x) + r * n_h(h));
  return (n - u * n) + u * h;
}

GruRef bind(Tape& tape, const Gru& cell, bool trainable) {
  GruRef r;
  r.r_x = bind(tape, cell.r_x, trainable);
  r.r_h = bind(tape, cell.r_h, trainable);
  r.u_x = bind(tape, cell.u_x, trainable);
  r.u_h = bind(tape, cell.u_h, trainable);
  r.n_x = bind(tape, cell.n_x, trainable);
  r.n_h = bind(tape, cell.n_h, trainable);
  return r;
}

Mat time_embedding(int step, int dim) {
  if (dim < 2 || dim % 2 != 0) throw ValidationError("time_embedding: dim must be even and >= 2");
  if (step < 0) throw ValidationError("time_embedding: step must be >= 0");
  Mat e(dim, 1);
  const int half = dim / 2;
  for (int i = 0; i < half; ++i) {
    const double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) / half);
    const double angle = static_cast<double>(step) * freq;
    e(2 * i, 0) = std::sin(angle);
    e(2 * i + 1, 0) = std::cos(angle);
  }
  return e;
}

void Adam::step(const std::vector<Mat*>& params, const std::vector<Mat>& grads) {
  if (params.size() != grads.size()) throw ValidationError("Adam: parameter/gradient count mismatch");
  if (m.empty()) {
    m.reserve(params.size());
    v.reserve(params.size());
    for (const Mat* p : params) {
      m.push_back(Mat::Zero(p->rows(), p->cols()));
      v.push_back(Mat::Zero(p->rows(), p->cols()));
    }
  }
  if (m.size() != params.size()) throw ValidationError("Adam: parameter list changed size");
  t += 1;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  for (size_t i = 0; i < params.size(); ++i) {
    Mat& p = *params[i];
    const Mat& g = grads[i];
    if (g.rows() != p.rows() || g.cols() != p.cols())
      throw ValidationError("Adam: gradient shape mismatch");
    m[i] = beta1 * m[i] + (1.0 - beta1) * g;
    v[i] = beta2 * v[i] + (1.0 - beta2) * g.cwiseProduct(g);
    const Mat m_hat = m[i] / bc1;
    const Mat v_hat = v[i] / bc2;
    p.noalias() -= lr * m_hat.cwiseQuotient(v_hat.cwiseSqrt() + Mat::Constant(p.rows(), p.cols(), eps));
  }
}

NamedParamsConst as_const_params(const NamedParams& params) {
  NamedParamsConst out;
  out.reserve(params.size());
  for (const auto& [name, p] : params) out.emplace_back(name, p);
  return out;
}

void collect(NamedParams& out, const std::string& prefix, Linear& layer) {
  out.emplace_back(prefix + ".w", &layer.w);
  out.emplace_back(prefix + ".b", &layer.b);
}

void collect(NamedParams& out, const std::string& prefix, Gru& cell) {
  collect(out, prefix + ".r_x", cell.r_x);
  collect(out, prefix + ".r_h", cell.r_h);
  collect(out, prefix + ".u_x", cell.u_x);
  collect(out, prefix + ".u_h", cell.u_h);
  collect(out, prefix + ".n_x", cell.n_x);
  collect(out, prefix + ".n_h", cell.n_h);
}

namespace {

void append_u64_le(std::string& buf, uint64_t v) {
  for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

uint64_t read_u64_le(const std::string& buf, size_t pos) {
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(static_cast<uint8_t>(buf[pos + i])) << (8 * i);
  return v;
}

void append_f64_le(std::string& buf, const Mat& m) {
  static_assert(sizeof(double) == 8);
  const size_t n = static_cast<size_t>(m.size());
  const size_t start = buf.size();
  buf.resize(start + n * 8);
  // Column-major contiguous payload; doubles are little-endian on every
  // platform this builds for, so a memcpy is the byte layout we declare.
  std::memcpy(buf.data() + start, m.data(), n * 8);
}

}  // namespace

void save_checkpoint(const std::string& path, const std::string& magic, std::string header_json,
                     const NamedParamsConst& params) {
  if (magic.size() != 8) throw CheckpointError("checkpoint magic must be 8 bytes");
  json header;
  try {
    header = json::parse(header_json);
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("invalid checkpoint header JSON: ") + e.what());
  }
  json dir = json::array();
  for (const auto& [name, p] : params) {
    if (!p->allFinite())
      throw CheckpointError("refusing to save non-finite values in '" + name + "'");
    dir.push_back({{"name", name}, {"rows", p->rows()}, {"cols", p->cols()}});
  }
  header["arrays"] = std::move(dir);
  header["layout"] = "col-major-f64-le";
  const std::string head = header.dump();

  std::string buf;
  buf.reserve(magic.size() + 8 + head.size());
  buf += magic;
  append_u64_le(buf, head.size());
  buf += head;
  for (const auto& [name, p] : params) {
    (void)name;
    append_f64_le(buf, *p);
  }
  atomic_write_file(path, buf);
}

namespace {

std::string read_and_check_header(const std::string& path, const std::string& magic,
                                  std::string* full_out) {
  std::string buf = read_file(path);
  if (buf.size() < magic.size() + 8 || buf.compare(0, magic.size(), magic) != 0)
    throw CheckpointError(path + ": bad magic (expected " + magic + ")");
  const uint64_t head_len = read_u64_le(buf, magic.size());
  if (buf.size() < magic.size() + 8 + head_len)
    throw CheckpointError(path + ": truncated header");
  std::string head = buf.substr(magic.size() + 8, head_len);
  if (full_out) *full_out = std::move(buf);
  return head;
}

}  // namespace

std::string read_checkpoint_header(const std::string& path, const std::string& magic) {
  return read_and_check_header(path, magic, nullptr);
}

std::string load_checkpoint(const std::string& path, const std::string& magic,
                            const NamedParams& params) {
  std::string buf;
  const std::string head = read_and_check_header(path, magic, &buf);
  json header;
  try {
    header = json::parse(head);
  } catch (const json::exception& e) {
    throw CheckpointError(path + ": unparseable header: " + e.what());
  }
  if (!header.contains("arrays") || !header["arrays"].is_array())
    throw CheckpointError(path + ": header lacks array directory");
  const json& dir = header["arrays"];
  if (dir.size() != params.size())
    throw CheckpointError(path + ": expected " + std::to_string(params.size()) +
                          " arrays, file has " + std::to_string(dir.size()));
  size_t pos = magic.size() + 8 + head.size();
  for (size_t i = 0; i < params.size(); ++i) {
    const auto& [name, p] = params[i];
    const json& entry = dir[i];
    const std::string file_name = entry.at("name").get<std::string>();
    const int64_t rows = entry.at("rows").get<int64_t>();
    const int64_t cols = entry.at("cols").get<int64_t>();
    if (file_name != name)
      throw CheckpointError(path + ": array " + std::to_string(i) + " is '" + file_name +
                            "', expected '" + name + "'");
    if (rows != p->rows() || cols != p->cols())
      throw CheckpointError(path + ": shape mismatch for '" + name + "': file " +
                            std::to_string(rows) + "x" + std::to_string(cols) + ", model " +
                            std::to_string(p->rows()) + "x" + std::to_string(p->cols()));
    const size_t bytes = static_cast<size_t>(rows) * static_cast<size_t>(cols) * 8;
    if (pos + bytes > buf.size()) throw CheckpointError(path + ": truncated array payload");
    std::memcpy(p->data(), buf.data() + pos, bytes);
    pos += bytes;
  }
  if (pos != buf.size()) throw CheckpointError(path + ": trailing bytes after arrays");
  for (const auto& [name, p] : params)
    if (!p->allFinite()) throw CheckpointError(path + ": non-finite values in '" + name + "'");
  return head;
}

}  // namespace sforge::nn
