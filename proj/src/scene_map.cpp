#include "sforge/scene_map.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "sforge/errors.hpp"

namespace sforge {

Polyline::Polyline(std::vector<double> xs, std::vector<double> ys)
    : xs_(std::move(xs)), ys_(std::move(ys)) {
  if (xs_.size() != ys_.size() || xs_.size() < 2)
    throw ValidationError("Polyline: needs >= 2 points with matching coordinates");
  cum_.resize(xs_.size(), 0.0);
  for (size_t i = 1; i < xs_.size(); ++i) {
    const double dx = xs_[i] - xs_[i - 1];
    const double dy = ys_[i] - ys_[i - 1];
    cum_[i] = cum_[i - 1] + std::sqrt(dx * dx + dy * dy);
  }
}

Polyline::Projection Polyline::project(double px, double py) const {
  Projection best;
  best.dist = std::numeric_limits<double>::infinity();
  for (size_t i = 0; i + 1 < xs_.size(); ++i) {
    const double ax = xs_[i], ay = ys_[i];
    const double bx = xs_[i + 1], by = ys_[i + 1];
    const double vx = bx - ax, vy = by - ay;
    const double len2 = vx * vx + vy * vy;
    double t = len2 > 0.0 ? ((px - ax) * vx + (py - ay) * vy) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    const double cx = ax + t * vx, cy = ay + t * vy;
    const double d = std::hypot(px - cx, py - cy);
    if (d < best.dist) {
      best.dist = d;
      best.s = cum_[i] + t * std::sqrt(len2);
    }
  }
  return best;
}

void Polyline::point_at(double s, double* x, double* y) const {
  s = std::clamp(s, 0.0, length());
  const auto it = std::upper_bound(cum_.begin(), cum_.end(), s);
  size_t i = it == cum_.begin() ? 0 : static_cast<size_t>(it - cum_.begin()) - 1;
  if (i + 1 >= xs_.size()) i = xs_.size() - 2;
  const double seg = cum_[i + 1] - cum_[i];
  const double t = seg > 0.0 ? (s - cum_[i]) / seg : 0.0;
  *x = xs_[i] + t * (xs_[i + 1] - xs_[i]);
  *y = ys_[i] + t * (ys_[i + 1] - ys_[i]);
}

double Polyline::heading_at(double s) const {
  s = std::clamp(s, 0.0, length());
  const auto it = std::upper_bound(cum_.begin(), cum_.end(), s);
  size_t i = it == cum_.begin() ? 0 : static_cast<size_t>(it - cum_.begin()) - 1;
  if (i + 1 >= xs_.size()) i = xs_.size() - 2;
  return std::atan2(ys_[i + 1] - ys_[i], xs_[i + 1] - xs_[i]);
}

void SceneMap::validate() const {
  if (rows < 2 || cols < 2) throw ValidationError("SceneMap: grid must be at least 2x2");
  if (!(resolution > 0.0)) throw ValidationError("SceneMap: resolution must be positive");
  if (sdf.size() != static_cast<size_t>(rows) * static_cast<size_t>(cols))
    throw ValidationError("SceneMap: sdf size does not match rows*cols");
  for (const double v : sdf)
    if (!std::isfinite(v)) throw ValidationError("SceneMap: non-finite sdf value");
  for (const Polyline& line : centerlines)
    for (int i = 0; i < line.size(); ++i)
      if (!(sdf_query(line.x(i), line.y(i)) > 0.0))
        throw ValidationError("SceneMap: centerline point off drivable area");
}

namespace {

// 1D squared-distance transform (lower envelope of parabolas). Entries with
// f = +inf carry no parabola; an all-infinite input yields all-infinite output.
void dt_1d(const double* f, int n, double* d, std::vector<int>& v, std::vector<double>& z) {
  constexpr double kInf = std::numeric_limits<double>::infinity();
  int k = -1;
  for (int q = 0; q < n; ++q) {
    if (f[q] == kInf) continue;
    if (k < 0) {
      k = 0;
      v[0] = q;
      z[0] = -kInf;
      z[1] = kInf;
      continue;
    }
    double s;
    for (;;) {
      const int p = v[static_cast<size_t>(k)];
      s = ((f[q] + static_cast<double>(q) * q) - (f[p] + static_cast<double>(p) * p)) /
          (2.0 * (q - p));
      // z[0] = -inf, so k never drops below 0 for finite s.
      if (s <= z[static_cast<size_t>(k)]) {
        --k;
      } else {
        break;
      }
    }
    ++k;
    v[static_cast<size_t>(k)] = q;
    z[static_cast<size_t>(k)] = s;
    z[static_cast<size_t>(k) + 1] = kInf;
  }
  if (k < 0) {
    std::fill(d, d + n, kInf);
    return;
  }
  k = 0;
  for (int q = 0; q < n; ++q) {
    while (z[static_cast<size_t>(k) + 1] < q) ++k;
    const int p = v[static_cast<size_t>(k)];
    const double dq = static_cast<double>(q - p);
    d[q] = dq * dq + f[p];
  }
}

// Squared distance in cell units from every cell to the nearest seed cell.
std::vector<double> edt_squared(const std::vector<uint8_t>& seed, int rows, int cols) {
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> grid(static_cast<size_t>(rows) * cols);
  for (size_t i = 0; i < grid.size(); ++i) grid[i] = seed[i] ? 0.0 : kInf;

  const int n = std::max(rows, cols);
  std::vector<double> col_in(static_cast<size_t>(n)), col_out(static_cast<size_t>(n));
  std::vector<int> v(static_cast<size_t>(n));
  std::vector<double> z(static_cast<size_t>(n) + 1);

  // Pass 1: along rows (in place).
  std::vector<double> row_out(static_cast<size_t>(cols));
  for (int r = 0; r < rows; ++r) {
    double* row = grid.data() + static_cast<long>(r) * cols;
    dt_1d(row, cols, row_out.data(), v, z);
    std::copy(row_out.begin(), row_out.end(), row);
  }
  // Pass 2: along columns.
  for (int c = 0; c < cols; ++c) {
    for (int r = 0; r < rows; ++r)
      col_in[static_cast<size_t>(r)] = grid[static_cast<size_t>(r) * cols + c];
    dt_1d(col_in.data(), rows, col_out.data(), v, z);
    for (int r = 0; r < rows; ++r)
      grid[static_cast<size_t>(r) * cols + c] = col_out[static_cast<size_t>(r)];
  }
  return grid;
}

}  // namespace

SceneMap build_sdf_map(const std::vector<uint8_t>& drivable_mask, int rows, int cols,
                       double origin_x, double origin_y, double resolution) {
  if (rows < 2 || cols < 2) throw ValidationError("build_sdf_map: grid must be at least 2x2");
  if (drivable_mask.size() != static_cast<size_t>(rows) * static_cast<size_t>(cols))
    throw ValidationError("build_sdf_map: mask size does not match rows*cols");
  if (!(resolution > 0.0)) throw ValidationError("build_sdf_map: resolution must be positive");

  std::vector<uint8_t> inv(drivable_mask.size());
  for (size_t i = 0; i < inv.size(); ++i) inv[i] = drivable_mask[i] ? 0 : 1;

  // Distance to the nearest non-drivable cell (for inside points) and to the
  // nearest drivable cell (for outside points).
  const std::vector<double> d2_out = edt_squared(inv, rows, cols);
  const std::vector<double> d2_in = edt_squared(drivable_mask, rows, cols);

  const double cap = (rows + cols) * resolution;  // bound for all-one-class masks
  SceneMap map;
  map.origin_x = origin_x;
  map.origin_y = origin_y;
  map.resolution = resolution;
  map.rows = rows;
  map.cols = cols;
  map.sdf.resize(drivable_mask.size());
  for (size_t i = 0; i < drivable_mask.size(); ++i) {
    double v;
    if (drivable_mask[i]) {
      v = std::isfinite(d2_out[i]) ? (std::sqrt(d2_out[i]) - 0.5) * resolution : cap;
    } else {
      v = std::isfinite(d2_in[i]) ? -(std::sqrt(d2_in[i]) - 0.5) * resolution : -cap;
    }
    // Quantized so serialized grids stay compact; 0.1 mm is far below any
    // geometric tolerance in the pipeline.
    map.sdf[i] = std::round(v * 1e4) / 1e4;
  }
  return map;
}

}  // namespace sforge
