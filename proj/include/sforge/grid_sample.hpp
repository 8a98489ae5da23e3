#pragma once

#include <algorithm>
#include <cmath>

namespace sforge {

// Non-owning view of a row-major grid sampled at cell centers.
struct GridView {
  const double* data = nullptr;
  int rows = 0;
  int cols = 0;
  double origin_x = 0.0;
  double origin_y = 0.0;
  double resolution = 1.0;
};

// Bilinear interpolation between cell centers with border clamping: queries
// outside the extent return the nearest border cell value (zero gradient).
// When grad_x/grad_y are non-null they receive the within-cell derivative.
inline double bilinear_sample(const GridView& g, double x, double y, double* grad_x = nullptr,
                              double* grad_y = nullptr) {
  const double gx = (x - g.origin_x) / g.resolution - 0.5;
  const double gy = (y - g.origin_y) / g.resolution - 0.5;
  int c0 = static_cast<int>(std::floor(gx));
  int r0 = static_cast<int>(std::floor(gy));
  c0 = std::clamp(c0, 0, g.cols - 2);
  r0 = std::clamp(r0, 0, g.rows - 2);
  const double tx_raw = gx - c0;
  const double ty_raw = gy - r0;
  const double tx = std::clamp(tx_raw, 0.0, 1.0);
  const double ty = std::clamp(ty_raw, 0.0, 1.0);
  const double* row0 = g.data + static_cast<long>(r0) * g.cols + c0;
  const double* row1 = row0 + g.cols;
  const double v00 = row0[0], v01 = row0[1];
  const double v10 = row1[0], v11 = row1[1];
  const double top = v00 + tx * (v01 - v00);
  const double bot = v10 + tx * (v11 - v10);
  if (grad_x) {
    const bool live_x = tx_raw >= 0.0 && tx_raw <= 1.0;
    *grad_x = live_x ? ((1.0 - ty) * (v01 - v00) + ty * (v11 - v10)) / g.resolution : 0.0;
  }
  if (grad_y) {
    const bool live_y = ty_raw >= 0.0 && ty_raw <= 1.0;
    *grad_y = live_y ? ((bot - top)) / g.resolution : 0.0;
  }
  return top + ty * (bot - top);
}

}  // namespace sforge
