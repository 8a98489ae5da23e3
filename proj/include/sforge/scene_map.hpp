#pragma once

#include <cstdint>
#include <vector>

#include "sforge/grid_sample.hpp"

namespace sforge {

// Piecewise-linear curve with precomputed arc lengths. Used for lane
// centerlines; points are expected a few meters apart at most.
class Polyline {
 public:
  Polyline() = default;
  Polyline(std::vector<double> xs, std::vector<double> ys);

  int size() const { return static_cast<int>(xs_.size()); }
  double x(int i) const { return xs_[static_cast<size_t>(i)]; }
  double y(int i) const { return ys_[static_cast<size_t>(i)]; }
  double length() const { return cum_.empty() ? 0.0 : cum_.back(); }

  struct Projection {
    double s = 0.0;     // arc length of the closest point
    double dist = 0.0;  // Euclidean distance to the curve
  };
  Projection project(double px, double py) const;

  // Point at arc length s, clamped to [0, length].
  void point_at(double s, double* x, double* y) const;
  // Tangent heading [rad] at arc length s.
  double heading_at(double s) const;

 private:
  std::vector<double> xs_, ys_;
  std::vector<double> cum_;  // cumulative arc length, cum_[0] = 0
};

// Grid map of the drivable area. sdf holds signed distances [m] sampled at
// cell centers, positive inside the drivable region; row-major storage.
struct SceneMap {
  double origin_x = 0.0;  // world position of the grid's lower corner [m]
  double origin_y = 0.0;
  double resolution = 0.5;  // [m/cell]
  int rows = 0;
  int cols = 0;
  std::vector<double> sdf;
  std::vector<Polyline> centerlines;

  double sdf_at(int r, int c) const { return sdf[static_cast<size_t>(r) * cols + c]; }

  GridView grid_view() const {
    return GridView{sdf.data(), rows, cols, origin_x, origin_y, resolution};
  }

  // Bilinear interpolation between cell centers. Queries outside the grid
  // extent clamp to the nearest border cell value.
  double sdf_query(double x, double y) const { return bilinear_sample(grid_view(), x, y); }

  // Checks storage shape, finiteness, and that every centerline point lies
  // on drivable area. Throws ValidationError on violation.
  void validate() const;
};

// Builds the signed-distance grid from a drivable-area mask (1 = drivable)
// with an exact two-pass Euclidean distance transform (row pass + column
// pass). Distances are measured between cell centers, shifted half a cell
// so the zero level sits on the mask boundary, and quantized to 1e-4 m to
// keep serialized grids compact. Centerlines are left empty.
SceneMap build_sdf_map(const std::vector<uint8_t>& drivable_mask, int rows, int cols,
                       double origin_x, double origin_y, double resolution);

}  // namespace sforge
