#pragma once

// Analytic conversions between the coordinate and pictorial pose
// representations: distance-field skeleton rendering, its Jacobian,
// spatial-softmax keypoint readout and thin-plate-spline warps.
//
// Coordinates are normalized to [-1, 1] per axis. Pixel (row c, col r) has
// its center at ((2r + 1) / W - 1, (2c + 1) / H - 1).

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace kpgan {

struct Point2 {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Point2&, const Point2&) = default;
};

struct Resolution {
  int height = 64;
  int width = 64;

  int pixels() const { return height * width; }
  friend bool operator==(const Resolution&, const Resolution&) = default;
};

/// K ordered landmarks in normalized coordinates.
using KeypointSet = std::vector<Point2>;

struct Edge {
  int i = 0;
  int j = 0;
  friend bool operator==(const Edge&, const Edge&) = default;
};

/// Skeleton topology: undirected edges between keypoints plus left/right
/// pairs used for orientation handling. Construction validates everything;
/// an EdgeSet that exists is well formed.
class EdgeSet {
 public:
  EdgeSet(int num_keypoints, std::vector<Edge> edges,
          std::vector<std::pair<int, int>> symmetric_pairs = {},
          std::string name = "skeleton");

  int num_keypoints() const { return num_keypoints_; }
  const std::vector<Edge>& edges() const { return edges_; }
  const std::vector<std::pair<int, int>>& symmetric_pairs() const { return symmetric_pairs_; }
  const std::string& name() const { return name_; }

  /// Eight-joint stick figure used by the synthetic dataset:
  /// head, neck, l/r elbow, l/r hand, l/r foot.
  static EdgeSet stick_figure();

 private:
  int num_keypoints_;
  std::vector<Edge> edges_;
  std::vector<std::pair<int, int>> symmetric_pairs_;
  std::string name_;
};

/// Single-channel H x W image, row-major, values in [0, 1].
struct SkeletonImage {
  Resolution resolution;
  std::vector<double> pixels;

  double at(int row, int col) const { return pixels[static_cast<std::size_t>(row) * resolution.width + col]; }
  double max() const;
};

Point2 pixel_center(Resolution res, int row, int col);

/// Distance from u to the segment [a, b]; a == b degenerates to point distance.
double point_segment_distance(Point2 u, Point2 a, Point2 b);

/// exp(-gamma * d(u)^2) with d the distance to the nearest skeleton edge.
SkeletonImage render_skeleton(std::span<const Point2> keypoints, const EdgeSet& edges, Resolution res,
                              double gamma);

/// d pixel / d keypoint coordinate, laid out [pixel][keypoint][axis] with axis 0 = x.
/// At minimizer ties the first edge in enumeration order wins.
struct SkeletonJacobian {
  Resolution resolution;
  int num_keypoints = 0;
  std::vector<double> values;

  double at(int row, int col, int keypoint, int axis) const {
    return values[((static_cast<std::size_t>(row) * resolution.width + col) * num_keypoints + keypoint) * 2 + axis];
  }
};

SkeletonJacobian render_skeleton_gradient(std::span<const Point2> keypoints, const EdgeSet& edges, Resolution res,
                                          double gamma);

/// Spatial softmax per channel followed by the expected pixel-center
/// coordinate. `heatmaps` is K x H x W row-major.
KeypointSet keypoints_from_heatmaps(std::span<const double> heatmaps, int num_keypoints, Resolution res);

/// Multi-channel float image, CHW layout.
struct Image {
  int channels = 3;
  Resolution resolution;
  std::vector<float> data;

  Image() = default;
  Image(int channels, Resolution res, float fill = 0.0f)
      : channels(channels), resolution(res), data(static_cast<std::size_t>(channels) * res.pixels(), fill) {}

  float& at(int c, int row, int col) {
    return data[(static_cast<std::size_t>(c) * resolution.height + row) * resolution.width + col];
  }
  float at(int c, int row, int col) const {
    return data[(static_cast<std::size_t>(c) * resolution.height + row) * resolution.width + col];
  }
};

/// Backward-mapping warp s(u) = A [u; 1] + tps(u), where tps interpolates
/// `displacements` at `control_points` with the r^2 log r kernel.
/// Resampling reads the source at s(u) for every output location u.
class ThinPlateSplineWarp {
 public:
  ThinPlateSplineWarp(std::vector<Point2> control_points, std::vector<Point2> displacements,
                      std::array<double, 6> affine = {1, 0, 0, 0, 1, 0});

  static ThinPlateSplineWarp identity();

  Point2 operator()(Point2 u) const;

  /// Solves s(u) = target by fixed-point iteration u <- u - (s(u) - target).
  Point2 inverse(Point2 target, int max_iterations = 100, double tolerance = 1e-12) const;

  const std::vector<Point2>& control_points() const { return control_points_; }
  const std::vector<Point2>& displacements() const { return displacements_; }
  const std::array<double, 6>& affine() const { return affine_; }

 private:
  std::vector<Point2> control_points_;
  std::vector<Point2> displacements_;
  std::array<double, 6> affine_;
  // Solved TPS coefficients: radial weights then the 3x2 affine residual.
  std::vector<Point2> weights_;
  std::array<Point2, 3> residual_affine_{};
};

/// Displacements uniform in [-magnitude, magnitude]^2 on a grid_size x grid_size
/// control lattice spanning [-1, 1]^2; identity affine part.
ThinPlateSplineWarp tps_sample(std::uint64_t seed, double magnitude, int grid_size = 4);

/// Bilinear resampling with edge replication.
Image tps_apply(const ThinPlateSplineWarp& warp, const Image& image);

/// Where a source keypoint lands after tps_apply.
KeypointSet tps_transform_keypoints(const ThinPlateSplineWarp& warp, std::span<const Point2> keypoints);

}  // namespace kpgan
