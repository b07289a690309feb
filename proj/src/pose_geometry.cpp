#include "kpgan/pose_geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <stdexcept>

#include <Eigen/Dense>

#include "kpgan/random.hpp"

namespace kpgan {

namespace {

struct SegmentProjection {
  double t = 0.0;     // position along a -> b, clamped to [0, 1]
  double dist2 = 0.0;
  Point2 closest;
};

SegmentProjection project(Point2 u, Point2 a, Point2 b) {
  const double ex = b.x - a.x;
  const double ey = b.y - a.y;
  const double len2 = ex * ex + ey * ey;
  double t = 0.0;
  if (len2 > 0.0) {
    t = std::clamp(((u.x - a.x) * ex + (u.y - a.y) * ey) / len2, 0.0, 1.0);
  }
  const Point2 c{a.x + t * ex, a.y + t * ey};
  const double dx = u.x - c.x;
  const double dy = u.y - c.y;
  return {t, dx * dx + dy * dy, c};
}

void check_render_inputs(std::span<const Point2> keypoints, const EdgeSet& edges, Resolution res, double gamma) {
  if (edges.edges().empty()) throw std::invalid_argument("render_skeleton: empty edge set");
  if (static_cast<int>(keypoints.size()) != edges.num_keypoints()) {
    throw std::invalid_argument("render_skeleton: keypoint count does not match edge set");
  }
  if (!(gamma > 0.0)) throw std::invalid_argument("render_skeleton: gamma must be positive");
  if (res.height <= 0 || res.width <= 0) throw std::invalid_argument("render_skeleton: bad resolution");
}

double tps_kernel(double r2) { return r2 > 0.0 ? 0.5 * r2 * std::log(r2) : 0.0; }  // r^2 log r

}  // namespace

EdgeSet::EdgeSet(int num_keypoints, std::vector<Edge> edges, std::vector<std::pair<int, int>> symmetric_pairs,
                 std::string name)
    : num_keypoints_(num_keypoints),
      edges_(std::move(edges)),
      symmetric_pairs_(std::move(symmetric_pairs)),
      name_(std::move(name)) {
  if (num_keypoints_ <= 0) throw std::invalid_argument("EdgeSet: K must be positive");
  std::set<std::pair<int, int>> seen;
  for (auto& e : edges_) {
    if (e.i > e.j) std::swap(e.i, e.j);
    if (e.i < 0 || e.j >= num_keypoints_ || e.i == e.j) {
      throw std::invalid_argument("EdgeSet: edge (" + std::to_string(e.i) + "," + std::to_string(e.j) +
                                  ") out of range or self-loop");
    }
    if (!seen.insert({e.i, e.j}).second) {
      throw std::invalid_argument("EdgeSet: duplicate edge (" + std::to_string(e.i) + "," + std::to_string(e.j) + ")");
    }
  }
  std::set<int> used;
  for (const auto& [l, r] : symmetric_pairs_) {
    if (l < 0 || r < 0 || l >= num_keypoints_ || r >= num_keypoints_ || l == r) {
      throw std::invalid_argument("EdgeSet: symmetric pair out of range");
    }
    if (!used.insert(l).second || !used.insert(r).second) {
      throw std::invalid_argument("EdgeSet: symmetric pairs overlap");
    }
  }
}

EdgeSet EdgeSet::stick_figure() {
  // 0 head, 1 neck, 2 l-elbow, 3 l-hand, 4 r-elbow, 5 r-hand, 6 l-foot, 7 r-foot
  return EdgeSet(8, {{0, 1}, {1, 2}, {2, 3}, {1, 4}, {4, 5}, {1, 6}, {1, 7}}, {{3, 5}, {2, 4}, {6, 7}},
                 "stick_figure");
}

double SkeletonImage::max() const { return pixels.empty() ? 0.0 : *std::max_element(pixels.begin(), pixels.end()); }

Point2 pixel_center(Resolution res, int row, int col) {
  return {(2.0 * col + 1.0) / res.width - 1.0, (2.0 * row + 1.0) / res.height - 1.0};
}

double point_segment_distance(Point2 u, Point2 a, Point2 b) { return std::sqrt(project(u, a, b).dist2); }

SkeletonImage render_skeleton(std::span<const Point2> keypoints, const EdgeSet& edges, Resolution res,
                              double gamma) {
  check_render_inputs(keypoints, edges, res, gamma);
  SkeletonImage out{res, std::vector<double>(static_cast<std::size_t>(res.pixels()))};
  for (int row = 0; row < res.height; ++row) {
    for (int col = 0; col < res.width; ++col) {
      const Point2 u = pixel_center(res, row, col);
      double best = std::numeric_limits<double>::infinity();
      for (const auto& e : edges.edges()) {
        best = std::min(best, project(u, keypoints[e.i], keypoints[e.j]).dist2);
      }
      out.pixels[static_cast<std::size_t>(row) * res.width + col] = std::exp(-gamma * best);
    }
  }
  return out;
}

SkeletonJacobian render_skeleton_gradient(std::span<const Point2> keypoints, const EdgeSet& edges, Resolution res,
                                          double gamma) {
  check_render_inputs(keypoints, edges, res, gamma);
  const int k = edges.num_keypoints();
  SkeletonJacobian jac{res, k, std::vector<double>(static_cast<std::size_t>(res.pixels()) * k * 2, 0.0)};
  for (int row = 0; row < res.height; ++row) {
    for (int col = 0; col < res.width; ++col) {
      const Point2 u = pixel_center(res, row, col);
      SegmentProjection best{0.0, std::numeric_limits<double>::infinity(), {}};
      const Edge* best_edge = nullptr;
      for (const auto& e : edges.edges()) {
        const auto proj = project(u, keypoints[e.i], keypoints[e.j]);
        if (proj.dist2 < best.dist2) {
          best = proj;
          best_edge = &e;
        }
      }
      const double value = std::exp(-gamma * best.dist2);
      if (value == 0.0) continue;
      // d(dist2)/d(a) = -2 (u - c)(1 - t), d(dist2)/d(b) = -2 (u - c) t; t is stationary or clamped.
      const double gx = u.x - best.closest.x;
      const double gy = u.y - best.closest.y;
      const double scale = 2.0 * gamma * value;  // dv/d(dist2) = -gamma v
      double* px = &jac.values[(static_cast<std::size_t>(row) * res.width + col) * k * 2];
      px[best_edge->i * 2 + 0] += scale * gx * (1.0 - best.t);
      px[best_edge->i * 2 + 1] += scale * gy * (1.0 - best.t);
      px[best_edge->j * 2 + 0] += scale * gx * best.t;
      px[best_edge->j * 2 + 1] += scale * gy * best.t;
    }
  }
  return jac;
}

KeypointSet keypoints_from_heatmaps(std::span<const double> heatmaps, int num_keypoints, Resolution res) {
  const std::size_t plane = static_cast<std::size_t>(res.pixels());
  if (heatmaps.size() != plane * num_keypoints) {
    throw std::invalid_argument("keypoints_from_heatmaps: size does not match K x H x W");
  }
  KeypointSet out(num_keypoints);
  for (int k = 0; k < num_keypoints; ++k) {
    const auto channel = heatmaps.subspan(k * plane, plane);
    const double peak = *std::max_element(channel.begin(), channel.end());
    double z = 0.0, ex = 0.0, ey = 0.0;
    for (int row = 0; row < res.height; ++row) {
      for (int col = 0; col < res.width; ++col) {
        const double w = std::exp(channel[static_cast<std::size_t>(row) * res.width + col] - peak);
        const Point2 c = pixel_center(res, row, col);
        z += w;
        ex += w * c.x;
        ey += w * c.y;
      }
    }
    out[k] = {ex / z, ey / z};
  }
  return out;
}

ThinPlateSplineWarp::ThinPlateSplineWarp(std::vector<Point2> control_points, std::vector<Point2> displacements,
                                         std::array<double, 6> affine)
    : control_points_(std::move(control_points)), displacements_(std::move(displacements)), affine_(affine) {
  if (control_points_.size() != displacements_.size()) {
    throw std::invalid_argument("ThinPlateSplineWarp: control point / displacement count mismatch");
  }
  const auto n = static_cast<Eigen::Index>(control_points_.size());
  weights_.assign(control_points_.size(), Point2{});
  if (n == 0) return;
  const bool all_zero = std::all_of(displacements_.begin(), displacements_.end(),
                                    [](const Point2& d) { return d.x == 0.0 && d.y == 0.0; });
  if (all_zero) return;

  Eigen::MatrixXd system = Eigen::MatrixXd::Zero(n + 3, n + 3);
  Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(n + 3, 2);
  for (Eigen::Index a = 0; a < n; ++a) {
    const auto& pa = control_points_[a];
    for (Eigen::Index b = 0; b < n; ++b) {
      const auto& pb = control_points_[b];
      const double dx = pa.x - pb.x, dy = pa.y - pb.y;
      system(a, b) = tps_kernel(dx * dx + dy * dy);
    }
    system(a, n) = system(n, a) = 1.0;
    system(a, n + 1) = system(n + 1, a) = pa.x;
    system(a, n + 2) = system(n + 2, a) = pa.y;
    rhs(a, 0) = displacements_[a].x;
    rhs(a, 1) = displacements_[a].y;
  }
  const Eigen::MatrixXd sol = system.fullPivLu().solve(rhs);
  for (Eigen::Index a = 0; a < n; ++a) weights_[a] = {sol(a, 0), sol(a, 1)};
  for (int r = 0; r < 3; ++r) residual_affine_[r] = {sol(n + r, 0), sol(n + r, 1)};
}

ThinPlateSplineWarp ThinPlateSplineWarp::identity() { return ThinPlateSplineWarp({}, {}); }

Point2 ThinPlateSplineWarp::operator()(Point2 u) const {
  const auto& a = affine_;
  Point2 out{a[0] * u.x + a[1] * u.y + a[2], a[3] * u.x + a[4] * u.y + a[5]};
  const auto& ra = residual_affine_;
  out.x += ra[0].x + ra[1].x * u.x + ra[2].x * u.y;
  out.y += ra[0].y + ra[1].y * u.x + ra[2].y * u.y;
  for (std::size_t k = 0; k < control_points_.size(); ++k) {
    const double dx = u.x - control_points_[k].x, dy = u.y - control_points_[k].y;
    const double phi = tps_kernel(dx * dx + dy * dy);
    out.x += weights_[k].x * phi;
    out.y += weights_[k].y * phi;
  }
  return out;
}

Point2 ThinPlateSplineWarp::inverse(Point2 target, int max_iterations, double tolerance) const {
  Point2 u = target;
  for (int it = 0; it < max_iterations; ++it) {
    const Point2 s = (*this)(u);
    const double rx = s.x - target.x, ry = s.y - target.y;
    u.x -= rx;
    u.y -= ry;
    if (rx * rx + ry * ry < tolerance * tolerance) break;
  }
  return u;
}

ThinPlateSplineWarp tps_sample(std::uint64_t seed, double magnitude, int grid_size) {
  if (magnitude < 0.0) throw std::invalid_argument("tps_sample: magnitude must be nonnegative");
  if (grid_size < 2) throw std::invalid_argument("tps_sample: grid_size must be at least 2");
  Rng rng(seed, /*stream=*/0x7e5);
  std::vector<Point2> controls, displacements;
  for (int r = 0; r < grid_size; ++r) {
    for (int c = 0; c < grid_size; ++c) {
      controls.push_back({-1.0 + 2.0 * c / (grid_size - 1), -1.0 + 2.0 * r / (grid_size - 1)});
      const double dx = rng.uniform(-magnitude, magnitude);
      const double dy = rng.uniform(-magnitude, magnitude);
      displacements.push_back({dx, dy});
    }
  }
  return ThinPlateSplineWarp(std::move(controls), std::move(displacements));
}

Image tps_apply(const ThinPlateSplineWarp& warp, const Image& image) {
  const Resolution res = image.resolution;
  Image out(image.channels, res);
  auto snap = [](double v) {
    const double r = std::round(v);
    return std::abs(v - r) < 1e-9 ? r : v;
  };
  for (int row = 0; row < res.height; ++row) {
    for (int col = 0; col < res.width; ++col) {
      const Point2 s = warp(pixel_center(res, row, col));
      // normalized -> continuous pixel index (pixel centers at integers)
      const double fx = std::clamp(snap(((s.x + 1.0) * res.width - 1.0) / 2.0), 0.0, res.width - 1.0);
      const double fy = std::clamp(snap(((s.y + 1.0) * res.height - 1.0) / 2.0), 0.0, res.height - 1.0);
      const int x0 = static_cast<int>(std::floor(fx));
      const int y0 = static_cast<int>(std::floor(fy));
      const int x1 = std::min(x0 + 1, res.width - 1);
      const int y1 = std::min(y0 + 1, res.height - 1);
      const double ax = fx - x0, ay = fy - y0;
      for (int ch = 0; ch < image.channels; ++ch) {
        if (ax == 0.0 && ay == 0.0) {
          out.at(ch, row, col) = image.at(ch, y0, x0);
          continue;
        }
        const double top = (1.0 - ax) * image.at(ch, y0, x0) + ax * image.at(ch, y0, x1);
        const double bottom = (1.0 - ax) * image.at(ch, y1, x0) + ax * image.at(ch, y1, x1);
        out.at(ch, row, col) = static_cast<float>((1.0 - ay) * top + ay * bottom);
      }
    }
  }
  return out;
}

KeypointSet tps_transform_keypoints(const ThinPlateSplineWarp& warp, std::span<const Point2> keypoints) {
  KeypointSet out;
  out.reserve(keypoints.size());
  for (const auto& p : keypoints) out.push_back(warp.inverse(p));
  return out;
}

}  // namespace kpgan
