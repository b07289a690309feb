#pragma once

// Independent reference computations used by the unit and acceptance tests.
// Nothing here calls into the library's geometry code.

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>
#include <vector>

#include "kpgan/pose_geometry.hpp"
#include "kpgan/random.hpp"

namespace oracle {

using kpgan::Point2;

/// min over r sampled on a uniform grid of n points in [0, 1].
inline double grid_distance(Point2 u, Point2 a, Point2 b, int n) {
  double best = std::numeric_limits<double>::infinity();
  for (int s = 0; s < n; ++s) {
    const double r = static_cast<double>(s) / (n - 1);
    const double px = r * a.x + (1.0 - r) * b.x - u.x;
    const double py = r * a.y + (1.0 - r) * b.y - u.y;
    best = std::min(best, px * px + py * py);
  }
  return std::sqrt(best);
}

/// grid_distance up to rounding: the squared distance along the sample
/// sequence is convex, so an integer ternary search finds its minimum.
inline double grid_distance_fast(Point2 u, Point2 a, Point2 b, int n) {
  auto f = [&](int s) {
    const double r = static_cast<double>(s) / (n - 1);
    const double px = r * a.x + (1.0 - r) * b.x - u.x;
    const double py = r * a.y + (1.0 - r) * b.y - u.y;
    return px * px + py * py;
  };
  int lo = 0, hi = n - 1;
  while (hi - lo > 2) {
    const int m1 = lo + (hi - lo) / 3, m2 = hi - (hi - lo) / 3;
    if (f(m1) <= f(m2)) hi = m2; else lo = m1;
  }
  double best = f(lo);
  for (int s = lo + 1; s <= hi; ++s) best = std::min(best, f(s));
  return std::sqrt(best);
}

/// Dense-r distance refined by golden-section search on the best bracket, so
/// the grid error does not limit agreement.
inline double refined_distance(Point2 u, Point2 a, Point2 b, int n) {
  auto f = [&](double r) {
    const double px = r * a.x + (1.0 - r) * b.x - u.x;
    const double py = r * a.y + (1.0 - r) * b.y - u.y;
    return px * px + py * py;
  };
  int best = 0;
  double best_v = std::numeric_limits<double>::infinity();
  for (int s = 0; s < n; ++s) {
    const double v = f(static_cast<double>(s) / (n - 1));
    if (v < best_v) best_v = v, best = s;
  }
  double lo = std::max(0.0, (best - 1.0) / (n - 1)), hi = std::min(1.0, (best + 1.0) / (n - 1));
  const double g = (std::sqrt(5.0) - 1.0) / 2.0;
  for (int it = 0; it < 100; ++it) {
    const double m1 = hi - g * (hi - lo), m2 = lo + g * (hi - lo);
    if (f(m1) < f(m2)) hi = m2; else lo = m1;
  }
  return std::sqrt(std::min({best_v, f(0.5 * (lo + hi)), f(0.0), f(1.0)}));
}

inline Point2 center(int row, int col, int h, int w) {
  return {(2.0 * col + 1.0) / w - 1.0, (2.0 * row + 1.0) / h - 1.0};
}

/// Random figure with coordinates uniform in [-0.9, 0.9]^2.
inline std::vector<Point2> random_figure(kpgan::Rng& rng, int k) {
  std::vector<Point2> p(k);
  for (auto& q : p) q = {rng.uniform(-0.9, 0.9), rng.uniform(-0.9, 0.9)};
  return p;
}

/// Per-edge distances at u, sorted ascending, with the winning edge index.
inline std::pair<std::vector<double>, int> edge_distances(Point2 u, const std::vector<Point2>& p,
                                                          const kpgan::EdgeSet& edges, int n) {
  std::vector<double> d;
  int arg = 0;
  for (std::size_t e = 0; e < edges.edges().size(); ++e) {
    const auto [i, j] = edges.edges()[e];
    d.push_back(refined_distance(u, p[i], p[j], n));
    if (d.back() < d[arg]) arg = static_cast<int>(e);
  }
  std::sort(d.begin(), d.end());
  return {d, arg};
}

}  // namespace oracle
