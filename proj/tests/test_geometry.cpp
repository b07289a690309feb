#include <doctest.h>

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "kpgan/pose_geometry.hpp"
#include "kpgan/random.hpp"
#include "oracles.hpp"

using namespace kpgan;

namespace {

double field_at(Point2 u, const std::vector<Point2>& p, const EdgeSet& edges, double gamma) {
  double best = 1e300;
  for (const auto& e : edges.edges()) best = std::min(best, oracle::refined_distance(u, p[e.i], p[e.j], 2001));
  return std::exp(-gamma * best * best);
}

Image smooth_pattern(Resolution res) {
  Image img(3, res);
  for (int c = 0; c < 3; ++c) {
    for (int r = 0; r < res.height; ++r) {
      for (int q = 0; q < res.width; ++q) {
        const auto u = oracle::center(r, q, res.height, res.width);
        img.at(c, r, q) = static_cast<float>(0.5 + 0.4 * std::sin(2.0 * u.x + c) * std::cos(1.5 * u.y - c));
      }
    }
  }
  return img;
}

/// Bilinear sample with edge replication at a normalized location.
float sample(const Image& img, int c, Point2 p) {
  const auto [h, w] = img.resolution;
  const double fx = std::clamp((p.x + 1.0) * w / 2.0 - 0.5, 0.0, w - 1.0);
  const double fy = std::clamp((p.y + 1.0) * h / 2.0 - 0.5, 0.0, h - 1.0);
  const int x0 = std::min(static_cast<int>(fx), w - 2), y0 = std::min(static_cast<int>(fy), h - 2);
  const double ax = fx - x0, ay = fy - y0;
  return static_cast<float>((1 - ay) * ((1 - ax) * img.at(c, y0, x0) + ax * img.at(c, y0, x0 + 1)) +
                            ay * ((1 - ax) * img.at(c, y0 + 1, x0) + ax * img.at(c, y0 + 1, x0 + 1)));
}

}  // namespace

TEST_SUITE("geometry") {

TEST_CASE("point_segment_distance basic cases") {
  CHECK(point_segment_distance({0.5, 0.3}, {0, 0}, {1, 0}) == doctest::Approx(0.3).epsilon(1e-15));
  CHECK(point_segment_distance({2, 0}, {0, 0}, {1, 0}) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(point_segment_distance({3, 4}, {0, 0}, {0, 0}) == doctest::Approx(5.0).epsilon(1e-15));
}

TEST_CASE("point_segment_distance matches a 1e6-sample r grid") {
  const double d = point_segment_distance({0.37, 0.41}, {-0.2, 0.1}, {0.6, -0.3});
  CHECK(std::abs(d - oracle::grid_distance({0.37, 0.41}, {-0.2, 0.1}, {0.6, -0.3}, 1000000)) < 1e-6);
  Rng rng(3, 0);
  for (int i = 0; i < 200; ++i) {
    const Point2 u{rng.uniform(-1.5, 1.5), rng.uniform(-1.5, 1.5)};
    const Point2 a{rng.uniform(-1, 1), rng.uniform(-1, 1)}, b{rng.uniform(-1, 1), rng.uniform(-1, 1)};
    CHECK(std::abs(point_segment_distance(u, a, b) - oracle::grid_distance(u, a, b, 20001)) < 1e-6);
  }
}

TEST_CASE("fast grid oracle agrees with the exhaustive grid scan") {
  Rng rng(4, 0);
  for (int i = 0; i < 300; ++i) {
    const Point2 u{rng.uniform(-1, 1), rng.uniform(-1, 1)};
    const Point2 a{rng.uniform(-1, 1), rng.uniform(-1, 1)};
    const Point2 b = i % 10 == 0 ? a : Point2{rng.uniform(-1, 1), rng.uniform(-1, 1)};
    CHECK(oracle::grid_distance_fast(u, a, b, 10000) == doctest::Approx(oracle::grid_distance(u, a, b, 10000)).epsilon(1e-12));
  }
}

TEST_CASE("EdgeSet validation") {
  CHECK_NOTHROW(EdgeSet(3, {{0, 1}, {2, 1}}, {{0, 2}}));
  CHECK(EdgeSet(3, {{2, 1}}).edges().front() == Edge{1, 2});
  CHECK_THROWS_AS(EdgeSet(3, {{0, 3}}), std::invalid_argument);
  CHECK_THROWS_AS(EdgeSet(3, {{1, 1}}), std::invalid_argument);
  CHECK_THROWS_AS(EdgeSet(3, {{0, 1}, {1, 0}}), std::invalid_argument);
  CHECK_THROWS_AS(EdgeSet(4, {{0, 1}}, {{0, 1}, {1, 2}}), std::invalid_argument);
  CHECK_THROWS_AS(EdgeSet(4, {{0, 1}}, {{0, 4}}), std::invalid_argument);
  CHECK_THROWS_AS(EdgeSet(0, {}), std::invalid_argument);
  const auto fig = EdgeSet::stick_figure();
  CHECK(fig.num_keypoints() == 8);
  CHECK(fig.edges().size() == 7);
}

TEST_CASE("pixel centers") {
  const Resolution res{4, 8};
  CHECK(pixel_center(res, 0, 0) == Point2{-7.0 / 8.0, -0.75});
  CHECK(pixel_center(res, 3, 7) == Point2{7.0 / 8.0, 0.75});
}

TEST_CASE("render_skeleton closed-form cases") {
  SUBCASE("distance 0.2 at gamma 25") {
    const EdgeSet e(2, {{0, 1}});
    const std::vector<Point2> p{{-1.0, -0.1}, {1.0, -0.1}};
    const auto img = render_skeleton(p, e, {10, 10}, 25.0);
    // row 5 has y = 0.1
    for (int col = 0; col < 10; ++col) CHECK(img.at(5, col) == doctest::Approx(std::exp(-1.0)).epsilon(1e-12));
  }
  SUBCASE("on-segment pixel is exactly 1") {
    const EdgeSet e(2, {{0, 1}});
    const std::vector<Point2> p{{-1.0, 1.0 / 16}, {1.0, 1.0 / 16}};
    const auto img = render_skeleton(p, e, {16, 16}, 25.0);
    CHECK(img.at(8, 3) == 1.0);
    CHECK(img.max() == 1.0);
  }
  SUBCASE("degenerate edge is an isotropic point field") {
    const EdgeSet e(2, {{0, 1}});
    const std::vector<Point2> p{{0, 0}, {0, 0}};
    const Resolution res{12, 12};
    const auto img = render_skeleton(p, e, res, 25.0);
    for (int r = 0; r < 12; ++r) {
      for (int c = 0; c < 12; ++c) {
        const auto u = oracle::center(r, c, 12, 12);
        CHECK(img.at(r, c) == doctest::Approx(std::exp(-25.0 * (u.x * u.x + u.y * u.y))).epsilon(1e-14));
      }
    }
  }
}

TEST_CASE("render_skeleton rejects bad input") {
  const std::vector<Point2> p{{0, 0}, {0.5, 0.5}};
  CHECK_THROWS_AS(render_skeleton(p, EdgeSet(2, {}), {8, 8}, 25.0), std::invalid_argument);
  CHECK_THROWS_AS(render_skeleton(p, EdgeSet(3, {{0, 1}}), {8, 8}, 25.0), std::invalid_argument);
  CHECK_THROWS_AS(render_skeleton(p, EdgeSet(2, {{0, 1}}), {8, 8}, 0.0), std::invalid_argument);
}

TEST_CASE("render_skeleton matches the r-grid oracle on random figures") {
  Rng rng(11, 0);
  const auto edges = EdgeSet::stick_figure();
  const Resolution res{32, 32};
  double worst = 0.0;
  for (int f = 0; f < 5; ++f) {
    const auto p = oracle::random_figure(rng, 8);
    const auto img = render_skeleton(p, edges, res, 25.0);
    for (int r = 0; r < res.height; ++r) {
      for (int c = 0; c < res.width; ++c) {
        const auto u = oracle::center(r, c, res.height, res.width);
        double d = 1e300;
        for (const auto& e : edges.edges()) d = std::min(d, oracle::grid_distance_fast(u, p[e.i], p[e.j], 10000));
        worst = std::max(worst, std::abs(img.at(r, c) - std::exp(-25.0 * d * d)));
        CHECK(img.at(r, c) >= 0.0);
        CHECK(img.at(r, c) <= 1.0);
      }
    }
  }
  CHECK(worst < 1e-6);
}

TEST_CASE("render_skeleton invariances") {
  Rng rng(12, 0);
  const auto p = oracle::random_figure(rng, 4);
  const EdgeSet a(4, {{0, 1}, {1, 2}, {2, 3}});
  const EdgeSet b(4, {{3, 2}, {0, 1}, {2, 1}});
  const auto ia = render_skeleton(p, a, {24, 20}, 25.0);
  const auto ib = render_skeleton(p, b, {24, 20}, 25.0);
  CHECK(ia.pixels == ib.pixels);
  SUBCASE("increasing gamma never brightens") {
    const auto lo = render_skeleton(p, a, {24, 20}, 10.0);
    const auto hi = render_skeleton(p, a, {24, 20}, 40.0);
    for (std::size_t i = 0; i < lo.pixels.size(); ++i) {
      CHECK(hi.pixels[i] <= lo.pixels[i]);
      if (lo.pixels[i] < 1.0 && lo.pixels[i] > 1e-300) CHECK(hi.pixels[i] < lo.pixels[i]);
    }
  }
}

TEST_CASE("render_skeleton_gradient agrees with central differences") {
  Rng rng(21, 0);
  const auto edges = EdgeSet::stick_figure();
  const Resolution res{64, 64};
  const double h = 1e-4;
  int probes = 0;
  while (probes < 60) {
    auto p = oracle::random_figure(rng, 8);
    const auto jac = render_skeleton_gradient(p, edges, res, 25.0);
    const int row = static_cast<int>(rng.below(64)), col = static_cast<int>(rng.below(64));
    const int k = static_cast<int>(rng.below(8)), axis = static_cast<int>(rng.below(2));
    const auto [dists, arg] = oracle::edge_distances(oracle::center(row, col, 64, 64), p, edges, 2001);
    if (dists.size() > 1 && dists[1] - dists[0] < 1e-3) continue;
    const double g = jac.at(row, col, k, axis);
    if (std::abs(g) < 1e-6) continue;
    auto plus = p, minus = p;
    (axis == 0 ? plus[k].x : plus[k].y) += h;
    (axis == 0 ? minus[k].x : minus[k].y) -= h;
    const double fd =
        (render_skeleton(plus, edges, res, 25.0).at(row, col) - render_skeleton(minus, edges, res, 25.0).at(row, col)) /
        (2 * h);
    CHECK(std::abs(g - fd) / std::max(std::abs(g), std::abs(fd)) < 1e-3);
    ++probes;
  }
}

TEST_CASE("gradient of a rigid translation is minus the spatial gradient") {
  Rng rng(22, 0);
  const auto edges = EdgeSet::stick_figure();
  const auto p = oracle::random_figure(rng, 8);
  const Resolution res{32, 32};
  const auto jac = render_skeleton_gradient(p, edges, res, 25.0);
  const double h = 1e-5;
  for (int i = 0; i < 50; ++i) {
    const int row = static_cast<int>(rng.below(32)), col = static_cast<int>(rng.below(32));
    const auto u = oracle::center(row, col, 32, 32);
    const auto [dists, arg] = oracle::edge_distances(u, p, edges, 2001);
    if (dists[1] - dists[0] < 1e-3) continue;
    for (int axis = 0; axis < 2; ++axis) {
      double directional = 0.0;
      for (int k = 0; k < 8; ++k) directional += jac.at(row, col, k, axis);
      const Point2 du{axis == 0 ? h : 0.0, axis == 1 ? h : 0.0};
      const double spatial =
          (field_at({u.x + du.x, u.y + du.y}, p, edges, 25.0) - field_at({u.x - du.x, u.y - du.y}, p, edges, 25.0)) /
          (2 * h);
      CHECK(directional == doctest::Approx(-spatial).epsilon(1e-4).scale(1e-6));
    }
  }
}

TEST_CASE("gradient vanishes where the field underflows") {
  const EdgeSet e(2, {{0, 1}});
  const std::vector<Point2> p{{-0.95, -0.95}, {-0.9, -0.95}};
  const auto img = render_skeleton(p, e, {64, 64}, 2500.0);
  const auto jac = render_skeleton_gradient(p, e, {64, 64}, 2500.0);
  CHECK(img.at(63, 63) == 0.0);
  for (int k = 0; k < 2; ++k) {
    for (int a = 0; a < 2; ++a) CHECK(jac.at(63, 63, k, a) == 0.0);
  }
}

TEST_CASE("keypoints_from_heatmaps") {
  const Resolution res{8, 10};
  SUBCASE("constant heatmap") {
    std::vector<double> h(res.pixels(), 3.0);
    const auto kp = keypoints_from_heatmaps(h, 1, res);
    CHECK(kp[0].x == doctest::Approx(0.0).scale(1.0).epsilon(1e-12));
    CHECK(kp[0].y == doctest::Approx(0.0).scale(1.0).epsilon(1e-12));
  }
  SUBCASE("saturated peak at the top-left pixel") {
    std::vector<double> h(res.pixels(), 0.0);
    h[0] = 100.0;
    const auto kp = keypoints_from_heatmaps(h, 1, res);
    CHECK(std::abs(kp[0].x - (-0.9)) < 1e-3);
    CHECK(std::abs(kp[0].y - (-0.875)) < 1e-3);
  }
  SUBCASE("mirrored peaks") {
    std::vector<double> h(res.pixels(), 0.0);
    h[2 * 10 + 1] = 50.0;
    h[2 * 10 + 8] = 50.0;
    const auto kp = keypoints_from_heatmaps(h, 1, res);
    CHECK(std::abs(kp[0].x) < 1e-12);
    CHECK(kp[0].y == doctest::Approx(oracle::center(2, 0, 8, 10).y));
  }
  SUBCASE("channels are independent and stay strictly inside the square") {
    std::vector<double> h(2 * res.pixels(), 0.0);
    h[res.pixels() - 1] = 1e4;
    h[res.pixels()] = 1e4;
    const auto kp = keypoints_from_heatmaps(h, 2, res);
    CHECK(kp[0] == oracle::center(7, 9, 8, 10));
    CHECK(kp[1] == oracle::center(0, 0, 8, 10));
    for (const auto& q : kp) {
      CHECK(std::abs(q.x) < 1.0);
      CHECK(std::abs(q.y) < 1.0);
    }
  }
}

TEST_CASE("thin-plate spline warps") {
  const Resolution res{32, 32};
  const auto img = smooth_pattern(res);
  SUBCASE("identity reproduces the image bit for bit") {
    CHECK(tps_apply(ThinPlateSplineWarp::identity(), img).data == img.data);
    CHECK(tps_apply(tps_sample(5, 0.0), img).data == img.data);
  }
  SUBCASE("one-pixel translation shifts and replicates the edge column") {
    const ThinPlateSplineWarp shift({}, {}, {1, 0, 2.0 / res.width, 0, 1, 0});
    const auto out = tps_apply(shift, img);
    for (int c = 0; c < 3; ++c) {
      for (int r = 0; r < res.height; ++r) {
        for (int q = 0; q + 1 < res.width; ++q) CHECK(out.at(c, r, q) == doctest::Approx(img.at(c, r, q + 1)));
        CHECK(out.at(c, r, res.width - 1) == doctest::Approx(img.at(c, r, res.width - 1)));
      }
    }
  }
  SUBCASE("same seed, same warp") {
    const auto a = tps_sample(9, 0.1), b = tps_sample(9, 0.1);
    CHECK((a.displacements() == b.displacements()));
    CHECK((a.control_points() == b.control_points()));
  }
  SUBCASE("interpolates the control displacements") {
    const auto w = tps_sample(10, 0.1);
    for (std::size_t i = 0; i < w.control_points().size(); ++i) {
      const auto s = w(w.control_points()[i]);
      CHECK(s.x == doctest::Approx(w.control_points()[i].x + w.displacements()[i].x).epsilon(1e-9));
      CHECK(s.y == doctest::Approx(w.control_points()[i].y + w.displacements()[i].y).epsilon(1e-9));
    }
  }
  SUBCASE("displacement bounded by the dense-grid maximum") {
    const auto w = tps_sample(13, 0.1, 4);
    double dense_max = 0.0;
    for (int i = 0; i <= 200; ++i) {
      for (int j = 0; j <= 200; ++j) {
        const Point2 u{-1.0 + i / 100.0, -1.0 + j / 100.0};
        const auto s = w(u);
        dense_max = std::max(dense_max, std::hypot(s.x - u.x, s.y - u.y));
      }
    }
    Rng rng(14, 0);
    double mean = 0.0;
    for (int n = 0; n < 1000; ++n) {
      const Point2 u{rng.uniform(-1, 1), rng.uniform(-1, 1)};
      const auto s = w(u);
      mean += std::hypot(s.x - u.x, s.y - u.y) / 1000.0;
    }
    CHECK(mean > 0.0);
    CHECK(mean <= dense_max);
    const auto out = tps_apply(w, img);
    CHECK(out.data != img.data);
  }
  SUBCASE("numerical inverse round trip") {
    const auto w = tps_sample(15, 0.08);
    const auto warped = tps_apply(w, img);
    double err = 0.0;
    for (int c = 0; c < 3; ++c) {
      for (int r = 0; r < res.height; ++r) {
        for (int q = 0; q < res.width; ++q) {
          const auto u = oracle::center(r, q, res.height, res.width);
          err += std::abs(sample(warped, c, w.inverse(u)) - img.at(c, r, q));
        }
      }
    }
    CHECK(err / (3.0 * res.pixels()) < 0.05);
  }
  SUBCASE("keypoints follow the image content") {
    const auto w = tps_sample(16, 0.08);
    const std::vector<Point2> kp{{0.1, 0.2}, {-0.4, 0.3}, {0.5, -0.6}};
    const auto moved = tps_transform_keypoints(w, kp);
    for (std::size_t i = 0; i < kp.size(); ++i) {
      const auto back = w(moved[i]);
      CHECK(back.x == doctest::Approx(kp[i].x).epsilon(1e-9));
      CHECK(back.y == doctest::Approx(kp[i].y).epsilon(1e-9));
    }
  }
}

}  // TEST_SUITE
