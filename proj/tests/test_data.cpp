#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <map>
#include <set>

#include "kpgan/dataset.hpp"
#include "kpgan/synthetic.hpp"

using namespace kpgan;
namespace fs = std::filesystem;

namespace {

struct LimbEstimate {
  Point2 a, b;
};

double dist(Point2 a, Point2 b) { return std::hypot(a.x - b.x, a.y - b.y); }

double segment_dist(Point2 u, Point2 a, Point2 b) {
  const double dx = b.x - a.x, dy = b.y - a.y;
  const double len2 = dx * dx + dy * dy;
  const double t = len2 > 0 ? std::clamp(((u.x - a.x) * dx + (u.y - a.y) * dy) / len2, 0.0, 1.0) : 0.0;
  return std::hypot(a.x + t * dx - u.x, a.y + t * dy - u.y);
}

std::vector<std::pair<Point2, bool>> limb_mask(const Image& img, float value, Resolution res) {
  std::vector<std::pair<Point2, bool>> mask;
  for (int r = 0; r < res.height; ++r) {
    for (int c = 0; c < res.width; ++c) {
      mask.push_back({{(2.0 * c + 1.0) / res.width - 1.0, (2.0 * r + 1.0) / res.height - 1.0},
                      std::abs(img.at(0, r, c) - value) < 1e-6f});
    }
  }
  return mask;
}

/// Moment estimate: area gives the length of a capsule with known radius,
/// centroid and principal axis give its placement.
LimbEstimate moment_fit(const std::vector<std::pair<Point2, bool>>& mask, double radius, Resolution res) {
  const double pixel_area = (2.0 / res.width) * (2.0 / res.height);
  double n = 0, mx = 0, my = 0;
  for (const auto& [p, in] : mask) {
    if (in) n += 1, mx += p.x, my += p.y;
  }
  mx /= n, my /= n;
  double sxx = 0, syy = 0, sxy = 0;
  for (const auto& [p, in] : mask) {
    if (!in) continue;
    sxx += (p.x - mx) * (p.x - mx);
    syy += (p.y - my) * (p.y - my);
    sxy += (p.x - mx) * (p.y - my);
  }
  const double theta = 0.5 * std::atan2(2 * sxy, sxx - syy);
  const double length = std::max(0.0, (n * pixel_area - M_PI * radius * radius) / (2.0 * radius));
  const Point2 dir{std::cos(theta), std::sin(theta)};
  return {{mx - 0.5 * length * dir.x, my - 0.5 * length * dir.y}, {mx + 0.5 * length * dir.x, my + 0.5 * length * dir.y}};
}

/// Template matching: endpoints minimizing the squared difference between
/// the mask and a soft capsule template, by shrinking coordinate search.
LimbEstimate template_fit(const Image& img, float value, double radius, Resolution res) {
  const auto mask = limb_mask(img, value, res);
  auto fit = moment_fit(mask, radius, res);
  const double pixel = 2.0 / res.width;
  auto cost = [&](const LimbEstimate& e) {
    double total = 0;
    for (const auto& [p, in] : mask) {
      const double soft = 1.0 / (1.0 + std::exp(-(radius - segment_dist(p, e.a, e.b)) / (0.25 * pixel)));
      total += (soft - (in ? 1.0 : 0.0)) * (soft - (in ? 1.0 : 0.0));
    }
    return total;
  };
  double best = cost(fit);
  for (double step = pixel; step > pixel / 64; step /= 2) {
    bool improved = true;
    while (improved) {
      improved = false;
      for (double* v : {&fit.a.x, &fit.a.y, &fit.b.x, &fit.b.y}) {
        for (double d : {step, -step}) {
          *v += d;
          const double c = cost(fit);
          if (c < best) {
            best = c;
            improved = true;
          } else {
            *v -= d;
          }
        }
      }
    }
  }
  return fit;
}

Dataset small_dataset(int n, int length, std::uint64_t seed = 5) {
  return generate_dataset(SyntheticFigureSpec::stick_figure(), n, length, {32, 32}, seed);
}

}  // namespace

TEST_SUITE("data") {

TEST_CASE("figure spec validation") {
  auto spec = SyntheticFigureSpec::stick_figure();
  CHECK_NOTHROW(spec.validate());
  spec.limb_lengths[2] = 0.0;
  CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
  CHECK_THROWS_AS(generate_sequence(spec, 1, 4, {32, 32}), std::invalid_argument);
  auto spec2 = SyntheticFigureSpec::stick_figure();
  spec2.joint_angle_ranges[3] = {0.5, 0.2};
  CHECK_THROWS_AS(spec2.validate(), std::invalid_argument);
  CHECK_THROWS_AS(generate_sequence(SyntheticFigureSpec::stick_figure(), 1, 1, {32, 32}), std::invalid_argument);
}

TEST_CASE("sequences are reproducible from (spec, seed)") {
  const auto spec = SyntheticFigureSpec::stick_figure();
  const auto a = generate_sequence(spec, 77, 6, {32, 32});
  const auto b = generate_sequence(spec, 77, 6, {32, 32});
  const auto c = generate_sequence(spec, 78, 6, {32, 32});
  CHECK(a.frames == b.frames);
  CHECK((a.keypoints == b.keypoints));
  CHECK(a.frames != c.frames);
  CHECK(a.appearance.identity_seed == b.appearance.identity_seed);
}

TEST_CASE("infinite smoothness freezes the trajectory") {
  auto spec = SyntheticFigureSpec::stick_figure();
  spec.motion_smoothness = std::numeric_limits<double>::infinity();
  const auto seq = generate_sequence(spec, 3, 5, {32, 32});
  const std::size_t n = 3 * 32 * 32;
  for (int t = 1; t < 5; ++t) {
    CHECK((seq.keypoints[t] == seq.keypoints[0]));
    CHECK(std::equal(seq.frames.begin() + n * t, seq.frames.begin() + n * (t + 1), seq.frames.begin()));
  }
}

TEST_CASE("pose varies within a sequence, identity does not") {
  const auto seq = generate_sequence(SyntheticFigureSpec::stick_figure(), 9, 30, {32, 32});
  CHECK((seq.keypoints.front() != seq.keypoints.back()));
  for (const auto& kp : seq.keypoints) {
    REQUIRE(kp.size() == 8);
    for (const auto& p : kp) {
      CHECK(std::abs(p.x) <= 0.92 + 1e-12);
      CHECK(std::abs(p.y) <= 0.92 + 1e-12);
    }
  }
}

TEST_CASE("capsule template fit recovers the emitted keypoints within a pixel") {
  const auto spec = SyntheticFigureSpec::stick_figure();
  const Resolution res{64, 64};
  const double pixel = 2.0 / res.width;
  int frames = 0;
  for (std::uint64_t seed = 100; frames < 20; ++seed) {
    const auto seq = generate_sequence(spec, seed, 2, res);
    const auto& kp = seq.keypoints[0];
    const double radius = spec.limb_radius * seq.appearance.scale;
    std::map<int, std::vector<Point2>> estimates;
    for (const auto& e : spec.edges.edges()) {
      // each limb alone so no other limb occludes it
      auto single = spec;
      single.edges = EdgeSet(8, {e});
      const auto img = render_figure(single, seq.appearance, kp, res, true);
      auto fit = template_fit(img, 1.0f / 16.0f, radius, res);
      if (dist(fit.a, kp[e.i]) + dist(fit.b, kp[e.j]) > dist(fit.b, kp[e.i]) + dist(fit.a, kp[e.j])) {
        std::swap(fit.a, fit.b);
      }
      estimates[e.i].push_back(fit.a);
      estimates[e.j].push_back(fit.b);
    }
    for (const auto& [k, list] : estimates) {
      Point2 mean{};
      for (const auto& p : list) mean.x += p.x / list.size(), mean.y += p.y / list.size();
      INFO("seed " << seed << " keypoint " << k << " at " << kp[k].x << "," << kp[k].y << " limbs " << list.size());
      CHECK(dist(mean, kp[k]) < pixel);
    }
    ++frames;
  }
}

TEST_CASE("limb id rendering paints every limb") {
  const auto spec = SyntheticFigureSpec::stick_figure();
  const auto seq = generate_sequence(spec, 4, 2, {64, 64});
  const auto img = render_figure(spec, seq.appearance, seq.keypoints[0], {64, 64}, true);
  std::set<int> ids;
  for (float v : std::vector<float>(img.data.begin(), img.data.begin() + 64 * 64)) {
    if (v > 0) ids.insert(static_cast<int>(std::lround(v * 16)));
  }
  CHECK(ids.size() >= 6);  // a limb can be fully covered by later ones
}

TEST_CASE("dataset save and load round trip") {
  const auto ds = small_dataset(3, 4);
  const auto dir = fs::temp_directory_path() / "kpgan_test_dataset";
  fs::remove_all(dir);
  save_dataset(ds, dir);
  CHECK(fs::exists(dir / "topology.txt"));
  CHECK(fs::exists(dir / "seq_0001" / "frame_0003.png"));
  CHECK(fs::exists(dir / "seq_0002" / "meta"));
  const auto back = load_dataset(dir, SyntheticFigureSpec::stick_figure());
  REQUIRE(back.sequences.size() == 3);
  for (int i = 0; i < 3; ++i) {
    CHECK(back.sequences[i].frames == ds.sequences[i].frames);
    CHECK((back.sequences[i].keypoints == ds.sequences[i].keypoints));
    CHECK(back.sequences[i].seed == ds.sequences[i].seed);
  }
  auto other = SyntheticFigureSpec::stick_figure();
  other.limb_radius = 0.05;
  CHECK_THROWS(load_dataset(dir, other));
}

TEST_CASE("build_split") {
  const auto even = build_split(10, 1);
  CHECK(even.image_half.size() == 5);
  CHECK(even.prior_half.size() == 5);
  CHECK(even.disjoint());
  const auto odd = build_split(11, 1);
  CHECK(odd.image_half.size() == 6);
  CHECK(odd.prior_half.size() == 5);
  CHECK(odd.disjoint());
  std::set<int> all(odd.image_half.begin(), odd.image_half.end());
  all.insert(odd.prior_half.begin(), odd.prior_half.end());
  CHECK(all.size() == 11);
  CHECK(build_split(10, 1).image_half == even.image_half);
  std::set<std::vector<int>> distinct;
  // 10 sequences have only C(10,5) = 252 halves, so 100 seeds would repeat
  // ~17 times by chance; with 20 the expected repeat count is 100*99/2/184756
  for (std::uint64_t s = 0; s < 100; ++s) distinct.insert(build_split(20, s).image_half);
  CHECK(distinct.size() >= 95);
  CHECK_THROWS_AS(build_split(1, 0), std::invalid_argument);
}

TEST_CASE("frame pairs") {
  SUBCASE("length 2 gives the only pair in both orders") {
    const auto ds = small_dataset(2, 2);
    const auto split = build_split(2, 0);
    Rng rng(1, 0);
    const auto batch = sample_frame_pair(ds, split, rng, 200);
    std::set<std::pair<int, int>> seen(batch.frame_ids.begin(), batch.frame_ids.end());
    CHECK(seen == std::set<std::pair<int, int>>{{0, 1}, {1, 0}});
  }
  SUBCASE("uniform over image-half sequences and same identity") {
    const auto ds = small_dataset(10, 3);
    const auto split = build_split(10, 2);
    REQUIRE(split.image_half.size() == 5);
    Rng rng(2, 0);
    std::map<int, int> counts;
    const int n = 10000;
    const auto batch = sample_frame_pair(ds, split, rng, n);
    const auto& x = batch.images.x;
    const auto& xp = batch.images.x_prime;
    for (int b = 0; b < n; ++b) {
      const int s = batch.sequence_ids[b];
      ++counts[s];
      CHECK(std::find(split.image_half.begin(), split.image_half.end(), s) != split.image_half.end());
      CHECK(batch.frame_ids[b].first != batch.frame_ids[b].second);
    }
    const double p = 0.2, sigma = std::sqrt(n * p * (1 - p));
    for (const auto& [s, c] : counts) CHECK(std::abs(c - n * p) < 3 * sigma);
    CHECK(x.sizes() == xp.sizes());
    CHECK(batch.gt_keypoints->size(0) == n);
  }
}

TEST_CASE("thin-plate-spline pairs") {
  const auto ds = small_dataset(4, 3);
  const auto split = build_split(4, 0);
  SUBCASE("magnitude 0 gives x = x' = source") {
    Rng rng(3, 0);
    const auto batch = sample_tps_pair(ds, split, rng, 8, 0.0);
    for (int b = 0; b < 8; ++b) {
      const auto src = gather_frames(ds, {{batch.sequence_ids[b], batch.frame_ids[b].first}});
      CHECK(torch::equal(batch.images.x[b], src.images[0]));
      CHECK(torch::equal(batch.images.x_prime[b], src.images[0]));
      CHECK(torch::allclose(batch.gt_keypoints.value()[b], src.keypoints[0]));
    }
  }
  SUBCASE("warps differ between x and x'") {
    Rng rng(4, 0);
    const auto batch = sample_tps_pair(ds, split, rng, 4, 0.1);
    CHECK_FALSE(torch::equal(batch.images.x, batch.images.x_prime));
  }
}

TEST_CASE("prior bank") {
  const auto ds = small_dataset(10, 20);
  const auto split = build_split(10, 3);
  const std::set<int> image_half(split.image_half.begin(), split.image_half.end());
  SUBCASE("no limit covers the whole prior half") {
    const PriorBank bank(ds, split, std::nullopt);
    CHECK(bank.size() == 5 * 20);
    for (const auto& [s, t] : bank.entries()) CHECK(image_half.count(s) == 0);
  }
  SUBCASE("limit 50 draws from a fixed 50-element subset") {
    const PriorBank bank(ds, split, 50);
    const PriorBank again(ds, split, 50);
    CHECK(bank.entries() == again.entries());
    const std::set<std::pair<int, int>> allowed(bank.entries().begin(), bank.entries().end());
    CHECK(allowed.size() == 50);
    Rng rng(5, 0);
    std::vector<std::pair<int, int>> sources;
    bank.sample(rng, 5000, &sources);
    std::set<std::pair<int, int>> used(sources.begin(), sources.end());
    for (const auto& e : used) CHECK(allowed.count(e) == 1);
    CHECK(used.size() == 50);
  }
  SUBCASE("disjointness audit over 1e5 draws") {
    const PriorBank bank(ds, split, std::nullopt);
    Rng rng(6, 0);
    std::vector<std::pair<int, int>> sources;
    const auto poses = bank.sample(rng, 100000, &sources);
    CHECK(poses.sizes() == torch::IntArrayRef{100000, 8, 2});
    int violations = 0;
    for (const auto& [s, t] : sources) violations += image_half.count(s);
    CHECK(violations == 0);
  }
  SUBCASE("limit beyond the available poses is rejected") {
    CHECK_THROWS_AS(PriorBank(ds, split, 101), std::invalid_argument);
    CHECK_THROWS_AS(PriorBank(ds, split, 0), std::invalid_argument);
  }
}

}  // TEST_SUITE
