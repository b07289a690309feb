#include "kpgan/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <queue>
#include <stdexcept>

#include "kpgan/random.hpp"

namespace kpgan {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kFrameMargin = 0.92;

struct Kinematics {
  std::vector<int> parent;      // -1 for the root
  std::vector<int> parent_edge; // edge index joining keypoint to its parent
  std::vector<int> order;       // breadth-first from the root
};

Kinematics kinematic_tree(const SyntheticFigureSpec& spec) {
  const int k = spec.edges.num_keypoints();
  Kinematics kin{std::vector<int>(k, -2), std::vector<int>(k, -1), {}};
  kin.parent[spec.root] = -1;
  std::queue<int> frontier;
  frontier.push(spec.root);
  while (!frontier.empty()) {
    const int cur = frontier.front();
    frontier.pop();
    kin.order.push_back(cur);
    const auto& edges = spec.edges.edges();
    for (std::size_t e = 0; e < edges.size(); ++e) {
      int other = -1;
      if (edges[e].i == cur) other = edges[e].j;
      if (edges[e].j == cur) other = edges[e].i;
      if (other >= 0 && kin.parent[other] == -2) {
        kin.parent[other] = cur;
        kin.parent_edge[other] = static_cast<int>(e);
        frontier.push(other);
      }
    }
  }
  if (static_cast<int>(kin.order.size()) != k) throw std::invalid_argument("SyntheticFigureSpec: skeleton is not a tree");
  return kin;
}

void hsv_to_rgb(double h, double s, double v, float out[3]) {
  h = std::fmod(h, 1.0) * 6.0;
  const int sector = static_cast<int>(h) % 6;
  const double f = h - std::floor(h);
  const double p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
  double r = v, g = t, b = p;
  switch (sector) {
    case 1: r = q, g = v, b = p; break;
    case 2: r = p, g = v, b = t; break;
    case 3: r = p, g = q, b = v; break;
    case 4: r = t, g = p, b = v; break;
    case 5: r = v, g = p, b = q; break;
    default: break;
  }
  out[0] = static_cast<float>(r);
  out[1] = static_cast<float>(g);
  out[2] = static_cast<float>(b);
}

double segment_param(Point2 u, Point2 a, Point2 b) {
  const double ex = b.x - a.x, ey = b.y - a.y;
  const double len2 = ex * ex + ey * ey;
  if (len2 == 0.0) return 0.0;
  return std::clamp(((u.x - a.x) * ex + (u.y - a.y) * ey) / len2, 0.0, 1.0);
}

}  // namespace

SyntheticFigureSpec SyntheticFigureSpec::stick_figure() {
  SyntheticFigureSpec spec;
  spec.limb_lengths = {0.24, 0.30, 0.28, 0.30, 0.28, 0.80, 0.80};
  spec.joint_angle_ranges = {
      {-kPi / 2 - 0.35, -kPi / 2 + 0.35},  // head
      {-0.25, 0.25},                       // neck: body tilt
      {0.55 * kPi, 1.30 * kPi},            // l-elbow
      {-1.3, 1.3},                         // l-hand, relative to upper arm
      {-0.30 * kPi, 0.45 * kPi},           // r-elbow
      {-1.3, 1.3},                         // r-hand
      {kPi / 2 + 0.08, kPi / 2 + 0.42},    // l-foot
      {kPi / 2 - 0.42, kPi / 2 - 0.08},    // r-foot
  };
  return spec;
}

void SyntheticFigureSpec::validate() const {
  const auto n_edges = edges.edges().size();
  if (limb_lengths.size() != n_edges) throw std::invalid_argument("SyntheticFigureSpec: one limb length per edge");
  for (double len : limb_lengths) {
    if (!(len > 0.0)) throw std::invalid_argument("SyntheticFigureSpec: limb lengths must be positive");
  }
  if (static_cast<int>(joint_angle_ranges.size()) != edges.num_keypoints()) {
    throw std::invalid_argument("SyntheticFigureSpec: one angle range per keypoint");
  }
  for (const auto& [lo, hi] : joint_angle_ranges) {
    if (!(lo <= hi)) throw std::invalid_argument("SyntheticFigureSpec: empty angle range");
  }
  if (root < 0 || root >= edges.num_keypoints()) throw std::invalid_argument("SyntheticFigureSpec: bad root");
  if (!(limb_radius > 0.0)) throw std::invalid_argument("SyntheticFigureSpec: limb radius must be positive");
  if (!(motion_smoothness >= 0.0)) throw std::invalid_argument("SyntheticFigureSpec: smoothness must be >= 0");
  if (appearance_seed_space == 0) throw std::invalid_argument("SyntheticFigureSpec: empty appearance seed space");
  kinematic_tree(*this);
}

std::uint64_t SyntheticFigureSpec::hash() const {
  std::uint64_t h = 1469598103934665603ULL;  // FNV-1a
  auto mix_bytes = [&h](const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 1099511628211ULL;
    }
  };
  auto mix_d = [&](double v) { mix_bytes(&v, sizeof v); };
  auto mix_i = [&](std::int64_t v) { mix_bytes(&v, sizeof v); };
  mix_i(edges.num_keypoints());
  for (const auto& e : edges.edges()) mix_i(e.i * 1000 + e.j);
  for (const auto& [l, r] : edges.symmetric_pairs()) mix_i(l * 1000 + r);
  for (double v : limb_lengths) mix_d(v);
  for (const auto& [lo, hi] : joint_angle_ranges) mix_d(lo), mix_d(hi);
  mix_i(root);
  mix_d(root_x_range.first), mix_d(root_x_range.second);
  mix_d(root_y_range.first), mix_d(root_y_range.second);
  mix_i(static_cast<std::int64_t>(appearance_seed_space));
  mix_d(motion_smoothness);
  mix_d(limb_radius);
  return h;
}

Appearance Appearance::sample(std::uint64_t identity_seed) {
  Rng rng(identity_seed, /*stream=*/0xa99);
  Appearance a;
  a.identity_seed = identity_seed;
  const double bg_hue = rng.uniform();
  hsv_to_rgb(bg_hue, rng.uniform(0.1, 0.5), rng.uniform(0.15, 0.45), a.background);
  hsv_to_rgb(bg_hue + rng.uniform(-0.15, 0.15), rng.uniform(0.1, 0.5), rng.uniform(0.05, 0.35), a.background_alt);
  a.stripe_angle = rng.uniform(0.0, kPi);
  a.stripe_frequency = rng.uniform(2.0, 6.0);
  a.stripe_phase = rng.uniform(0.0, 2 * kPi);
  const double limb_hue = rng.uniform();
  hsv_to_rgb(limb_hue, rng.uniform(0.5, 0.9), rng.uniform(0.75, 1.0), a.limb);
  hsv_to_rgb(limb_hue + rng.uniform(0.2, 0.5), rng.uniform(0.4, 0.9), rng.uniform(0.6, 0.95), a.limb_alt);
  hsv_to_rgb(rng.uniform(), rng.uniform(0.3, 0.8), rng.uniform(0.8, 1.0), a.head);
  a.texture_phase = rng.uniform(0.0, 2 * kPi);
  a.texture_frequency = rng.uniform(8.0, 20.0);
  a.scale = rng.uniform(0.85, 1.05);
  return a;
}

Image Sequence::frame(int t) const {
  Image img(3, resolution);
  const std::size_t n = img.data.size();
  const std::uint8_t* src = frames.data() + static_cast<std::size_t>(t) * n;
  for (std::size_t i = 0; i < n; ++i) img.data[i] = static_cast<float>(src[i]) / 255.0f;
  return img;
}

KeypointSet figure_keypoints(const SyntheticFigureSpec& spec, std::span<const double> angles, Point2 root_pos,
                             double scale) {
  const auto kin = kinematic_tree(spec);
  const int k = spec.edges.num_keypoints();
  KeypointSet pts(k);
  std::vector<double> heading(k, 0.0);
  pts[spec.root] = root_pos;
  heading[spec.root] = angles[spec.root];
  for (int node : kin.order) {
    if (node == spec.root) continue;
    const int par = kin.parent[node];
    heading[node] = par == spec.root ? angles[spec.root] + angles[node] : heading[par] + angles[node];
    const double len = scale * spec.limb_lengths[kin.parent_edge[node]];
    pts[node] = {pts[par].x + len * std::cos(heading[node]), pts[par].y + len * std::sin(heading[node])};
  }
  // keep the whole figure inside the frame
  double lo_x = std::numeric_limits<double>::infinity(), hi_x = -lo_x, lo_y = lo_x, hi_y = -lo_x;
  for (const auto& p : pts) {
    lo_x = std::min(lo_x, p.x), hi_x = std::max(hi_x, p.x);
    lo_y = std::min(lo_y, p.y), hi_y = std::max(hi_y, p.y);
  }
  auto shift_for = [](double lo, double hi) {
    if (hi - lo > 2 * kFrameMargin) return -(lo + hi) / 2;
    if (lo < -kFrameMargin) return -kFrameMargin - lo;
    if (hi > kFrameMargin) return kFrameMargin - hi;
    return 0.0;
  };
  const double sx = shift_for(lo_x, hi_x), sy = shift_for(lo_y, hi_y);
  for (auto& p : pts) p.x += sx, p.y += sy;
  return pts;
}

Image render_figure(const SyntheticFigureSpec& spec, const Appearance& app, std::span<const Point2> keypoints,
                    Resolution res, bool limb_id_colors) {
  Image img(3, res);
  const auto& edges = spec.edges.edges();
  const double px_per_unit = res.width / 2.0;
  const double radius_px = spec.limb_radius * app.scale * px_per_unit;
  const double head_radius_px = 1.7 * radius_px;
  // draw order: edges touching the head last
  std::vector<std::size_t> order(edges.size());
  for (std::size_t e = 0; e < edges.size(); ++e) order[e] = e;

  for (int row = 0; row < res.height; ++row) {
    for (int col = 0; col < res.width; ++col) {
      const Point2 u = pixel_center(res, row, col);
      float rgb[3];
      if (limb_id_colors) {
        rgb[0] = rgb[1] = rgb[2] = 0.0f;
      } else {
        const double s = u.x * std::cos(app.stripe_angle) + u.y * std::sin(app.stripe_angle);
        const double w = 0.5 + 0.5 * std::sin(app.stripe_frequency * kPi * s + app.stripe_phase);
        for (int c = 0; c < 3; ++c) {
          rgb[c] = static_cast<float>((1 - w) * app.background[c] + w * app.background_alt[c]);
        }
      }
      for (std::size_t e : order) {
        const Point2 a = keypoints[edges[e].i], b = keypoints[edges[e].j];
        const double dist_px = point_segment_distance(u, a, b) * px_per_unit;
        if (limb_id_colors) {
          if (dist_px < radius_px) {
            // channel-coded limb id: value (e + 1) / 16 in red
            rgb[0] = static_cast<float>(e + 1) / 16.0f;
            rgb[1] = 0.0f;
            rgb[2] = 0.0f;
          }
          continue;
        }
        const double alpha = std::clamp(radius_px - dist_px + 0.5, 0.0, 1.0);
        if (alpha <= 0.0) continue;
        const double t = segment_param(u, a, b);
        const double len = std::hypot(b.x - a.x, b.y - a.y);
        const double w = 0.5 + 0.5 * std::sin(app.texture_frequency * t * len + app.texture_phase + 1.7 * e);
        for (int c = 0; c < 3; ++c) {
          const double limb = (1 - 0.6 * w) * app.limb[c] + 0.6 * w * app.limb_alt[c];
          rgb[c] = static_cast<float>((1 - alpha) * rgb[c] + alpha * limb);
        }
      }
      if (!limb_id_colors) {
        const Point2 head = keypoints[0];
        const double dist_px = std::hypot(u.x - head.x, u.y - head.y) * px_per_unit;
        const double alpha = std::clamp(head_radius_px - dist_px + 0.5, 0.0, 1.0);
        for (int c = 0; c < 3; ++c) rgb[c] = static_cast<float>((1 - alpha) * rgb[c] + alpha * app.head[c]);
      }
      for (int c = 0; c < 3; ++c) img.at(c, row, col) = std::clamp(rgb[c], 0.0f, 1.0f);
    }
  }
  return img;
}

std::vector<std::uint8_t> quantize(const Image& image) {
  std::vector<std::uint8_t> out(image.data.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = static_cast<std::uint8_t>(std::lround(std::clamp(image.data[i], 0.0f, 1.0f) * 255.0f));
  }
  return out;
}

Sequence generate_sequence(const SyntheticFigureSpec& spec, std::uint64_t seed, int length, Resolution res) {
  spec.validate();
  if (length < 2) throw std::invalid_argument("generate_sequence: length must be at least 2");
  Rng rng(seed, /*stream=*/0x5e9);
  Sequence seq;
  seq.seed = seed;
  seq.resolution = res;
  seq.appearance = Appearance::sample(rng.below(spec.appearance_seed_space));

  const int k = spec.edges.num_keypoints();
  const int n_params = k + 2;  // joint angles + root x, y
  std::vector<double> z(n_params), vel(n_params, 0.0);
  for (auto& v : z) v = rng.uniform();
  const double sigma = std::isinf(spec.motion_smoothness) ? 0.0 : 0.04 / (1.0 + spec.motion_smoothness);

  std::vector<double> angles(k);
  const std::size_t frame_size = static_cast<std::size_t>(3) * res.pixels();
  seq.frames.reserve(frame_size * length);
  for (int t = 0; t < length; ++t) {
    if (t > 0) {
      for (int i = 0; i < n_params; ++i) {
        vel[i] = 0.9 * vel[i] + sigma * rng.normal();
        z[i] += vel[i];
        if (z[i] < 0.0) z[i] = -z[i], vel[i] = -vel[i];
        if (z[i] > 1.0) z[i] = 2.0 - z[i], vel[i] = -vel[i];
        z[i] = std::clamp(z[i], 0.0, 1.0);
      }
    }
    for (int j = 0; j < k; ++j) {
      const auto [lo, hi] = spec.joint_angle_ranges[j];
      angles[j] = lo + (hi - lo) * z[j];
    }
    const Point2 root{spec.root_x_range.first + (spec.root_x_range.second - spec.root_x_range.first) * z[k],
                      spec.root_y_range.first + (spec.root_y_range.second - spec.root_y_range.first) * z[k + 1]};
    auto pts = figure_keypoints(spec, angles, root, seq.appearance.scale);
    const auto pixels = quantize(render_figure(spec, seq.appearance, pts, res));
    seq.frames.insert(seq.frames.end(), pixels.begin(), pixels.end());
    seq.keypoints.push_back(std::move(pts));
  }
  return seq;
}

}  // namespace kpgan
