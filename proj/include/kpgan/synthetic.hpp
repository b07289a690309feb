#pragma once

// Synthetic articulated-figure videos with exact keypoint ground truth.

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "kpgan/pose_geometry.hpp"

namespace kpgan {

struct SyntheticFigureSpec {
  EdgeSet edges = EdgeSet::stick_figure();
  /// Per edge, in normalized units, same order as edges.edges().
  std::vector<double> limb_lengths;
  /// Per keypoint (min, max) radians. The root keypoint's range is the body
  /// tilt; limbs attached to the root are absolute angles in the tilted body
  /// frame; deeper limbs are relative to their parent limb.
  std::vector<std::pair<double, double>> joint_angle_ranges;
  int root = 1;
  /// Root position box, normalized coordinates.
  std::pair<double, double> root_x_range{-0.3, 0.3};
  std::pair<double, double> root_y_range{-0.45, -0.15};
  /// Identity seeds are drawn from [0, appearance_seed_space).
  std::uint64_t appearance_seed_space = 1u << 30;
  /// Larger values give slower motion; infinity freezes the trajectory.
  double motion_smoothness = 1.0;
  /// Limb half-thickness in normalized units.
  double limb_radius = 0.075;

  static SyntheticFigureSpec stick_figure();
  void validate() const;
  /// Stable hash over every field, recorded in dataset metadata.
  std::uint64_t hash() const;
};

struct Appearance {
  std::uint64_t identity_seed = 0;
  float background[3]{};
  float background_alt[3]{};
  double stripe_angle = 0.0;
  double stripe_frequency = 0.0;
  double stripe_phase = 0.0;
  float limb[3]{};
  float limb_alt[3]{};
  float head[3]{};
  double texture_phase = 0.0;
  double texture_frequency = 0.0;
  double scale = 1.0;

  static Appearance sample(std::uint64_t identity_seed);
};

struct Sequence {
  std::uint64_t seed = 0;
  Appearance appearance;
  Resolution resolution;
  /// T x 3 x H x W, 8-bit.
  std::vector<std::uint8_t> frames;
  std::vector<KeypointSet> keypoints;

  int length() const { return static_cast<int>(keypoints.size()); }
  Image frame(int t) const;
};

/// Forward kinematics for one pose parameter vector (one value per keypoint,
/// root entry is the tilt) at root position `root_pos`.
KeypointSet figure_keypoints(const SyntheticFigureSpec& spec, std::span<const double> angles, Point2 root_pos,
                             double scale);

/// Renders one frame. With `limb_id_colors` each limb is drawn flat in a
/// distinct color over black (used for verification).
Image render_figure(const SyntheticFigureSpec& spec, const Appearance& appearance, std::span<const Point2> keypoints,
                    Resolution res, bool limb_id_colors = false);

Sequence generate_sequence(const SyntheticFigureSpec& spec, std::uint64_t seed, int length, Resolution res);

std::vector<std::uint8_t> quantize(const Image& image);

}  // namespace kpgan
