#pragma once

// Landmark metrics, the supervised linear post-processing baseline, and the
// appearance/geometry factorization probes.
//
// Percent error convention: mean Euclidean pixel distance divided by the
// image side length, times 100.

#include <torch/torch.h>

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "kpgan/config.hpp"
#include "kpgan/dataset.hpp"
#include "kpgan/models.hpp"

namespace kpgan {

struct EvalReport {
  std::string metric;
  double mean = 0.0;
  std::vector<double> per_keypoint;
  long long n_samples = 0;
  std::uint64_t config_hash = 0;
  std::map<std::string, double> per_activity;  // empty for the synthetic data
};

void write_eval_csv_header(std::ostream& out, int num_keypoints);
void write_eval_csv_row(std::ostream& out, const EvalReport& report);

/// Per-sample, per-keypoint Euclidean distance in pixels; normalized
/// coordinates map to pixels by (v + 1) / 2 * side.
torch::Tensor keypoint_pixel_distances(const torch::Tensor& pred, const torch::Tensor& gt, Resolution res);

EvalReport normalized_error_pct(const torch::Tensor& pred, const torch::Tensor& gt, int image_side);

/// Mean pixel error over `joint_subset` only.
EvalReport pixel_mse_subset(const torch::Tensor& pred, const torch::Tensor& gt, const std::vector<int>& joint_subset,
                            Resolution res);

/// Mean keypoint distance divided by the ground-truth distance between the
/// two reference keypoints, times 100.
EvalReport interocular_error(const torch::Tensor& pred, const torch::Tensor& gt, int left_ref, int right_ref);

/// Per target coordinate: linear map over all 2K predicted coordinates plus bias.
class AffineRegressor {
 public:
  AffineRegressor() = default;
  AffineRegressor(torch::Tensor weights, bool rank_deficient)
      : weights_(std::move(weights)), rank_deficient_(rank_deficient) {}

  /// B x K x 2 -> B x K' x 2
  torch::Tensor apply(const torch::Tensor& keypoints) const;
  /// (2K + 1) x 2K' coefficient matrix; the last row is the bias.
  const torch::Tensor& weights() const { return weights_; }
  bool rank_deficient() const { return rank_deficient_; }

 private:
  torch::Tensor weights_;
  bool rank_deficient_ = false;
};

/// Ordinary least squares; a rank-deficient design falls back to the
/// pseudo-inverse and is flagged on the result.
AffineRegressor supervised_postprocess_fit(const torch::Tensor& unsup_pred, const torch::Tensor& gt);

struct SwapResult {
  torch::Tensor images;           // B x 3 x H x W reconstructions
  torch::Tensor pose_cycle_error; // B, mean keypoint distance in normalized units
};

/// x_hat = psi(render(eta(phi(x_target))), x_style) and the distance between
/// keypoints re-detected on x_hat and those detected on x_target.
SwapResult swap_demo(ModelBundle& model, const EdgeSet& edges, double gamma, const torch::Tensor& x_target,
                     const torch::Tensor& x_style);

/// Styles as rows, targets as columns; the first row holds the targets and
/// the first column the styles.
Image swap_grid(ModelBundle& model, const EdgeSet& edges, double gamma, const torch::Tensor& targets,
                const torch::Tensor& styles);

struct EditResult {
  torch::Tensor image;         // 3 x H x W decoded after editing
  torch::Tensor reconstruction;// 3 x H x W decoded without editing
  torch::Tensor detected;      // K x 2 keypoints before editing
  torch::Tensor edited;        // K x 2 keypoints after editing
  torch::Tensor redetected;    // K x 2 keypoints detected on the edited image
  double change_inside = 0.0;  // mean abs pixel change within radius of edited points
  double change_outside = 0.0;
};

/// Moves detected keypoints, re-renders and decodes with x as its own style.
/// `radius_px` bounds the locality discs around the old and new positions.
EditResult edit_keypoints_demo(ModelBundle& model, const EdgeSet& edges, double gamma, const torch::Tensor& x,
                               const std::map<int, Point2>& edits, double radius_px = 8.0);

/// Test-set landmark error for a trained model; runs in inference mode.
EvalReport evaluate_model(ModelBundle& model, const Dataset& test, const EdgeSet& edges, bool correct_orientation,
                          int max_samples, std::uint64_t config_hash = 0);

}  // namespace kpgan
