#pragma once

// Batched, autograd-aware counterparts of the pose_geometry primitives.

#include <torch/torch.h>

#include <vector>

#include "kpgan/pose_geometry.hpp"

namespace kpgan {

/// B x K x 2 keypoints -> B x 1 x H x W skeleton images (exp(-gamma d^2)).
/// Runs in the dtype of `keypoints`; minimizer ties resolve to the first edge.
torch::Tensor render_skeleton_batch(const torch::Tensor& keypoints, const EdgeSet& edges, Resolution res,
                                    double gamma);

/// B x K x H x W logits -> B x K x 2 expected pixel-center coordinates.
torch::Tensor spatial_softmax_keypoints(const torch::Tensor& heatmaps);

/// H x W x 2 grid of normalized pixel centers (x, y).
torch::Tensor pixel_center_grid(Resolution res, torch::Dtype dtype = torch::kFloat32);

torch::Tensor keypoints_to_tensor(const std::vector<KeypointSet>& batch, torch::Dtype dtype = torch::kFloat32);
std::vector<KeypointSet> tensor_to_keypoints(const torch::Tensor& keypoints);

}  // namespace kpgan
