#include "kpgan/tensor_ops.hpp"

#include <stdexcept>

namespace kpgan {

torch::Tensor pixel_center_grid(Resolution res, torch::Dtype dtype) {
  auto opts = torch::TensorOptions().dtype(torch::kFloat64);
  auto xs = (torch::arange(res.width, opts) * 2.0 + 1.0) / res.width - 1.0;
  auto ys = (torch::arange(res.height, opts) * 2.0 + 1.0) / res.height - 1.0;
  auto grid = torch::stack({xs.view({1, res.width}).expand({res.height, res.width}),
                            ys.view({res.height, 1}).expand({res.height, res.width})},
                           -1);
  return grid.to(dtype);
}

torch::Tensor render_skeleton_batch(const torch::Tensor& keypoints, const EdgeSet& edges, Resolution res,
                                    double gamma) {
  TORCH_CHECK(keypoints.dim() == 3 && keypoints.size(2) == 2, "render_skeleton_batch: expected B x K x 2");
  TORCH_CHECK(keypoints.size(1) == edges.num_keypoints(), "render_skeleton_batch: K does not match edge set");
  if (edges.edges().empty()) throw std::invalid_argument("render_skeleton_batch: empty edge set");
  TORCH_CHECK(gamma > 0.0, "render_skeleton_batch: gamma must be positive");

  const auto batch = keypoints.size(0);
  std::vector<int64_t> first, second;
  for (const auto& e : edges.edges()) {
    first.push_back(e.i);
    second.push_back(e.j);
  }
  auto idx_opts = torch::TensorOptions().dtype(torch::kLong);
  // B x E x 1 x 2 segment endpoints against 1 x 1 x P x 2 pixel centers
  auto a = keypoints.index_select(1, torch::tensor(first, idx_opts)).unsqueeze(2);
  auto b = keypoints.index_select(1, torch::tensor(second, idx_opts)).unsqueeze(2);
  auto u = pixel_center_grid(res, keypoints.scalar_type()).view({1, 1, res.pixels(), 2});

  auto dir = b - a;
  auto len2 = (dir * dir).sum(-1);
  auto degenerate = len2 <= 0;
  auto safe_len2 = torch::where(degenerate, torch::ones_like(len2), len2);
  auto t = ((u - a) * dir).sum(-1) / safe_len2;
  t = torch::where(degenerate, torch::zeros_like(t), t.clamp(0.0, 1.0));
  auto closest = a + t.unsqueeze(-1) * dir;
  auto diff = u - closest;
  auto dist2 = (diff * diff).sum(-1);  // B x E x P
  auto nearest = std::get<0>(dist2.min(1));
  return torch::exp(-gamma * nearest).view({batch, 1, res.height, res.width});
}

torch::Tensor spatial_softmax_keypoints(const torch::Tensor& heatmaps) {
  TORCH_CHECK(heatmaps.dim() == 4, "spatial_softmax_keypoints: expected B x K x H x W");
  const auto b = heatmaps.size(0), k = heatmaps.size(1), h = heatmaps.size(2), w = heatmaps.size(3);
  auto prob = torch::softmax(heatmaps.reshape({b, k, h * w}), -1);
  auto grid = pixel_center_grid({static_cast<int>(h), static_cast<int>(w)}, heatmaps.scalar_type()).view({h * w, 2});
  return torch::matmul(prob, grid);
}

torch::Tensor keypoints_to_tensor(const std::vector<KeypointSet>& batch, torch::Dtype dtype) {
  if (batch.empty()) throw std::invalid_argument("keypoints_to_tensor: empty batch");
  const auto k = static_cast<int64_t>(batch.front().size());
  auto out = torch::empty({static_cast<int64_t>(batch.size()), k, 2}, torch::kFloat64);
  auto acc = out.accessor<double, 3>();
  for (std::size_t s = 0; s < batch.size(); ++s) {
    if (static_cast<int64_t>(batch[s].size()) != k) throw std::invalid_argument("keypoints_to_tensor: ragged batch");
    for (int64_t j = 0; j < k; ++j) {
      acc[s][j][0] = batch[s][j].x;
      acc[s][j][1] = batch[s][j].y;
    }
  }
  return out.to(dtype);
}

std::vector<KeypointSet> tensor_to_keypoints(const torch::Tensor& keypoints) {
  auto cpu = keypoints.detach().to(torch::kFloat64).contiguous();
  auto acc = cpu.accessor<double, 3>();
  std::vector<KeypointSet> out(cpu.size(0), KeypointSet(cpu.size(1)));
  for (int64_t s = 0; s < cpu.size(0); ++s) {
    for (int64_t j = 0; j < cpu.size(1); ++j) out[s][j] = {acc[s][j][0], acc[s][j][1]};
  }
  return out;
}

}  // namespace kpgan
