#include "kpgan/evaluation.hpp"

#include <algorithm>
#include <iomanip>
#include <ostream>
#include <stdexcept>

#include "kpgan/image_io.hpp"
#include "kpgan/tensor_ops.hpp"
#include "kpgan/training.hpp"

namespace kpgan {

namespace {

void require_keypoints(const torch::Tensor& pred, const torch::Tensor& gt, const char* what) {
  if (pred.dim() != 3 || pred.size(2) != 2 || pred.sizes() != gt.sizes() || pred.size(0) == 0) {
    throw std::invalid_argument(std::string(what) + ": expected matching nonempty B x K x 2 tensors");
  }
}

EvalReport summarize(const std::string& metric, const torch::Tensor& per_sample_keypoint) {
  auto d = per_sample_keypoint.to(torch::kFloat64);
  EvalReport report;
  report.metric = metric;
  report.mean = d.mean().item<double>();
  auto per_k = d.mean(0).contiguous();
  report.per_keypoint.assign(per_k.data_ptr<double>(), per_k.data_ptr<double>() + per_k.numel());
  report.n_samples = d.size(0);
  return report;
}

torch::Tensor with_batch(const torch::Tensor& chw) { return chw.dim() == 3 ? chw.unsqueeze(0) : chw; }

}  // namespace

void write_eval_csv_header(std::ostream& out, int num_keypoints) {
  out << "metric,mean";
  for (int k = 0; k < num_keypoints; ++k) out << ",per_keypoint_" << k;
  out << ",n_samples,config_hash\n";
}

void write_eval_csv_row(std::ostream& out, const EvalReport& report) {
  out << report.metric << "," << std::setprecision(10) << report.mean;
  for (double v : report.per_keypoint) out << "," << v;
  out << "," << report.n_samples << "," << std::hex << std::setw(16) << std::setfill('0') << report.config_hash
      << std::dec << std::setfill(' ') << "\n";
}

torch::Tensor keypoint_pixel_distances(const torch::Tensor& pred, const torch::Tensor& gt, Resolution res) {
  require_keypoints(pred, gt, "keypoint_pixel_distances");
  auto scale = torch::tensor({res.width / 2.0, res.height / 2.0}, torch::kFloat64);
  auto diff = (pred.to(torch::kFloat64) - gt.to(torch::kFloat64)) * scale;
  return diff.square().sum(2).sqrt();
}

EvalReport normalized_error_pct(const torch::Tensor& pred, const torch::Tensor& gt, int image_side) {
  if (image_side <= 0) throw std::invalid_argument("normalized_error_pct: image side must be positive");
  auto d = keypoint_pixel_distances(pred, gt, {image_side, image_side});
  return summarize("error_pct", d * (100.0 / image_side));
}

EvalReport pixel_mse_subset(const torch::Tensor& pred, const torch::Tensor& gt, const std::vector<int>& joint_subset,
                            Resolution res) {
  if (joint_subset.empty()) throw std::invalid_argument("pixel_mse_subset: empty joint subset");
  for (int k : joint_subset) {
    if (k < 0 || k >= pred.size(1)) throw std::invalid_argument("pixel_mse_subset: joint index out of range");
  }
  auto idx = torch::tensor(std::vector<int64_t>(joint_subset.begin(), joint_subset.end()), torch::kLong);
  auto d = keypoint_pixel_distances(pred.index_select(1, idx), gt.index_select(1, idx), res);
  return summarize("pixel_error", d);
}

EvalReport interocular_error(const torch::Tensor& pred, const torch::Tensor& gt, int left_ref, int right_ref) {
  require_keypoints(pred, gt, "interocular_error");
  const auto K = pred.size(1);
  if (left_ref < 0 || right_ref < 0 || left_ref >= K || right_ref >= K || left_ref == right_ref) {
    throw std::invalid_argument("interocular_error: bad reference keypoints");
  }
  auto g = gt.to(torch::kFloat64);
  auto ref = (g.select(1, left_ref) - g.select(1, right_ref)).square().sum(1).sqrt();
  if ((ref <= 0).any().item<bool>()) throw std::invalid_argument("interocular_error: coincident reference keypoints");
  auto d = (pred.to(torch::kFloat64) - g).square().sum(2).sqrt();
  return summarize("interocular_pct", d / ref.unsqueeze(1) * 100.0);
}

torch::Tensor AffineRegressor::apply(const torch::Tensor& keypoints) const {
  if (!weights_.defined()) throw std::logic_error("AffineRegressor: not fitted");
  const auto B = keypoints.size(0);
  if (keypoints.size(1) * 2 + 1 != weights_.size(0)) throw std::invalid_argument("AffineRegressor: wrong keypoint count");
  auto design = torch::cat({keypoints.to(torch::kFloat64).reshape({B, -1}), torch::ones({B, 1}, torch::kFloat64)}, 1);
  return design.matmul(weights_).reshape({B, -1, 2});
}

AffineRegressor supervised_postprocess_fit(const torch::Tensor& unsup_pred, const torch::Tensor& gt) {
  if (unsup_pred.dim() != 3 || gt.dim() != 3 || unsup_pred.size(0) != gt.size(0) || unsup_pred.size(0) == 0) {
    throw std::invalid_argument("supervised_postprocess_fit: expected B x K x 2 and B x K' x 2 with equal B");
  }
  const auto B = unsup_pred.size(0);
  auto design =
      torch::cat({unsup_pred.to(torch::kFloat64).reshape({B, -1}), torch::ones({B, 1}, torch::kFloat64)}, 1);
  auto target = gt.to(torch::kFloat64).reshape({B, -1});
  const auto rank = torch::linalg_matrix_rank(design).item<int64_t>();
  const bool deficient = rank < design.size(1);
  auto weights = deficient ? torch::linalg_pinv(design).matmul(target)
                           : std::get<0>(torch::linalg_lstsq(design, target, c10::nullopt, c10::nullopt));
  return AffineRegressor(weights, deficient);
}

SwapResult swap_demo(ModelBundle& model, const EdgeSet& edges, double gamma, const torch::Tensor& x_target,
                     const torch::Tensor& x_style) {
  torch::NoGradGuard no_grad;
  const auto targets = with_batch(x_target);
  const auto styles = with_batch(x_style);
  if (targets.sizes() != styles.sizes()) throw std::invalid_argument("swap_demo: target and style batches differ");
  model.eval();
  const Resolution res{static_cast<int>(targets.size(2)), static_cast<int>(targets.size(3))};
  auto p = model.eta_forward(model.phi_forward(targets));
  SwapResult out;
  out.images = model.psi_forward(render_skeleton_batch(p, edges, res, gamma), styles);
  auto p_again = model.eta_forward(model.phi_forward(out.images));
  out.pose_cycle_error = (p_again - p).square().sum(2).sqrt().mean(1);
  return out;
}

Image swap_grid(ModelBundle& model, const EdgeSet& edges, double gamma, const torch::Tensor& targets,
                const torch::Tensor& styles) {
  const auto T = targets.size(0);
  const auto S = styles.size(0);
  if (T == 0 || S == 0) throw std::invalid_argument("swap_grid: empty targets or styles");
  std::vector<Image> tiles;
  tiles.push_back(Image(3, {static_cast<int>(targets.size(2)), static_cast<int>(targets.size(3))}, 1.0f));
  for (int64_t t = 0; t < T; ++t) tiles.push_back(tensor_to_image(targets[t]));
  for (int64_t s = 0; s < S; ++s) {
    tiles.push_back(tensor_to_image(styles[s]));
    auto row = swap_demo(model, edges, gamma, targets, styles[s].unsqueeze(0).expand_as(targets).contiguous());
    for (int64_t t = 0; t < T; ++t) tiles.push_back(tensor_to_image(row.images[t].clamp(0.0, 1.0)));
  }
  return tile_images(tiles, static_cast<int>(T + 1));
}

EditResult edit_keypoints_demo(ModelBundle& model, const EdgeSet& edges, double gamma, const torch::Tensor& x,
                               const std::map<int, Point2>& edits, double radius_px) {
  if (x.dim() != 3) throw std::invalid_argument("edit_keypoints_demo: expected a single 3 x H x W image");
  torch::NoGradGuard no_grad;
  model.eval();
  const Resolution res{static_cast<int>(x.size(1)), static_cast<int>(x.size(2))};
  auto xb = x.unsqueeze(0);
  EditResult out;
  out.detected = model.eta_forward(model.phi_forward(xb))[0];
  out.edited = out.detected.clone();
  for (const auto& [k, p] : edits) {
    if (k < 0 || k >= edges.num_keypoints()) throw std::invalid_argument("edit_keypoints_demo: keypoint out of range");
    out.edited[k][0] = p.x;
    out.edited[k][1] = p.y;
  }
  out.reconstruction = model.psi_forward(render_skeleton_batch(out.detected.unsqueeze(0), edges, res, gamma), xb)[0];
  out.image = edits.empty() ? out.reconstruction.clone()
                            : model.psi_forward(render_skeleton_batch(out.edited.unsqueeze(0), edges, res, gamma), xb)[0];
  out.redetected = model.eta_forward(model.phi_forward(out.image.unsqueeze(0)))[0];

  // locality: discs around the old and new positions of every edited keypoint
  auto grid = pixel_center_grid(res, torch::kFloat64);  // H x W x 2
  auto scale = torch::tensor({res.width / 2.0, res.height / 2.0}, torch::kFloat64);
  auto inside = torch::zeros({res.height, res.width}, torch::kBool);
  for (const auto& [k, p] : edits) {
    for (const auto& c : {out.detected[k].to(torch::kFloat64), out.edited[k].to(torch::kFloat64)}) {
      auto dist = ((grid - c) * scale).square().sum(2).sqrt();
      inside = inside | (dist <= radius_px);
    }
  }
  auto change = (out.image - out.reconstruction).abs().mean(0).to(torch::kFloat64);
  const auto n_in = inside.sum().item<int64_t>();
  const auto n_out = inside.numel() - n_in;
  out.change_inside = n_in ? change.masked_select(inside).mean().item<double>() : 0.0;
  out.change_outside = n_out ? change.masked_select(~inside).mean().item<double>() : 0.0;
  return out;
}

EvalReport evaluate_model(ModelBundle& model, const Dataset& test, const EdgeSet& edges, bool correct_orientation,
                          int max_samples, std::uint64_t config_hash) {
  if (test.sequences.empty()) throw std::invalid_argument("evaluate_model: empty test set");
  std::vector<int> seqs(test.sequences.size());
  for (std::size_t i = 0; i < seqs.size(); ++i) seqs[i] = static_cast<int>(i);
  auto frames = all_frames(test, seqs);
  if (max_samples > 0 && static_cast<std::size_t>(max_samples) < frames.size()) {
    std::vector<std::pair<int, int>> picked;
    for (int i = 0; i < max_samples; ++i) picked.push_back(frames[i * frames.size() / max_samples]);
    frames = std::move(picked);
  }
  const bool was_training = model.phi->is_training();
  model.eval();
  std::vector<torch::Tensor> preds, gts;
  for (std::size_t start = 0; start < frames.size(); start += 64) {
    std::vector<std::pair<int, int>> chunk(frames.begin() + start,
                                           frames.begin() + std::min(frames.size(), start + 64));
    auto batch = gather_frames(test, chunk);
    preds.push_back(predict_keypoints(model, batch.images, edges, correct_orientation));
    gts.push_back(batch.keypoints);
  }
  model.train(was_training);
  auto report = normalized_error_pct(torch::cat(preds), torch::cat(gts), test.resolution.width);
  report.config_hash = config_hash;
  return report;
}

}  // namespace kpgan
