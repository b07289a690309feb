#pragma once

// Two-stage optimization: regressor pre-training on rendered prior poses,
// then alternating discriminator / generator updates of the full objective.

#include <torch/torch.h>

#include <deque>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>

#include "kpgan/config.hpp"
#include "kpgan/dataset.hpp"
#include "kpgan/models.hpp"
#include "kpgan/objectives.hpp"

namespace kpgan {

/// A run was stopped: non-finite loss or a failed pre-training threshold.
class TrainingAborted : public std::runtime_error {
 public:
  TrainingAborted(std::string component, const std::string& message)
      : std::runtime_error(message), component_(std::move(component)) {}
  const std::string& component() const { return component_; }

 private:
  std::string component_;
};

struct TrainState {
  TrainState(const TrainConfig& config, EdgeSet edges);

  TrainConfig config;
  EdgeSet edges;
  ModelBundle model;
  FeatureExtractor features;
  std::unique_ptr<torch::optim::Adam> gen_opt;
  std::unique_ptr<torch::optim::Adam> disc_opt;
  std::unique_ptr<torch::optim::Adam> image_disc_opt;
  long long iteration = 0;
  Rng pair_rng;
  Rng prior_rng;
  std::deque<LossReport> history;  // most recent reports, bounded
  /// Post-clip global gradient norms of the last step.
  double last_gen_grad_norm = 0.0;
  double last_disc_grad_norm = 0.0;

  static constexpr std::size_t kHistoryCapacity = 1000;

  void save(const std::filesystem::path& path) const;
  /// Restores configuration, parameters, optimizer moments, RNG streams and
  /// the iteration counter.
  static std::unique_ptr<TrainState> load(const std::filesystem::path& path);

  Resolution resolution() const { return config.image_resolution(); }
  torch::Tensor render(const torch::Tensor& keypoints) const;
};

struct PretrainReport {
  long long steps = 0;
  double rms = 0.0;  // on the fixed evaluation poses
  std::vector<std::pair<long long, double>> loss_trace;  // (step, batch loss)
};

/// Regresses eta on rendered prior poses until the RMS keypoint error on
/// `eval_poses` drops below config.pretrain_target_rms or the step cap is
/// hit, then freezes the snapshot. Throws TrainingAborted when the final RMS
/// is above config.pretrain_abort_rms.
PretrainReport pretrain_eta(TrainState& state, const PriorBank& prior, const torch::Tensor& eval_poses,
                            const std::function<void(const std::string&)>& log = {});

/// RMS keypoint distance of eta(render(p)) against p.
double eta_rms(TrainState& state, const torch::Tensor& poses, bool frozen = false);

struct Reconstruction {
  torch::Tensor y;          // phi(x)
  torch::Tensor keypoints;  // eta(y); undefined without the bottleneck
  torch::Tensor y_star;     // skeleton image handed to the decoder
  torch::Tensor x_hat;
};

/// The generator path of a training step. With the bottleneck, the decoder
/// only sees render(eta(phi(x))), so the pose reaches it as 2K numbers.
Reconstruction reconstruct(TrainState& state, const torch::Tensor& x, const std::optional<torch::Tensor>& style);

/// One discriminator step followed by one generator step.
LossReport train_step(TrainState& state, const TrainingPair& pair, const torch::Tensor& prior_poses);

/// Signed area of the polygon l_1..l_m, r_m..r_1 over the symmetric pairs.
torch::Tensor orientation_statistic(const torch::Tensor& keypoints, const EdgeSet& edges);

/// Swaps every symmetric pair in samples whose orientation disagrees with
/// the frozen regressor's reading of `y`.
torch::Tensor orientation_correction(const torch::Tensor& keypoints, const torch::Tensor& y, ModelBundle& model,
                                     const EdgeSet& edges);

/// Final keypoints for a batch of images: eta(phi(x)), orientation-corrected when enabled.
torch::Tensor predict_keypoints(ModelBundle& model, const torch::Tensor& images, const EdgeSet& edges,
                                bool correct_orientation);

struct RunPaths {
  std::filesystem::path out_dir;
  std::optional<std::filesystem::path> resume;
};

struct RunResult {
  std::filesystem::path final_checkpoint;
  double final_error_pct = 0.0;
  long long iterations = 0;
};

/// Pre-trains eta when the state has no frozen snapshot, then runs the
/// alternating loop up to config.iterations. Writes `loss.csv` (append-only),
/// `eval.csv`, `pretrain.csv`, `checkpoints/` and `final.pt` under out_dir.
RunResult run_training(const TrainConfig& config, const Dataset& train, const Dataset& test, const RunPaths& paths,
                       const std::function<void(const std::string&)>& log = {});

/// Builds the edge set named by config.topology (built-in stick figure when empty).
EdgeSet topology_for(const TrainConfig& config);

/// Synthetic figure spec consistent with the configuration.
SyntheticFigureSpec figure_spec_for(const TrainConfig& config);

}  // namespace kpgan
