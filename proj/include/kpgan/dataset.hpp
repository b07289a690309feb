#pragma once

// In-memory synthetic datasets, the image/prior split and the three training
// samplers (video frame pairs, thin-plate-spline pairs, unpaired prior).

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "kpgan/random.hpp"
#include "kpgan/synthetic.hpp"

namespace kpgan {

struct Dataset {
  SyntheticFigureSpec spec;
  Resolution resolution;
  std::vector<Sequence> sequences;

  int num_keypoints() const { return spec.edges.num_keypoints(); }
  const EdgeSet& edges() const { return spec.edges; }
};

/// Sequence i uses seed mix(base_seed, i); identical inputs give identical data.
Dataset generate_dataset(const SyntheticFigureSpec& spec, int num_sequences, int length, Resolution res,
                         std::uint64_t base_seed);

/// Directory of `seq_NNNN/` folders with `frame_NNNN.png`, `keypoints.txt`
/// and `meta`, plus `topology.txt` at the top level.
void save_dataset(const Dataset& dataset, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir, const SyntheticFigureSpec& spec);

struct DatasetSplit {
  std::vector<int> image_half;  // sequences supplying (x, x')
  std::vector<int> prior_half;  // sequences supplying unpaired poses
  std::uint64_t seed = 0;

  bool disjoint() const;
};

/// Random disjoint halves; the image half gets the extra sequence when odd.
DatasetSplit build_split(int num_sequences, std::uint64_t seed);

/// Images for the training loop. Ground truth is deliberately absent.
struct TrainingPair {
  torch::Tensor x;        // B x 3 x H x W, [0, 1]
  torch::Tensor x_prime;  // same identity as x
};

struct PairBatch {
  TrainingPair images;
  std::vector<int> sequence_ids;
  std::vector<std::pair<int, int>> frame_ids;  // (t for x, t for x') in video mode
  std::optional<torch::Tensor> gt_keypoints;   // B x K x 2 for x; evaluation only

  TrainingPair training_view() const { return images; }
};

/// Both frames from one image-half sequence, distinct time indices drawn uniformly.
PairBatch sample_frame_pair(const Dataset& dataset, const DatasetSplit& split, Rng& rng, int batch_size);

/// Two independent random TPS warps of one image-half frame; ground truth for
/// x is carried through its warp.
PairBatch sample_tps_pair(const Dataset& dataset, const DatasetSplit& split, Rng& rng, int batch_size,
                          double magnitude);

/// Unpaired pose bank over the prior-half sequences. Entries are held in a
/// seed-determined shuffled order; a size limit keeps only the first entries.
class PriorBank {
 public:
  PriorBank(const Dataset& dataset, const DatasetSplit& split, std::optional<long long> size_limit);

  /// B x K x 2 poses drawn uniformly from the bank.
  torch::Tensor sample(Rng& rng, int batch_size, std::vector<std::pair<int, int>>* sources = nullptr) const;

  std::size_t size() const { return entries_.size(); }
  const std::vector<std::pair<int, int>>& entries() const { return entries_; }  // (sequence, frame)
  std::vector<KeypointSet> poses() const;

 private:
  const Dataset* dataset_;
  std::vector<std::pair<int, int>> entries_;
};

/// Frames [first, first + count) of the flattened (sequence, frame) list over
/// `sequences`, stacked as B x 3 x H x W plus B x K x 2 ground truth.
struct FrameBatch {
  torch::Tensor images;
  torch::Tensor keypoints;
  std::vector<int> sequence_ids;
};
FrameBatch gather_frames(const Dataset& dataset, const std::vector<std::pair<int, int>>& frames);

/// Every (sequence, frame) pair of the given sequences, in order.
std::vector<std::pair<int, int>> all_frames(const Dataset& dataset, const std::vector<int>& sequences);

torch::Tensor image_to_tensor(const Image& image);
Image tensor_to_image(const torch::Tensor& chw);

}  // namespace kpgan
