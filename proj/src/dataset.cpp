#include "kpgan/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>
#include <stdexcept>

#include "kpgan/image_io.hpp"
#include "kpgan/pose_io.hpp"
#include "kpgan/tensor_ops.hpp"

namespace kpgan {

namespace fs = std::filesystem;

namespace {

std::string numbered(const char* prefix, int i, const char* suffix = "") {
  std::ostringstream os;
  os << prefix << std::setw(4) << std::setfill('0') << i << suffix;
  return os.str();
}

template <class T>
void shuffle(std::vector<T>& items, Rng& rng) {
  for (std::size_t i = items.size(); i > 1; --i) std::swap(items[i - 1], items[rng.below(i)]);
}

torch::Tensor frame_tensor(const Sequence& seq, int t) {
  const auto res = seq.resolution;
  const std::size_t n = static_cast<std::size_t>(3) * res.pixels();
  auto bytes = torch::from_blob(const_cast<std::uint8_t*>(seq.frames.data() + n * t), {3, res.height, res.width},
                                torch::kUInt8);
  return bytes.to(torch::kFloat32) / 255.0;
}

}  // namespace

Dataset generate_dataset(const SyntheticFigureSpec& spec, int num_sequences, int length, Resolution res,
                         std::uint64_t base_seed) {
  spec.validate();
  Dataset ds{spec, res, {}};
  ds.sequences.reserve(num_sequences);
  Rng seeder(base_seed, /*stream=*/0xda7a);
  for (int i = 0; i < num_sequences; ++i) ds.sequences.push_back(generate_sequence(spec, seeder.next(), length, res));
  return ds;
}

void save_dataset(const Dataset& dataset, const fs::path& dir) {
  fs::create_directories(dir);
  write_topology_file(dir / "topology.txt", dataset.edges());
  for (std::size_t i = 0; i < dataset.sequences.size(); ++i) {
    const auto& seq = dataset.sequences[i];
    const fs::path seq_dir = dir / numbered("seq_", static_cast<int>(i));
    fs::create_directories(seq_dir);
    for (int t = 0; t < seq.length(); ++t) write_png(seq_dir / numbered("frame_", t, ".png"), seq.frame(t));
    write_keypoint_samples_file(seq_dir / "keypoints.txt", seq.keypoints);
    std::ofstream meta(seq_dir / "meta");
    meta << "seed " << seq.seed << "\n"
         << "identity_seed " << seq.appearance.identity_seed << "\n"
         << "spec_hash " << dataset.spec.hash() << "\n"
         << "length " << seq.length() << "\n";
  }
}

Dataset load_dataset(const fs::path& dir, const SyntheticFigureSpec& spec) {
  Dataset ds{spec, {}, {}};
  std::vector<fs::path> seq_dirs;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_directory() && entry.path().filename().string().rfind("seq_", 0) == 0) seq_dirs.push_back(entry.path());
  }
  std::sort(seq_dirs.begin(), seq_dirs.end());
  if (seq_dirs.empty()) throw std::runtime_error("load_dataset: no sequences under " + dir.string());
  for (const auto& seq_dir : seq_dirs) {
    Sequence seq;
    std::ifstream meta(seq_dir / "meta");
    std::string key;
    std::uint64_t value = 0;
    while (meta >> key >> value) {
      if (key == "seed") seq.seed = value;
      if (key == "identity_seed") seq.appearance = Appearance::sample(value);
      if (key == "spec_hash" && value != spec.hash()) {
        throw std::runtime_error("load_dataset: " + seq_dir.string() + " was generated with a different figure spec");
      }
    }
    seq.keypoints = read_keypoint_samples_file(seq_dir / "keypoints.txt");
    for (int t = 0; t < seq.length(); ++t) {
      const Image img = read_png(seq_dir / numbered("frame_", t, ".png"));
      if (t == 0) seq.resolution = img.resolution;
      const auto bytes = quantize(img);
      seq.frames.insert(seq.frames.end(), bytes.begin(), bytes.end());
    }
    ds.resolution = seq.resolution;
    ds.sequences.push_back(std::move(seq));
  }
  return ds;
}

bool DatasetSplit::disjoint() const {
  std::set<int> a(image_half.begin(), image_half.end());
  return std::none_of(prior_half.begin(), prior_half.end(), [&a](int i) { return a.count(i) > 0; });
}

DatasetSplit build_split(int num_sequences, std::uint64_t seed) {
  if (num_sequences < 2) throw std::invalid_argument("build_split: need at least 2 sequences");
  std::vector<int> order(num_sequences);
  for (int i = 0; i < num_sequences; ++i) order[i] = i;
  Rng rng(seed, /*stream=*/0x5b1);
  shuffle(order, rng);
  const int image_count = (num_sequences + 1) / 2;
  DatasetSplit split;
  split.seed = seed;
  split.image_half.assign(order.begin(), order.begin() + image_count);
  split.prior_half.assign(order.begin() + image_count, order.end());
  std::sort(split.image_half.begin(), split.image_half.end());
  std::sort(split.prior_half.begin(), split.prior_half.end());
  return split;
}

PairBatch sample_frame_pair(const Dataset& dataset, const DatasetSplit& split, Rng& rng, int batch_size) {
  if (split.image_half.empty()) throw std::invalid_argument("sample_frame_pair: empty image half");
  PairBatch batch;
  std::vector<torch::Tensor> xs, xps;
  std::vector<KeypointSet> gt;
  for (int b = 0; b < batch_size; ++b) {
    const int s = split.image_half[rng.below(split.image_half.size())];
    const auto& seq = dataset.sequences[s];
    const int n = seq.length();
    if (n < 2) throw std::invalid_argument("sample_frame_pair: sequence of length < 2");
    const int t1 = static_cast<int>(rng.below(n));
    int t2 = static_cast<int>(rng.below(n - 1));
    if (t2 >= t1) ++t2;
    xs.push_back(frame_tensor(seq, t1));
    xps.push_back(frame_tensor(seq, t2));
    gt.push_back(seq.keypoints[t1]);
    batch.sequence_ids.push_back(s);
    batch.frame_ids.emplace_back(t1, t2);
  }
  batch.images = {torch::stack(xs), torch::stack(xps)};
  batch.gt_keypoints = keypoints_to_tensor(gt);
  return batch;
}

PairBatch sample_tps_pair(const Dataset& dataset, const DatasetSplit& split, Rng& rng, int batch_size,
                          double magnitude) {
  if (split.image_half.empty()) throw std::invalid_argument("sample_tps_pair: empty image half");
  PairBatch batch;
  std::vector<torch::Tensor> xs, xps;
  std::vector<KeypointSet> gt;
  for (int b = 0; b < batch_size; ++b) {
    const int s = split.image_half[rng.below(split.image_half.size())];
    const auto& seq = dataset.sequences[s];
    const int t = static_cast<int>(rng.below(seq.length()));
    const Image source = seq.frame(t);
    const auto g1 = tps_sample(rng.next(), magnitude);
    const auto g2 = tps_sample(rng.next(), magnitude);
    xs.push_back(image_to_tensor(tps_apply(g1, source)));
    xps.push_back(image_to_tensor(tps_apply(g2, source)));
    gt.push_back(tps_transform_keypoints(g1, seq.keypoints[t]));
    batch.sequence_ids.push_back(s);
    batch.frame_ids.emplace_back(t, t);
  }
  batch.images = {torch::stack(xs), torch::stack(xps)};
  batch.gt_keypoints = keypoints_to_tensor(gt);
  return batch;
}

PriorBank::PriorBank(const Dataset& dataset, const DatasetSplit& split, std::optional<long long> size_limit)
    : dataset_(&dataset) {
  if (split.prior_half.empty()) throw std::invalid_argument("PriorBank: empty prior half");
  if (!split.disjoint()) throw std::invalid_argument("PriorBank: split halves overlap");
  entries_ = all_frames(dataset, split.prior_half);
  Rng rng(split.seed, /*stream=*/0x9a1);
  shuffle(entries_, rng);
  if (size_limit) {
    if (*size_limit < 1 || static_cast<std::size_t>(*size_limit) > entries_.size()) {
      throw std::invalid_argument("PriorBank: size limit " + std::to_string(*size_limit) + " exceeds the " +
                                  std::to_string(entries_.size()) + " available prior poses");
    }
    entries_.resize(static_cast<std::size_t>(*size_limit));
  }
}

torch::Tensor PriorBank::sample(Rng& rng, int batch_size, std::vector<std::pair<int, int>>* sources) const {
  std::vector<KeypointSet> poses;
  poses.reserve(batch_size);
  for (int b = 0; b < batch_size; ++b) {
    const auto& entry = entries_[rng.below(entries_.size())];
    poses.push_back(dataset_->sequences[entry.first].keypoints[entry.second]);
    if (sources) sources->push_back(entry);
  }
  return keypoints_to_tensor(poses);
}

std::vector<KeypointSet> PriorBank::poses() const {
  std::vector<KeypointSet> out;
  out.reserve(entries_.size());
  for (const auto& [s, t] : entries_) out.push_back(dataset_->sequences[s].keypoints[t]);
  return out;
}

std::vector<std::pair<int, int>> all_frames(const Dataset& dataset, const std::vector<int>& sequences) {
  std::vector<std::pair<int, int>> out;
  for (int s : sequences) {
    for (int t = 0; t < dataset.sequences[s].length(); ++t) out.emplace_back(s, t);
  }
  return out;
}

FrameBatch gather_frames(const Dataset& dataset, const std::vector<std::pair<int, int>>& frames) {
  if (frames.empty()) throw std::invalid_argument("gather_frames: no frames");
  std::vector<torch::Tensor> images;
  std::vector<KeypointSet> gt;
  FrameBatch out;
  for (const auto& [s, t] : frames) {
    images.push_back(frame_tensor(dataset.sequences[s], t));
    gt.push_back(dataset.sequences[s].keypoints[t]);
    out.sequence_ids.push_back(s);
  }
  out.images = torch::stack(images);
  out.keypoints = keypoints_to_tensor(gt);
  return out;
}

torch::Tensor image_to_tensor(const Image& image) {
  return torch::from_blob(const_cast<float*>(image.data.data()),
                          {image.channels, image.resolution.height, image.resolution.width}, torch::kFloat32)
      .clone();
}

Image tensor_to_image(const torch::Tensor& chw) {
  auto t = chw.detach().to(torch::kFloat32).contiguous();
  TORCH_CHECK(t.dim() == 3, "tensor_to_image: expected C x H x W");
  Image img(static_cast<int>(t.size(0)), {static_cast<int>(t.size(1)), static_cast<int>(t.size(2))});
  std::copy(t.data_ptr<float>(), t.data_ptr<float>() + t.numel(), img.data.begin());
  return img;
}

}  // namespace kpgan
