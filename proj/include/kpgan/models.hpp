#pragma once

// Networks: image encoder (image -> skeleton image), conditional decoder
// (skeleton image + style image -> image), keypoint regressor (skeleton
// image -> keypoints), pose discriminator, optional image discriminator and
// the frozen perceptual feature extractor.

#include <torch/torch.h>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "kpgan/pose_geometry.hpp"

namespace kpgan {

struct ArchConfig {
  Resolution resolution{64, 64};
  int num_keypoints = 8;
  int encoder_width = 8;    // first-level channels of the image encoder
  int decoder_width = 8;    // first-level channels of the conditional decoder
  int unet_depth = 4;        // number of stride-2 levels
  int regressor_width = 16;
  int disc_width = 16;
  bool conditional_decoder = true;  // decoder sees the style image
  bool image_discriminator = false;

  void validate() const;
};

enum class FeatureMode { kIdentity, kRandomConv };

struct ConvBlockImpl : torch::nn::Module {
  ConvBlockImpl(int in, int out, int stride, bool instance_norm);
  torch::Tensor forward(const torch::Tensor& x);

  torch::nn::Conv2d conv{nullptr};
  torch::nn::InstanceNorm2d norm{nullptr};
};
TORCH_MODULE(ConvBlock);

/// Encoder-decoder with skip connections and a sigmoid output.
struct UNetImpl : torch::nn::Module {
  UNetImpl(int in_channels, int out_channels, int width, int depth);
  torch::Tensor forward(const torch::Tensor& x);

  ConvBlock stem{nullptr};
  torch::nn::ModuleList down, up;
  ConvBlock bottleneck{nullptr};
  torch::nn::Conv2d head{nullptr};
};
TORCH_MODULE(UNet);

/// Skeleton image -> K heatmaps (half resolution) -> spatial-softmax keypoints.
struct KeypointRegressorImpl : torch::nn::Module {
  KeypointRegressorImpl(int num_keypoints, int width);
  torch::Tensor heatmaps(const torch::Tensor& y);
  torch::Tensor forward(const torch::Tensor& y);

  torch::nn::Sequential enc1{nullptr}, enc2{nullptr}, enc3{nullptr}, dec2{nullptr}, dec1{nullptr};
  torch::nn::Conv2d out{nullptr};
};
TORCH_MODULE(KeypointRegressor);

/// Strided convolutional classifier; one sigmoid score per sample.
struct DiscriminatorImpl : torch::nn::Module {
  DiscriminatorImpl(int in_channels, int width, Resolution res);
  torch::Tensor logits(const torch::Tensor& y);  // pre-sigmoid
  torch::Tensor forward(const torch::Tensor& y);

  torch::nn::Sequential features{nullptr};
  torch::nn::Linear classifier{nullptr};
};
TORCH_MODULE(Discriminator);

/// Fixed perceptual features: the image itself followed by three random
/// convolutional layers at decreasing resolution, flattened and concatenated.
class FeatureExtractor {
 public:
  explicit FeatureExtractor(FeatureMode mode = FeatureMode::kRandomConv, std::uint64_t seed = 0x9e37);

  /// B x 3 x H x W -> B x F.
  torch::Tensor operator()(const torch::Tensor& x) const;
  FeatureMode mode() const { return mode_; }

 private:
  FeatureMode mode_;
  std::vector<torch::Tensor> weights_;
  std::vector<torch::Tensor> biases_;
};

/// Parameters of every network plus the frozen copy of the pre-trained regressor.
struct ModelBundle {
  explicit ModelBundle(const ArchConfig& arch);

  ArchConfig arch;
  UNet phi{nullptr};
  UNet psi{nullptr};
  KeypointRegressor eta{nullptr};
  Discriminator disc{nullptr};
  Discriminator image_disc{nullptr};  // null unless arch.image_discriminator
  std::optional<KeypointRegressor> eta_frozen;

  torch::Tensor phi_forward(const torch::Tensor& x);
  torch::Tensor psi_forward(const torch::Tensor& y_star, const std::optional<torch::Tensor>& x_style);
  torch::Tensor eta_forward(const torch::Tensor& y);
  torch::Tensor disc_forward(const torch::Tensor& y);
  torch::Tensor image_disc_forward(const torch::Tensor& x, const std::optional<torch::Tensor>& x_style);
  torch::Tensor disc_logits(const torch::Tensor& y);
  torch::Tensor image_disc_logits(const torch::Tensor& x, const std::optional<torch::Tensor>& x_style);
  torch::Tensor eta_frozen_forward(const torch::Tensor& y);

  /// Deep-copies eta into eta_frozen with gradients disabled. Only callable once.
  void freeze_eta_snapshot();

  std::vector<torch::Tensor> generator_parameters() const;  // phi, psi, eta
  std::vector<torch::Tensor> discriminator_parameters() const;
  std::vector<torch::Tensor> image_discriminator_parameters() const;
  int64_t parameter_count() const;

  void train(bool on = true);
  void eval() { train(false); }

  void save(torch::serialize::OutputArchive& archive) const;
  void load(torch::serialize::InputArchive& archive);
};

/// Copies every parameter and buffer of `src` into `dst` (same architecture).
void copy_module_state(const torch::nn::Module& src, torch::nn::Module& dst);

}  // namespace kpgan
