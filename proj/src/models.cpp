#include "kpgan/models.hpp"

#include <cmath>
#include <stdexcept>

#include "kpgan/random.hpp"
#include "kpgan/tensor_ops.hpp"

namespace kpgan {

namespace nn = torch::nn;

namespace {

nn::Conv2d conv(int in, int out, int kernel, int stride, int padding) {
  return nn::Conv2d(nn::Conv2dOptions(in, out, kernel).stride(stride).padding(padding));
}

nn::LeakyReLU lrelu() { return nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(0.2)); }

torch::Tensor upsample2(const torch::Tensor& x) {
  return nn::functional::interpolate(
      x, nn::functional::InterpolateFuncOptions().scale_factor(std::vector<double>{2.0, 2.0}).mode(torch::kNearest));
}

}  // namespace

void ArchConfig::validate() const {
  if (num_keypoints <= 0) throw std::invalid_argument("arch: num_keypoints must be positive");
  if (encoder_width <= 0 || decoder_width <= 0 || regressor_width <= 0 || disc_width <= 0) {
    throw std::invalid_argument("arch: widths must be positive");
  }
  if (unet_depth < 1) throw std::invalid_argument("arch: unet_depth must be >= 1");
  const int divisor = std::max(16, 1 << unet_depth);
  if (resolution.height % divisor != 0 || resolution.width % divisor != 0) {
    throw std::invalid_argument("arch: resolution must be divisible by " + std::to_string(divisor));
  }
}

ConvBlockImpl::ConvBlockImpl(int in, int out, int stride, bool instance_norm)
    : conv(register_module("conv", kpgan::conv(in, out, 3, stride, 1))) {
  if (instance_norm) norm = register_module("norm", nn::InstanceNorm2d(nn::InstanceNorm2dOptions(out).affine(true)));
}

torch::Tensor ConvBlockImpl::forward(const torch::Tensor& x) {
  auto h = conv->forward(x);
  if (norm) h = norm->forward(h);
  return torch::leaky_relu(h, 0.2);
}

UNetImpl::UNetImpl(int in_channels, int out_channels, int width, int depth) {
  stem = register_module("stem", ConvBlock(in_channels, width, 1, true));
  down = register_module("down", nn::ModuleList());
  up = register_module("up", nn::ModuleList());
  std::vector<int> ch{width};
  for (int level = 0; level < depth; ++level) {
    ch.push_back(std::min(width << (level + 1), width * 16));
    down->push_back(ConvBlock(ch[level], ch[level + 1], 2, true));
  }
  bottleneck = register_module("bottleneck", ConvBlock(ch[depth], ch[depth], 1, true));
  for (int level = depth - 1; level >= 0; --level) {
    up->push_back(ConvBlock(ch[level + 1] + ch[level], ch[level], 1, true));
  }
  head = register_module("head", conv(width, out_channels, 1, 1, 0));
}

torch::Tensor UNetImpl::forward(const torch::Tensor& x) {
  std::vector<torch::Tensor> skips{stem->forward(x)};
  for (const auto& block : *down) skips.push_back(block->as<ConvBlock>()->forward(skips.back()));
  auto h = bottleneck->forward(skips.back());
  std::size_t level = skips.size() - 1;
  for (const auto& block : *up) {
    --level;
    h = block->as<ConvBlock>()->forward(torch::cat({upsample2(h), skips[level]}, 1));
  }
  return torch::sigmoid(head->forward(h));
}

KeypointRegressorImpl::KeypointRegressorImpl(int num_keypoints, int width) {
  enc1 = register_module("enc1", nn::Sequential(conv(3, width, 3, 2, 1), lrelu(), conv(width, width, 3, 1, 1), lrelu()));
  enc2 = register_module(
      "enc2", nn::Sequential(conv(width, 2 * width, 3, 2, 1), lrelu(), conv(2 * width, 2 * width, 3, 1, 1), lrelu()));
  enc3 = register_module("enc3", nn::Sequential(conv(2 * width, 2 * width, 3, 2, 1), lrelu(),
                                                conv(2 * width, 2 * width, 3, 1, 1), lrelu(),
                                                conv(2 * width, 2 * width, 3, 1, 1), lrelu()));
  dec2 = register_module("dec2", nn::Sequential(conv(4 * width, 2 * width, 3, 1, 1), lrelu()));
  dec1 = register_module("dec1", nn::Sequential(conv(3 * width, width, 3, 1, 1), lrelu()));
  out = register_module("out", conv(width, num_keypoints, 1, 1, 0));
}

torch::Tensor KeypointRegressorImpl::heatmaps(const torch::Tensor& y) {
  TORCH_CHECK(y.dim() == 4 && y.size(1) == 1, "keypoint regressor expects B x 1 x H x W");
  const Resolution res{static_cast<int>(y.size(2)), static_cast<int>(y.size(3))};
  // coordinate channels give the convolutions absolute position
  auto coords = pixel_center_grid(res, y.scalar_type()).permute({2, 0, 1}).unsqueeze(0).expand({y.size(0), 2, -1, -1});
  auto h1 = enc1->forward(torch::cat({y, coords}, 1));
  auto h2 = enc2->forward(h1);
  auto h3 = enc3->forward(h2);
  auto h = dec2->forward(torch::cat({upsample2(h3), h2}, 1));
  h = dec1->forward(torch::cat({upsample2(h), h1}, 1));
  return out->forward(h);
}

torch::Tensor KeypointRegressorImpl::forward(const torch::Tensor& y) { return spatial_softmax_keypoints(heatmaps(y)); }

DiscriminatorImpl::DiscriminatorImpl(int in_channels, int width, Resolution res) {
  features = register_module("features", nn::Sequential(conv(in_channels, width, 4, 2, 1), lrelu(),
                                                        conv(width, 2 * width, 4, 2, 1), lrelu(),
                                                        conv(2 * width, 4 * width, 4, 2, 1), lrelu(),
                                                        conv(4 * width, 4 * width, 4, 2, 1), lrelu()));
  classifier = register_module("classifier", nn::Linear(4 * width * (res.height / 16) * (res.width / 16), 1));
}

torch::Tensor DiscriminatorImpl::logits(const torch::Tensor& y) {
  return classifier->forward(features->forward(y).flatten(1)).squeeze(1);
}

torch::Tensor DiscriminatorImpl::forward(const torch::Tensor& y) { return torch::sigmoid(logits(y)); }

FeatureExtractor::FeatureExtractor(FeatureMode mode, std::uint64_t seed) : mode_(mode) {
  if (mode_ == FeatureMode::kIdentity) return;
  Rng rng(seed, /*stream=*/0xf3a);
  const std::vector<std::pair<int, int>> layers{{3, 8}, {8, 16}, {16, 32}};
  for (const auto& [in, out] : layers) {
    const double stddev = std::sqrt(2.0 / (in * 9));
    std::vector<float> w(static_cast<std::size_t>(out) * in * 9);
    for (auto& v : w) v = static_cast<float>(stddev * rng.normal());
    weights_.push_back(torch::tensor(w).view({out, in, 3, 3}));
    std::vector<float> b(out);
    for (auto& v : b) v = static_cast<float>(0.1 * rng.normal());
    biases_.push_back(torch::tensor(b));
  }
}

torch::Tensor FeatureExtractor::operator()(const torch::Tensor& x) const {
  TORCH_CHECK(x.dim() == 4, "feature extractor expects B x C x H x W");
  std::vector<torch::Tensor> parts{x.flatten(1)};
  auto h = x;
  for (std::size_t layer = 0; layer < weights_.size(); ++layer) {
    const int stride = layer == 0 ? 1 : 2;
    h = torch::relu(torch::conv2d(h, weights_[layer].to(x.scalar_type()), biases_[layer].to(x.scalar_type()), stride, 1));
    parts.push_back(h.flatten(1));
  }
  return parts.size() == 1 ? parts.front() : torch::cat(parts, 1);
}

ModelBundle::ModelBundle(const ArchConfig& arch_config) : arch(arch_config) {
  arch.validate();
  phi = UNet(3, 1, arch.encoder_width, arch.unet_depth);
  psi = UNet(arch.conditional_decoder ? 4 : 1, 3, arch.decoder_width, arch.unet_depth);
  eta = KeypointRegressor(arch.num_keypoints, arch.regressor_width);
  disc = Discriminator(1, arch.disc_width, arch.resolution);
  if (arch.image_discriminator) {
    image_disc = Discriminator(arch.conditional_decoder ? 6 : 3, arch.disc_width, arch.resolution);
  }
}

namespace {
void check_images(const torch::Tensor& x, int channels, Resolution res, const char* what) {
  if (x.dim() != 4 || x.size(1) != channels || x.size(2) != res.height || x.size(3) != res.width) {
    throw std::invalid_argument(std::string(what) + ": expected B x " + std::to_string(channels) + " x " +
                                std::to_string(res.height) + " x " + std::to_string(res.width));
  }
}
}  // namespace

torch::Tensor ModelBundle::phi_forward(const torch::Tensor& x) {
  check_images(x, 3, arch.resolution, "phi_forward");
  return phi->forward(x);
}

torch::Tensor ModelBundle::psi_forward(const torch::Tensor& y_star, const std::optional<torch::Tensor>& x_style) {
  check_images(y_star, 1, arch.resolution, "psi_forward");
  if (!arch.conditional_decoder) return psi->forward(y_star);
  if (!x_style) throw std::invalid_argument("psi_forward: conditional decoder needs a style image");
  check_images(*x_style, 3, arch.resolution, "psi_forward style");
  if (x_style->size(0) != y_star.size(0)) throw std::invalid_argument("psi_forward: batch size mismatch");
  return psi->forward(torch::cat({y_star, *x_style}, 1));
}

torch::Tensor ModelBundle::eta_forward(const torch::Tensor& y) {
  check_images(y, 1, arch.resolution, "eta_forward");
  return eta->forward(y);
}

torch::Tensor ModelBundle::disc_logits(const torch::Tensor& y) {
  check_images(y, 1, arch.resolution, "disc_forward");
  return disc->logits(y);
}

torch::Tensor ModelBundle::disc_forward(const torch::Tensor& y) { return torch::sigmoid(disc_logits(y)); }

torch::Tensor ModelBundle::image_disc_logits(const torch::Tensor& x, const std::optional<torch::Tensor>& x_style) {
  if (!image_disc) throw std::logic_error("image discriminator not enabled");
  check_images(x, 3, arch.resolution, "image_disc_forward");
  if (!arch.conditional_decoder) return image_disc->logits(x);
  if (!x_style) throw std::invalid_argument("image_disc_forward: conditional discriminator needs a style image");
  return image_disc->logits(torch::cat({x, *x_style}, 1));
}

torch::Tensor ModelBundle::image_disc_forward(const torch::Tensor& x, const std::optional<torch::Tensor>& x_style) {
  return torch::sigmoid(image_disc_logits(x, x_style));
}

torch::Tensor ModelBundle::eta_frozen_forward(const torch::Tensor& y) {
  if (!eta_frozen) throw std::logic_error("eta snapshot has not been frozen yet");
  check_images(y, 1, arch.resolution, "eta_frozen_forward");
  torch::NoGradGuard no_grad;
  return (*eta_frozen)->forward(y);
}

void ModelBundle::freeze_eta_snapshot() {
  if (eta_frozen) throw std::logic_error("eta snapshot already frozen");
  KeypointRegressor snapshot(arch.num_keypoints, arch.regressor_width);
  copy_module_state(*eta, *snapshot);
  for (auto& p : snapshot->parameters()) p.set_requires_grad(false);
  snapshot->eval();
  eta_frozen = snapshot;
}

std::vector<torch::Tensor> ModelBundle::generator_parameters() const {
  std::vector<torch::Tensor> params = phi->parameters();
  for (auto& p : psi->parameters()) params.push_back(p);
  for (auto& p : eta->parameters()) params.push_back(p);
  return params;
}

std::vector<torch::Tensor> ModelBundle::discriminator_parameters() const { return disc->parameters(); }

std::vector<torch::Tensor> ModelBundle::image_discriminator_parameters() const {
  return image_disc ? image_disc->parameters() : std::vector<torch::Tensor>{};
}

int64_t ModelBundle::parameter_count() const {
  int64_t n = 0;
  for (const auto& p : generator_parameters()) n += p.numel();
  for (const auto& p : discriminator_parameters()) n += p.numel();
  for (const auto& p : image_discriminator_parameters()) n += p.numel();
  return n;
}

void ModelBundle::train(bool on) {
  phi->train(on);
  psi->train(on);
  eta->train(on);
  disc->train(on);
  if (image_disc) image_disc->train(on);
}

void ModelBundle::save(torch::serialize::OutputArchive& archive) const {
  auto put = [&archive](const char* key, const torch::nn::Module& module) {
    torch::serialize::OutputArchive sub;
    module.save(sub);
    archive.write(key, sub);
  };
  put("phi", *phi);
  put("psi", *psi);
  put("eta", *eta);
  put("disc", *disc);
  if (image_disc) put("image_disc", *image_disc);
  if (eta_frozen) put("eta_frozen", **eta_frozen);
}

void ModelBundle::load(torch::serialize::InputArchive& archive) {
  auto get = [&archive](const char* key, torch::nn::Module& module) {
    torch::serialize::InputArchive sub;
    archive.read(key, sub);
    module.load(sub);
  };
  get("phi", *phi);
  get("psi", *psi);
  get("eta", *eta);
  get("disc", *disc);
  if (image_disc) get("image_disc", *image_disc);
  torch::serialize::InputArchive frozen;
  if (archive.try_read("eta_frozen", frozen)) {
    KeypointRegressor snapshot(arch.num_keypoints, arch.regressor_width);
    snapshot->load(frozen);
    for (auto& p : snapshot->parameters()) p.set_requires_grad(false);
    snapshot->eval();
    eta_frozen = snapshot;
  }
}

void copy_module_state(const torch::nn::Module& src, torch::nn::Module& dst) {
  torch::NoGradGuard no_grad;
  auto src_params = src.named_parameters(true);
  for (auto& item : dst.named_parameters(true)) item.value().copy_(src_params[item.key()]);
  auto src_buffers = src.named_buffers(true);
  for (auto& item : dst.named_buffers(true)) item.value().copy_(src_buffers[item.key()]);
}

}  // namespace kpgan
