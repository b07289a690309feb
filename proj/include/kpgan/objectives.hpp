#pragma once

// Loss functions. All return 0-dim tensors so they compose with autograd.

#include <torch/torch.h>

#include <iosfwd>
#include <optional>

#include "kpgan/models.hpp"

namespace kpgan {

/// How the per-sample squared feature distance is reduced before batch
/// averaging: kMean divides by the feature dimension, kSum keeps the raw norm.
enum class Reduction { kMean, kSum };

/// mean_i ||G(x_hat_i) - G(x_i)||^2 (divided by the feature dimension under kMean).
torch::Tensor perceptual_loss(const torch::Tensor& x_hat, const torch::Tensor& x, const FeatureExtractor& features,
                              Reduction reduction = Reduction::kMean);

/// mean_j D(y_bar_j)^2 + mean_i (1 - D(y_i))^2. The discriminator ascends
/// this value; the encoder descends it through the second term only.
torch::Tensor discriminator_loss(const torch::Tensor& scores_real, const torch::Tensor& scores_fake);

/// mean_j (1 - D(y_bar_j))^2 + mean_i D(y_i)^2, minimized by the
/// discriminator. Same maximizer as discriminator_loss and the same gradient
/// sign per score, but no flat region when a score saturates at 0.
torch::Tensor discriminator_update_loss(const torch::Tensor& scores_real, const torch::Tensor& scores_fake);

/// weight * (mean real_logit^2 + mean fake_logit^2) / 2 on the pre-sigmoid
/// discriminator outputs; keeps the sigmoid out of saturation.
torch::Tensor discriminator_logit_penalty(const torch::Tensor& real_logits, const torch::Tensor& fake_logits,
                                          double weight);

/// mean_i (1 - D(y_i))^2
torch::Tensor generator_adversarial_term(const torch::Tensor& scores_fake);

/// lambda * adversarial + perceptual.
torch::Tensor total_loss(const torch::Tensor& perceptual, const torch::Tensor& adversarial, double lambda);

/// Squared keypoint distance averaged over keypoints and batch
/// (B x K x 2 inputs).
torch::Tensor eta_pretrain_loss(const torch::Tensor& predicted, const torch::Tensor& p_bar);

/// eta_pretrain_loss + lambda' * mean pixel squared error between the
/// re-rendered regressor output and the pose image it was read from.
torch::Tensor eta_finetune_loss(const torch::Tensor& predicted_prior, const torch::Tensor& p_bar,
                                const torch::Tensor& rerendered, const torch::Tensor& y, double lambda_prime);

/// Mean squared pixel error of the skeleton -> image -> skeleton cycle.
/// Throws when the second cycle is not enabled.
torch::Tensor second_cycle_loss(const torch::Tensor& cycled, const torch::Tensor& y_bar, bool enabled);

struct LossReport {
  double total = 0.0;
  double perceptual = 0.0;  // weighted as in the objective
  double disc = 0.0;
  double gen_adv = 0.0;
  double eta_pretrain = 0.0;
  double eta_finetune = 0.0;
  std::optional<double> cycle2;
  double lambda = 10.0;
  double lambda_prime = 0.1;

  /// Generator objective lambda * gen_adv + perceptual (+ cycle2 when present).
  double generator_objective() const;
  bool finite() const;
  /// Name of the first non-finite component, or empty.
  std::string first_non_finite() const;
};

void write_loss_csv_header(std::ostream& out);
void write_loss_csv_row(std::ostream& out, long long iteration, const LossReport& report, double wall_time_s);

}  // namespace kpgan
