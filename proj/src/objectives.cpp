#include "kpgan/objectives.hpp"

#include <cmath>
#include <iomanip>
#include <ostream>
#include <stdexcept>

namespace kpgan {

namespace {

void require_nonempty(const torch::Tensor& scores, const char* what) {
  if (scores.numel() == 0) throw std::invalid_argument(std::string(what) + ": empty batch");
}

}  // namespace

torch::Tensor perceptual_loss(const torch::Tensor& x_hat, const torch::Tensor& x, const FeatureExtractor& features,
                              Reduction reduction) {
  if (x_hat.sizes() != x.sizes()) throw std::invalid_argument("perceptual_loss: shape mismatch");
  auto diff = features(x_hat) - features(x);
  auto per_sample = (diff * diff).sum(1);
  if (reduction == Reduction::kMean) per_sample = per_sample / static_cast<double>(diff.size(1));
  return per_sample.mean();
}

torch::Tensor discriminator_loss(const torch::Tensor& scores_real, const torch::Tensor& scores_fake) {
  require_nonempty(scores_real, "discriminator_loss");
  require_nonempty(scores_fake, "discriminator_loss");
  return scores_real.square().mean() + (1.0 - scores_fake).square().mean();
}

torch::Tensor discriminator_logit_penalty(const torch::Tensor& real_logits, const torch::Tensor& fake_logits,
                                          double weight) {
  if (!(weight >= 0.0)) throw std::invalid_argument("discriminator_logit_penalty: weight must be nonnegative");
  require_nonempty(real_logits, "discriminator_logit_penalty");
  require_nonempty(fake_logits, "discriminator_logit_penalty");
  return 0.5 * weight * (real_logits.square().mean() + fake_logits.square().mean());
}

torch::Tensor discriminator_update_loss(const torch::Tensor& scores_real, const torch::Tensor& scores_fake) {
  require_nonempty(scores_real, "discriminator_update_loss");
  require_nonempty(scores_fake, "discriminator_update_loss");
  return (1.0 - scores_real).square().mean() + scores_fake.square().mean();
}

torch::Tensor generator_adversarial_term(const torch::Tensor& scores_fake) {
  require_nonempty(scores_fake, "generator_adversarial_term");
  return (1.0 - scores_fake).square().mean();
}

torch::Tensor total_loss(const torch::Tensor& perceptual, const torch::Tensor& adversarial, double lambda) {
  if (!(lambda >= 0.0)) throw std::invalid_argument("total_loss: lambda must be nonnegative");
  return lambda * adversarial + perceptual;
}

torch::Tensor eta_pretrain_loss(const torch::Tensor& predicted, const torch::Tensor& p_bar) {
  if (predicted.sizes() != p_bar.sizes() || predicted.dim() != 3 || predicted.size(2) != 2) {
    throw std::invalid_argument("eta_pretrain_loss: expected matching B x K x 2 tensors");
  }
  return (predicted - p_bar).square().sum(2).mean();
}

torch::Tensor eta_finetune_loss(const torch::Tensor& predicted_prior, const torch::Tensor& p_bar,
                                const torch::Tensor& rerendered, const torch::Tensor& y, double lambda_prime) {
  if (!(lambda_prime >= 0.0)) throw std::invalid_argument("eta_finetune_loss: lambda' must be nonnegative");
  if (rerendered.sizes() != y.sizes()) throw std::invalid_argument("eta_finetune_loss: image shape mismatch");
  return eta_pretrain_loss(predicted_prior, p_bar) + lambda_prime * (rerendered - y).square().mean();
}

torch::Tensor second_cycle_loss(const torch::Tensor& cycled, const torch::Tensor& y_bar, bool enabled) {
  if (!enabled) throw std::logic_error("second_cycle_loss: second cycle is disabled in this configuration");
  if (cycled.sizes() != y_bar.sizes()) throw std::invalid_argument("second_cycle_loss: shape mismatch");
  return (cycled - y_bar).square().mean();
}

double LossReport::generator_objective() const { return lambda * gen_adv + perceptual + cycle2.value_or(0.0); }

std::string LossReport::first_non_finite() const {
  const std::pair<const char*, double> parts[] = {{"perceptual", perceptual}, {"disc", disc},
                                                  {"gen_adv", gen_adv},       {"eta_pretrain", eta_pretrain},
                                                  {"eta_finetune", eta_finetune}, {"total", total}};
  for (const auto& [name, value] : parts) {
    if (!std::isfinite(value)) return name;
  }
  if (cycle2 && !std::isfinite(*cycle2)) return "cycle2";
  return {};
}

bool LossReport::finite() const { return first_non_finite().empty(); }

void write_loss_csv_header(std::ostream& out) {
  out << "iteration,total,perceptual,disc,gen_adv,eta_finetune,wall_time_s\n";
}

void write_loss_csv_row(std::ostream& out, long long iteration, const LossReport& r, double wall_time_s) {
  out << iteration << std::setprecision(10) << "," << r.total << "," << r.perceptual << "," << r.disc << ","
      << r.gen_adv << "," << r.eta_finetune << "," << std::setprecision(6) << wall_time_s << "\n";
}

}  // namespace kpgan
