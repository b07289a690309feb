#pragma once

// Run configuration. The on-disk form is flat `key = value` text with `#`
// comments; every field below is addressable by its name, unknown keys are
// errors. Precedence: defaults < config file < command-line overrides.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "kpgan/models.hpp"
#include "kpgan/objectives.hpp"

namespace kpgan {

/// Raised for invalid configuration; `field()` names the offending key.
class ConfigError : public std::invalid_argument {
 public:
  ConfigError(std::string field, const std::string& message)
      : std::invalid_argument(field + ": " + message), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

enum class PairMode { kVideo, kTps };

struct TrainConfig {
  // objective
  double lambda = 10.0;
  double lambda_prime = 0.1;
  double gamma = 25.0;  // 1 / 0.04
  FeatureMode gamma_mode = FeatureMode::kRandomConv;
  Reduction perceptual_reduction = Reduction::kMean;
  double perceptual_weight = 500.0;  // scale of the perceptual term against lambda * adversarial

  // optimizer
  double learning_rate = 2e-4;
  double adam_beta1 = 0.5;
  double adam_beta2 = 0.999;
  int batch_size = 16;
  double grad_clip_norm = 1.0;
  double disc_logit_penalty = 0.01;  // weight of mean squared discriminator logit in its update
  long long iterations = 20000;
  std::uint64_t seed = 0;

  // ablation switches
  bool conditional_generator = true;
  bool keypoint_bottleneck = true;
  bool second_cycle = false;
  bool orientation_correction = true;

  // unpaired prior
  std::optional<long long> prior_size_limit;

  // regressor pre-training
  long long pretrain_iterations = 20000;
  double pretrain_learning_rate = 1e-3;
  double pretrain_target_rms = 0.05;
  double pretrain_abort_rms = 0.1;
  long long pretrain_eval_every = 1000;

  // networks
  int resolution = 64;
  int encoder_width = 8;
  int decoder_width = 8;
  int unet_depth = 4;
  int regressor_width = 16;
  int disc_width = 16;

  // synthetic data
  int num_sequences = 200;
  int sequence_length = 100;
  int test_sequences = 20;
  std::uint64_t dataset_seed = 1234;
  double motion_smoothness = 1.0;
  PairMode pair_mode = PairMode::kVideo;
  double tps_magnitude = 0.08;
  std::string topology;  // optional topology file; empty = built-in stick figure
  std::string data_dir;  // dataset written by gen-data; empty = generate in memory

  // bookkeeping
  long long log_every = 10;
  long long checkpoint_every = 1000;
  long long eval_every = 2000;
  int eval_samples = 512;

  void validate() const;
  ArchConfig arch(int num_keypoints) const;
  Resolution image_resolution() const { return {resolution, resolution}; }

  /// Sets one field from its textual form; throws ConfigError for unknown keys or bad values.
  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;
  static const std::vector<std::string>& keys();

  /// `key = value` lines; returns the keys that were set, in file order.
  std::vector<std::string> apply_text(std::istream& in);
  std::vector<std::string> apply_file(const std::filesystem::path& path);

  void write(std::ostream& out) const;
  void write_file(const std::filesystem::path& path) const;
  /// FNV-1a over the resolved text form.
  std::uint64_t hash() const;
};

}  // namespace kpgan
