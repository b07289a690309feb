#pragma once

// Dataset assembly for a configuration, the ablation ladder and the
// unpaired-prior size sweep.

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "kpgan/config.hpp"
#include "kpgan/dataset.hpp"
#include "kpgan/evaluation.hpp"

namespace kpgan {

struct DataBundle {
  Dataset train;
  Dataset test;
};

/// Loads `<data_dir>/train` and `<data_dir>/test` when data_dir is set,
/// otherwise generates both from dataset_seed.
DataBundle datasets_for(const TrainConfig& config);

/// Train and test halves written by gen-data.
void write_datasets(const DataBundle& data, const std::filesystem::path& dir);

using LogFn = std::function<void(const std::string&)>;

/// Final checkpoint of `config` under `<root>/<config hash>/`, training first
/// when it is missing.
std::filesystem::path ensure_trained(const TrainConfig& config, const DataBundle& data,
                                     const std::filesystem::path& root, const LogFn& log = {});

/// Trains under `<root>/<config hash>/` unless a final checkpoint is already
/// there, then evaluates it on `test`.
EvalReport train_or_reuse(const TrainConfig& config, const DataBundle& data, const std::filesystem::path& root,
                          const LogFn& log = {});

struct AblationVariant {
  std::string label;
  bool conditional_generator;
  bool keypoint_bottleneck;
  bool second_cycle;
};

/// cyclegan, +conditional, +bottleneck, -2nd-cycle (the full model).
const std::vector<AblationVariant>& ablation_ladder();

/// One EvalReport per variant with metric set to the variant label.
std::vector<EvalReport> run_ablation(const TrainConfig& base, const DataBundle& data,
                                     const std::filesystem::path& root, const LogFn& log = {});

/// One run per prior size (nullopt = the whole prior half); metric is
/// `prior_<n>` or `prior_full`.
std::vector<EvalReport> run_prior_sweep(const TrainConfig& base, const DataBundle& data,
                                        const std::vector<std::optional<long long>>& sizes,
                                        const std::filesystem::path& root, const LogFn& log = {});

}  // namespace kpgan
