#include "kpgan/experiments.hpp"

#include <iomanip>
#include <sstream>
#include <stdexcept>

#include "kpgan/training.hpp"

namespace kpgan {

namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kTestSeedOffset = 0x7e57;

std::string hex(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

}  // namespace

DataBundle datasets_for(const TrainConfig& config) {
  const auto spec = figure_spec_for(config);
  if (!config.data_dir.empty()) {
    const fs::path dir(config.data_dir);
    return {load_dataset(dir / "train", spec), load_dataset(dir / "test", spec)};
  }
  const auto res = config.image_resolution();
  return {generate_dataset(spec, config.num_sequences, config.sequence_length, res, config.dataset_seed),
          generate_dataset(spec, config.test_sequences, config.sequence_length, res,
                           config.dataset_seed + kTestSeedOffset)};
}

void write_datasets(const DataBundle& data, const fs::path& dir) {
  save_dataset(data.train, dir / "train");
  save_dataset(data.test, dir / "test");
}

fs::path ensure_trained(const TrainConfig& config, const DataBundle& data, const fs::path& root, const LogFn& log) {
  const fs::path dir = root / hex(config.hash());
  const fs::path final_path = dir / "final.pt";
  if (fs::exists(final_path)) {
    if (log) log("reusing " + final_path.string());
    return final_path;
  }
  run_training(config, data.train, data.test, {dir, std::nullopt}, log);
  return final_path;
}

EvalReport train_or_reuse(const TrainConfig& config, const DataBundle& data, const fs::path& root, const LogFn& log) {
  auto state = TrainState::load(ensure_trained(config, data, root, log));
  return evaluate_model(state->model, data.test, state->edges, state->config.orientation_correction,
                        state->config.eval_samples, config.hash());
}

const std::vector<AblationVariant>& ablation_ladder() {
  static const std::vector<AblationVariant> ladder{
      {"cyclegan", false, false, true},
      {"+conditional", true, false, true},
      {"+bottleneck", true, true, true},
      {"-2nd-cycle", true, true, false},
  };
  return ladder;
}

std::vector<EvalReport> run_ablation(const TrainConfig& base, const DataBundle& data, const fs::path& root,
                                     const LogFn& log) {
  std::vector<EvalReport> rows;
  for (const auto& v : ablation_ladder()) {
    TrainConfig c = base;
    c.conditional_generator = v.conditional_generator;
    c.keypoint_bottleneck = v.keypoint_bottleneck;
    c.second_cycle = v.second_cycle;
    c.validate();
    if (log) log("ablation variant " + v.label);
    auto report = train_or_reuse(c, data, root, log);
    report.metric = v.label;
    rows.push_back(report);
  }
  return rows;
}

std::vector<EvalReport> run_prior_sweep(const TrainConfig& base, const DataBundle& data,
                                        const std::vector<std::optional<long long>>& sizes, const fs::path& root,
                                        const LogFn& log) {
  if (sizes.empty()) throw std::invalid_argument("prior sweep: no sizes");
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      if (sizes[i] == sizes[j]) throw std::invalid_argument("prior sweep: duplicate size");
    }
  }
  std::vector<EvalReport> rows;
  for (const auto& n : sizes) {
    TrainConfig c = base;
    c.prior_size_limit = n;
    c.validate();
    const std::string label = n ? "prior_" + std::to_string(*n) : "prior_full";
    if (log) log("prior sweep " + label);
    auto report = train_or_reuse(c, data, root, log);
    report.metric = label;
    rows.push_back(report);
  }
  return rows;
}

}  // namespace kpgan
