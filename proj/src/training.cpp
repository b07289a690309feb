#include "kpgan/training.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "kpgan/evaluation.hpp"
#include "kpgan/pose_io.hpp"
#include "kpgan/tensor_ops.hpp"

namespace kpgan {

namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kPairStream = 1;
constexpr std::uint64_t kPriorStream = 2;
constexpr std::uint64_t kPretrainStream = 3;

torch::optim::AdamOptions adam_options(const TrainConfig& c, double lr) {
  return torch::optim::AdamOptions(lr).betas({c.adam_beta1, c.adam_beta2});
}

/// Clips to max_norm and returns the global norm after clipping.
double clip_gradients(const std::vector<torch::Tensor>& params, double max_norm) {
  torch::nn::utils::clip_grad_norm_(params, max_norm);
  double sq = 0.0;
  for (const auto& p : params) {
    if (p.grad().defined()) sq += p.grad().square().sum().item<double>();
  }
  return std::sqrt(sq);
}

void check_finite(const LossReport& report) {
  if (const auto bad = report.first_non_finite(); !bad.empty()) {
    throw TrainingAborted(bad, "non-finite " + bad + " loss");
  }
}

std::string pad_iteration(long long it) {
  std::ostringstream os;
  os << std::setw(7) << std::setfill('0') << it;
  return os.str();
}

}  // namespace

EdgeSet topology_for(const TrainConfig& config) {
  return config.topology.empty() ? EdgeSet::stick_figure() : read_topology_file(config.topology);
}

SyntheticFigureSpec figure_spec_for(const TrainConfig& config) {
  auto spec = SyntheticFigureSpec::stick_figure();
  if (!config.topology.empty()) spec.edges = read_topology_file(config.topology);
  spec.motion_smoothness = config.motion_smoothness;
  spec.validate();
  return spec;
}

TrainState::TrainState(const TrainConfig& cfg, EdgeSet edge_set)
    : config(cfg),
      edges(std::move(edge_set)),
      model((config.validate(), torch::manual_seed(config.seed), config.arch(edges.num_keypoints()))),
      features(config.gamma_mode),
      pair_rng(config.seed, kPairStream),
      prior_rng(config.seed, kPriorStream) {
  gen_opt = std::make_unique<torch::optim::Adam>(model.generator_parameters(), adam_options(config, config.learning_rate));
  disc_opt =
      std::make_unique<torch::optim::Adam>(model.discriminator_parameters(), adam_options(config, config.learning_rate));
  if (model.image_disc) {
    image_disc_opt = std::make_unique<torch::optim::Adam>(model.image_discriminator_parameters(),
                                                          adam_options(config, config.learning_rate));
  }
}

torch::Tensor TrainState::render(const torch::Tensor& keypoints) const {
  return render_skeleton_batch(keypoints, edges, resolution(), config.gamma);
}

void TrainState::save(const fs::path& path) const {
  torch::serialize::OutputArchive archive;
  std::ostringstream cfg, topo;
  config.write(cfg);
  write_topology(topo, edges);
  archive.write("config", c10::IValue(cfg.str()));
  archive.write("topology", c10::IValue(topo.str()));
  archive.write("iteration", c10::IValue(static_cast<int64_t>(iteration)));
  archive.write("pair_rng", c10::IValue(pair_rng.state()));
  archive.write("prior_rng", c10::IValue(prior_rng.state()));
  torch::serialize::OutputArchive model_archive;
  model.save(model_archive);
  archive.write("model", model_archive);
  auto put_opt = [&archive](const char* key, const torch::optim::Optimizer& opt) {
    torch::serialize::OutputArchive sub;
    opt.save(sub);
    archive.write(key, sub);
  };
  put_opt("gen_opt", *gen_opt);
  put_opt("disc_opt", *disc_opt);
  if (image_disc_opt) put_opt("image_disc_opt", *image_disc_opt);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  archive.save_to(path.string());
}

std::unique_ptr<TrainState> TrainState::load(const fs::path& path) {
  if (!fs::exists(path)) throw std::runtime_error("checkpoint not found: " + path.string());
  torch::serialize::InputArchive archive;
  archive.load_from(path.string());
  c10::IValue value;
  archive.read("config", value);
  TrainConfig config;
  std::istringstream cfg(value.toStringRef());
  config.apply_text(cfg);
  archive.read("topology", value);
  std::istringstream topo(value.toStringRef());
  auto state = std::make_unique<TrainState>(config, read_topology(topo));
  archive.read("iteration", value);
  state->iteration = value.toInt();
  archive.read("pair_rng", value);
  state->pair_rng.set_state(value.toStringRef());
  archive.read("prior_rng", value);
  state->prior_rng.set_state(value.toStringRef());
  torch::serialize::InputArchive model_archive;
  archive.read("model", model_archive);
  state->model.load(model_archive);
  auto get_opt = [&archive](const char* key, torch::optim::Optimizer& opt) {
    torch::serialize::InputArchive sub;
    archive.read(key, sub);
    opt.load(sub);
  };
  get_opt("gen_opt", *state->gen_opt);
  get_opt("disc_opt", *state->disc_opt);
  if (state->image_disc_opt) get_opt("image_disc_opt", *state->image_disc_opt);
  return state;
}

double eta_rms(TrainState& state, const torch::Tensor& poses, bool frozen) {
  torch::NoGradGuard no_grad;
  const bool was_training = state.model.eta->is_training();
  state.model.eta->eval();
  double sq = 0.0;
  long long count = 0;
  for (int64_t start = 0; start < poses.size(0); start += 64) {
    auto chunk = poses.slice(0, start, std::min<int64_t>(start + 64, poses.size(0)));
    auto y = state.render(chunk);
    auto pred = frozen ? state.model.eta_frozen_forward(y) : state.model.eta_forward(y);
    sq += (pred - chunk).square().sum().item<double>();
    count += chunk.size(0) * chunk.size(1);
  }
  state.model.eta->train(was_training);
  return std::sqrt(sq / static_cast<double>(count));
}

PretrainReport pretrain_eta(TrainState& state, const PriorBank& prior, const torch::Tensor& eval_poses,
                            const std::function<void(const std::string&)>& log) {
  const auto& cfg = state.config;
  torch::optim::Adam opt(state.model.eta->parameters(), torch::optim::AdamOptions(cfg.pretrain_learning_rate));
  Rng rng(cfg.seed, kPretrainStream);
  PretrainReport report;
  state.model.eta->train();
  report.rms = eta_rms(state, eval_poses);
  for (long long step = 1; step <= cfg.pretrain_iterations && report.rms >= cfg.pretrain_target_rms; ++step) {
    auto p_bar = prior.sample(rng, cfg.batch_size);
    opt.zero_grad();
    auto loss = eta_pretrain_loss(state.model.eta_forward(state.render(p_bar)), p_bar);
    loss.backward();
    torch::nn::utils::clip_grad_norm_(state.model.eta->parameters(), cfg.grad_clip_norm);
    opt.step();
    const double value = loss.item<double>();
    if (!std::isfinite(value)) throw TrainingAborted("eta_pretrain", "non-finite eta pre-training loss");
    if (step % cfg.log_every == 0) report.loss_trace.emplace_back(step, value);
    report.steps = step;
    if (step % cfg.pretrain_eval_every == 0 || step == cfg.pretrain_iterations) {
      report.rms = eta_rms(state, eval_poses);
      if (log) log("eta pre-training step " + std::to_string(step) + " RMS " + std::to_string(report.rms));
    }
  }
  if (report.rms >= cfg.pretrain_abort_rms) {
    std::ostringstream msg;
    msg << "eta pre-training reached RMS " << report.rms << " after " << report.steps << " steps (abort threshold "
        << cfg.pretrain_abort_rms << ")";
    throw TrainingAborted("eta_pretrain", msg.str());
  }
  state.model.freeze_eta_snapshot();
  return report;
}

Reconstruction reconstruct(TrainState& state, const torch::Tensor& x, const std::optional<torch::Tensor>& style) {
  Reconstruction out;
  out.y = state.model.phi_forward(x);
  if (state.config.keypoint_bottleneck) {
    out.keypoints = state.model.eta_forward(out.y);
    out.y_star = state.render(out.keypoints);
  } else {
    out.y_star = out.y;
  }
  out.x_hat = state.model.psi_forward(out.y_star, style);
  return out;
}

LossReport train_step(TrainState& state, const TrainingPair& pair, const torch::Tensor& prior_poses) {
  const auto& cfg = state.config;
  auto& model = state.model;
  if (!model.eta_frozen) throw std::logic_error("train_step: eta has not been pre-trained");
  model.train();
  const auto& x = pair.x;
  const auto& x_prime = pair.x_prime;
  std::optional<torch::Tensor> style;
  if (cfg.conditional_generator) style = x_prime;

  LossReport report;
  report.lambda = cfg.lambda;
  report.lambda_prime = cfg.lambda_prime;

  torch::Tensor y_bar;
  {
    torch::NoGradGuard no_grad;
    y_bar = state.render(prior_poses);
  }
  const auto rec = reconstruct(state, x, style);
  const auto& y = rec.y;
  torch::Tensor x_cycle;  // image generated from a prior pose (second cycle only)
  if (cfg.second_cycle) x_cycle = model.psi_forward(y_bar, style);

  // (a) discriminators ascend the adversarial loss
  state.disc_opt->zero_grad();
  const auto real_logits = model.disc_logits(y_bar);
  const auto fake_logits = model.disc_logits(y.detach());
  const auto real_scores = torch::sigmoid(real_logits), fake_scores = torch::sigmoid(fake_logits);
  (discriminator_update_loss(real_scores, fake_scores) +
   discriminator_logit_penalty(real_logits, fake_logits, cfg.disc_logit_penalty))
      .backward();
  const auto disc = discriminator_loss(real_scores.detach(), fake_scores.detach());
  state.last_disc_grad_norm = clip_gradients(model.discriminator_parameters(), cfg.grad_clip_norm);
  state.disc_opt->step();
  report.disc = disc.item<double>();
  if (cfg.second_cycle) {
    state.image_disc_opt->zero_grad();
    const auto real = model.image_disc_logits(x, style), fake = model.image_disc_logits(x_cycle.detach(), style);
    (discriminator_update_loss(torch::sigmoid(real), torch::sigmoid(fake)) +
     discriminator_logit_penalty(real, fake, cfg.disc_logit_penalty))
        .backward();
    clip_gradients(model.image_discriminator_parameters(), cfg.grad_clip_norm);
    state.image_disc_opt->step();
  }

  // (b) encoder, decoder and regressor descend
  state.gen_opt->zero_grad();
  auto perceptual = cfg.perceptual_weight * perceptual_loss(rec.x_hat, x, state.features, cfg.perceptual_reduction);
  auto gen_adv = generator_adversarial_term(model.disc_forward(y));
  auto objective = total_loss(perceptual, gen_adv, cfg.lambda);
  if (cfg.second_cycle) {
    auto cycle = second_cycle_loss(model.phi_forward(x_cycle), y_bar, true) +
                 cfg.lambda * generator_adversarial_term(model.image_disc_forward(x_cycle, style));
    report.cycle2 = cycle.item<double>();
    objective = objective + cycle;
  }
  auto y_fixed = y.detach();
  auto eta_prior = eta_pretrain_loss(model.eta_forward(y_bar), prior_poses);
  auto eta_finetune =
      eta_finetune_loss(model.eta_forward(y_bar), prior_poses, state.render(model.eta_forward(y_fixed)), y_fixed,
                        cfg.lambda_prime);
  // eta is a fixed map for the auto-encoding objective; its own update is eta_finetune only
  objective.backward();
  for (auto& p : model.eta->parameters()) {
    if (p.grad().defined()) p.grad().zero_();
  }
  eta_finetune.backward();
  state.last_gen_grad_norm = clip_gradients(model.generator_parameters(), cfg.grad_clip_norm);
  state.gen_opt->step();

  report.perceptual = perceptual.item<double>();
  report.gen_adv = gen_adv.item<double>();
  report.eta_pretrain = eta_prior.item<double>();
  report.eta_finetune = eta_finetune.item<double>();
  report.total = report.generator_objective();
  check_finite(report);
  ++state.iteration;
  state.history.push_back(report);
  if (state.history.size() > TrainState::kHistoryCapacity) state.history.pop_front();
  return report;
}

torch::Tensor orientation_statistic(const torch::Tensor& keypoints, const EdgeSet& edges) {
  const auto& pairs = edges.symmetric_pairs();
  std::vector<int64_t> ring;
  for (const auto& pair : pairs) ring.push_back(pair.first);
  for (auto it = pairs.rbegin(); it != pairs.rend(); ++it) ring.push_back(it->second);
  if (ring.size() < 3) return torch::zeros({keypoints.size(0)}, keypoints.options());
  auto poly = keypoints.index_select(1, torch::tensor(ring, torch::kLong));
  auto next = poly.roll(-1, 1);
  auto cross = poly.select(2, 0) * next.select(2, 1) - next.select(2, 0) * poly.select(2, 1);
  return 0.5 * cross.sum(1);
}

torch::Tensor orientation_correction(const torch::Tensor& keypoints, const torch::Tensor& y, ModelBundle& model,
                                     const EdgeSet& edges) {
  if (edges.symmetric_pairs().empty()) return keypoints;
  auto reference = model.eta_frozen_forward(y);
  auto flip = (orientation_statistic(keypoints, edges) * orientation_statistic(reference, edges)) < 0;
  std::vector<int64_t> swapped(edges.num_keypoints());
  for (int k = 0; k < edges.num_keypoints(); ++k) swapped[k] = k;
  for (const auto& [l, r] : edges.symmetric_pairs()) std::swap(swapped[l], swapped[r]);
  auto mirrored = keypoints.index_select(1, torch::tensor(swapped, torch::kLong));
  return torch::where(flip.view({-1, 1, 1}), mirrored, keypoints);
}

torch::Tensor predict_keypoints(ModelBundle& model, const torch::Tensor& images, const EdgeSet& edges,
                                bool correct_orientation) {
  torch::NoGradGuard no_grad;
  auto y = model.phi_forward(images);
  auto p = model.eta_forward(y);
  if (correct_orientation && model.eta_frozen) p = orientation_correction(p, y, model, edges);
  return p;
}

RunResult run_training(const TrainConfig& config, const Dataset& train, const Dataset& test, const RunPaths& paths,
                       const std::function<void(const std::string&)>& log) {
  auto say = [&log](const std::string& msg) {
    if (log) log(msg);
  };
  fs::create_directories(paths.out_dir / "checkpoints");
  std::unique_ptr<TrainState> state;
  if (paths.resume) {
    state = TrainState::load(*paths.resume);
    // run-length and bookkeeping keys may change on resume; the model-defining ones come from the checkpoint
    for (const char* key : {"iterations", "log_every", "checkpoint_every", "eval_every", "eval_samples"}) {
      state->config.set(key, config.get(key));
    }
    say("resumed from " + paths.resume->string() + " at iteration " + std::to_string(state->iteration));
  } else {
    state = std::make_unique<TrainState>(config, train.edges());
  }
  state->config.write_file(paths.out_dir / "resolved_config");
  const auto& cfg = state->config;

  const DatasetSplit split = build_split(static_cast<int>(train.sequences.size()), cfg.seed);
  if (!split.disjoint()) throw std::logic_error("image and prior halves overlap");
  const PriorBank prior(train, split, cfg.prior_size_limit);
  const std::set<int> image_half(split.image_half.begin(), split.image_half.end());
  say("split: " + std::to_string(split.image_half.size()) + " image sequences, " +
      std::to_string(split.prior_half.size()) + " prior sequences, prior bank " + std::to_string(prior.size()) +
      " poses");

  if (!state->model.eta_frozen) {
    const auto bank = prior.poses();
    std::vector<KeypointSet> eval_poses(bank.begin(), bank.begin() + std::min<std::size_t>(bank.size(), 512));
    const auto report = pretrain_eta(*state, prior, keypoints_to_tensor(eval_poses), log);
    std::ofstream pre(paths.out_dir / "pretrain.csv");
    pre << "step,loss\n";
    for (const auto& [step, loss] : report.loss_trace) pre << step << "," << std::setprecision(10) << loss << "\n";
    say("eta pre-training: " + std::to_string(report.steps) + " steps, RMS " + std::to_string(report.rms));
    state->save(paths.out_dir / "eta_pretrained.pt");
  }

  const fs::path loss_path = paths.out_dir / "loss.csv";
  const bool fresh_log = !fs::exists(loss_path) || fs::file_size(loss_path) == 0;
  std::ofstream loss_csv(loss_path, std::ios::app);
  if (fresh_log) write_loss_csv_header(loss_csv);
  const fs::path eval_path = paths.out_dir / "eval.csv";
  const bool fresh_eval = !fs::exists(eval_path) || fs::file_size(eval_path) == 0;
  std::ofstream eval_csv(eval_path, std::ios::app);
  if (fresh_eval) eval_csv << "iteration,error_pct\n";

  const auto start = std::chrono::steady_clock::now();
  auto elapsed = [&start] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count(); };
  RunResult result;
  auto evaluate = [&] {
    auto report = evaluate_model(state->model, test, state->edges, cfg.orientation_correction, cfg.eval_samples,
                                 cfg.hash());
    eval_csv << state->iteration << "," << std::setprecision(8) << report.mean << "\n" << std::flush;
    return report.mean;
  };

  while (state->iteration < cfg.iterations) {
    const auto batch = cfg.pair_mode == PairMode::kVideo
                           ? sample_frame_pair(train, split, state->pair_rng, cfg.batch_size)
                           : sample_tps_pair(train, split, state->pair_rng, cfg.batch_size, cfg.tps_magnitude);
    std::vector<std::pair<int, int>> sources;
    const auto prior_poses = prior.sample(state->prior_rng, cfg.batch_size, &sources);
    for (const auto& [s, t] : sources) {
      if (image_half.count(s)) throw std::logic_error("prior sample drawn from an image-half sequence");
    }
    const auto report = train_step(*state, batch.training_view(), prior_poses);
    const long long it = state->iteration;
    if (it % cfg.log_every == 0) {
      write_loss_csv_row(loss_csv, it, report, elapsed());
      loss_csv.flush();
    }
    if (it % cfg.checkpoint_every == 0) state->save(paths.out_dir / "checkpoints" / ("step_" + pad_iteration(it) + ".pt"));
    if (it % cfg.eval_every == 0) {
      const double err = evaluate();
      std::ostringstream msg;
      msg << "iter " << it << " perc " << report.perceptual << " disc " << report.disc << " gen_adv " << report.gen_adv
          << " eta_ft " << report.eta_finetune << " error " << err << "% (" << std::fixed << std::setprecision(0)
          << elapsed() << " s)";
      say(msg.str());
    }
  }
  result.final_error_pct = evaluate();
  result.iterations = state->iteration;
  result.final_checkpoint = paths.out_dir / "final.pt";
  state->save(result.final_checkpoint);
  return result;
}

}  // namespace kpgan
