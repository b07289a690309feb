// keypointgan: dataset generation, training, evaluation and demos.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "kpgan/config.hpp"
#include "kpgan/evaluation.hpp"
#include "kpgan/experiments.hpp"
#include "kpgan/image_io.hpp"
#include "kpgan/pose_io.hpp"
#include "kpgan/tensor_ops.hpp"
#include "kpgan/training.hpp"

namespace fs = std::filesystem;
using namespace kpgan;

namespace {

struct Common {
  std::string config_path;
  std::string out_dir = "out";
  std::vector<std::string> overrides;
  std::string resume;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_path, "configuration file (key = value)");
  cmd->add_option("--out", c.out_dir, "output directory")->capture_default_str();
  cmd->add_option("--set", c.overrides, "override KEY=VALUE (repeatable)");
  cmd->add_option("--resume", c.resume, "checkpoint to resume from or to load");
}

TrainConfig resolve(const Common& c, const std::string& verb) {
  TrainConfig config;
  std::ostringstream order;
  order << "# keypointgan " << verb << "\n# resolved from: defaults";
  if (!c.config_path.empty()) {
    if (!fs::exists(c.config_path)) throw ConfigError("config", "file not found: " + c.config_path);
    config.apply_file(c.config_path);
    order << " < " << c.config_path;
  }
  for (const auto& kv : c.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError(kv, "--set expects KEY=VALUE");
    config.set(kv.substr(0, eq), kv.substr(eq + 1));
    order << " < --set " << kv;
  }
  config.validate();
  fs::create_directories(c.out_dir);
  std::ofstream out(fs::path(c.out_dir) / "resolved_config");
  out << order.str() << "\n";
  config.write(out);
  return config;
}

std::ofstream open_append(const fs::path& path, const std::function<void(std::ostream&)>& header) {
  const bool fresh = !fs::exists(path) || fs::file_size(path) == 0;
  std::ofstream out(path, std::ios::app);
  if (fresh) header(out);
  return out;
}

void log_line(const std::string& msg) { std::cerr << msg << std::endl; }

std::unique_ptr<TrainState> load_checkpoint(const Common& c) {
  if (c.resume.empty()) throw ConfigError("resume", "this verb needs --resume CHECKPOINT");
  return TrainState::load(c.resume);
}

/// `count` evenly spaced frames over every sequence of the dataset.
FrameBatch spaced_frames(const Dataset& data, int count) {
  std::vector<int> seqs(data.sequences.size());
  for (std::size_t i = 0; i < seqs.size(); ++i) seqs[i] = static_cast<int>(i);
  auto frames = all_frames(data, seqs);
  if (count > 0 && static_cast<std::size_t>(count) < frames.size()) {
    std::vector<std::pair<int, int>> picked;
    for (int i = 0; i < count; ++i) picked.push_back(frames[i * frames.size() / count]);
    frames = std::move(picked);
  }
  return gather_frames(data, frames);
}

torch::Tensor predict_all(TrainState& state, const torch::Tensor& images) {
  std::vector<torch::Tensor> out;
  state.model.eval();
  for (int64_t s = 0; s < images.size(0); s += 64) {
    out.push_back(predict_keypoints(state.model, images.slice(0, s, std::min<int64_t>(s + 64, images.size(0))),
                                    state.edges, state.config.orientation_correction));
  }
  return torch::cat(out);
}

int cmd_gen_data(const Common& c) {
  const auto config = resolve(c, "gen-data");
  const auto data = datasets_for(config);
  write_datasets(data, fs::path(c.out_dir) / "data");
  const auto split = build_split(static_cast<int>(data.train.sequences.size()), config.seed);
  const PriorBank prior(data.train, split, config.prior_size_limit);
  write_keypoint_samples_file(fs::path(c.out_dir) / "prior.txt", prior.poses());
  std::cout << "wrote " << data.train.sequences.size() << " train and " << data.test.sequences.size()
            << " test sequences to " << (fs::path(c.out_dir) / "data").string() << ", " << prior.size()
            << " prior poses to prior.txt\n";
  return 0;
}

int cmd_pretrain(const Common& c) {
  const auto config = resolve(c, "pretrain-eta");
  const auto data = datasets_for(config);
  TrainState state(config, data.train.edges());
  const auto split = build_split(static_cast<int>(data.train.sequences.size()), config.seed);
  const PriorBank prior(data.train, split, config.prior_size_limit);
  const auto eval_poses = spaced_frames(data.test, config.eval_samples).keypoints;
  const auto report = pretrain_eta(state, prior, eval_poses, log_line);
  auto csv = open_append(fs::path(c.out_dir) / "pretrain.csv", [](std::ostream& o) { o << "step,loss\n"; });
  for (const auto& [step, loss] : report.loss_trace) csv << step << "," << std::setprecision(10) << loss << "\n";
  state.save(fs::path(c.out_dir) / "eta_pretrained.pt");
  std::cout << "eta pre-training: " << report.steps << " steps, RMS " << report.rms << " (prior bank " << prior.size()
            << " poses)\n";
  return 0;
}

int cmd_train(const Common& c) {
  const auto config = resolve(c, "train");
  const auto data = datasets_for(config);
  RunPaths paths{c.out_dir, std::nullopt};
  if (!c.resume.empty()) paths.resume = fs::path(c.resume);
  const auto result = run_training(config, data.train, data.test, paths, log_line);
  std::cout << "final error " << result.final_error_pct << "% after " << result.iterations << " iterations ("
            << result.final_checkpoint.string() << ")\n";
  return 0;
}

int cmd_eval(const Common& c) {
  const auto config = resolve(c, "eval");
  auto state = load_checkpoint(c);
  const auto data = datasets_for(config);
  const int K = state->edges.num_keypoints();
  const auto test = spaced_frames(data.test, config.eval_samples);
  const auto pred = predict_all(*state, test.images);
  const auto hash = state->config.hash();
  std::vector<EvalReport> rows;
  rows.push_back(normalized_error_pct(pred, test.keypoints, data.test.resolution.width));
  std::vector<int> all(K);
  for (int k = 0; k < K; ++k) all[k] = k;
  rows.push_back(pixel_mse_subset(pred, test.keypoints, all, data.test.resolution));
  if (!state->edges.symmetric_pairs().empty()) {
    const auto [l, r] = state->edges.symmetric_pairs().front();
    rows.push_back(interocular_error(pred, test.keypoints, l, r));
  }
  // linear post-processing fitted on training frames, applied to the test predictions
  const auto fit_frames = spaced_frames(data.train, config.eval_samples);
  const auto regressor = supervised_postprocess_fit(predict_all(*state, fit_frames.images), fit_frames.keypoints);
  auto post = normalized_error_pct(regressor.apply(pred), test.keypoints, data.test.resolution.width);
  post.metric = "error_pct_postprocessed";
  rows.push_back(post);
  auto csv = open_append(fs::path(c.out_dir) / "eval_report.csv", [K](std::ostream& o) { write_eval_csv_header(o, K); });
  for (auto& row : rows) {
    row.config_hash = hash;
    write_eval_csv_row(csv, row);
    std::cout << row.metric << " " << row.mean << "\n";
  }
  return 0;
}

int cmd_render(const Common& c, const std::string& input) {
  const auto config = resolve(c, "render");
  if (input.empty()) throw ConfigError("input", "render needs a keypoint sample file");
  if (!fs::exists(input)) throw ConfigError("input", "file not found: " + input);
  const auto edges = topology_for(config);
  const auto samples = read_keypoint_samples_file(input);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto img = render_skeleton(samples[i], edges, config.image_resolution(), config.gamma);
    std::ostringstream name;
    name << "skeleton_" << std::setw(4) << std::setfill('0') << i << ".png";
    write_png(fs::path(c.out_dir) / name.str(), img);
  }
  std::cout << "rendered " << samples.size() << " skeletons\n";
  return 0;
}

int cmd_swap(const Common& c, int grid_size, int pairs) {
  const auto config = resolve(c, "swap");
  auto state = load_checkpoint(c);
  const auto data = datasets_for(config);
  const int S = static_cast<int>(data.test.sequences.size());
  if (S < 2) throw ConfigError("test_sequences", "swap needs at least two test sequences");
  // targets and styles from different sequences
  std::vector<std::pair<int, int>> targets, styles;
  const int L = static_cast<int>(data.test.sequences.front().keypoints.size());
  for (int i = 0; i < pairs; ++i) {
    targets.emplace_back(i % S, (i * 7) % L);
    styles.emplace_back((i + 1 + (i / S) % (S - 1)) % S, (i * 13 + 3) % L);
  }
  const auto t = gather_frames(data.test, targets).images;
  const auto s = gather_frames(data.test, styles).images;
  const auto result = swap_demo(state->model, state->edges, state->config.gamma, t, s);
  const double mean_err = result.pose_cycle_error.mean().item<double>();
  const int n = std::min({grid_size, S, pairs});
  std::vector<std::pair<int, int>> grid_t, grid_s;
  for (int i = 0; i < n; ++i) {
    grid_t.emplace_back(i, (i * 11) % L);
    grid_s.emplace_back(S - 1 - i, (i * 5 + 2) % L);
  }
  write_png(fs::path(c.out_dir) / "swap_grid.png",
            swap_grid(state->model, state->edges, state->config.gamma, gather_frames(data.test, grid_t).images,
                      gather_frames(data.test, grid_s).images));
  auto csv = open_append(fs::path(c.out_dir) / "swap.csv",
                         [](std::ostream& o) { o << "pairs,mean_pose_cycle_error,config_hash\n"; });
  csv << pairs << "," << std::setprecision(10) << mean_err << "," << std::hex << state->config.hash() << std::dec
      << "\n";
  std::cout << "pose-cycle error over " << pairs << " cross-identity pairs: " << mean_err << "\n";
  return 0;
}

std::map<int, Point2> parse_moves(const std::vector<std::string>& moves) {
  std::map<int, Point2> out;
  for (const auto& m : moves) {
    const auto eq = m.find('=');
    const auto comma = m.find(',', eq == std::string::npos ? 0 : eq);
    if (eq == std::string::npos || comma == std::string::npos) throw ConfigError("move", "expected K=X,Y, got " + m);
    try {
      out[std::stoi(m.substr(0, eq))] = {std::stod(m.substr(eq + 1, comma - eq - 1)), std::stod(m.substr(comma + 1))};
    } catch (const std::logic_error&) {
      throw ConfigError("move", "expected K=X,Y, got " + m);
    }
  }
  return out;
}

int cmd_edit(const Common& c, const std::vector<std::string>& moves, int frame) {
  const auto config = resolve(c, "edit");
  auto state = load_checkpoint(c);
  const auto data = datasets_for(config);
  const auto& seq = data.test.sequences.front();
  if (frame < 0 || frame >= static_cast<int>(seq.keypoints.size())) throw ConfigError("frame", "out of range");
  const auto x = gather_frames(data.test, {{0, frame}}).images[0];
  auto edits = parse_moves(moves);
  if (edits.empty()) {
    // default: push the first hand sideways
    torch::NoGradGuard no_grad;
    state->model.eval();
    const int k = state->edges.symmetric_pairs().empty() ? 0 : state->edges.symmetric_pairs().front().first;
    auto p = state->model.eta_forward(state->model.phi_forward(x.unsqueeze(0)))[0];
    const double px = p[k][0].item<double>();
    edits[k] = {px > 0.0 ? px - 0.3 : px + 0.3, p[k][1].item<double>()};
  }
  const auto r = edit_keypoints_demo(state->model, state->edges, state->config.gamma, x, edits);
  const auto res = data.test.resolution;
  const auto render = [&](const torch::Tensor& kps) {
    return tensor_to_image(render_skeleton_batch(kps.unsqueeze(0), state->edges, res, state->config.gamma)[0]
                               .expand({3, res.height, res.width}));
  };
  write_png(fs::path(c.out_dir) / "edit.png",
            tile_images({tensor_to_image(x), render(r.detected), tensor_to_image(r.reconstruction.clamp(0, 1)),
                         render(r.edited), tensor_to_image(r.image.clamp(0, 1))},
                        5));
  auto csv = open_append(fs::path(c.out_dir) / "edit.csv",
                         [](std::ostream& o) { o << "frame,keypoint,x,y,change_inside,change_outside\n"; });
  for (const auto& [k, p] : edits) {
    csv << frame << "," << k << "," << p.x << "," << p.y << "," << std::setprecision(10) << r.change_inside << ","
        << r.change_outside << "\n";
  }
  std::cout << "mean change inside " << r.change_inside << ", outside " << r.change_outside << "\n";
  return 0;
}

void write_rows(const fs::path& path, int K, const std::vector<EvalReport>& rows) {
  auto csv = open_append(path, [K](std::ostream& o) { write_eval_csv_header(o, K); });
  for (const auto& row : rows) {
    write_eval_csv_row(csv, row);
    std::cout << row.metric << " " << row.mean << "\n";
  }
}

int cmd_ablate(const Common& c) {
  const auto config = resolve(c, "ablate");
  const auto data = datasets_for(config);
  const auto rows = run_ablation(config, data, fs::path(c.out_dir) / "runs", log_line);
  write_rows(fs::path(c.out_dir) / "ablation.csv", data.train.num_keypoints(), rows);
  return 0;
}

int cmd_sweep(const Common& c, const std::vector<std::string>& size_text) {
  const auto config = resolve(c, "sweep-prior");
  std::vector<std::optional<long long>> sizes;
  for (const auto& s : size_text) {
    if (s == "full" || s == "none") {
      sizes.emplace_back(std::nullopt);
      continue;
    }
    try {
      std::size_t used = 0;
      const long long n = std::stoll(s, &used);
      if (used != s.size() || n < 1) throw std::invalid_argument(s);
      sizes.emplace_back(n);
    } catch (const std::logic_error&) {
      throw ConfigError("sizes", "expected positive integers or 'full', got " + s);
    }
  }
  const auto data = datasets_for(config);
  const auto rows = run_prior_sweep(config, data, sizes, fs::path(c.out_dir) / "runs", log_line);
  write_rows(fs::path(c.out_dir) / "sweep.csv", data.train.num_keypoints(), rows);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"keypointgan: unsupervised keypoints from an unpaired pose prior"};
  app.require_subcommand(1);
  Common common;
  std::string render_input;
  std::vector<std::string> moves;
  std::vector<std::string> sizes{"50", "200", "1000", "full"};
  int edit_frame = 0, grid_size = 5, swap_pairs = 100;

  auto* gen = app.add_subcommand("gen-data", "generate the synthetic train and test datasets");
  auto* pre = app.add_subcommand("pretrain-eta", "pre-train the keypoint regressor on the pose prior");
  auto* train = app.add_subcommand("train", "full training");
  auto* eval = app.add_subcommand("eval", "landmark metrics for a checkpoint");
  auto* render = app.add_subcommand("render", "render skeleton images from a keypoint sample file");
  auto* swap = app.add_subcommand("swap", "pose/appearance swap grid");
  auto* edit = app.add_subcommand("edit", "move keypoints and re-decode");
  auto* ablate = app.add_subcommand("ablate", "train the four ablation variants");
  auto* sweep = app.add_subcommand("sweep-prior", "train with decreasing prior sizes");
  for (auto* cmd : {gen, pre, train, eval, render, swap, edit, ablate, sweep}) add_common(cmd, common);
  render->add_option("input", render_input, "keypoint sample file");
  swap->add_option("--grid", grid_size, "rows and columns of the swap grid")->capture_default_str();
  swap->add_option("--pairs", swap_pairs, "cross-identity pairs for the pose-cycle error")->capture_default_str();
  edit->add_option("--move", moves, "K=X,Y new position for keypoint K (repeatable)");
  edit->add_option("--frame", edit_frame, "frame of the first test sequence")->capture_default_str();
  sweep->add_option("--sizes", sizes, "prior sizes; 'full' for the whole prior half")->delimiter(',');

  at::globalContext().setFlushDenormal(true);
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*gen) return cmd_gen_data(common);
    if (*pre) return cmd_pretrain(common);
    if (*train) return cmd_train(common);
    if (*eval) return cmd_eval(common);
    if (*render) return cmd_render(common, render_input);
    if (*swap) return cmd_swap(common, grid_size, swap_pairs);
    if (*edit) return cmd_edit(common, moves, edit_frame);
    if (*ablate) return cmd_ablate(common);
    if (*sweep) return cmd_sweep(common, sizes);
  } catch (const ConfigError& e) {
    std::cerr << "error: invalid " << e.what() << "\n";
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: invalid " << e.what() << "\n";
    return 1;
  } catch (const TrainingAborted& e) {
    std::cerr << "aborted (" << e.component() << "): " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
