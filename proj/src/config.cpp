#include "kpgan/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <sstream>

namespace kpgan {

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

template <class T>
T parse_number(const std::string& key, const std::string& text) {
  T value{};
  const char* begin = text.data();
  const char* end = begin + text.size();
  if constexpr (std::is_floating_point_v<T>) {
    // from_chars for doubles is fine in libstdc++ 11+, but strtod also takes "1e-4" forms reliably
    char* stop = nullptr;
    value = std::strtod(begin, &stop);
    if (stop != end || text.empty()) throw ConfigError(key, "expected a number, got '" + text + "'");
  } else {
    auto [ptr, ec] = std::from_chars(begin, end, value);
    if (ec != std::errc() || ptr != end) throw ConfigError(key, "expected an integer, got '" + text + "'");
  }
  return value;
}

void parse_into(const std::string& key, const std::string& text, double& out) { out = parse_number<double>(key, text); }
void parse_into(const std::string& key, const std::string& text, int& out) { out = parse_number<int>(key, text); }
void parse_into(const std::string& key, const std::string& text, long long& out) {
  out = parse_number<long long>(key, text);
}
void parse_into(const std::string& key, const std::string& text, std::uint64_t& out) {
  out = parse_number<std::uint64_t>(key, text);
}
void parse_into(const std::string&, const std::string& text, std::string& out) { out = text; }
void parse_into(const std::string& key, const std::string& text, bool& out) {
  if (text == "true" || text == "1" || text == "on" || text == "yes") {
    out = true;
  } else if (text == "false" || text == "0" || text == "off" || text == "no") {
    out = false;
  } else {
    throw ConfigError(key, "expected a boolean, got '" + text + "'");
  }
}
void parse_into(const std::string& key, const std::string& text, std::optional<long long>& out) {
  if (text == "none" || text.empty()) {
    out.reset();
  } else {
    out = parse_number<long long>(key, text);
  }
}
void parse_into(const std::string& key, const std::string& text, FeatureMode& out) {
  if (text == "identity") {
    out = FeatureMode::kIdentity;
  } else if (text == "random_conv") {
    out = FeatureMode::kRandomConv;
  } else {
    throw ConfigError(key, "expected identity|random_conv, got '" + text + "'");
  }
}
void parse_into(const std::string& key, const std::string& text, Reduction& out) {
  if (text == "mean") {
    out = Reduction::kMean;
  } else if (text == "sum") {
    out = Reduction::kSum;
  } else {
    throw ConfigError(key, "expected mean|sum, got '" + text + "'");
  }
}
void parse_into(const std::string& key, const std::string& text, PairMode& out) {
  if (text == "video") {
    out = PairMode::kVideo;
  } else if (text == "tps") {
    out = PairMode::kTps;
  } else {
    throw ConfigError(key, "expected video|tps, got '" + text + "'");
  }
}

std::string format(double v) {
  // shortest text that parses back to the same value
  char buf[32];
  const auto end = std::to_chars(buf, buf + sizeof buf, v).ptr;
  return std::string(buf, end);
}
std::string format(int v) { return std::to_string(v); }
std::string format(long long v) { return std::to_string(v); }
std::string format(std::uint64_t v) { return std::to_string(v); }
std::string format(const std::string& v) { return v; }
std::string format(bool v) { return v ? "true" : "false"; }
std::string format(const std::optional<long long>& v) { return v ? std::to_string(*v) : "none"; }
std::string format(FeatureMode v) { return v == FeatureMode::kIdentity ? "identity" : "random_conv"; }
std::string format(Reduction v) { return v == Reduction::kMean ? "mean" : "sum"; }
std::string format(PairMode v) { return v == PairMode::kVideo ? "video" : "tps"; }

struct Field {
  std::string name;
  std::function<void(TrainConfig&, const std::string&)> set;
  std::function<std::string(const TrainConfig&)> get;
};

template <class T>
Field field(const char* name, T TrainConfig::*member) {
  return {name, [name, member](TrainConfig& c, const std::string& text) { parse_into(name, text, c.*member); },
          [member](const TrainConfig& c) { return format(c.*member); }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table{
      field("lambda", &TrainConfig::lambda),
      field("lambda_prime", &TrainConfig::lambda_prime),
      field("gamma", &TrainConfig::gamma),
      field("gamma_mode", &TrainConfig::gamma_mode),
      field("perceptual_reduction", &TrainConfig::perceptual_reduction),
      field("perceptual_weight", &TrainConfig::perceptual_weight),
      field("learning_rate", &TrainConfig::learning_rate),
      field("adam_beta1", &TrainConfig::adam_beta1),
      field("adam_beta2", &TrainConfig::adam_beta2),
      field("batch_size", &TrainConfig::batch_size),
      field("grad_clip_norm", &TrainConfig::grad_clip_norm),
      field("disc_logit_penalty", &TrainConfig::disc_logit_penalty),
      field("iterations", &TrainConfig::iterations),
      field("seed", &TrainConfig::seed),
      field("conditional_generator", &TrainConfig::conditional_generator),
      field("keypoint_bottleneck", &TrainConfig::keypoint_bottleneck),
      field("second_cycle", &TrainConfig::second_cycle),
      field("orientation_correction", &TrainConfig::orientation_correction),
      field("prior_size_limit", &TrainConfig::prior_size_limit),
      field("pretrain_iterations", &TrainConfig::pretrain_iterations),
      field("pretrain_learning_rate", &TrainConfig::pretrain_learning_rate),
      field("pretrain_target_rms", &TrainConfig::pretrain_target_rms),
      field("pretrain_abort_rms", &TrainConfig::pretrain_abort_rms),
      field("pretrain_eval_every", &TrainConfig::pretrain_eval_every),
      field("resolution", &TrainConfig::resolution),
      field("encoder_width", &TrainConfig::encoder_width),
      field("decoder_width", &TrainConfig::decoder_width),
      field("unet_depth", &TrainConfig::unet_depth),
      field("regressor_width", &TrainConfig::regressor_width),
      field("disc_width", &TrainConfig::disc_width),
      field("num_sequences", &TrainConfig::num_sequences),
      field("sequence_length", &TrainConfig::sequence_length),
      field("test_sequences", &TrainConfig::test_sequences),
      field("dataset_seed", &TrainConfig::dataset_seed),
      field("motion_smoothness", &TrainConfig::motion_smoothness),
      field("pair_mode", &TrainConfig::pair_mode),
      field("tps_magnitude", &TrainConfig::tps_magnitude),
      field("topology", &TrainConfig::topology),
      field("data_dir", &TrainConfig::data_dir),
      field("log_every", &TrainConfig::log_every),
      field("checkpoint_every", &TrainConfig::checkpoint_every),
      field("eval_every", &TrainConfig::eval_every),
      field("eval_samples", &TrainConfig::eval_samples),
  };
  return table;
}

const Field& lookup(const std::string& key) {
  for (const auto& f : fields()) {
    if (f.name == key) return f;
  }
  throw ConfigError(key, "unknown configuration key");
}

void require(bool ok, const char* key, const std::string& message) {
  if (!ok) throw ConfigError(key, message);
}

}  // namespace

void TrainConfig::validate() const {
  require(lambda >= 0.0 && std::isfinite(lambda), "lambda", "must be finite and >= 0");
  require(perceptual_weight > 0.0 && std::isfinite(perceptual_weight), "perceptual_weight", "must be finite and > 0");
  require(lambda_prime >= 0.0 && std::isfinite(lambda_prime), "lambda_prime", "must be finite and >= 0");
  require(gamma > 0.0 && std::isfinite(gamma), "gamma", "must be positive");
  require(learning_rate > 0.0, "learning_rate", "must be positive");
  require(adam_beta1 >= 0.0 && adam_beta1 < 1.0, "adam_beta1", "must be in [0, 1)");
  require(adam_beta2 >= 0.0 && adam_beta2 < 1.0, "adam_beta2", "must be in [0, 1)");
  require(batch_size >= 1, "batch_size", "must be >= 1");
  require(grad_clip_norm > 0.0, "grad_clip_norm", "must be positive");
  require(disc_logit_penalty >= 0.0 && std::isfinite(disc_logit_penalty), "disc_logit_penalty",
          "must be finite and >= 0");
  require(iterations >= 0, "iterations", "must be >= 0");
  require(!(keypoint_bottleneck && !conditional_generator), "keypoint_bottleneck",
          "the keypoint bottleneck requires conditional_generator = true");
  require(!prior_size_limit || *prior_size_limit >= 1, "prior_size_limit", "must be >= 1 or none");
  require(pretrain_iterations >= 0, "pretrain_iterations", "must be >= 0");
  require(pretrain_learning_rate > 0.0, "pretrain_learning_rate", "must be positive");
  require(pretrain_target_rms > 0.0, "pretrain_target_rms", "must be positive");
  require(pretrain_abort_rms >= pretrain_target_rms, "pretrain_abort_rms", "must be >= pretrain_target_rms");
  require(pretrain_eval_every >= 1, "pretrain_eval_every", "must be >= 1");
  require(resolution >= 16 && resolution % 16 == 0, "resolution", "must be a positive multiple of 16");
  require(resolution % (1 << unet_depth) == 0, "unet_depth", "resolution must be divisible by 2^unet_depth");
  require(encoder_width >= 1, "encoder_width", "must be >= 1");
  require(decoder_width >= 1, "decoder_width", "must be >= 1");
  require(unet_depth >= 1, "unet_depth", "must be >= 1");
  require(regressor_width >= 1, "regressor_width", "must be >= 1");
  require(disc_width >= 1, "disc_width", "must be >= 1");
  require(num_sequences >= 2, "num_sequences", "must be >= 2");
  require(sequence_length >= 2, "sequence_length", "must be >= 2");
  require(test_sequences >= 1, "test_sequences", "must be >= 1");
  require(motion_smoothness >= 0.0, "motion_smoothness", "must be >= 0");
  require(tps_magnitude >= 0.0, "tps_magnitude", "must be >= 0");
  require(log_every >= 1, "log_every", "must be >= 1");
  require(checkpoint_every >= 1, "checkpoint_every", "must be >= 1");
  require(eval_every >= 1, "eval_every", "must be >= 1");
  require(eval_samples >= 1, "eval_samples", "must be >= 1");
}

ArchConfig TrainConfig::arch(int num_keypoints) const {
  ArchConfig a;
  a.resolution = image_resolution();
  a.num_keypoints = num_keypoints;
  a.encoder_width = encoder_width;
  a.decoder_width = decoder_width;
  a.unet_depth = unet_depth;
  a.regressor_width = regressor_width;
  a.disc_width = disc_width;
  a.conditional_decoder = conditional_generator;
  a.image_discriminator = second_cycle;
  return a;
}

void TrainConfig::set(const std::string& key, const std::string& value) { lookup(key).set(*this, trim(value)); }

std::string TrainConfig::get(const std::string& key) const { return lookup(key).get(*this); }

const std::vector<std::string>& TrainConfig::keys() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const auto& f : fields()) out.push_back(f.name);
    return out;
  }();
  return names;
}

std::vector<std::string> TrainConfig::apply_text(std::istream& in) {
  std::vector<std::string> applied;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash_pos = line.find('#'); hash_pos != std::string::npos) line.erase(hash_pos);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(line_no), "expected 'key = value', got '" + line + "'");
    }
    const std::string key = trim(line.substr(0, eq));
    set(key, line.substr(eq + 1));
    applied.push_back(key);
  }
  return applied;
}

std::vector<std::string> TrainConfig::apply_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config", "cannot open " + path.string());
  return apply_text(in);
}

void TrainConfig::write(std::ostream& out) const {
  for (const auto& f : fields()) out << f.name << " = " << f.get(*this) << "\n";
}

void TrainConfig::write_file(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write(out);
}

std::uint64_t TrainConfig::hash() const {
  std::ostringstream os;
  write(os);
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : os.str()) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace kpgan
