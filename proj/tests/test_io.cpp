#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "kpgan/config.hpp"
#include "kpgan/image_io.hpp"
#include "kpgan/pose_io.hpp"

using namespace kpgan;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / "kpgan_test_io";
  fs::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST_SUITE("io") {

TEST_CASE("topology round trip") {
  const auto fig = EdgeSet::stick_figure();
  std::stringstream ss;
  write_topology(ss, fig);
  const auto back = read_topology(ss, "copy");
  CHECK(back.num_keypoints() == fig.num_keypoints());
  CHECK((back.edges() == fig.edges()));
  CHECK(back.symmetric_pairs() == fig.symmetric_pairs());
}

TEST_CASE("topology text format") {
  std::istringstream in("K 4\nedge 0 1\n\nedge 2 1\nedge 3 2\nsym 0 3\n");
  const auto e = read_topology(in);
  CHECK(e.num_keypoints() == 4);
  CHECK(e.edges().size() == 3);
  CHECK(e.edges()[1] == Edge{1, 2});
  CHECK(e.symmetric_pairs().front() == std::pair{0, 3});
}

TEST_CASE("malformed topology is rejected") {
  std::istringstream missing_header("edge 0 1\n");
  CHECK_THROWS_AS(read_topology(missing_header), std::runtime_error);
  std::istringstream bad_record("K 3\nbone 0 1\n");
  CHECK_THROWS_AS(read_topology(bad_record), std::runtime_error);
  std::istringstream out_of_range("K 3\nedge 0 3\n");
  CHECK_THROWS_AS(read_topology(out_of_range), std::invalid_argument);
  CHECK_THROWS(read_topology_file(scratch("does_not_exist.txt")));
}

TEST_CASE("keypoint sample round trip is exact") {
  std::vector<KeypointSet> samples{{{0.1, -0.2}, {0.3333333333333333, 0.7}}, {{-1.0, 1.0}, {1e-17, -0.123456789012345}}};
  const auto path = scratch("samples.txt");
  write_keypoint_samples_file(path, samples);
  const auto back = read_keypoint_samples_file(path);
  REQUIRE(back.size() == 2);
  CHECK((back[0] == samples[0]));
  CHECK((back[1] == samples[1]));
  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  CHECK(header == "S 2 K 2");
}

TEST_CASE("malformed keypoint samples are rejected") {
  std::istringstream short_file("S 2 K 2\n0 0\n0 0\n0 0\n");
  CHECK_THROWS_AS(read_keypoint_samples(short_file), std::runtime_error);
  std::istringstream bad_header("N 1 K 1\n0 0\n");
  CHECK_THROWS_AS(read_keypoint_samples(bad_header), std::runtime_error);
  std::istringstream not_numbers("S 1 K 1\nx y\n");
  CHECK_THROWS_AS(read_keypoint_samples(not_numbers), std::runtime_error);
}

TEST_CASE("png round trip") {
  Image img(3, {5, 7});
  for (std::size_t i = 0; i < img.data.size(); ++i) img.data[i] = static_cast<float>(i % 256) / 255.0f;
  const auto path = scratch("img.png");
  write_png(path, img);
  const auto back = read_png(path);
  CHECK(back.channels == 3);
  CHECK(back.resolution == img.resolution);
  for (std::size_t i = 0; i < img.data.size(); ++i) CHECK(back.data[i] == doctest::Approx(img.data[i]).epsilon(1e-6));
}

TEST_CASE("tile_images layout") {
  std::vector<Image> tiles{Image(1, {2, 2}, 0.25f), Image(1, {2, 2}, 0.5f), Image(1, {2, 2}, 0.75f)};
  const auto out = tile_images(tiles, 2, 1.0f);
  CHECK(out.resolution == Resolution{5, 5});
  CHECK(out.at(0, 0, 0) == 0.25f);
  CHECK(out.at(0, 0, 3) == 0.5f);
  CHECK(out.at(0, 3, 0) == 0.75f);
  CHECK(out.at(0, 2, 2) == 1.0f);
  CHECK(out.at(0, 4, 4) == 1.0f);
}

TEST_CASE("config defaults") {
  const TrainConfig c;
  CHECK(c.lambda == 10.0);
  CHECK(c.lambda_prime == 0.1);
  CHECK(c.gamma == 25.0);
  CHECK(c.learning_rate == 2e-4);
  CHECK(c.adam_beta1 == 0.5);
  CHECK(c.adam_beta2 == 0.999);
  CHECK(c.batch_size == 16);
  CHECK(c.grad_clip_norm == 1.0);
  CHECK(c.disc_logit_penalty == 0.01);
  CHECK(c.perceptual_weight == 500.0);
  CHECK(c.conditional_generator);
  CHECK(c.keypoint_bottleneck);
  CHECK_FALSE(c.second_cycle);
  CHECK_FALSE(c.prior_size_limit.has_value());
  CHECK(c.resolution == 64);
  CHECK_NOTHROW(c.validate());
}

TEST_CASE("config text round trip and precedence") {
  TrainConfig c;
  std::istringstream file("# comment\nlambda = 3.5   # trailing\n\nseed=7\nprior_size_limit = 50\npair_mode = tps\n");
  const auto applied = c.apply_text(file);
  CHECK(applied == std::vector<std::string>{"lambda", "seed", "prior_size_limit", "pair_mode"});
  c.set("lambda", "4");
  CHECK(c.lambda == 4.0);
  CHECK(c.seed == 7);
  CHECK(c.prior_size_limit == 50);
  CHECK(c.pair_mode == PairMode::kTps);
  std::stringstream ss;
  c.write(ss);
  TrainConfig back;
  back.apply_text(ss);
  CHECK(back.hash() == c.hash());
  for (const auto& key : TrainConfig::keys()) CHECK(back.get(key) == c.get(key));
  c.set("prior_size_limit", "none");
  CHECK_FALSE(c.prior_size_limit.has_value());
}

TEST_CASE("config errors name the field") {
  TrainConfig c;
  auto field_of = [](auto&& fn) {
    try {
      fn();
    } catch (const ConfigError& e) {
      return e.field();
    }
    return std::string("<no error>");
  };
  CHECK(field_of([&] { c.set("lamda", "1"); }) == "lamda");
  CHECK(field_of([&] { c.set("batch_size", "sixteen"); }) == "batch_size");
  CHECK(field_of([&] { c.set("second_cycle", "maybe"); }) == "second_cycle");
  CHECK(field_of([] {
          TrainConfig bad;
          bad.lambda = -1;
          bad.validate();
        }) == "lambda");
  CHECK(field_of([] {
          TrainConfig bad;
          bad.disc_logit_penalty = -0.5;
          bad.validate();
        }) == "disc_logit_penalty");
  CHECK(field_of([&] { c.set("perceptual_weight", "0"); c.validate(); }) == "perceptual_weight");
  CHECK(field_of([] {
          TrainConfig bad;
          bad.conditional_generator = false;
          bad.validate();
        }) == "keypoint_bottleneck");
  CHECK(field_of([] {
          TrainConfig ok;
          ok.conditional_generator = false;
          ok.keypoint_bottleneck = false;
          ok.validate();
        }) == "<no error>");
  std::istringstream no_equals("lambda 3\n");
  CHECK_THROWS_AS(c.apply_text(no_equals), ConfigError);
}

}  // TEST_SUITE
