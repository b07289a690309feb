#include "kpgan/pose_io.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>
#include <string>

namespace kpgan {

namespace {

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return in;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

}  // namespace

EdgeSet read_topology(std::istream& in, std::string name) {
  std::string line;
  int k = -1;
  std::vector<Edge> edges;
  std::vector<std::pair<int, int>> sym;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::string tag;
    if (!(ls >> tag)) continue;
    auto fail = [&](const std::string& why) {
      throw std::runtime_error("topology line " + std::to_string(line_no) + ": " + why);
    };
    if (k < 0) {
      if (tag != "K" || !(ls >> k)) fail("expected 'K <int>' header");
      continue;
    }
    int a = 0, b = 0;
    if (!(ls >> a >> b)) fail("expected two indices");
    if (tag == "edge") {
      edges.push_back({a, b});
    } else if (tag == "sym") {
      sym.emplace_back(a, b);
    } else {
      fail("unknown record '" + tag + "'");
    }
  }
  if (k < 0) throw std::runtime_error("topology: missing 'K' header");
  return EdgeSet(k, std::move(edges), std::move(sym), std::move(name));
}

EdgeSet read_topology_file(const std::filesystem::path& path) {
  auto in = open_in(path);
  return read_topology(in, path.stem().string());
}

void write_topology(std::ostream& out, const EdgeSet& edges) {
  out << "K " << edges.num_keypoints() << "\n";
  for (const auto& e : edges.edges()) out << "edge " << e.i << " " << e.j << "\n";
  for (const auto& [l, r] : edges.symmetric_pairs()) out << "sym " << l << " " << r << "\n";
}

void write_topology_file(const std::filesystem::path& path, const EdgeSet& edges) {
  auto out = open_out(path);
  write_topology(out, edges);
}

std::vector<KeypointSet> read_keypoint_samples(std::istream& in) {
  std::string s_tag, k_tag;
  long long s = -1, k = -1;
  if (!(in >> s_tag >> s >> k_tag >> k) || s_tag != "S" || k_tag != "K" || s < 0 || k <= 0) {
    throw std::runtime_error("keypoint samples: expected 'S <int> K <int>' header");
  }
  std::vector<KeypointSet> samples(static_cast<std::size_t>(s), KeypointSet(static_cast<std::size_t>(k)));
  for (auto& sample : samples) {
    for (auto& p : sample) {
      if (!(in >> p.x >> p.y)) throw std::runtime_error("keypoint samples: truncated file");
      if (!std::isfinite(p.x) || !std::isfinite(p.y)) throw std::runtime_error("keypoint samples: non-finite value");
    }
  }
  return samples;
}

std::vector<KeypointSet> read_keypoint_samples_file(const std::filesystem::path& path) {
  auto in = open_in(path);
  return read_keypoint_samples(in);
}

void write_keypoint_samples(std::ostream& out, const std::vector<KeypointSet>& samples) {
  const std::size_t k = samples.empty() ? 1 : samples.front().size();
  out << "S " << samples.size() << " K " << k << "\n";
  out << std::setprecision(17);
  for (const auto& sample : samples) {
    if (sample.size() != k) throw std::invalid_argument("write_keypoint_samples: ragged keypoint counts");
    for (const auto& p : sample) out << p.x << " " << p.y << "\n";
  }
}

void write_keypoint_samples_file(const std::filesystem::path& path, const std::vector<KeypointSet>& samples) {
  auto out = open_out(path);
  write_keypoint_samples(out, samples);
}

}  // namespace kpgan
