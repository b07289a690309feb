#pragma once

// Text formats for skeleton topologies and keypoint sample banks.
//
//   topology:  "K <int>" then "edge <i> <j>" / "sym <l> <r>" lines, 0-based.
//   samples:   "S <int> K <int>" then S*K lines "x y", grouped by sample.

#include <filesystem>
#include <iosfwd>
#include <vector>

#include "kpgan/pose_geometry.hpp"

namespace kpgan {

EdgeSet read_topology(std::istream& in, std::string name = "skeleton");
EdgeSet read_topology_file(const std::filesystem::path& path);
void write_topology(std::ostream& out, const EdgeSet& edges);
void write_topology_file(const std::filesystem::path& path, const EdgeSet& edges);

std::vector<KeypointSet> read_keypoint_samples(std::istream& in);
std::vector<KeypointSet> read_keypoint_samples_file(const std::filesystem::path& path);
void write_keypoint_samples(std::ostream& out, const std::vector<KeypointSet>& samples);
void write_keypoint_samples_file(const std::filesystem::path& path, const std::vector<KeypointSet>& samples);

}  // namespace kpgan
