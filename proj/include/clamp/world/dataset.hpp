// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <utility>
#include <vector>

#include "clamp/world/episode.hpp"

namespace clamp::world {

struct ManifestEntry {
  std::string task;
  uint64_t seed = 0;
  std::string path;  // relative to the dataset directory
  int length = 0;
  bool success = false;
};

struct DatasetManifest {
  int version = 1;
  uint64_t config_hash = 0;
  std::vector<ManifestEntry> episodes;
};

// Single episode file: magic+version, then one typed, named record per field
// (little-endian payloads), then a trailing 64-bit checksum over everything
// before it. read_episode rejects bad magic/version, truncation, and
// checksum mismatches.
void write_episode(const Episode& ep, const std::string& path);
Episode read_episode(const std::string& path);

// manifest.json + ep_#####.bin files under `dir`; single writer by design
DatasetManifest write_dataset(const std::vector<Episode>& episodes, const std::string& dir,
                              uint64_t config_hash);
DatasetManifest read_manifest(const std::string& dir);
// loads every episode listed in the manifest, validating paths and lengths
std::pair<DatasetManifest, std::vector<Episode>> read_dataset(const std::string& dir);

}  // namespace clamp::world
