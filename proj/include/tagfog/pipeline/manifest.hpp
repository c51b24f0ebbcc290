#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace tagfog::pipeline {

std::string sha256_file(const std::filesystem::path& path);

struct FileDigest {
  std::string path;
  std::string sha256;
};

struct StageRecord {
  std::string stage;
  std::vector<std::string> args;
  std::uint64_t seed = 0;
  std::vector<FileDigest> inputs;
  std::vector<FileDigest> outputs;
  double wall_clock_s = 0.0;
};

struct Manifest {
  std::vector<StageRecord> stages;
};

inline constexpr int kManifestVersion = 1;

std::vector<FileDigest> digest_files(const std::vector<std::filesystem::path>& paths);

Manifest read_manifest(const std::filesystem::path& path);
void write_manifest(const Manifest& manifest, const std::filesystem::path& path);

// Appends to an existing manifest or starts a new one.
void append_stage(const std::filesystem::path& path, const StageRecord& record);

struct DigestMismatch {
  std::string stage;
  std::string path;
  std::string expected;
  std::string actual;  // empty when the file is missing
};

// Recomputes every recorded digest against the files on disk.
std::vector<DigestMismatch> check_manifest(const Manifest& manifest);

}  // namespace tagfog::pipeline
