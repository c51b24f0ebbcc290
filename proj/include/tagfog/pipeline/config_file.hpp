#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "tagfog/anchors.hpp"
#include "tagfog/fog.hpp"
#include "tagfog/scores.hpp"
#include "tagfog/trainer.hpp"

namespace tagfog::pipeline {

struct ModelShape {
  std::size_t feature = 128;
  std::size_t projection = 128;
  std::vector<std::size_t> hidden{256, 256};
};

struct FakeConfig {
  data::GridShape grid{2, 2};
  std::size_t per_image = 1;
};

// Everything a run reads from a config file. Unset keys keep the defaults.
struct RunConfig {
  trainer::TrainConfig train;
  ModelShape model;
  FakeConfig fake;
  anchors::SynthMode anchor_mode = anchors::SynthMode::orthonormal;
  fog::ToySpec toy;
  scores::ScoreFn score;
};

// Flat `key = value` text; '#' starts a comment. Lists are comma separated.
// Unknown keys and malformed values raise ConfigError naming the line.
RunConfig parse_config(std::string_view text, RunConfig base = {});
RunConfig load_config(const std::filesystem::path& path, RunConfig base = {});

// Canonical dump of every key, readable by parse_config.
std::string format_config(const RunConfig& config);

model::ModelDims model_dims(const ModelShape& shape, std::size_t input, std::size_t classes);

}  // namespace tagfog::pipeline
