#include "tagfog/pipeline/config_file.hpp"

#include <fmt/format.h>
#include <fmt/ranges.h>

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "tagfog/errors.hpp"

namespace tagfog::pipeline {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

double to_double(std::string_view v) {
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) throw ConfigError("expected a number, got '" + std::string(v) + "'");
  return out;
}

std::size_t to_size(std::string_view v) {
  std::size_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ConfigError("expected a non-negative integer, got '" + std::string(v) + "'");
  }
  return out;
}

bool to_bool(std::string_view v) {
  if (v == "true" || v == "1" || v == "on") return true;
  if (v == "false" || v == "0" || v == "off") return false;
  throw ConfigError("expected true or false, got '" + std::string(v) + "'");
}

std::vector<std::size_t> to_sizes(std::string_view v) {
  std::vector<std::size_t> out;
  if (trim(v).empty()) return out;
  std::size_t start = 0;
  while (true) {
    const auto comma = v.find(',', start);
    out.push_back(to_size(trim(v.substr(start, comma == std::string_view::npos ? v.npos : comma - start))));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

std::string join(const std::vector<std::size_t>& v) {
  return fmt::format("{}", fmt::join(v, ","));
}

using Setter = std::function<void(RunConfig&, std::string_view)>;

const std::map<std::string, Setter, std::less<>>& setters() {
  static const std::map<std::string, Setter, std::less<>> table = {
      {"epochs", [](RunConfig& c, std::string_view v) { c.train.epochs = to_size(v); }},
      {"batch_size", [](RunConfig& c, std::string_view v) { c.train.batch_size = to_size(v); }},
      {"lr", [](RunConfig& c, std::string_view v) { c.train.lr_init = to_double(v); }},
      {"momentum", [](RunConfig& c, std::string_view v) { c.train.momentum = to_double(v); }},
      {"weight_decay", [](RunConfig& c, std::string_view v) { c.train.weight_decay = to_double(v); }},
      {"warmup.batch_threshold", [](RunConfig& c, std::string_view v) { c.train.warmup.batch_threshold = to_size(v); }},
      {"warmup.start_lr", [](RunConfig& c, std::string_view v) { c.train.warmup.start_lr = to_double(v); }},
      {"warmup.epochs", [](RunConfig& c, std::string_view v) { c.train.warmup.epochs = to_size(v); }},
      {"decay.factor", [](RunConfig& c, std::string_view v) { c.train.decay.factor = to_double(v); }},
      {"decay.milestones", [](RunConfig& c, std::string_view v) { c.train.decay.milestones = to_sizes(v); }},
      {"lambda1", [](RunConfig& c, std::string_view v) { c.train.loss_weights.lambda1 = to_double(v); }},
      {"lambda2", [](RunConfig& c, std::string_view v) { c.train.loss_weights.lambda2 = to_double(v); }},
      {"tau", [](RunConfig& c, std::string_view v) { c.train.loss_weights.tau = to_double(v); }},
      {"tau_prime", [](RunConfig& c, std::string_view v) { c.train.loss_weights.tau_prime = to_double(v); }},
      {"contrast",
       [](RunConfig& c, std::string_view v) {
         if (v == "exclude_self") {
           c.train.contrast = losses::ContrastSet::exclude_self;
         } else if (v == "include_self") {
           c.train.contrast = losses::ContrastSet::include_self;
         } else {
           throw ConfigError("contrast must be exclude_self or include_self");
         }
       }},
      {"augment", [](RunConfig& c, std::string_view v) { c.train.augment_enabled = to_bool(v); }},
      {"augment.noise_sigma", [](RunConfig& c, std::string_view v) { c.train.augment.noise_sigma = to_double(v); }},
      {"augment.patch_flip", [](RunConfig& c, std::string_view v) { c.train.augment.patch_flip = to_bool(v); }},
      {"model.feature", [](RunConfig& c, std::string_view v) { c.model.feature = to_size(v); }},
      {"model.projection", [](RunConfig& c, std::string_view v) { c.model.projection = to_size(v); }},
      {"model.hidden", [](RunConfig& c, std::string_view v) { c.model.hidden = to_sizes(v); }},
      {"fake.grid", [](RunConfig& c, std::string_view v) { c.fake.grid = data::parse_grid(v); }},
      {"fake.per_image", [](RunConfig& c, std::string_view v) { c.fake.per_image = to_size(v); }},
      {"anchors.mode",
       [](RunConfig& c, std::string_view v) {
         if (v == "orthonormal") {
           c.anchor_mode = anchors::SynthMode::orthonormal;
         } else if (v == "random_unit") {
           c.anchor_mode = anchors::SynthMode::random_unit;
         } else {
           throw ConfigError("anchors.mode must be orthonormal or random_unit");
         }
       }},
      {"toy.classes", [](RunConfig& c, std::string_view v) { c.toy.num_classes = to_size(v); }},
      {"toy.train_per_class", [](RunConfig& c, std::string_view v) { c.toy.train_per_class = to_size(v); }},
      {"toy.test_per_class", [](RunConfig& c, std::string_view v) { c.toy.test_per_class = to_size(v); }},
      {"toy.ood_samples", [](RunConfig& c, std::string_view v) { c.toy.ood_samples = to_size(v); }},
      {"toy.ood_sets", [](RunConfig& c, std::string_view v) { c.toy.ood_sets = to_size(v); }},
      {"toy.ood_arrangements", [](RunConfig& c, std::string_view v) { c.toy.ood_arrangements = to_size(v); }},
      {"toy.grid", [](RunConfig& c, std::string_view v) { c.toy.grid = data::parse_grid(v); }},
      {"toy.patch_size", [](RunConfig& c, std::string_view v) { c.toy.patch_size = to_size(v); }},
      {"toy.noise_sigma", [](RunConfig& c, std::string_view v) { c.toy.noise_sigma = to_double(v); }},
      {"score", [](RunConfig& c, std::string_view v) { c.score.kind = scores::parse_score(v); }},
      {"score.react_p", [](RunConfig& c, std::string_view v) { c.score.react_percentile = to_double(v); }},
      {"score.knn_k", [](RunConfig& c, std::string_view v) { c.score.knn_k = to_size(v); }},
      {"score.temperature", [](RunConfig& c, std::string_view v) { c.score.temperature = to_double(v); }},
  };
  return table;
}

}  // namespace

RunConfig parse_config(std::string_view text, RunConfig base) {
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? text.npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError(fmt::format("config line {}: expected key = value", line_no));
    const auto key = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    const auto it = setters().find(key);
    if (it == setters().end()) throw ConfigError(fmt::format("config line {}: unknown key '{}'", line_no, key));
    try {
      it->second(base, value);
    } catch (const Error& e) {
      throw ConfigError(fmt::format("config line {} ({}): {}", line_no, key, e.what()));
    }
  }
  trainer::validate(base.train);
  return base;
}

RunConfig load_config(const std::filesystem::path& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open config file: " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    return parse_config(buf.str(), std::move(base));
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::string format_config(const RunConfig& c) {
  const auto& t = c.train;
  std::string out;
  auto put = [&out](std::string_view key, const auto& value) { out += fmt::format("{} = {}\n", key, value); };
  put("epochs", t.epochs);
  put("batch_size", t.batch_size);
  put("lr", t.lr_init);
  put("momentum", t.momentum);
  put("weight_decay", t.weight_decay);
  put("warmup.batch_threshold", t.warmup.batch_threshold);
  put("warmup.start_lr", t.warmup.start_lr);
  put("warmup.epochs", t.warmup.epochs);
  put("decay.factor", t.decay.factor);
  put("decay.milestones", join(t.decay.milestones));
  put("lambda1", t.loss_weights.lambda1);
  put("lambda2", t.loss_weights.lambda2);
  put("tau", t.loss_weights.tau);
  put("tau_prime", t.loss_weights.tau_prime);
  put("contrast", t.contrast == losses::ContrastSet::exclude_self ? "exclude_self" : "include_self");
  put("augment", t.augment_enabled);
  put("augment.noise_sigma", t.augment.noise_sigma);
  put("augment.patch_flip", t.augment.patch_flip);
  put("model.feature", c.model.feature);
  put("model.projection", c.model.projection);
  put("model.hidden", join(c.model.hidden));
  put("fake.grid", data::grid_string(c.fake.grid));
  put("fake.per_image", c.fake.per_image);
  put("anchors.mode", c.anchor_mode == anchors::SynthMode::orthonormal ? "orthonormal" : "random_unit");
  put("toy.classes", c.toy.num_classes);
  put("toy.train_per_class", c.toy.train_per_class);
  put("toy.test_per_class", c.toy.test_per_class);
  put("toy.ood_samples", c.toy.ood_samples);
  put("toy.ood_sets", c.toy.ood_sets);
  put("toy.ood_arrangements", c.toy.ood_arrangements);
  put("toy.grid", data::grid_string(c.toy.grid));
  put("toy.patch_size", c.toy.patch_size);
  put("toy.noise_sigma", c.toy.noise_sigma);
  put("score", scores::score_name(c.score.kind));
  put("score.react_p", c.score.react_percentile);
  put("score.knn_k", c.score.knn_k);
  put("score.temperature", c.score.temperature);
  return out;
}

model::ModelDims model_dims(const ModelShape& shape, std::size_t input, std::size_t classes) {
  model::ModelDims dims;
  dims.input = input;
  dims.feature = shape.feature;
  dims.projection = shape.projection;
  dims.classes = classes;
  dims.hidden = shape.hidden;
  model::validate(dims);
  return dims;
}

}  // namespace tagfog::pipeline
