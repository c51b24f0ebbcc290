#include "tagfog/dataset.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <json.hpp>

#include "tagfog/errors.hpp"

namespace tagfog::data {

namespace {

using nlohmann::json;

std::size_t parse_positive(std::string_view text, std::string_view whole) {
  std::size_t value = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size() || value == 0) {
    throw ConfigError("invalid grid '" + std::string(whole) + "', expected RxC with positive integers");
  }
  return value;
}

}  // namespace

GridShape parse_grid(std::string_view text) {
  std::size_t sep = text.find('x');
  std::size_t sep_len = 1;
  if (sep == std::string_view::npos) {
    sep = text.find("\xc3\x97");  // U+00D7
    sep_len = 2;
  }
  if (sep == std::string_view::npos) {
    throw ConfigError("invalid grid '" + std::string(text) + "', expected RxC");
  }
  return {parse_positive(text.substr(0, sep), text), parse_positive(text.substr(sep + sep_len), text)};
}

std::string grid_string(const GridShape& grid) {
  return std::to_string(grid.rows) + "x" + std::to_string(grid.cols);
}

std::string_view origin_name(Origin origin) {
  switch (origin) {
    case Origin::id_train: return "id_train";
    case Origin::id_test: return "id_test";
    case Origin::fake_ood: return "fake_ood";
    case Origin::real_ood_test: return "real_ood_test";
  }
  return "unknown";
}

Origin parse_origin(std::string_view text) {
  if (text == "id_train") return Origin::id_train;
  if (text == "id_test") return Origin::id_test;
  if (text == "fake_ood") return Origin::fake_ood;
  if (text == "real_ood_test") return Origin::real_ood_test;
  throw FormatError("unknown sample origin '" + std::string(text) + "'");
}

void validate(const Dataset& dataset) {
  const int k = static_cast<int>(dataset.num_classes);
  if (k < 1) throw FormatError("dataset '" + dataset.name + "' declares no classes");
  for (std::size_t i = 0; i < dataset.samples.size(); ++i) {
    const LabeledSample& s = dataset.samples[i];
    const std::string where = "dataset '" + dataset.name + "' sample " + std::to_string(i);
    if (s.input.size() != dataset.input_dim()) {
      throw FormatError(where + " has width " + std::to_string(s.input.size()) + ", expected " +
                        std::to_string(dataset.input_dim()));
    }
    switch (s.origin) {
      case Origin::fake_ood:
        if (s.label != k + 1) throw FormatError(where + ": fake OOD samples must carry label K+1");
        break;
      case Origin::real_ood_test:
        if (s.label != 0) throw FormatError(where + ": real OOD samples carry no label (0)");
        break;
      case Origin::id_train:
      case Origin::id_test:
        if (s.label < 1 || s.label > k) {
          throw FormatError(where + ": ID label " + std::to_string(s.label) + " outside [1," + std::to_string(k) + "]");
        }
        break;
    }
  }
}

void write_dataset(const Dataset& dataset, const std::filesystem::path& path) {
  validate(dataset);
  json doc;
  doc["format_version"] = kDatasetVersion;
  doc["kind"] = "tagfog-dataset";
  doc["name"] = dataset.name;
  doc["num_classes"] = dataset.num_classes;
  doc["geometry"] = {{"height", dataset.geometry.height},
                     {"width", dataset.geometry.width},
                     {"channels", dataset.geometry.channels},
                     {"grid_rows", dataset.geometry.grid.rows},
                     {"grid_cols", dataset.geometry.grid.cols}};
  json samples = json::array();
  for (const auto& s : dataset.samples) {
    samples.push_back({{"input", s.input}, {"label", s.label}, {"origin", origin_name(s.origin)}});
  }
  doc["samples"] = std::move(samples);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open dataset for writing: " + path.string());
  out << doc.dump() << '\n';
  if (!out) throw FormatError("failed writing dataset: " + path.string());
}

Dataset read_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open dataset: " + path.string());
  Dataset d;
  try {
    const json doc = json::parse(in);
    if (doc.at("kind").get<std::string>() != "tagfog-dataset") {
      throw FormatError(path.string() + " is not a tagfog dataset");
    }
    const int version = doc.at("format_version").get<int>();
    if (version != kDatasetVersion) {
      throw FormatError("dataset " + path.string() + " has format_version " + std::to_string(version) +
                        ", expected " + std::to_string(kDatasetVersion));
    }
    d.name = doc.at("name").get<std::string>();
    d.num_classes = doc.at("num_classes").get<std::size_t>();
    const json& g = doc.at("geometry");
    d.geometry = {g.at("height").get<std::size_t>(), g.at("width").get<std::size_t>(),
                  g.at("channels").get<std::size_t>(),
                  {g.at("grid_rows").get<std::size_t>(), g.at("grid_cols").get<std::size_t>()}};
    for (const auto& s : doc.at("samples")) {
      d.samples.push_back({s.at("input").get<std::vector<double>>(), s.at("label").get<int>(),
                           parse_origin(s.at("origin").get<std::string>())});
    }
  } catch (const json::exception& e) {
    throw FormatError("dataset " + path.string() + " is malformed: " + e.what());
  }
  validate(d);
  return d;
}

}  // namespace tagfog::data
