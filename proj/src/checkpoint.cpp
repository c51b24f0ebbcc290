#include <cmath>
#include <fstream>
#include <json.hpp>

#include "tagfog/errors.hpp"
#include "tagfog/model.hpp"

namespace tagfog::model {

namespace {

using nlohmann::json;

json array_json(std::span<const double> values, const std::string& what) {
  for (double v : values) {
    if (!std::isfinite(v)) throw NumericalError("refusing to write non-finite value in " + what);
  }
  return json(std::vector<double>(values.begin(), values.end()));
}

std::vector<double> read_array(const json& j, std::size_t expected, const std::string& what) {
  if (!j.is_array()) throw FormatError("checkpoint: '" + what + "' is not an array");
  std::vector<double> out;
  out.reserve(j.size());
  for (const auto& v : j) {
    if (!v.is_number()) throw FormatError("checkpoint: '" + what + "' holds a non-number");
    out.push_back(v.get<double>());
  }
  if (out.size() != expected) {
    throw FormatError("checkpoint: '" + what + "' has " + std::to_string(out.size()) + " values, expected " +
                      std::to_string(expected));
  }
  return out;
}

template <typename T>
T field(const json& j, const char* key) {
  if (!j.contains(key)) throw FormatError(std::string("checkpoint: missing field '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw FormatError(std::string("checkpoint: field '") + key + "' has the wrong type");
  }
}

}  // namespace

void write_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
  const TagFogModel& m = checkpoint.model;
  json doc;
  doc["format_version"] = kCheckpointVersion;
  doc["kind"] = "tagfog-checkpoint";
  doc["dims"] = {{"input", m.dims().input},
                 {"feature", m.dims().feature},
                 {"projection", m.dims().projection},
                 {"classes", m.dims().classes},
                 {"hidden", m.dims().hidden}};
  json params = json::object();
  for (const auto& p : m.named_parameters()) params[p.name] = array_json(p.tensor.values(), p.name);
  doc["parameters"] = std::move(params);
  const auto& bn = m.projector_norm();
  doc["batch_norm"] = {{"momentum", bn.momentum},
                       {"eps", bn.eps},
                       {"running_mean", array_json(bn.running_mean, "running_mean")},
                       {"running_var", array_json(bn.running_var, "running_var")}};
  if (checkpoint.id_features.size() != checkpoint.id_labels.size()) {
    throw DimensionError("checkpoint: feature bank and label list differ in length");
  }
  json bank = json::array();
  for (const auto& row : checkpoint.id_features) bank.push_back(array_json(row, "id_features"));
  doc["id_features"] = std::move(bank);
  doc["id_labels"] = checkpoint.id_labels;

  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open checkpoint for writing: " + path.string());
  out << doc.dump() << '\n';
  if (!out) throw FormatError("failed writing checkpoint: " + path.string());
}

namespace {

Checkpoint parse_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint: " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw FormatError("checkpoint " + path.string() + " is not valid JSON: " + e.what());
  }
  if (field<std::string>(doc, "kind") != "tagfog-checkpoint") {
    throw FormatError("checkpoint " + path.string() + " is not a tagfog checkpoint");
  }
  const int version = field<int>(doc, "format_version");
  if (version != kCheckpointVersion) {
    throw FormatError("checkpoint " + path.string() + " has format_version " + std::to_string(version) +
                      ", expected " + std::to_string(kCheckpointVersion));
  }
  const json& dj = doc.at("dims");
  ModelDims dims;
  dims.input = field<std::size_t>(dj, "input");
  dims.feature = field<std::size_t>(dj, "feature");
  dims.projection = field<std::size_t>(dj, "projection");
  dims.classes = field<std::size_t>(dj, "classes");
  dims.hidden = field<std::vector<std::size_t>>(dj, "hidden");

  Checkpoint cp{CheckpointAccess::blank(dims), {}, {}};
  const json& params = doc.at("parameters");
  for (auto& p : cp.model.named_parameters()) {
    if (!params.contains(p.name)) throw FormatError("checkpoint: missing parameter '" + p.name + "'");
    auto values = read_array(params.at(p.name), p.tensor.numel(), p.name);
    auto dst = p.tensor.mutable_values();
    std::copy(values.begin(), values.end(), dst.begin());
  }
  const json& bn = doc.at("batch_norm");
  auto& state = cp.model.projector_norm();
  state.momentum = field<double>(bn, "momentum");
  state.eps = field<double>(bn, "eps");
  state.running_mean = read_array(bn.at("running_mean"), state.running_mean.size(), "running_mean");
  state.running_var = read_array(bn.at("running_var"), state.running_var.size(), "running_var");

  if (doc.contains("id_features")) {
    for (const auto& row : doc.at("id_features")) {
      cp.id_features.push_back(read_array(row, dims.feature, "id_features"));
    }
    cp.id_labels = field<std::vector<int>>(doc, "id_labels");
    if (cp.id_labels.size() != cp.id_features.size()) {
      throw FormatError("checkpoint: id_labels and id_features differ in length");
    }
  }
  cp.model.set_mode(Mode::inference);
  return cp;
}

}  // namespace

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  try {
    return parse_checkpoint(path);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("checkpoint " + path.string() + " is malformed: " + e.what());
  }
}

}  // namespace tagfog::model
