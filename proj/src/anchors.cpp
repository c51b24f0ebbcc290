#include "tagfog/anchors.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <fstream>
#include <json.hpp>
#include <random>
#include <set>

#include "tagfog/errors.hpp"

namespace tagfog::anchors {

namespace {

double norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace

AnchorSet::AnchorSet(std::size_t dim, std::vector<AnchorEntry> entries) : dim_(dim), entries_(std::move(entries)) {
  if (dim_ == 0) throw FormatError("anchor dimension must be positive");
  if (entries_.size() < 2) {
    throw FormatError("an anchor set needs at least 2 classes, got " + std::to_string(entries_.size()));
  }
  std::set<std::string> names;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    AnchorEntry& e = entries_[i];
    const std::string who = "anchor " + std::to_string(i) + " ('" + e.class_name + "')";
    if (e.class_name.empty()) throw FormatError(who + " has an empty class name");
    if (!names.insert(e.class_name).second) throw FormatError(who + " duplicates an earlier class name");
    if (e.vector.size() != dim_) {
      throw FormatError(who + " has dimension " + std::to_string(e.vector.size()) + ", expected " +
                        std::to_string(dim_));
    }
    const double n = norm(e.vector);
    if (!std::isfinite(n)) throw FormatError(who + " has non-finite components");
    if (n == 0.0) throw FormatError(who + " is a zero vector");
    for (double& x : e.vector) x /= n;
  }
}

std::vector<double> AnchorSet::matrix() const {
  std::vector<double> m;
  m.reserve(entries_.size() * dim_);
  for (const auto& e : entries_) m.insert(m.end(), e.vector.begin(), e.vector.end());
  return m;
}

AnchorSet load_anchors(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open anchor file: " + path.string());
  try {
    const auto doc = nlohmann::json::parse(in);
    const int version = doc.at("format_version").get<int>();
    if (version != kAnchorFormatVersion) {
      throw FormatError("anchor file " + path.string() + " has format_version " + std::to_string(version) +
                        ", expected " + std::to_string(kAnchorFormatVersion));
    }
    const auto dim = doc.at("dim").get<std::size_t>();
    std::vector<AnchorEntry> entries;
    for (const auto& a : doc.at("anchors")) {
      entries.push_back({a.at("class_name").get<std::string>(), a.value("description", std::string{}),
                         a.at("vector").get<std::vector<double>>()});
    }
    return AnchorSet(dim, std::move(entries));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("anchor file " + path.string() + " is malformed: " + e.what());
  }
}

void write_anchors(const AnchorSet& anchors, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open anchor file for writing: " + path.string());
  out << "{\n  \"format_version\": " << kAnchorFormatVersion << ",\n  \"dim\": " << anchors.dim()
      << ",\n  \"anchors\": [\n";
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    const auto& e = anchors[i];
    out << "    {\"class_name\": " << nlohmann::json(e.class_name).dump()
        << ", \"description\": " << nlohmann::json(e.description).dump() << ", \"vector\": [";
    for (std::size_t j = 0; j < e.vector.size(); ++j) {
      out << (j ? ", " : "") << fmt::format("{:.17g}", e.vector[j]);
    }
    out << "]}" << (i + 1 < anchors.size() ? "," : "") << "\n";
  }
  out << "  ]\n}\n";
  if (!out) throw FormatError("failed writing anchor file: " + path.string());
}

AnchorSet synth_anchors(std::size_t classes, std::size_t dim, Rng& rng, SynthMode mode,
                        const std::vector<std::string>& class_names) {
  if (classes < 2) throw DomainError("synth_anchors needs K >= 2");
  if (dim == 0) throw DomainError("synth_anchors needs d >= 1");
  if (mode == SynthMode::orthonormal && dim < classes) {
    throw DomainError("orthonormal anchors need d >= K (d=" + std::to_string(dim) + ", K=" +
                      std::to_string(classes) + ")");
  }
  if (!class_names.empty() && class_names.size() != classes) {
    throw DomainError("got " + std::to_string(class_names.size()) + " class names for K=" + std::to_string(classes));
  }
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<AnchorEntry> entries;
  for (std::size_t k = 0; k < classes; ++k) {
    std::vector<double> v(dim);
    for (double& x : v) x = normal(rng);
    if (mode == SynthMode::orthonormal) {
      // Two passes of modified Gram-Schmidt keep the set orthogonal to ~1e-16.
      for (int pass = 0; pass < 2; ++pass) {
        for (const auto& prev : entries) {
          double dot = 0.0;
          for (std::size_t j = 0; j < dim; ++j) dot += v[j] * prev.vector[j];
          for (std::size_t j = 0; j < dim; ++j) v[j] -= dot * prev.vector[j];
        }
      }
    }
    const double n = norm(v);
    for (double& x : v) x /= n;
    std::string name = class_names.empty() ? "class_" + std::to_string(k + 1) : class_names[k];
    entries.push_back({std::move(name), "", std::move(v)});
  }
  return AnchorSet(dim, std::move(entries));
}

double cosine_sim(std::span<const double> z, std::span<const double> mu) {
  if (z.size() != mu.size()) {
    throw DimensionError("cosine_sim of vectors with lengths " + std::to_string(z.size()) + " and " +
                         std::to_string(mu.size()));
  }
  double dot = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) dot += z[i] * mu[i];
  return std::clamp(dot, -1.0, 1.0);
}

}  // namespace tagfog::anchors
