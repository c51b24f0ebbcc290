#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "tagfog/rng.hpp"

namespace tagfog::anchors {

struct AnchorEntry {
  std::string class_name;
  std::string description;
  std::vector<double> vector;  // unit norm
};

// Fixed per-class text-embedding anchors, one per ID class, in class order.
class AnchorSet {
 public:
  // Validates and renormalizes; throws FormatError naming the offending entry.
  AnchorSet(std::size_t dim, std::vector<AnchorEntry> entries);

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return entries_.size(); }
  const std::vector<AnchorEntry>& entries() const { return entries_; }
  const AnchorEntry& operator[](std::size_t k) const { return entries_.at(k); }

  // Anchors stacked as a [K x d] row-major matrix.
  std::vector<double> matrix() const;

 private:
  std::size_t dim_;
  std::vector<AnchorEntry> entries_;
};

inline constexpr int kAnchorFormatVersion = 1;

AnchorSet load_anchors(const std::filesystem::path& path);
// Writes {format_version, dim, anchors: [{class_name, description, vector}]}
// with 17 significant digits per component.
void write_anchors(const AnchorSet& anchors, const std::filesystem::path& path);

enum class SynthMode { random_unit, orthonormal };

// Gaussian draws normalized to unit length; orthonormal mode runs
// Gram-Schmidt over the draws and needs d >= K.
AnchorSet synth_anchors(std::size_t classes, std::size_t dim, Rng& rng, SynthMode mode,
                        const std::vector<std::string>& class_names = {});

// Dot product of two unit vectors, clamped to [-1, 1].
double cosine_sim(std::span<const double> z, std::span<const double> mu);

}  // namespace tagfog::anchors
