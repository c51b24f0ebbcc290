#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace tagfog::data {

struct GridShape {
  std::size_t rows = 4;
  std::size_t cols = 4;

  std::size_t patches() const { return rows * cols; }
  bool operator==(const GridShape&) const = default;
};

// Parses "RxC" (also "R×C").
GridShape parse_grid(std::string_view text);
std::string grid_string(const GridShape& grid);

struct ImageGeometry {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 1;
  GridShape grid;

  std::size_t pixel_count() const { return height * width * channels; }
  bool operator==(const ImageGeometry&) const = default;
};

enum class Origin { id_train, id_test, fake_ood, real_ood_test };

std::string_view origin_name(Origin origin);
Origin parse_origin(std::string_view text);

// Labels are 1-based: 1..K for ID classes, K+1 for fake OOD, 0 for real OOD
// test data (which carries no training label).
struct LabeledSample {
  std::vector<double> input;
  int label = 0;
  Origin origin = Origin::id_train;
};

struct Dataset {
  std::string name;
  std::size_t num_classes = 0;
  ImageGeometry geometry;
  std::vector<LabeledSample> samples;

  std::size_t input_dim() const { return geometry.pixel_count(); }
  int fake_label() const { return static_cast<int>(num_classes) + 1; }
};

// Checks label/origin consistency and input widths; throws FormatError.
void validate(const Dataset& dataset);

inline constexpr int kDatasetVersion = 1;

void write_dataset(const Dataset& dataset, const std::filesystem::path& path);
Dataset read_dataset(const std::filesystem::path& path);

}  // namespace tagfog::data
