#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "tagfog/dataset.hpp"
#include "tagfog/rng.hpp"

namespace tagfog::fog {

using data::GridShape;
using data::ImageGeometry;

// H x W x C image, row-major (row, col, channel), values in [0, 1], with a
// patch grid for jigsaw shuffling.
struct ImageGrid {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 1;
  std::vector<double> pixels;
  GridShape grid;

  ImageGeometry geometry() const { return {height, width, channels, grid}; }
  bool operator==(const ImageGrid&) const = default;
};

ImageGrid image_from_sample(std::span<const double> input, const ImageGeometry& geometry);

// Center-crops to the largest height/width divisible by the grid.
ImageGrid crop_to_grid(const ImageGrid& image);

// Slot i of the output receives source patch permutation[i].
ImageGrid apply_patch_permutation(const ImageGrid& image, std::span<const std::size_t> permutation);
std::vector<std::size_t> inverse_permutation(std::span<const std::size_t> permutation);

// Uniform over the n! - 1 non-identity permutations (rejection sampling).
std::vector<std::size_t> sample_nonidentity_permutation(std::size_t n, Rng& rng);

// Shuffles the patches with a random non-identity permutation. Images whose
// size is not divisible by the grid are center-cropped first.
ImageGrid jigsaw_transform(const ImageGrid& image, Rng& rng);

// per_image jigsaw fakes for every source image (independent draws), all
// labeled fake_label with origin fake_ood. Source order is preserved.
std::vector<data::LabeledSample> generate_fake_set(std::span<const ImageGrid> id_images, std::size_t per_image,
                                                   int fake_label, Rng& rng);

// Dataset-level wrapper: re-grids the ID images with `grid` and returns the
// fake-OOD dataset. The grid must divide the image so widths stay aligned.
data::Dataset generate_fake_dataset(const data::Dataset& id_set, const GridShape& grid, std::size_t per_image,
                                    Rng& rng);

// Reduced training-time augmentation shared by ID and fake samples.
struct AugmentConfig {
  double noise_sigma = 0.02;
  bool patch_flip = true;  // mirror every patch left-right with probability 1/2
};

void augment_in_place(std::span<double> pixels, const ImageGeometry& geometry, const AugmentConfig& config,
                      Rng& rng);

// Per-patch mean intensity, patches in row-major grid order, averaged over channels.
std::vector<double> patch_means(std::span<const double> pixels, const ImageGeometry& geometry);

struct ToySpec {
  std::size_t num_classes = 4;
  std::size_t train_per_class = 50;
  std::size_t test_per_class = 50;
  std::size_t ood_samples = 200;  // per OOD set
  std::size_t ood_sets = 1;
  std::size_t ood_arrangements = 0;  // 0: as many as available, capped at 20
  GridShape grid{2, 2};
  std::size_t patch_size = 4;
  std::size_t channels = 1;
  double noise_sigma = 0.15;
  std::uint64_t seed = 0;
};

// An arrangement assigns level index arrangement[p] to patch p.
using Arrangement = std::vector<std::size_t>;

struct ToyBenchmark {
  data::Dataset id_train;
  data::Dataset id_test;
  std::vector<data::Dataset> ood_tests;
  std::vector<double> levels;
  std::vector<Arrangement> id_arrangements;
  std::vector<std::vector<Arrangement>> ood_arrangements;  // one list per OOD set
};

// Classes differ only in how a fixed set of patch intensities is arranged
// on the grid, so a non-identity patch shuffle moves a sample off its class.
ToyBenchmark make_toy_benchmark(const ToySpec& spec);

}  // namespace tagfog::fog
