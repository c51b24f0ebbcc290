#pragma once

#include <algorithm>
#include <random>
#include <vector>

#include "tagfog/fog.hpp"

namespace tagfog::testing {

// Random image with continuous pixel values, so distinct patches differ.
inline fog::ImageGrid random_image(Rng& rng) {
  static const data::GridShape grids[] = {{2, 2}, {3, 3}, {4, 4}, {1, 3}, {2, 5}};
  std::uniform_int_distribution<std::size_t> pick(0, std::size(grids) - 1);
  std::uniform_int_distribution<std::size_t> extra(0, 3);
  std::uniform_int_distribution<std::size_t> patch(1, 4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  fog::ImageGrid img;
  img.grid = grids[pick(rng)];
  img.height = img.grid.rows * patch(rng) + extra(rng);
  img.width = img.grid.cols * patch(rng) + extra(rng);
  img.channels = (rng() & 1u) ? 3 : 1;
  img.pixels.resize(img.height * img.width * img.channels);
  for (double& p : img.pixels) p = u(rng);
  return img;
}

// Patch contents (all pixels of a patch, row-major) in grid order.
inline std::vector<std::vector<double>> patch_contents(const fog::ImageGrid& img) {
  const std::size_t ph = img.height / img.grid.rows;
  const std::size_t pw = img.width / img.grid.cols;
  std::vector<std::vector<double>> out;
  for (std::size_t gr = 0; gr < img.grid.rows; ++gr) {
    for (std::size_t gc = 0; gc < img.grid.cols; ++gc) {
      std::vector<double> p;
      for (std::size_t r = 0; r < ph; ++r) {
        for (std::size_t c = 0; c < pw; ++c) {
          for (std::size_t ch = 0; ch < img.channels; ++ch) {
            p.push_back(img.pixels[((gr * ph + r) * img.width + gc * pw + c) * img.channels + ch]);
          }
        }
      }
      out.push_back(std::move(p));
    }
  }
  return out;
}

struct JigsawTally {
  std::size_t trials = 0;
  std::size_t multiset_failures = 0;
  std::size_t identity_failures = 0;
  std::size_t roundtrip_failures = 0;
};

inline JigsawTally run_jigsaw_trials(std::size_t trials, std::uint64_t seed) {
  JigsawTally t;
  Rng rng(seed);
  for (std::size_t i = 0; i < trials; ++i) {
    const auto img = random_image(rng);
    const auto cropped = fog::crop_to_grid(img);
    const auto out = fog::jigsaw_transform(img, rng);

    auto before = patch_contents(cropped);
    auto after = patch_contents(out);
    std::sort(before.begin(), before.end());
    std::sort(after.begin(), after.end());
    if (before != after || out.height != cropped.height || out.width != cropped.width) ++t.multiset_failures;

    if (out.pixels == cropped.pixels) ++t.identity_failures;

    const auto perm = fog::sample_nonidentity_permutation(cropped.grid.patches(), rng);
    const auto there = fog::apply_patch_permutation(cropped, perm);
    const auto back = fog::apply_patch_permutation(there, fog::inverse_permutation(perm));
    if (back.pixels != cropped.pixels) ++t.roundtrip_failures;
    ++t.trials;
  }
  return t;
}

}  // namespace tagfog::testing
