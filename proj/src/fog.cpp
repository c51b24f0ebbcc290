#include "tagfog/fog.hpp"

#include <algorithm>
#include <numeric>
#include <random>
#include <set>

#include "tagfog/errors.hpp"

namespace tagfog::fog {

namespace {

void check_divisible(const ImageGrid& image) {
  if (image.grid.rows == 0 || image.grid.cols == 0 || image.height % image.grid.rows != 0 ||
      image.width % image.grid.cols != 0) {
    throw ContractViolation("grid " + data::grid_string(image.grid) + " does not divide a " +
                            std::to_string(image.height) + "x" + std::to_string(image.width) + " image");
  }
}

void check_permutation(std::span<const std::size_t> perm, std::size_t n) {
  if (perm.size() != n) {
    throw DimensionError("permutation of " + std::to_string(perm.size()) + " entries for " + std::to_string(n) +
                         " patches");
  }
  std::vector<bool> seen(n, false);
  for (std::size_t p : perm) {
    if (p >= n || seen[p]) throw DomainError("patch order is not a permutation");
    seen[p] = true;
  }
}

std::size_t factorial_capped(std::size_t n, std::size_t cap) {
  std::size_t f = 1;
  for (std::size_t i = 2; i <= n; ++i) {
    if (f > cap / i) return cap;
    f *= i;
  }
  return f;
}

}  // namespace

ImageGrid image_from_sample(std::span<const double> input, const ImageGeometry& geometry) {
  if (input.size() != geometry.pixel_count()) {
    throw DimensionError("sample of width " + std::to_string(input.size()) + " does not match a " +
                         std::to_string(geometry.height) + "x" + std::to_string(geometry.width) + "x" +
                         std::to_string(geometry.channels) + " image");
  }
  return {geometry.height, geometry.width, geometry.channels, std::vector<double>(input.begin(), input.end()),
          geometry.grid};
}

ImageGrid crop_to_grid(const ImageGrid& image) {
  const std::size_t h = image.height - image.height % image.grid.rows;
  const std::size_t w = image.width - image.width % image.grid.cols;
  if (h == 0 || w == 0) {
    throw DomainError("image " + std::to_string(image.height) + "x" + std::to_string(image.width) +
                      " is smaller than grid " + data::grid_string(image.grid));
  }
  if (h == image.height && w == image.width) return image;
  const std::size_t top = (image.height - h) / 2;
  const std::size_t left = (image.width - w) / 2;
  const std::size_t c = image.channels;
  ImageGrid out{h, w, c, std::vector<double>(h * w * c), image.grid};
  for (std::size_t r = 0; r < h; ++r) {
    const auto src = image.pixels.begin() + static_cast<std::ptrdiff_t>(((top + r) * image.width + left) * c);
    std::copy_n(src, w * c, out.pixels.begin() + static_cast<std::ptrdiff_t>(r * w * c));
  }
  return out;
}

ImageGrid apply_patch_permutation(const ImageGrid& image, std::span<const std::size_t> permutation) {
  check_divisible(image);
  const std::size_t n = image.grid.patches();
  check_permutation(permutation, n);
  const std::size_t ph = image.height / image.grid.rows;
  const std::size_t pw = image.width / image.grid.cols;
  const std::size_t c = image.channels;
  ImageGrid out = image;
  for (std::size_t slot = 0; slot < n; ++slot) {
    const std::size_t src = permutation[slot];
    const std::size_t dst_r0 = (slot / image.grid.cols) * ph;
    const std::size_t dst_c0 = (slot % image.grid.cols) * pw;
    const std::size_t src_r0 = (src / image.grid.cols) * ph;
    const std::size_t src_c0 = (src % image.grid.cols) * pw;
    for (std::size_t r = 0; r < ph; ++r) {
      const auto from = image.pixels.begin() + static_cast<std::ptrdiff_t>(((src_r0 + r) * image.width + src_c0) * c);
      std::copy_n(from, pw * c, out.pixels.begin() + static_cast<std::ptrdiff_t>(((dst_r0 + r) * image.width + dst_c0) * c));
    }
  }
  return out;
}

std::vector<std::size_t> inverse_permutation(std::span<const std::size_t> permutation) {
  check_permutation(permutation, permutation.size());
  std::vector<std::size_t> inv(permutation.size());
  for (std::size_t i = 0; i < permutation.size(); ++i) inv[permutation[i]] = i;
  return inv;
}

std::vector<std::size_t> sample_nonidentity_permutation(std::size_t n, Rng& rng) {
  if (n < 2) throw ContractViolation("a 1-patch grid admits no non-identity permutation");
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  do {
    std::shuffle(perm.begin(), perm.end(), rng);
  } while (std::is_sorted(perm.begin(), perm.end()));
  return perm;
}

ImageGrid jigsaw_transform(const ImageGrid& image, Rng& rng) {
  if (image.grid.patches() < 2) {
    throw ContractViolation("jigsaw needs at least 2 patches, grid is " + data::grid_string(image.grid));
  }
  const ImageGrid cropped = crop_to_grid(image);
  const auto perm = sample_nonidentity_permutation(cropped.grid.patches(), rng);
  return apply_patch_permutation(cropped, perm);
}

std::vector<data::LabeledSample> generate_fake_set(std::span<const ImageGrid> id_images, std::size_t per_image,
                                                   int fake_label, Rng& rng) {
  if (id_images.empty()) throw DomainError("cannot generate fake outliers from an empty ID set");
  if (per_image < 1) throw ConfigError("per_image must be >= 1");
  std::vector<data::LabeledSample> fakes;
  fakes.reserve(id_images.size() * per_image);
  for (const ImageGrid& img : id_images) {
    for (std::size_t j = 0; j < per_image; ++j) {
      fakes.push_back({jigsaw_transform(img, rng).pixels, fake_label, data::Origin::fake_ood});
    }
  }
  return fakes;
}

data::Dataset generate_fake_dataset(const data::Dataset& id_set, const GridShape& grid, std::size_t per_image,
                                    Rng& rng) {
  ImageGeometry geometry = id_set.geometry;
  geometry.grid = grid;
  if (geometry.height % grid.rows != 0 || geometry.width % grid.cols != 0) {
    throw DomainError("grid " + data::grid_string(grid) + " does not divide the dataset's " +
                      std::to_string(geometry.height) + "x" + std::to_string(geometry.width) +
                      " images; cropping would change the input width");
  }
  std::vector<ImageGrid> images;
  images.reserve(id_set.samples.size());
  for (const auto& s : id_set.samples) images.push_back(image_from_sample(s.input, geometry));

  data::Dataset out;
  out.name = id_set.name + "-fake";
  out.num_classes = id_set.num_classes;
  out.geometry = geometry;
  out.samples = generate_fake_set(images, per_image, id_set.fake_label(), rng);
  return out;
}

void augment_in_place(std::span<double> pixels, const ImageGeometry& geometry, const AugmentConfig& config,
                      Rng& rng) {
  if (pixels.size() != geometry.pixel_count()) throw DimensionError("augment: sample width mismatch");
  if (config.patch_flip && std::bernoulli_distribution(0.5)(rng)) {
    const std::size_t pw = geometry.width / geometry.grid.cols;
    const std::size_t c = geometry.channels;
    for (std::size_t r = 0; r < geometry.height; ++r) {
      for (std::size_t pc = 0; pc < geometry.grid.cols; ++pc) {
        const std::size_t c0 = pc * pw;
        for (std::size_t a = 0, b = pw - 1; a < b; ++a, --b) {
          for (std::size_t ch = 0; ch < c; ++ch) {
            std::swap(pixels[(r * geometry.width + c0 + a) * c + ch], pixels[(r * geometry.width + c0 + b) * c + ch]);
          }
        }
      }
    }
  }
  if (config.noise_sigma > 0.0) {
    std::normal_distribution<double> noise(0.0, config.noise_sigma);
    for (double& v : pixels) v = std::clamp(v + noise(rng), 0.0, 1.0);
  }
}

std::vector<double> patch_means(std::span<const double> pixels, const ImageGeometry& geometry) {
  if (pixels.size() != geometry.pixel_count()) throw DimensionError("patch_means: sample width mismatch");
  const std::size_t ph = geometry.height / geometry.grid.rows;
  const std::size_t pw = geometry.width / geometry.grid.cols;
  const std::size_t c = geometry.channels;
  std::vector<double> means(geometry.grid.patches(), 0.0);
  for (std::size_t r = 0; r < geometry.grid.rows * ph; ++r) {
    for (std::size_t col = 0; col < geometry.grid.cols * pw; ++col) {
      const std::size_t slot = (r / ph) * geometry.grid.cols + col / pw;
      for (std::size_t ch = 0; ch < c; ++ch) means[slot] += pixels[(r * geometry.width + col) * c + ch];
    }
  }
  for (double& m : means) m /= static_cast<double>(ph * pw * c);
  return means;
}

ToyBenchmark make_toy_benchmark(const ToySpec& spec) {
  if (spec.num_classes < 2) throw DomainError("toy benchmark needs K >= 2 classes");
  if (spec.ood_sets < 1) throw ConfigError("toy benchmark needs at least one OOD set");
  if (spec.patch_size < 1 || spec.channels < 1) throw ConfigError("patch size and channels must be >= 1");
  const std::size_t n = spec.grid.patches();
  constexpr std::size_t kCap = 1'000'000;
  const std::size_t available = factorial_capped(n, kCap);
  std::size_t ood_count = spec.ood_arrangements;
  if (ood_count == 0) {
    ood_count = available > spec.num_classes ? std::min<std::size_t>(available - spec.num_classes, 20) : 0;
  }
  ood_count = std::max(ood_count, spec.ood_sets);
  if (spec.num_classes + ood_count > available) {
    throw DomainError("requested " + std::to_string(spec.num_classes) + " ID + " + std::to_string(ood_count) +
                      " OOD arrangements but a " + data::grid_string(spec.grid) + " grid has only " +
                      std::to_string(available) + " distinct arrangements");
  }

  Rng rng = make_rng(spec.seed, "toy-arrangements");
  std::vector<Arrangement> pool;
  if (n <= 8) {
    Arrangement a(n);
    std::iota(a.begin(), a.end(), 0);
    do {
      pool.push_back(a);
    } while (std::next_permutation(a.begin(), a.end()));
    std::shuffle(pool.begin(), pool.end(), rng);
  } else {
    std::set<Arrangement> seen;
    Arrangement a(n);
    std::iota(a.begin(), a.end(), 0);
    while (pool.size() < spec.num_classes + ood_count) {
      std::shuffle(a.begin(), a.end(), rng);
      if (seen.insert(a).second) pool.push_back(a);
    }
  }

  ToyBenchmark bench;
  for (std::size_t j = 0; j < n; ++j) bench.levels.push_back(static_cast<double>(j + 1) / static_cast<double>(n + 1));
  bench.id_arrangements.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(spec.num_classes));
  bench.ood_arrangements.resize(spec.ood_sets);
  for (std::size_t i = 0; i < ood_count; ++i) {
    bench.ood_arrangements[i % spec.ood_sets].push_back(pool[spec.num_classes + i]);
  }

  const ImageGeometry geometry{spec.grid.rows * spec.patch_size, spec.grid.cols * spec.patch_size, spec.channels,
                               spec.grid};
  auto render = [&](const Arrangement& arr, Rng& noise_rng) {
    std::normal_distribution<double> noise(0.0, spec.noise_sigma > 0.0 ? spec.noise_sigma : 1.0);
    std::vector<double> px(geometry.pixel_count());
    for (std::size_t r = 0; r < geometry.height; ++r) {
      for (std::size_t c = 0; c < geometry.width; ++c) {
        const std::size_t slot = (r / spec.patch_size) * spec.grid.cols + c / spec.patch_size;
        for (std::size_t ch = 0; ch < spec.channels; ++ch) {
          double v = bench.levels[arr[slot]];
          if (spec.noise_sigma > 0.0) v += noise(noise_rng);
          px[(r * geometry.width + c) * spec.channels + ch] = std::clamp(v, 0.0, 1.0);
        }
      }
    }
    return px;
  };

  auto make_id = [&](const char* name, std::size_t per_class, data::Origin origin) {
    data::Dataset d{name, spec.num_classes, geometry, {}};
    Rng noise_rng = make_rng(spec.seed, name);
    for (std::size_t i = 0; i < per_class; ++i) {
      for (std::size_t k = 0; k < spec.num_classes; ++k) {
        d.samples.push_back({render(bench.id_arrangements[k], noise_rng), static_cast<int>(k + 1), origin});
      }
    }
    return d;
  };
  bench.id_train = make_id("id_train", spec.train_per_class, data::Origin::id_train);
  bench.id_test = make_id("id_test", spec.test_per_class, data::Origin::id_test);

  for (std::size_t s = 0; s < spec.ood_sets; ++s) {
    const std::string name = "ood_" + std::to_string(s);
    data::Dataset d{name, spec.num_classes, geometry, {}};
    Rng noise_rng = make_rng(spec.seed, name);
    const auto& arrs = bench.ood_arrangements[s];
    for (std::size_t i = 0; i < spec.ood_samples; ++i) {
      d.samples.push_back({render(arrs[i % arrs.size()], noise_rng), 0, data::Origin::real_ood_test});
    }
    bench.ood_tests.push_back(std::move(d));
  }
  return bench;
}

}  // namespace tagfog::fog
