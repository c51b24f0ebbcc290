#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <map>
#include <set>

#include "jigsaw_checks.hpp"
#include "tagfog/errors.hpp"
#include "tagfog/fog.hpp"

namespace tagfog::fog {
namespace {

// 4x4 single-channel image whose quadrants hold the values 1, 2, 3, 4.
ImageGrid quadrant_image() {
  ImageGrid img{4, 4, 1, std::vector<double>(16), {2, 2}};
  for (std::size_t r = 0; r < 4; ++r) {
    for (std::size_t c = 0; c < 4; ++c) img.pixels[r * 4 + c] = 1.0 + static_cast<double>((r / 2) * 2 + c / 2);
  }
  return img;
}

TEST(Jigsaw, ForcedPermutationMovesQuadrants) {
  const auto img = quadrant_image();
  const std::vector<std::size_t> perm{3, 2, 1, 0};
  const auto out = apply_patch_permutation(img, perm);
  // slot 0 (top-left) now holds source patch 3, and so on
  EXPECT_EQ(out.pixels[0], 4.0);
  EXPECT_EQ(out.pixels[3], 3.0);
  EXPECT_EQ(out.pixels[12], 2.0);
  EXPECT_EQ(out.pixels[15], 1.0);
  EXPECT_EQ(out.pixels[5], 4.0);
  EXPECT_EQ(out.pixels[10], 1.0);
}

TEST(Jigsaw, PixelMultisetIsConserved) {
  Rng rng(1);
  for (int t = 0; t < 50; ++t) {
    const auto img = testing::random_image(rng);
    const auto cropped = crop_to_grid(img);
    auto a = cropped.pixels;
    auto b = jigsaw_transform(img, rng).pixels;
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    EXPECT_EQ(a, b);
  }
}

TEST(Jigsaw, PaperGridOnThirtyTwoPixels) {
  ImageGrid img{32, 32, 1, std::vector<double>(32 * 32), {4, 4}};
  for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = static_cast<double>(i) / 1024.0;
  Rng rng(2);
  const auto out = jigsaw_transform(img, rng);
  const auto patches = testing::patch_contents(out);
  ASSERT_EQ(patches.size(), 16u);
  for (const auto& p : patches) EXPECT_EQ(p.size(), 64u);
  EXPECT_NE(out.pixels, img.pixels);
}

TEST(Jigsaw, InvariantsOverSeededTrials) {
  const auto tally = testing::run_jigsaw_trials(300, 3);
  EXPECT_EQ(tally.multiset_failures, 0u);
  EXPECT_EQ(tally.identity_failures, 0u);
  EXPECT_EQ(tally.roundtrip_failures, 0u);
}

TEST(Jigsaw, SingleCellGridIsContractViolation) {
  ImageGrid img{4, 4, 1, std::vector<double>(16, 0.5), {1, 1}};
  Rng rng(4);
  EXPECT_THROW(jigsaw_transform(img, rng), ContractViolation);
}

TEST(Jigsaw, CropIsCentered) {
  ImageGrid img{5, 7, 1, {}, {2, 3}};
  for (std::size_t i = 0; i < 35; ++i) img.pixels.push_back(static_cast<double>(i));
  const auto out = crop_to_grid(img);
  EXPECT_EQ(out.height, 4u);
  EXPECT_EQ(out.width, 6u);
  EXPECT_EQ(out.pixels[0], 0.0);  // offset (0, 0): 5 -> 4 and 7 -> 6 drop the trailing row/col
}

TEST(Permutations, NonIdentityAndRoughlyUniform) {
  Rng rng(5);
  std::map<std::vector<std::size_t>, int> counts;
  for (int i = 0; i < 2300; ++i) {
    const auto p = sample_nonidentity_permutation(3, rng);
    EXPECT_NE(p, (std::vector<std::size_t>{0, 1, 2}));
    ++counts[p];
  }
  EXPECT_EQ(counts.size(), 5u);
  for (const auto& [perm, n] : counts) EXPECT_NEAR(n, 460, 100);
  EXPECT_THROW(sample_nonidentity_permutation(1, rng), ContractViolation);
}

TEST(FakeSet, CountsLabelsAndDeterminism) {
  Rng src(6);
  std::vector<ImageGrid> images;
  for (int i = 0; i < 50; ++i) {
    ImageGrid img{8, 8, 1, std::vector<double>(64), {2, 2}};
    for (double& p : img.pixels) p = std::uniform_real_distribution<double>(0, 1)(src);
    images.push_back(img);
  }
  Rng a(7);
  Rng b(7);
  const auto two = generate_fake_set(images, 2, 5, a);
  ASSERT_EQ(two.size(), 100u);
  for (const auto& s : two) {
    EXPECT_EQ(s.label, 5);
    EXPECT_EQ(s.origin, data::Origin::fake_ood);
  }
  const auto again = generate_fake_set(images, 2, 5, b);
  for (std::size_t i = 0; i < two.size(); ++i) EXPECT_EQ(two[i].input, again[i].input);
  Rng c(8);
  EXPECT_EQ(generate_fake_set(images, 1, 5, c).size(), 50u);
  EXPECT_THROW(generate_fake_set({}, 1, 5, c), DomainError);
}

TEST(FakeSet, DatasetWrapperRejectsMisalignedGrid) {
  ToySpec spec;
  const auto bench = make_toy_benchmark(spec);
  Rng rng(9);
  const auto fake = generate_fake_dataset(bench.id_train, {2, 2}, 1, rng);
  EXPECT_EQ(fake.samples.size(), bench.id_train.samples.size());
  EXPECT_EQ(fake.num_classes, bench.id_train.num_classes);
  EXPECT_NO_THROW(data::validate(fake));
  EXPECT_THROW(generate_fake_dataset(bench.id_train, {3, 3}, 1, rng), DomainError);
}

TEST(ToyBenchmark, NoiselessPatchMeansAreLinearlySeparable) {
  ToySpec spec;
  spec.noise_sigma = 0.0;
  const auto bench = make_toy_benchmark(spec);
  // One weight vector per class: its own level arrangement. Equal norms plus
  // distinct arrangements make the own-class score the unique maximum.
  std::vector<std::vector<double>> weights;
  for (const auto& arr : bench.id_arrangements) {
    std::vector<double> w;
    for (std::size_t level : arr) w.push_back(bench.levels[level]);
    weights.push_back(w);
  }
  for (const auto* set : {&bench.id_train, &bench.id_test}) {
    for (const auto& s : set->samples) {
      const auto m = patch_means(s.input, set->geometry);
      std::size_t best = 0;
      double best_score = -1e300;
      for (std::size_t c = 0; c < weights.size(); ++c) {
        double score = 0.0;
        for (std::size_t p = 0; p < m.size(); ++p) score += weights[c][p] * m[p];
        if (score > best_score) {
          best_score = score;
          best = c;
        }
      }
      EXPECT_EQ(static_cast<int>(best) + 1, s.label);
    }
  }
}

TEST(ToyBenchmark, OodArrangementsAreDisjointFromId) {
  ToySpec spec;
  spec.ood_sets = 3;
  const auto bench = make_toy_benchmark(spec);
  std::set<Arrangement> id(bench.id_arrangements.begin(), bench.id_arrangements.end());
  EXPECT_EQ(id.size(), spec.num_classes);
  std::set<Arrangement> seen;
  ASSERT_EQ(bench.ood_arrangements.size(), 3u);
  for (const auto& group : bench.ood_arrangements) {
    for (const auto& a : group) {
      EXPECT_EQ(id.count(a), 0u);
      EXPECT_TRUE(seen.insert(a).second) << "OOD sets share an arrangement";
    }
  }
  for (const auto& d : bench.ood_tests) {
    EXPECT_EQ(d.samples.size(), spec.ood_samples);
    for (const auto& s : d.samples) EXPECT_EQ(s.label, 0);
  }
}

TEST(ToyBenchmark, SizesAndRange) {
  const auto bench = make_toy_benchmark(ToySpec{});
  EXPECT_EQ(bench.id_train.samples.size(), 200u);
  EXPECT_EQ(bench.id_test.samples.size(), 200u);
  for (const auto& s : bench.id_train.samples) {
    for (double v : s.input) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }
}

TEST(ToyBenchmark, TooManyClassesIsDomainError) {
  ToySpec spec;
  spec.num_classes = 25;  // 2x2 grid has 24 arrangements
  EXPECT_THROW(make_toy_benchmark(spec), DomainError);
  spec.num_classes = 1;
  EXPECT_THROW(make_toy_benchmark(spec), DomainError);
}

TEST(ToyBenchmark, JigsawRarelyKeepsTheClassArrangement) {
  const ToySpec spec;
  const auto bench = make_toy_benchmark(spec);
  Rng rng(10);
  std::size_t kept = 0;
  const std::size_t draws = 1000;
  for (std::size_t i = 0; i < draws; ++i) {
    const auto& arr = bench.id_arrangements[i % bench.id_arrangements.size()];
    const auto perm = sample_nonidentity_permutation(arr.size(), rng);
    Arrangement moved(arr.size());
    for (std::size_t slot = 0; slot < arr.size(); ++slot) moved[slot] = arr[perm[slot]];
    if (moved == arr) ++kept;
  }
  EXPECT_LT(static_cast<double>(kept) / draws, 0.05);
}

TEST(Augment, ClampsAndPreservesSize) {
  const auto bench = make_toy_benchmark(ToySpec{});
  auto pixels = bench.id_train.samples[0].input;
  Rng rng(11);
  augment_in_place(pixels, bench.id_train.geometry, AugmentConfig{0.5, true}, rng);
  EXPECT_EQ(pixels.size(), bench.id_train.samples[0].input.size());
  for (double v : pixels) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(Augment, PatchFlipKeepsPatchMeans) {
  const auto bench = make_toy_benchmark(ToySpec{});
  const auto& g = bench.id_train.geometry;
  auto pixels = bench.id_train.samples[3].input;
  const auto before = patch_means(pixels, g);
  Rng rng(12);
  augment_in_place(pixels, g, AugmentConfig{0.0, true}, rng);
  const auto after = patch_means(pixels, g);
  for (std::size_t p = 0; p < before.size(); ++p) EXPECT_NEAR(after[p], before[p], 1e-12);
}

class DatasetFileTest : public ::testing::Test {
 protected:
  std::filesystem::path path_ = std::filesystem::temp_directory_path() / "tagfog_dataset_test.json";
  void TearDown() override { std::filesystem::remove(path_); }
};

TEST_F(DatasetFileTest, RoundTripIsExact) {
  const auto bench = make_toy_benchmark(ToySpec{});
  data::write_dataset(bench.id_train, path_);
  const auto back = data::read_dataset(path_);
  EXPECT_EQ(back.name, bench.id_train.name);
  EXPECT_EQ(back.num_classes, bench.id_train.num_classes);
  EXPECT_EQ(back.geometry, bench.id_train.geometry);
  ASSERT_EQ(back.samples.size(), bench.id_train.samples.size());
  for (std::size_t i = 0; i < back.samples.size(); ++i) {
    EXPECT_EQ(back.samples[i].input, bench.id_train.samples[i].input);
    EXPECT_EQ(back.samples[i].label, bench.id_train.samples[i].label);
    EXPECT_EQ(back.samples[i].origin, bench.id_train.samples[i].origin);
  }
}

TEST(Dataset, LabelOriginConsistency) {
  data::Dataset d;
  d.name = "bad";
  d.num_classes = 2;
  d.geometry = {2, 2, 1, {2, 2}};
  d.samples.push_back({{0, 0, 0, 0}, 3, data::Origin::id_train});  // K+1 outside fake_ood
  EXPECT_THROW(data::validate(d), FormatError);
  d.samples[0] = {{0, 0, 0, 0}, 3, data::Origin::fake_ood};
  EXPECT_NO_THROW(data::validate(d));
}

TEST(Grid, ParsesBothSeparators) {
  EXPECT_EQ(data::parse_grid("4x4"), (data::GridShape{4, 4}));
  EXPECT_EQ(data::parse_grid("2×3"), (data::GridShape{2, 3}));
  EXPECT_THROW(data::parse_grid("4"), ConfigError);
}

}  // namespace
}  // namespace tagfog::fog
