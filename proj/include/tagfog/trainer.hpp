#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "tagfog/anchors.hpp"
#include "tagfog/dataset.hpp"
#include "tagfog/fog.hpp"
#include "tagfog/losses.hpp"
#include "tagfog/model.hpp"
#include "tagfog/rng.hpp"

namespace tagfog::trainer {

struct WarmupConfig {
  std::size_t batch_threshold = 256;  // warm up only when batch_size exceeds this
  double start_lr = 0.01;
  std::size_t epochs = 10;
};

struct DecayConfig {
  double factor = 10.0;
  std::vector<std::size_t> milestones{20};
};

struct TrainConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 64;
  double lr_init = 0.05;
  WarmupConfig warmup;
  DecayConfig decay;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  losses::LossWeights loss_weights;
  losses::ContrastSet contrast = losses::ContrastSet::exclude_self;
  fog::AugmentConfig augment;
  bool augment_enabled = true;
  std::uint64_t seed = 0;
};

void validate(const TrainConfig& config);

// Learning rate for a step: linear per-step warmup from start_lr to lr_init
// across the warmup epochs when batch_size > batch_threshold, then lr_init
// divided by factor once per milestone already reached.
double lr_at(const TrainConfig& config, std::size_t epoch, std::size_t step_in_epoch, std::size_t steps_per_epoch);

struct SgdParams {
  double lr = 0.05;
  double momentum = 0.9;
  double weight_decay = 1e-4;
};

// v <- momentum * v + (grad + weight_decay * param); param <- param - lr * v
void sgd_step(std::span<double> params, std::span<const double> grads, std::span<double> velocity,
              const SgdParams& sgd);

// One epoch of batches over the union of n_id ID indices [0, n_id) and
// n_fake fake indices [n_id, n_id + n_fake), uniformly shuffled. A trailing
// batch of a single sample is merged into the previous batch.
std::vector<std::vector<std::size_t>> make_batches(std::size_t n_id, std::size_t n_fake, std::size_t batch_size,
                                                   Rng& rng);

struct EpochMetrics {
  std::size_t epoch = 0;
  double lr = 0.0;  // at the epoch's first step
  double ce = 0.0;
  double ci = 0.0;
  double sc = 0.0;
  double total = 0.0;
  double id_accuracy = 0.0;  // argmax over the K ID logits on ID-train batches
};

struct FitResult {
  std::vector<EpochMetrics> epochs;
};

// Trains in place. `fake` may be empty (no fake-OOD data); `anchors` may be
// null when lambda1 == 0. Deterministic given config.seed.
FitResult fit(model::TagFogModel& model, const data::Dataset& id_train, const data::Dataset* fake,
              const anchors::AnchorSet* anchors, const TrainConfig& config);

}  // namespace tagfog::trainer
