#include "tagfog/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tagfog/errors.hpp"

namespace tagfog::trainer {

namespace {

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

void check_consistency(const model::TagFogModel& model, const data::Dataset& id_train, const data::Dataset* fake,
                       const anchors::AnchorSet* anchors, const TrainConfig& config) {
  const auto& dims = model.dims();
  if (id_train.samples.empty()) throw DomainError("training set is empty");
  if (id_train.input_dim() != dims.input) {
    throw DimensionError("training data width " + std::to_string(id_train.input_dim()) +
                         " differs from model input width " + std::to_string(dims.input));
  }
  if (id_train.num_classes != dims.classes) {
    throw DimensionError("training data has K=" + std::to_string(id_train.num_classes) + " but the model head has K=" +
                         std::to_string(dims.classes));
  }
  if (fake != nullptr && !fake->samples.empty()) {
    if (fake->input_dim() != dims.input || fake->num_classes != dims.classes) {
      throw DimensionError("fake-OOD data does not match the model dims");
    }
  }
  if (config.loss_weights.lambda1 > 0.0) {
    if (anchors == nullptr) throw ConfigError("lambda1 > 0 requires an anchor set");
    if (anchors->size() != dims.classes || anchors->dim() != dims.projection) {
      throw DimensionError("anchor set (K=" + std::to_string(anchors->size()) + ", d=" + std::to_string(anchors->dim()) +
                           ") does not match the model (K=" + std::to_string(dims.classes) +
                           ", d=" + std::to_string(dims.projection) + ")");
    }
  }
}

}  // namespace

void validate(const TrainConfig& c) {
  if (c.epochs < 1) throw ConfigError("epochs must be >= 1");
  if (c.batch_size < 2) throw ConfigError("batch_size must be >= 2 (the contrastive term needs pairs)");
  if (!(c.lr_init > 0.0)) throw ConfigError("lr_init must be > 0");
  if (!(c.warmup.start_lr > 0.0)) throw ConfigError("warmup start_lr must be > 0");
  if (!(c.decay.factor > 0.0)) throw ConfigError("decay factor must be > 0");
  for (std::size_t i = 0; i < c.decay.milestones.size(); ++i) {
    if (c.decay.milestones[i] >= c.epochs) throw ConfigError("lr milestones must be < epochs");
    if (i > 0 && c.decay.milestones[i] <= c.decay.milestones[i - 1]) {
      throw ConfigError("lr milestones must be strictly increasing");
    }
  }
  if (c.momentum < 0.0 || c.weight_decay < 0.0) throw ConfigError("momentum and weight_decay must be >= 0");
  if (c.augment.noise_sigma < 0.0) throw ConfigError("augment noise sigma must be >= 0");
  losses::validate(c.loss_weights);
}

double lr_at(const TrainConfig& config, std::size_t epoch, std::size_t step_in_epoch, std::size_t steps_per_epoch) {
  double lr = config.lr_init;
  const bool warm = config.batch_size > config.warmup.batch_threshold && config.warmup.epochs > 0 &&
                    epoch < config.warmup.epochs && steps_per_epoch > 0;
  if (warm) {
    const double progress = static_cast<double>(epoch * steps_per_epoch + step_in_epoch) /
                            static_cast<double>(config.warmup.epochs * steps_per_epoch);
    lr = config.warmup.start_lr + (config.lr_init - config.warmup.start_lr) * progress;
  }
  const auto passed = std::count_if(config.decay.milestones.begin(), config.decay.milestones.end(),
                                    [epoch](std::size_t m) { return epoch >= m; });
  return lr / std::pow(config.decay.factor, static_cast<double>(passed));
}

void sgd_step(std::span<double> params, std::span<const double> grads, std::span<double> velocity,
              const SgdParams& sgd) {
  if (params.size() != grads.size() || params.size() != velocity.size()) {
    throw DimensionError("sgd_step: params (" + std::to_string(params.size()) + "), grads (" +
                         std::to_string(grads.size()) + ") and velocity (" + std::to_string(velocity.size()) +
                         ") differ in size");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    velocity[i] = sgd.momentum * velocity[i] + (grads[i] + sgd.weight_decay * params[i]);
    params[i] -= sgd.lr * velocity[i];
  }
}

std::vector<std::vector<std::size_t>> make_batches(std::size_t n_id, std::size_t n_fake, std::size_t batch_size,
                                                   Rng& rng) {
  if (batch_size < 2) throw ConfigError("batch_size must be >= 2");
  if (n_id == 0) throw DomainError("make_batches: no ID samples");
  std::vector<std::size_t> order(n_id + n_fake);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t end = std::min(order.size(), start + batch_size);
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  if (batches.size() > 1 && batches.back().size() == 1) {
    batches[batches.size() - 2].push_back(batches.back().front());
    batches.pop_back();
  }
  return batches;
}

FitResult fit(model::TagFogModel& model, const data::Dataset& id_train, const data::Dataset* fake,
              const anchors::AnchorSet* anchors, const TrainConfig& config) {
  validate(config);
  check_consistency(model, id_train, fake, anchors, config);

  const std::size_t n_id = id_train.samples.size();
  const std::size_t n_fake = fake != nullptr ? fake->samples.size() : 0;
  const std::size_t width = model.dims().input;
  auto sample_at = [&](std::size_t idx) -> const data::LabeledSample& {
    return idx < n_id ? id_train.samples[idx] : fake->samples[idx - n_id];
  };
  auto geometry_at = [&](std::size_t idx) -> const data::ImageGeometry& {
    return idx < n_id ? id_train.geometry : fake->geometry;
  };

  Rng batch_rng = make_rng(config.seed, "batches");
  Rng augment_rng = make_rng(config.seed, "augment");

  const auto named = model.named_parameters();
  std::vector<std::vector<double>> velocity;
  for (const auto& p : named) velocity.emplace_back(p.tensor.numel(), 0.0);

  model.set_mode(model::Mode::training);
  FitResult result;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const auto batches = make_batches(n_id, n_fake, config.batch_size, batch_rng);
    EpochMetrics m;
    m.epoch = epoch;
    m.lr = lr_at(config, epoch, 0, batches.size());
    std::size_t seen = 0;
    std::size_t id_seen = 0;
    std::size_t id_correct = 0;

    for (std::size_t step = 0; step < batches.size(); ++step) {
      const auto& idx = batches[step];
      const std::size_t b = idx.size();
      std::vector<double> inputs(b * width);
      std::vector<int> labels(b);
      for (std::size_t r = 0; r < b; ++r) {
        const auto& s = sample_at(idx[r]);
        std::span<double> row(inputs.data() + r * width, width);
        std::copy(s.input.begin(), s.input.end(), row.begin());
        if (config.augment_enabled) fog::augment_in_place(row, geometry_at(idx[r]), config.augment, augment_rng);
        labels[r] = s.label;
      }

      const auto out = model.forward(Tensor::from_vector({b, width}, std::move(inputs)));
      const losses::BatchView view{out.logits, out.projected, labels};
      const auto loss = losses::total_loss(view, anchors, config.loss_weights, config.contrast);

      const std::pair<const char*, const Tensor*> terms[] = {
          {"ce", &loss.ce}, {"ci", &loss.ci}, {"sc", &loss.sc}, {"total", &loss.total}};
      for (const auto& [name, t] : terms) {
        if (!std::isfinite(t->item())) {
          throw NumericalError(std::string("non-finite ") + name + " loss at epoch " + std::to_string(epoch) +
                               ", step " + std::to_string(step));
        }
      }

      for (const auto& p : named) p.tensor.node()->grad.clear();
      loss.total.backward();

      const double lr = lr_at(config, epoch, step, batches.size());
      const SgdParams sgd{lr, config.momentum, config.weight_decay};
      for (std::size_t i = 0; i < named.size(); ++i) {
        Tensor param = named[i].tensor;
        auto grad = param.mutable_grad();
        if (!all_finite(grad)) {
          throw NumericalError("non-finite gradient in " + named[i].name + " at epoch " + std::to_string(epoch) +
                               ", step " + std::to_string(step));
        }
        sgd_step(param.mutable_values(), grad, velocity[i], sgd);
      }

      const double w = static_cast<double>(b);
      m.ce += w * loss.ce.item();
      m.ci += w * loss.ci.item();
      m.sc += w * loss.sc.item();
      m.total += w * loss.total.item();
      seen += b;

      const std::size_t k = model.dims().classes;
      const auto logits = out.logits.values();
      for (std::size_t r = 0; r < b; ++r) {
        if (labels[r] > static_cast<int>(k)) continue;
        const auto row = logits.subspan(r * (k + 1), k);
        const auto best = std::max_element(row.begin(), row.end()) - row.begin();
        ++id_seen;
        if (static_cast<int>(best) + 1 == labels[r]) ++id_correct;
      }
    }
    const double denom = static_cast<double>(seen);
    m.ce /= denom;
    m.ci /= denom;
    m.sc /= denom;
    m.total /= denom;
    m.id_accuracy = id_seen ? static_cast<double>(id_correct) / static_cast<double>(id_seen) : 0.0;
    result.epochs.push_back(m);
  }
  model.set_mode(model::Mode::inference);
  return result;
}

}  // namespace tagfog::trainer
