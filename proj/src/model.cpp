#include "tagfog/model.hpp"

#include <cmath>
#include <random>

#include "tagfog/errors.hpp"
#include "tagfog/ops.hpp"
#include "tagfog/rng.hpp"

namespace tagfog::model {

namespace {

Linear zero_linear(std::size_t in, std::size_t out) {
  return Linear{Tensor::zeros({in, out}, true), Tensor::zeros({out}, true)};
}

// Normal weights with variance gain / fan_in, zero bias.
void init_linear(Linear& layer, double gain, Rng& rng) {
  const double sd = std::sqrt(gain / static_cast<double>(layer.in_features()));
  std::normal_distribution<double> normal(0.0, sd);
  for (double& w : layer.weight.mutable_values()) w = normal(rng);
}

}  // namespace

void validate(const ModelDims& dims) {
  if (dims.input == 0 || dims.feature == 0 || dims.projection == 0 || dims.classes == 0) {
    throw ConfigError("model dims must all be >= 1 (input=" + std::to_string(dims.input) +
                      ", feature=" + std::to_string(dims.feature) + ", projection=" +
                      std::to_string(dims.projection) + ", classes=" + std::to_string(dims.classes) + ")");
  }
  for (std::size_t h : dims.hidden) {
    if (h == 0) throw ConfigError("hidden layer widths must be >= 1");
  }
}

Tensor Linear::operator()(const Tensor& x) const { return add(matmul(x, weight), bias); }

Tensor batchnorm_forward(const Tensor& x, BatchNormState& state, Mode mode) {
  if (mode == Mode::inference) return batchnorm_inference(x, state);
  if (x.rank() != 2 || x.dim(1) != state.running_mean.size()) {
    throw DimensionError("batch norm over " + std::to_string(state.running_mean.size()) +
                         " features got input " + shape_string(x.shape()));
  }
  if (x.dim(0) < 2) {
    throw ContractViolation("batch norm in training mode needs a batch of at least 2 samples");
  }
  const Tensor normalized = batch_normalize(x, state.eps);

  const std::size_t rows = x.dim(0);
  const std::size_t cols = x.dim(1);
  const auto xv = x.values();
  for (std::size_t j = 0; j < cols; ++j) {
    double mu = 0.0;
    for (std::size_t i = 0; i < rows; ++i) mu += xv[i * cols + j];
    mu /= static_cast<double>(rows);
    double ss = 0.0;
    for (std::size_t i = 0; i < rows; ++i) ss += (xv[i * cols + j] - mu) * (xv[i * cols + j] - mu);
    const double unbiased = ss / static_cast<double>(rows - 1);
    state.running_mean[j] = (1.0 - state.momentum) * state.running_mean[j] + state.momentum * mu;
    state.running_var[j] = (1.0 - state.momentum) * state.running_var[j] + state.momentum * unbiased;
  }
  return add(mul(normalized, state.gamma), state.beta);
}

Tensor batchnorm_inference(const Tensor& x, const BatchNormState& state) {
  const std::size_t cols = state.running_mean.size();
  if (x.rank() != 2 || x.dim(1) != cols) {
    throw DimensionError("batch norm over " + std::to_string(cols) + " features got input " +
                         shape_string(x.shape()));
  }
  std::vector<double> inv_std(cols);
  for (std::size_t j = 0; j < cols; ++j) inv_std[j] = 1.0 / std::sqrt(state.running_var[j] + state.eps);
  const Tensor centered = sub(x, Tensor::from_vector({cols}, state.running_mean));
  const Tensor normalized = mul(centered, Tensor::from_vector({cols}, std::move(inv_std)));
  return add(mul(normalized, state.gamma), state.beta);
}

TagFogModel CheckpointAccess::blank(const ModelDims& dims) {
  validate(dims);
  TagFogModel m;
  m.dims_ = dims;
  std::size_t width = dims.input;
  for (std::size_t h : dims.hidden) {
    m.encoder_.push_back(zero_linear(width, h));
    width = h;
  }
  m.encoder_.push_back(zero_linear(width, dims.feature));
  const std::size_t proj_hidden = 2 * dims.feature;
  m.proj_in_ = zero_linear(dims.feature, proj_hidden);
  m.proj_norm_.gamma = Tensor::full({proj_hidden}, 1.0, true);
  m.proj_norm_.beta = Tensor::zeros({proj_hidden}, true);
  m.proj_norm_.running_mean.assign(proj_hidden, 0.0);
  m.proj_norm_.running_var.assign(proj_hidden, 1.0);
  m.proj_out_ = zero_linear(proj_hidden, dims.projection);
  m.head_ = zero_linear(dims.feature, dims.head_outputs());
  return m;
}

TagFogModel TagFogModel::init(std::uint64_t seed, const ModelDims& dims) {
  TagFogModel m = CheckpointAccess::blank(dims);
  Rng rng = make_rng(seed, "model-init");
  // Layers feeding a ReLU (directly or through batch norm) use gain 2.
  for (Linear& layer : m.encoder_) init_linear(layer, 2.0, rng);
  init_linear(m.proj_in_, 2.0, rng);
  init_linear(m.proj_out_, 1.0, rng);
  init_linear(m.head_, 1.0, rng);
  return m;
}

void TagFogModel::check_input(const Tensor& batch) const {
  if (batch.rank() != 2 || batch.dim(1) != dims_.input) {
    throw DimensionError("model expects [B x " + std::to_string(dims_.input) + "] input, got " +
                         shape_string(batch.shape()));
  }
}

Tensor TagFogModel::encode(const Tensor& batch) const {
  check_input(batch);
  Tensor h = batch;
  for (const Linear& layer : encoder_) h = relu(layer(h));
  return h;
}

Tensor TagFogModel::classify(const Tensor& features) const { return head_(features); }

Tensor TagFogModel::project(const Tensor& features, Mode mode) {
  const Tensor hidden = relu(batchnorm_forward(proj_in_(features), proj_norm_, mode));
  return l2_normalize(proj_out_(hidden));
}

Tensor TagFogModel::project_inference(const Tensor& features) const {
  const Tensor hidden = relu(batchnorm_inference(proj_in_(features), proj_norm_));
  return l2_normalize(proj_out_(hidden));
}

ForwardResult TagFogModel::forward(const Tensor& batch) {
  if (mode_ == Mode::inference) return infer(batch);
  Tensor features = encode(batch);
  Tensor logits = classify(features);
  Tensor projected = project(features, Mode::training);
  return {std::move(features), std::move(logits), std::move(projected)};
}

ForwardResult TagFogModel::infer(const Tensor& batch) const {
  Tensor features = encode(batch);
  Tensor logits = classify(features);
  Tensor projected = project_inference(features);
  return {std::move(features), std::move(logits), std::move(projected)};
}

std::vector<NamedParameter> TagFogModel::named_parameters() const {
  std::vector<NamedParameter> out;
  for (std::size_t i = 0; i < encoder_.size(); ++i) {
    out.push_back({"encoder." + std::to_string(i) + ".weight", encoder_[i].weight});
    out.push_back({"encoder." + std::to_string(i) + ".bias", encoder_[i].bias});
  }
  out.push_back({"projector.fc1.weight", proj_in_.weight});
  out.push_back({"projector.fc1.bias", proj_in_.bias});
  out.push_back({"projector.bn.gamma", proj_norm_.gamma});
  out.push_back({"projector.bn.beta", proj_norm_.beta});
  out.push_back({"projector.fc2.weight", proj_out_.weight});
  out.push_back({"projector.fc2.bias", proj_out_.bias});
  out.push_back({"head.weight", head_.weight});
  out.push_back({"head.bias", head_.bias});
  return out;
}

std::vector<Tensor> TagFogModel::parameters() const {
  std::vector<Tensor> out;
  for (auto& p : named_parameters()) out.push_back(std::move(p.tensor));
  return out;
}

TagFogModel clone(const TagFogModel& model) {
  TagFogModel copy = CheckpointAccess::blank(model.dims());
  const auto src = model.parameters();
  auto dst = copy.parameters();
  for (std::size_t i = 0; i < src.size(); ++i) {
    auto out = dst[i].mutable_values();
    std::copy(src[i].values().begin(), src[i].values().end(), out.begin());
  }
  copy.projector_norm().running_mean = model.projector_norm().running_mean;
  copy.projector_norm().running_var = model.projector_norm().running_var;
  copy.projector_norm().momentum = model.projector_norm().momentum;
  copy.projector_norm().eps = model.projector_norm().eps;
  copy.set_mode(model.mode());
  return copy;
}

}  // namespace tagfog::model
