#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "tagfog/tensor.hpp"

namespace tagfog::model {

struct ModelDims {
  std::size_t input = 0;       // D, flattened sample width
  std::size_t feature = 128;   // F, penultimate width
  std::size_t projection = 0;  // d, anchor dimension
  std::size_t classes = 0;     // K, number of ID classes (head emits K + 1)
  std::vector<std::size_t> hidden{256, 256};

  std::size_t head_outputs() const { return classes + 1; }
};

void validate(const ModelDims& dims);

enum class Mode { training, inference };

// y = x W + b with W stored as [in x out].
struct Linear {
  Tensor weight;
  Tensor bias;

  std::size_t in_features() const { return weight.dim(0); }
  std::size_t out_features() const { return weight.dim(1); }
  Tensor operator()(const Tensor& x) const;
};

struct BatchNormState {
  Tensor gamma;
  Tensor beta;
  std::vector<double> running_mean;
  std::vector<double> running_var;
  double momentum = 0.1;
  double eps = 1e-5;
};

// Training mode normalizes with batch statistics and folds them into the
// running estimates (unbiased variance); inference mode uses the running
// estimates only.
Tensor batchnorm_forward(const Tensor& x, BatchNormState& state, Mode mode);
Tensor batchnorm_inference(const Tensor& x, const BatchNormState& state);

struct ForwardResult {
  Tensor features;   // f(x), post-ReLU, [B x F]
  Tensor logits;     // h(f(x)), [B x (K+1)]
  Tensor projected;  // g(f(x)), unit rows, [B x d]
};

struct NamedParameter {
  std::string name;
  Tensor tensor;
};

// Encoder f (MLP with ReLU after every layer), projector g
// (Linear-BN-ReLU-Linear with hidden width 2F, then l2-normalized) and head h
// with K ID outputs plus one fake-OOD output.
class TagFogModel {
 public:
  static TagFogModel init(std::uint64_t seed, const ModelDims& dims);

  const ModelDims& dims() const { return dims_; }
  Mode mode() const { return mode_; }
  void set_mode(Mode mode) { mode_ = mode; }

  // Uses the current mode. In training mode this updates batch-norm running stats.
  ForwardResult forward(const Tensor& batch);
  // Always inference mode; safe to call concurrently.
  ForwardResult infer(const Tensor& batch) const;

  Tensor encode(const Tensor& batch) const;
  Tensor classify(const Tensor& features) const;
  Tensor project(const Tensor& features, Mode mode);
  Tensor project_inference(const Tensor& features) const;

  std::vector<NamedParameter> named_parameters() const;
  std::vector<Tensor> parameters() const;

  const std::vector<Linear>& encoder() const { return encoder_; }
  const Linear& projector_in() const { return proj_in_; }
  const Linear& projector_out() const { return proj_out_; }
  const BatchNormState& projector_norm() const { return proj_norm_; }
  BatchNormState& projector_norm() { return proj_norm_; }
  const Linear& head() const { return head_; }

 private:
  friend class CheckpointAccess;

  TagFogModel() = default;

  void check_input(const Tensor& batch) const;

  ModelDims dims_;
  Mode mode_ = Mode::training;
  std::vector<Linear> encoder_;
  Linear proj_in_;
  BatchNormState proj_norm_;
  Linear proj_out_;
  Linear head_;
};

// Deep copy; the copy shares no tensors with the source.
TagFogModel clone(const TagFogModel& model);

// Builds a correctly-shaped model with zero parameters and unit running
// variance, to be filled in by checkpoint loading or cloning.
class CheckpointAccess {
 public:
  static TagFogModel blank(const ModelDims& dims);
};

// Versioned JSON checkpoint. All arrays survive a write/read round trip bit-exactly.
struct Checkpoint {
  TagFogModel model;
  // Optional ID-train penultimate features kept for post-hoc score fitting.
  std::vector<std::vector<double>> id_features;
  std::vector<int> id_labels;
};

inline constexpr int kCheckpointVersion = 1;

void write_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint read_checkpoint(const std::filesystem::path& path);

}  // namespace tagfog::model
