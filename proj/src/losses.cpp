#include "tagfog/losses.hpp"

#include <cmath>

#include "tagfog/errors.hpp"
#include "tagfog/ops.hpp"

namespace tagfog::losses {

namespace {

void check_logits(const BatchView& batch) {
  if (!batch.logits.valid() || batch.logits.rank() != 2 || batch.logits.dim(1) < 2) {
    throw DimensionError("logits must be [S x (K+1)] with K >= 1");
  }
  if (batch.logits.dim(0) != batch.labels.size()) {
    throw DimensionError("logits have " + std::to_string(batch.logits.dim(0)) + " rows for " +
                         std::to_string(batch.labels.size()) + " labels");
  }
  const int max_label = static_cast<int>(batch.num_classes()) + 1;
  for (std::size_t i = 0; i < batch.labels.size(); ++i) {
    if (batch.labels[i] < 1 || batch.labels[i] > max_label) {
      throw DomainError("label " + std::to_string(batch.labels[i]) + " at row " + std::to_string(i) +
                        " outside [1," + std::to_string(max_label) + "]");
    }
  }
}

void check_projected(const BatchView& batch) {
  if (!batch.projected.valid() || batch.projected.rank() != 2 || batch.projected.dim(0) != batch.labels.size()) {
    throw DimensionError("projected embeddings must be [S x d] with one row per label");
  }
}

}  // namespace

void validate(const LossWeights& w) {
  if (!(w.lambda1 >= 0.0) || !(w.lambda2 >= 0.0)) throw ConfigError("loss weights must be >= 0");
  if (!(w.tau > 0.0) || !(w.tau_prime > 0.0)) throw ConfigError("temperatures must be > 0");
}

Tensor ce_loss(const BatchView& batch) {
  check_logits(batch);
  const std::size_t s = batch.size();
  const std::size_t c = batch.logits.dim(1);
  std::vector<double> onehot(s * c, 0.0);
  for (std::size_t i = 0; i < s; ++i) onehot[i * c + static_cast<std::size_t>(batch.labels[i] - 1)] = 1.0;
  const Tensor picked = sum(mul(batch.logits, Tensor::from_vector({s, c}, std::move(onehot))));
  const Tensor lse = sum(logsumexp(batch.logits, 1));
  return scale(sub(lse, picked), 1.0 / static_cast<double>(s));
}

Tensor ci_loss(const BatchView& batch, const anchors::AnchorSet& anchors, double tau) {
  check_logits(batch);
  check_projected(batch);
  const std::size_t k = batch.num_classes();
  if (anchors.size() != k) {
    throw ConfigError("anchor set has " + std::to_string(anchors.size()) + " entries for K=" + std::to_string(k) +
                      " classes");
  }
  const std::size_t d = batch.projected.dim(1);
  if (anchors.dim() != d) {
    throw DimensionError("anchor dimension " + std::to_string(anchors.dim()) + " differs from projection width " +
                         std::to_string(d));
  }
  const std::size_t s = batch.size();
  std::vector<double> row_mask(s, 0.0);
  std::vector<double> positive(s * k, 0.0);
  std::size_t n_id = 0;
  for (std::size_t i = 0; i < s; ++i) {
    if (!batch.is_id(i)) continue;
    row_mask[i] = 1.0;
    positive[i * k + static_cast<std::size_t>(batch.labels[i] - 1)] = 1.0;
    ++n_id;
  }
  if (n_id == 0) return Tensor::scalar(0.0);

  const Tensor anchor_t = transpose(Tensor::from_vector({k, d}, anchors.matrix()));
  const Tensor logits = scale(matmul(batch.projected, anchor_t), 1.0 / tau);
  const Tensor lse = sum(mul(logsumexp(logits, 1), Tensor::from_vector({s}, std::move(row_mask))));
  const Tensor picked = sum(mul(logits, Tensor::from_vector({s, k}, std::move(positive))));
  return scale(sub(lse, picked), 1.0 / static_cast<double>(n_id));
}

Tensor sc_loss(const BatchView& batch, double tau_prime, ContrastSet contrast) {
  check_projected(batch);
  const std::size_t s = batch.size();
  if (s < 2) throw ContractViolation("supervised contrastive loss needs a batch of at least 2 samples");

  std::vector<unsigned char> keep(s * s, 1);
  std::vector<double> pos_weight(s * s, 0.0);
  std::vector<double> row_weight(s, 0.0);
  for (std::size_t i = 0; i < s; ++i) {
    if (contrast == ContrastSet::exclude_self) keep[i * s + i] = 0;
    std::size_t positives = 0;
    for (std::size_t j = 0; j < s; ++j) {
      if (keep[i * s + j] && batch.labels[j] == batch.labels[i]) ++positives;
    }
    if (positives == 0) continue;
    row_weight[i] = 1.0;
    for (std::size_t j = 0; j < s; ++j) {
      if (keep[i * s + j] && batch.labels[j] == batch.labels[i]) {
        pos_weight[i * s + j] = 1.0 / static_cast<double>(positives);
      }
    }
  }

  const Tensor sims = scale(matmul(batch.projected, transpose(batch.projected)), 1.0 / tau_prime);
  const Tensor lse = sum(mul(masked_logsumexp(sims, keep), Tensor::from_vector({s}, std::move(row_weight))));
  const Tensor pos = sum(mul(sims, Tensor::from_vector({s, s}, std::move(pos_weight))));
  return scale(sub(lse, pos), 1.0 / static_cast<double>(s));
}

LossBreakdown total_loss(const BatchView& batch, const anchors::AnchorSet* anchors, const LossWeights& weights,
                         ContrastSet contrast) {
  validate(weights);
  LossBreakdown out;
  out.ce = ce_loss(batch);
  out.total = out.ce;
  if (weights.lambda1 > 0.0) {
    if (anchors == nullptr) throw ConfigError("lambda1 > 0 requires an anchor set");
    out.ci = ci_loss(batch, *anchors, weights.tau);
    out.total = add(out.total, scale(out.ci, weights.lambda1));
  } else {
    out.ci = Tensor::scalar(0.0);
  }
  if (weights.lambda2 > 0.0) {
    out.sc = sc_loss(batch, weights.tau_prime, contrast);
    out.total = add(out.total, scale(out.sc, weights.lambda2));
  } else {
    out.sc = Tensor::scalar(0.0);
  }
  return out;
}

}  // namespace tagfog::losses
