#pragma once

#include <cstddef>
#include <vector>

#include "tagfog/anchors.hpp"
#include "tagfog/tensor.hpp"

namespace tagfog::losses {

struct LossWeights {
  double lambda1 = 1.0;    // anchor-alignment term
  double lambda2 = 1.0;    // supervised contrastive term
  double tau = 0.1;        // anchor-alignment temperature
  double tau_prime = 0.1;  // supervised contrastive temperature
};

void validate(const LossWeights& weights);

// One mini-batch of model outputs. Labels are 1-based; label K+1 marks a
// fake outlier, where K = logits width - 1.
struct BatchView {
  Tensor logits;     // [S x (K+1)]
  Tensor projected;  // [S x d], unit rows
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
  std::size_t num_classes() const { return logits.dim(1) - 1; }
  bool is_id(std::size_t i) const { return labels[i] <= static_cast<int>(num_classes()); }
};

// Which indices the contrastive denominator runs over for sample i.
enum class ContrastSet {
  exclude_self,  // A(i) = batch \ {i}, P(i) = A(i) with label(i)
  include_self,  // A(i) = batch, P(i) = A(i) with label(i) (i itself included)
};

// Mean cross-entropy over all S samples against the K+1 outputs.
Tensor ce_loss(const BatchView& batch);

// Anchor alignment over the ID samples only: mean over ID rows of
// -log softmax_k(s(z_n, mu_k) / tau)[y_n], the softmax running over all K
// anchors. Zero when the batch holds no ID sample.
Tensor ci_loss(const BatchView& batch, const anchors::AnchorSet& anchors, double tau);

// Supervised contrastive loss over every sample (fake outliers share label K+1).
// Samples without a positive contribute 0. Needs S >= 2.
Tensor sc_loss(const BatchView& batch, double tau_prime, ContrastSet contrast = ContrastSet::exclude_self);

struct LossBreakdown {
  Tensor ce;
  Tensor ci;
  Tensor sc;
  Tensor total;
};

// ce + lambda1 * ci + lambda2 * sc. A term with zero weight is not evaluated
// and reported as 0; `anchors` may be null when lambda1 == 0.
LossBreakdown total_loss(const BatchView& batch, const anchors::AnchorSet* anchors, const LossWeights& weights,
                         ContrastSet contrast = ContrastSet::exclude_self);

}  // namespace tagfog::losses
