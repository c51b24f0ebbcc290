#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "tagfog/tensor.hpp"

namespace tagfog {

// Elementwise arithmetic. Shapes must be equal, or one operand's shape must be
// a suffix of the other's; the shorter operand is then repeated over the
// leading axes of the longer one.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor neg(const Tensor& a);

Tensor relu(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
// min(a, ceiling) elementwise; gradient passes where a < ceiling.
Tensor clamp_max(const Tensor& a, double ceiling);

Tensor sum(const Tensor& a);
Tensor sum(const Tensor& a, std::size_t axis);
Tensor mean(const Tensor& a);
Tensor mean(const Tensor& a, std::size_t axis);

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor reshape(const Tensor& a, Shape shape);

// Max-shifted log-sum-exp along `axis`; the axis is removed from the result.
Tensor logsumexp(const Tensor& a, std::size_t axis);
// Row-wise log-sum-exp of a 2-D tensor over the entries where `keep` is
// non-zero. Every row must keep at least one entry.
Tensor masked_logsumexp(const Tensor& a, std::span<const unsigned char> keep);
Tensor softmax(const Tensor& a, std::size_t axis);
Tensor softmax(const Tensor& a);  // last axis

// Scales each vector along the last axis to unit length: x / sqrt(|x|^2 + eps).
// The gradient at an exactly-zero vector is defined as zero.
inline constexpr double kL2NormalizeEps = 1e-12;
Tensor l2_normalize(const Tensor& a);

Tensor concat(std::span<const Tensor> parts, std::size_t axis);
Tensor slice(const Tensor& a, std::size_t axis, std::size_t begin, std::size_t end);

// Per-column standardization of a [B x H] batch with its own statistics
// (biased variance). No affine part; see model.hpp for the full layer.
Tensor batch_normalize(const Tensor& a, double eps);

// Plain scalar helpers shared with the scoring code.
double logsumexp(std::span<const double> x);

}  // namespace tagfog
