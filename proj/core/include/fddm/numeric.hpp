/*
 * Copyright 2026 The FDDM Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Deterministic numeric kernels shared by every loss: temperature softmax,
// KL divergence, cosine similarity, masked class-wise means, stable
// sigmoid/BCE, and a central-difference gradient checker. All kernels are
// pure functions of their inputs and safe to call from any thread.

#ifndef FDDM_NUMERIC_HPP_
#define FDDM_NUMERIC_HPP_

#include <functional>

#include "fddm/common.hpp"

namespace fddm {

/// Temperature softmax over a vector: softmax(v / tau), stabilized by
/// max-subtraction so inputs up to |1e4| cannot overflow. Output sums to 1.
Vector softmax_tau(const Vector& v, double tau);

/// KL divergence sum_i p_i * log(p_i / q_i) with the 0*log(0/q) = 0
/// convention. Both arguments must be probability vectors; q must be
/// strictly positive wherever p is positive. Never negative.
double kl_div(const Vector& p, const Vector& q);

/// Cosine similarity u.v / (|u||v|), clamped to [-1, 1]. Throws DomainError
/// if either norm is below 1e-12.
double cosine_sim(const Vector& u, const Vector& v);

/// Norm threshold below which cosine_sim considers a vector degenerate.
inline constexpr double kCosineNormEpsilon = 1e-12;

struct MaskedMean {
  Matrix mean;                // C x D, row c zero when class c is absent
  std::vector<int> present;   // C entries in {0, 1}
};

/// Per-class mean of the rows of X over samples whose mask column is 1.
/// X is B x D, mask is B x C with {0,1} entries; returns C x D means plus
/// the presence vector. Absent classes yield a zero row and present = 0.
MaskedMean masked_class_mean(const Matrix& X, const Matrix& mask);

/// Adjoint of masked_class_mean: given dL/d(mean) (C x D) and the mask
/// (B x C), returns dL/dX (B x D). Absent classes contribute nothing.
Matrix masked_class_mean_backward(const Matrix& d_mean, const Matrix& mask);

struct BceResult {
  double loss = 0.0;
  Matrix grad;  // dloss/dlogits, same shape as the logits
};

/// Mean binary cross-entropy with logits over all B*C entries, computed in
/// log-sum-exp stable form. grad = (sigmoid(z) - y) / (B*C).
BceResult bce_with_logits(const Matrix& logits, const Matrix& targets);

/// Numerically stable logistic sigmoid.
double sigmoid(double z);

/// Elementwise sigmoid.
Matrix sigmoid(const Matrix& z);

/// Central-difference check of an analytic gradient. Returns the max over
/// coordinates of |analytic - numeric| / max(1, |analytic|, |numeric|).
/// eps must lie in [1e-7, 1e-3].
double grad_check(const std::function<double(const Vector&)>& f,
                  const Vector& x, const Vector& analytic_grad,
                  double eps = 1e-5);

}  // namespace fddm

#endif  // FDDM_NUMERIC_HPP_
