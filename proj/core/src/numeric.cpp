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

#include "fddm/numeric.hpp"

#include <algorithm>
#include <cmath>

namespace fddm {

Vector softmax_tau(const Vector& v, double tau) {
  if (!(tau > 0.0)) {
    throw ParamError("softmax_tau: tau must be positive, got " +
                     std::to_string(tau));
  }
  if (v.size() == 0) throw InputError("softmax_tau: empty input");
  if (!all_finite(v)) throw InputError("softmax_tau: non-finite input");

  const double m = v.maxCoeff();
  Vector out(v.size());
  double sum = 0.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    out[i] = std::exp((v[i] - m) / tau);
    sum += out[i];
  }
  out /= sum;
  return out;
}

double kl_div(const Vector& p, const Vector& q) {
  if (p.size() != q.size()) {
    throw ShapeError("kl_div: length mismatch " + std::to_string(p.size()) +
                     " vs " + std::to_string(q.size()));
  }
  if (std::abs(p.sum() - 1.0) > 1e-6 || std::abs(q.sum() - 1.0) > 1e-6) {
    throw InputError("kl_div: arguments must sum to 1");
  }
  double acc = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    if (p[i] == 0.0) continue;  // 0*log(0/q) = 0
    if (q[i] <= 0.0) {
      throw DomainError("kl_div: q[" + std::to_string(i) +
                        "] = 0 where p > 0");
    }
    acc += p[i] * std::log(p[i] / q[i]);
  }
  // Gibbs guarantees acc >= 0; rounding can leave a tiny negative residue.
  return std::max(acc, 0.0);
}

double cosine_sim(const Vector& u, const Vector& v) {
  if (u.size() != v.size()) {
    throw ShapeError("cosine_sim: length mismatch");
  }
  const double nu = u.norm();
  const double nv = v.norm();
  if (nu <= kCosineNormEpsilon || nv <= kCosineNormEpsilon) {
    throw DomainError("cosine_sim: zero-norm input");
  }
  return std::clamp(u.dot(v) / (nu * nv), -1.0, 1.0);
}

MaskedMean masked_class_mean(const Matrix& X, const Matrix& mask) {
  if (X.rows() != mask.rows()) {
    throw ShapeError("masked_class_mean: X has " + std::to_string(X.rows()) +
                     " rows, mask has " + std::to_string(mask.rows()));
  }
  const Eigen::Index C = mask.cols();
  const Eigen::Index D = X.cols();

  MaskedMean result;
  result.mean = Matrix::Zero(C, D);
  result.present.assign(static_cast<std::size_t>(C), 0);

  for (Eigen::Index c = 0; c < C; ++c) {
    double count = 0.0;
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
      const double y = mask(i, c);
      if (y != 0.0 && y != 1.0) {
        throw InputError("masked_class_mean: mask entries must be 0 or 1");
      }
      if (y == 1.0) {
        result.mean.row(c) += X.row(i);
        count += 1.0;
      }
    }
    if (count > 0.0) {
      result.mean.row(c) /= count;
      result.present[static_cast<std::size_t>(c)] = 1;
    }
  }
  return result;
}

Matrix masked_class_mean_backward(const Matrix& d_mean, const Matrix& mask) {
  if (d_mean.rows() != mask.cols()) {
    throw ShapeError("masked_class_mean_backward: class count mismatch");
  }
  const Eigen::Index B = mask.rows();
  Matrix dX = Matrix::Zero(B, d_mean.cols());
  for (Eigen::Index c = 0; c < mask.cols(); ++c) {
    const double count = mask.col(c).sum();
    if (count == 0.0) continue;
    for (Eigen::Index i = 0; i < B; ++i) {
      if (mask(i, c) == 1.0) dX.row(i) += d_mean.row(c) / count;
    }
  }
  return dX;
}

double sigmoid(double z) {
  if (z >= 0.0) {
    return 1.0 / (1.0 + std::exp(-z));
  }
  const double e = std::exp(z);
  return e / (1.0 + e);
}

Matrix sigmoid(const Matrix& z) {
  return z.unaryExpr([](double x) { return sigmoid(x); });
}

BceResult bce_with_logits(const Matrix& logits, const Matrix& targets) {
  if (logits.rows() != targets.rows() || logits.cols() != targets.cols()) {
    throw ShapeError("bce_with_logits: shape mismatch");
  }
  const double n = static_cast<double>(logits.size());
  BceResult r;
  r.grad.resize(logits.rows(), logits.cols());
  double acc = 0.0;
  for (Eigen::Index j = 0; j < logits.cols(); ++j) {
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
      const double z = logits(i, j);
      const double y = targets(i, j);
      if (y != 0.0 && y != 1.0) {
        throw InputError("bce_with_logits: targets must be 0 or 1");
      }
      // max(z,0) - z*y + log(1 + exp(-|z|))
      acc += std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
      r.grad(i, j) = (sigmoid(z) - y) / n;
    }
  }
  r.loss = acc / n;
  return r;
}

double grad_check(const std::function<double(const Vector&)>& f,
                  const Vector& x, const Vector& analytic_grad, double eps) {
  if (!(eps >= 1e-7 && eps <= 1e-3)) {
    throw ParamError("grad_check: eps must be in [1e-7, 1e-3]");
  }
  if (x.size() != analytic_grad.size()) {
    throw ShapeError("grad_check: gradient length mismatch");
  }
  if (!std::isfinite(f(x))) {
    throw InputError("grad_check: f(x) is not finite");
  }

  Vector probe = x;
  double worst = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double xi = x[i];
    probe[i] = xi + eps;
    const double fp = f(probe);
    probe[i] = xi - eps;
    const double fm = f(probe);
    probe[i] = xi;
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw InputError("grad_check: f not finite at perturbed point");
    }
    const double numeric = (fp - fm) / (2.0 * eps);
    const double analytic = analytic_grad[i];
    const double denom =
        std::max({1.0, std::abs(analytic), std::abs(numeric)});
    worst = std::max(worst, std::abs(analytic - numeric) / denom);
  }
  return worst;
}

}  // namespace fddm
