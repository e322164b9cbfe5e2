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

#include "fddm/losses.hpp"

#include <cmath>
#include <vector>

namespace fddm {

void LossWeights::validate() const {
  if (alpha < 0.0 || beta < 0.0) {
    throw ParamError("loss weights must be non-negative");
  }
  if (!(tau > 0.0)) throw ParamError("tau must be positive");
}

PrototypeSet build_prototypes(const Matrix& features, const Matrix& labels,
                              const ModelParams* projection) {
  MaskedMean mm;
  if (projection != nullptr) {
    mm = masked_class_mean(project(*projection, features).output, labels);
  } else {
    mm = masked_class_mean(features, labels);
  }
  return PrototypeSet{std::move(mm.mean), std::move(mm.present)};
}

CpmResult loss_cpm(const PrototypeSet& teacher, const PrototypeSet& student,
                   double tau) {
  if (teacher.prototypes.cols() != student.prototypes.cols()) {
    throw ShapeError("loss_cpm: prototype dimension mismatch");
  }
  if (teacher.prototypes.rows() != student.prototypes.rows()) {
    throw ShapeError("loss_cpm: class count mismatch");
  }
  const Eigen::Index C = teacher.prototypes.rows();

  CpmResult r;
  r.d_prototypes =
      Matrix::Zero(C, teacher.prototypes.cols());
  double acc = 0.0;
  for (Eigen::Index c = 0; c < C; ++c) {
    const auto ci = static_cast<std::size_t>(c);
    if (teacher.present[ci] == 0 || student.present[ci] == 0) continue;
    const Vector soft_t = softmax_tau(teacher.prototypes.row(c).transpose(), tau);
    const Vector soft_s = softmax_tau(student.prototypes.row(c).transpose(), tau);
    acc += kl_div(soft_t, soft_s);
    r.d_prototypes.row(c) = ((soft_s - soft_t) / tau).transpose();
    ++r.included;
  }
  if (r.included == 0) {
    r.no_overlap = true;
    return r;
  }
  // Class-summed scale, insensitive to batch composition: the mean KL over
  // the mutually present classes is extrapolated to all C classes.
  const double scale = static_cast<double>(C) / r.included;
  r.loss = acc * scale;
  r.d_prototypes *= scale;
  return r;
}

ClassLogitProfile build_class_logit_profile(const Matrix& logits,
                                            const Matrix& labels) {
  MaskedMean mm = masked_class_mean(logits, labels);
  return ClassLogitProfile{std::move(mm.mean), std::move(mm.present)};
}

CsaResult loss_csa(const ClassLogitProfile& teacher,
                   const ClassLogitProfile& student, double tau) {
  if (teacher.rows.rows() != student.rows.rows() ||
      teacher.rows.cols() != student.rows.cols()) {
    throw ShapeError("loss_csa: profile shape mismatch");
  }
  const Eigen::Index C = teacher.rows.rows();

  CsaResult r;
  r.d_rows = Matrix::Zero(C, student.rows.cols());

  // Eligible classes: present on both sides, rows with usable norms.
  std::vector<Eigen::Index> eligible;
  for (Eigen::Index c = 0; c < C; ++c) {
    const auto ci = static_cast<std::size_t>(c);
    if (teacher.present[ci] == 0 || student.present[ci] == 0) continue;
    if (teacher.rows.row(c).norm() <= kCosineNormEpsilon ||
        student.rows.row(c).norm() <= kCosineNormEpsilon) {
      ++r.dropped_zero_norm;
      continue;
    }
    eligible.push_back(c);
  }
  const auto K = static_cast<Eigen::Index>(eligible.size());
  if (K < 2) {
    r.insufficient_classes = true;
    return r;
  }
  r.included = static_cast<int>(K);

  // Raw (unclamped) similarity rows; diagonal pinned to 1 by definition.
  Matrix sim_t(K, K), sim_s(K, K);
  std::vector<double> norm_s(static_cast<std::size_t>(K));
  for (Eigen::Index a = 0; a < K; ++a) {
    norm_s[static_cast<std::size_t>(a)] = student.rows.row(eligible[a]).norm();
  }
  const auto raw_cos = [](const Matrix& rows, Eigen::Index i, Eigen::Index j) {
    return rows.row(i).dot(rows.row(j)) /
           (rows.row(i).norm() * rows.row(j).norm());
  };
  for (Eigen::Index a = 0; a < K; ++a) {
    for (Eigen::Index b = 0; b < K; ++b) {
      if (a == b) {
        sim_t(a, b) = 1.0;
        sim_s(a, b) = 1.0;
      } else {
        sim_t(a, b) = raw_cos(teacher.rows, eligible[a], eligible[b]);
        sim_s(a, b) = raw_cos(student.rows, eligible[a], eligible[b]);
      }
    }
  }

  // Class-summed scale as in loss_cpm: mean over the K eligible classes,
  // extrapolated to all C classes.
  const double scale = static_cast<double>(C) / static_cast<double>(K);

  double acc = 0.0;
  for (Eigen::Index a = 0; a < K; ++a) {
    const Vector row_t =
        sim_t.row(a).transpose().cwiseMin(1.0).cwiseMax(-1.0);
    const Vector row_s =
        sim_s.row(a).transpose().cwiseMin(1.0).cwiseMax(-1.0);
    const Vector soft_t = softmax_tau(row_t, tau);
    const Vector soft_s = softmax_tau(row_s, tau);
    acc += kl_div(soft_t, soft_s);

    // d loss / d sim_s(a, b), then through the cosine into the rows.
    for (Eigen::Index b = 0; b < K; ++b) {
      if (b == a) continue;            // diagonal is constant
      const double raw = sim_s(a, b);
      if (std::abs(raw) > 1.0) continue;  // clamped: locally flat
      const double g = scale * (soft_s[b] - soft_t[b]) / tau;
      const Vector u = student.rows.row(eligible[a]).transpose();
      const Vector w = student.rows.row(eligible[b]).transpose();
      const double nu = norm_s[static_cast<std::size_t>(a)];
      const double nw = norm_s[static_cast<std::size_t>(b)];
      r.d_rows.row(eligible[a]) +=
          (g * (w / (nu * nw) - raw * u / (nu * nu))).transpose();
      r.d_rows.row(eligible[b]) +=
          (g * (u / (nu * nw) - raw * w / (nw * nw))).transpose();
    }
  }
  r.loss = acc * scale;
  return r;
}

LossBreakdown loss_total(double l_cls, const ParamSet& g_cls, double l_cpm,
                         const ParamSet& g_cpm, double l_csa,
                         const ParamSet& g_csa, const LossWeights& w) {
  w.validate();
  LossBreakdown out;
  out.l_cls = l_cls;
  out.l_cpm = l_cpm;
  out.l_csa = l_csa;
  out.l_total = l_cls + w.alpha * l_cpm + w.beta * l_csa;
  out.grads = zeros_like(g_cls);
  axpy(1.0, g_cls, out.grads);
  axpy(w.alpha, g_cpm, out.grads);
  axpy(w.beta, g_csa, out.grads);
  return out;
}

TeacherContext make_teacher_context(const ModelParams& teacher,
                                    const Matrix& X, const Matrix& Y,
                                    bool want_prototypes, bool want_profile) {
  TeacherContext ctx;
  if (!want_prototypes && !want_profile) return ctx;
  const ForwardResult fwd = forward(teacher, X);
  if (want_prototypes) {
    ctx.prototypes = build_prototypes(fwd.features, Y);
  }
  if (want_profile) {
    ctx.profile = build_class_logit_profile(fwd.logits, Y);
  }
  return ctx;
}

LossBreakdown student_objective(const ModelParams& params,
                                const TeacherContext& teacher,
                                const Matrix& X, const Matrix& Y,
                                const LossWeights& w) {
  w.validate();
  const bool want_cpm = w.alpha > 0.0;
  const bool want_csa = w.beta > 0.0;
  if (want_cpm && !teacher.prototypes.has_value()) {
    throw ParamError("student_objective: alpha > 0 needs teacher prototypes");
  }
  if (want_csa && !teacher.profile.has_value()) {
    throw ParamError("student_objective: beta > 0 needs a teacher profile");
  }

  const ForwardResult fwd = forward(params, X);
  const BceResult bce = bce_with_logits(fwd.logits, Y);

  LossBreakdown out;
  out.l_cls = bce.loss;
  Matrix d_logits = bce.grad;
  Matrix d_features_extra;
  std::vector<DenseLayer> projector_grads;

  if (want_cpm) {
    const ProjectResult proj = project(params, fwd.features);
    const MaskedMean mm = masked_class_mean(proj.output, Y);
    const PrototypeSet student_protos{mm.mean, mm.present};
    const CpmResult cpm = loss_cpm(*teacher.prototypes, student_protos, w.tau);
    out.l_cpm = cpm.loss;
    out.cpm_skipped = cpm.no_overlap;
    if (!cpm.no_overlap) {
      const Matrix d_projected =
          masked_class_mean_backward(cpm.d_prototypes, Y);
      ProjectorBackward pb = backward_projector(params, proj.cache, d_projected);
      d_features_extra = w.alpha * pb.d_input;
      projector_grads = std::move(pb.grads);
      for (auto& layer : projector_grads) {
        layer.W *= w.alpha;
        layer.b *= w.alpha;
      }
    }
  }

  if (want_csa) {
    const ClassLogitProfile student_profile =
        build_class_logit_profile(fwd.logits, Y);
    const CsaResult csa = loss_csa(*teacher.profile, student_profile, w.tau);
    out.l_csa = csa.loss;
    out.csa_skipped = csa.insufficient_classes;
    out.csa_dropped_rows = csa.dropped_zero_norm;
    if (!csa.insufficient_classes) {
      d_logits += w.beta * masked_class_mean_backward(csa.d_rows, Y);
    }
  }

  out.grads = backward(params, fwd.cache, d_logits, d_features_extra);
  if (!projector_grads.empty()) {
    out.grads.projector = std::move(projector_grads);
  }
  out.l_total = out.l_cls + w.alpha * out.l_cpm + w.beta * out.l_csa;
  return out;
}

ScalarWithGrads classification_objective(const ModelParams& params,
                                         const Matrix& X, const Matrix& Y) {
  const ForwardResult fwd = forward(params, X);
  const BceResult bce = bce_with_logits(fwd.logits, Y);
  ScalarWithGrads r;
  r.value = bce.loss;
  r.grads = backward(params, fwd.cache, bce.grad, Matrix());
  return r;
}

ScalarWithGrads cpm_objective(const ModelParams& params,
                              const PrototypeSet& teacher, const Matrix& X,
                              const Matrix& Y, double tau) {
  const ForwardResult fwd = forward(params, X);
  const ProjectResult proj = project(params, fwd.features);
  const MaskedMean mm = masked_class_mean(proj.output, Y);
  const CpmResult cpm =
      loss_cpm(teacher, PrototypeSet{mm.mean, mm.present}, tau);

  ScalarWithGrads r;
  r.value = cpm.loss;
  r.skipped = cpm.no_overlap;
  if (cpm.no_overlap) {
    r.grads = zeros_like(params.tensors);
    return r;
  }
  const Matrix d_projected = masked_class_mean_backward(cpm.d_prototypes, Y);
  ProjectorBackward pb = backward_projector(params, proj.cache, d_projected);
  r.grads = backward(params, fwd.cache,
                     Matrix::Zero(fwd.logits.rows(), fwd.logits.cols()),
                     pb.d_input);
  r.grads.projector = std::move(pb.grads);
  return r;
}

ScalarWithGrads csa_objective(const ModelParams& params,
                              const ClassLogitProfile& teacher,
                              const Matrix& X, const Matrix& Y, double tau) {
  const ForwardResult fwd = forward(params, X);
  const ClassLogitProfile student_profile =
      build_class_logit_profile(fwd.logits, Y);
  const CsaResult csa = loss_csa(teacher, student_profile, tau);

  ScalarWithGrads r;
  r.value = csa.loss;
  r.skipped = csa.insufficient_classes;
  r.dropped = csa.dropped_zero_norm;
  if (csa.insufficient_classes) {
    r.grads = zeros_like(params.tensors);
    return r;
  }
  const Matrix d_logits = masked_class_mean_backward(csa.d_rows, Y);
  r.grads = backward(params, fwd.cache, d_logits, Matrix());
  return r;
}

}  // namespace fddm
