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

// The three-part distillation objective:
//   - classification: multi-label BCE on the student's logits;
//   - class prototype matching (CPM): per-class KL between temperature-
//     softened teacher prototypes and projected student prototypes;
//   - class similarity alignment (CSA): per-class KL between the softened
//     cosine-similarity rows of the class-averaged logit profiles.
// Teacher quantities are constants: gradients flow only into the student.

#ifndef FDDM_LOSSES_HPP_
#define FDDM_LOSSES_HPP_

#include <optional>

#include "fddm/model.hpp"
#include "fddm/numeric.hpp"

namespace fddm {

struct PrototypeSet {
  Matrix prototypes;          // C x D, row c is e^c; zero when absent
  std::vector<int> present;   // C entries in {0, 1}
};

struct ClassLogitProfile {
  Matrix rows;                // C x C, row c = mean logit vector of class c
  std::vector<int> present;
};

struct LossWeights {
  double alpha = 2.0;  // CPM weight
  double beta = 1.0;   // CSA weight
  double tau = 4.0;    // softening temperature

  void validate() const;
};

/// Per-class mean feature vectors over the batch's positive samples.
/// When `projection` is given (the student side), features are first mapped
/// through that model's projector.
PrototypeSet build_prototypes(const Matrix& features, const Matrix& labels,
                              const ModelParams* projection = nullptr);

struct CpmResult {
  double loss = 0.0;
  Matrix d_prototypes;     // dL/d(student prototypes), C x D
  bool no_overlap = false; // no class present on both sides
  int included = 0;
};

/// KL(softmax(e_t/tau) || softmax(e_s/tau)) accumulated over the mutually
/// present classes at class-summed scale: the mean per-class KL times the
/// total class count, so the value is comparable across batch compositions.
CpmResult loss_cpm(const PrototypeSet& teacher, const PrototypeSet& student,
                   double tau);

/// Class-wise masked mean of raw (pre-sigmoid) logits.
ClassLogitProfile build_class_logit_profile(const Matrix& logits,
                                            const Matrix& labels);

struct CsaResult {
  double loss = 0.0;
  Matrix d_rows;                     // dL/d(student profile rows), C x C
  bool insufficient_classes = false; // fewer than two eligible classes
  int dropped_zero_norm = 0;         // rows excluded for vanishing norm
  int included = 0;
};

/// For each eligible class c, the similarity row holds the cosine between
/// q^c and every other eligible q^c'; rows are softened by tau and matched
/// with KL, accumulated at the same class-summed scale as loss_cpm.
/// Eligible means present on both sides with non-degenerate norm.
CsaResult loss_csa(const ClassLogitProfile& teacher,
                   const ClassLogitProfile& student, double tau);

struct LossBreakdown {
  double l_cls = 0.0;
  double l_cpm = 0.0;
  double l_csa = 0.0;
  double l_total = 0.0;
  ParamSet grads;                 // d(l_total)/d(student parameters)
  bool cpm_skipped = false;       // this batch had no CPM overlap
  bool csa_skipped = false;       // this batch had < 2 CSA-eligible classes
  int csa_dropped_rows = 0;
};

/// Weighted combination l_cls + alpha*l_cpm + beta*l_csa of independently
/// computed components and their parameter gradients.
LossBreakdown loss_total(double l_cls, const ParamSet& g_cls, double l_cpm,
                         const ParamSet& g_cpm, double l_csa,
                         const ParamSet& g_csa, const LossWeights& w);

/// Constant teacher-side statistics for one distillation step.
struct TeacherContext {
  std::optional<PrototypeSet> prototypes;
  std::optional<ClassLogitProfile> profile;
};

/// Builds the teacher context from one fundus batch (no gradients).
TeacherContext make_teacher_context(const ModelParams& teacher,
                                    const Matrix& X, const Matrix& Y,
                                    bool want_prototypes, bool want_profile);

/// Full student objective on one batch: one forward pass, one combined
/// backward pass. When alpha (beta) is zero the CPM (CSA) pipeline is not
/// executed at all, so a zero-weight run performs exactly the arithmetic of
/// the plain classification objective.
LossBreakdown student_objective(const ModelParams& params,
                                const TeacherContext& teacher,
                                const Matrix& X, const Matrix& Y,
                                const LossWeights& w);

struct ScalarWithGrads {
  double value = 0.0;
  ParamSet grads;
  bool skipped = false;
  int dropped = 0;
};

// Component objectives with their own parameter gradients. Used by the
// gradient-check harness; training uses student_objective.
ScalarWithGrads classification_objective(const ModelParams& params,
                                         const Matrix& X, const Matrix& Y);
ScalarWithGrads cpm_objective(const ModelParams& params,
                              const PrototypeSet& teacher, const Matrix& X,
                              const Matrix& Y, double tau);
ScalarWithGrads csa_objective(const ModelParams& params,
                              const ClassLogitProfile& teacher,
                              const Matrix& X, const Matrix& Y, double tau);

}  // namespace fddm

#endif  // FDDM_LOSSES_HPP_
