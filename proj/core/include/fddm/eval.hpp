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

// Per-image inference, eye-level any-positive ensembling, and the metric
// suite: per-class AP/AUC/sensitivity/specificity/F1 with macro aggregates
// and a majority/minority class breakdown.

#ifndef FDDM_EVAL_HPP_
#define FDDM_EVAL_HPP_

#include <optional>
#include <string>
#include <vector>

#include "fddm/data.hpp"
#include "fddm/model.hpp"

namespace fddm {

/// Eye-level decision threshold.
inline constexpr double kDecisionThreshold = 0.5;

struct EyePrediction {
  std::string eye_id;
  Vector scores;              // per-class eye-level probability, in [0,1]
  std::vector<int> decisions; // score >= threshold
  std::vector<int> truth;
};

/// Per-image class probabilities sigmoid(logits). Row order follows
/// manifest.indices_of(modality).
Matrix predict_images(const ModelParams& params,
                      const DatasetManifest& manifest, Modality modality);

/// Any-positive (max) ensemble of one eye's image probabilities; decisions
/// use the 0.5 threshold. probs rows must follow indices_of(modality).
std::vector<EyePrediction> ensemble_eye(const DatasetManifest& manifest,
                                        Modality modality,
                                        const Matrix& probs);

/// Non-interpolated average precision over the score-descending ranking,
/// ties broken by stable original order. Undefined without positives.
std::optional<double> average_precision(const std::vector<double>& scores,
                                        const std::vector<int>& truth);

/// Mann-Whitney AUC: P(score_pos > score_neg) + 0.5 * P(equal). Undefined
/// unless both a positive and a negative are present.
std::optional<double> roc_auc(const std::vector<double>& scores,
                              const std::vector<int>& truth);

struct ThresholdMetrics {
  double sensitivity = 0.0;
  double specificity = 0.0;
  double f1 = 0.0;
  bool sensitivity_defined = false;
  bool specificity_defined = false;
  bool f1_defined = false;
};

/// Confusion-matrix metrics; a zero denominator yields 0 with the defined
/// flag cleared.
ThresholdMetrics threshold_metrics(const std::vector<int>& decisions,
                                   const std::vector<int>& truth);

struct MajorityMinoritySplit {
  std::vector<int> majority;  // class indices covering > 10% of images
  std::vector<int> minority;
};

MajorityMinoritySplit majority_minority_split(const DatasetManifest& manifest,
                                              Modality modality);

struct PerClassMetrics {
  std::string name;
  int positive_eyes = 0;
  int positive_images = 0;
  std::optional<double> ap;
  std::optional<double> auc;
  ThresholdMetrics threshold;
};

struct EvalReport {
  std::string modality;
  int num_eyes = 0;
  int total_images = 0;
  std::vector<PerClassMetrics> per_class;
  double map = 0.0;
  double mean_auc = 0.0;
  double mean_sensitivity = 0.0;
  double mean_specificity = 0.0;
  double mean_f1 = 0.0;
  std::vector<std::string> majority_classes;
  std::vector<std::string> minority_classes;
  std::optional<double> majority_map;
  std::optional<double> minority_map;
  std::vector<std::string> flags;
};

EvalReport make_report(const std::vector<EyePrediction>& predictions,
                       const DatasetManifest& manifest, Modality modality);

/// Convenience: predict, ensemble, report.
EvalReport evaluate_model(const ModelParams& params,
                          const DatasetManifest& manifest, Modality modality);

void save_report_json(const EvalReport& report, const std::string& path);
void save_report_csv(const EvalReport& report, const std::string& path);

}  // namespace fddm

#endif  // FDDM_EVAL_HPP_
