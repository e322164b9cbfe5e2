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

#include "fddm/eval.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <sstream>

#include "fddm/numeric.hpp"
#include "json_util.hpp"

namespace fddm {

Matrix predict_images(const ModelParams& params,
                      const DatasetManifest& manifest, Modality modality) {
  if (params.config.num_classes != manifest.num_classes) {
    throw ParamError("predict: model expects " +
                     std::to_string(params.config.num_classes) +
                     " classes, dataset has " +
                     std::to_string(manifest.num_classes));
  }
  const std::vector<std::size_t> idx = manifest.indices_of(modality);
  if (idx.empty()) {
    throw DataError("predict: no " + modality_name(modality) + " records");
  }
  if (manifest.records[idx[0]].features.size() != params.config.input_dim) {
    throw ParamError("predict: model expects input_dim " +
                     std::to_string(params.config.input_dim) +
                     ", dataset features have " +
                     std::to_string(manifest.records[idx[0]].features.size()));
  }

  Matrix X(static_cast<Eigen::Index>(idx.size()), params.config.input_dim);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    X.row(static_cast<Eigen::Index>(i)) =
        manifest.records[idx[i]].features.transpose();
  }
  return sigmoid(forward(params, X).logits);
}

std::vector<EyePrediction> ensemble_eye(const DatasetManifest& manifest,
                                        Modality modality,
                                        const Matrix& probs) {
  const std::vector<std::size_t> idx = manifest.indices_of(modality);
  if (probs.rows() != static_cast<Eigen::Index>(idx.size()) ||
      probs.cols() != manifest.num_classes) {
    throw ShapeError("ensemble_eye: probability matrix shape mismatch");
  }
  std::map<std::size_t, Eigen::Index> row_of;
  for (std::size_t i = 0; i < idx.size(); ++i) {
    row_of[idx[i]] = static_cast<Eigen::Index>(i);
  }

  std::vector<EyePrediction> out;
  for (const EyeGroup& group : group_by_eye(manifest, modality)) {
    if (group.record_indices.empty()) {
      throw DataError("ensemble_eye: eye with no images");
    }
    EyePrediction pred;
    pred.eye_id = group.eye_id;
    pred.truth = group.labels;
    pred.scores = Vector::Zero(manifest.num_classes);
    for (const std::size_t rec_idx : group.record_indices) {
      pred.scores =
          pred.scores.cwiseMax(probs.row(row_of.at(rec_idx)).transpose());
    }
    for (int c = 0; c < manifest.num_classes; ++c) {
      pred.decisions.push_back(pred.scores[c] >= kDecisionThreshold ? 1 : 0);
    }
    out.push_back(std::move(pred));
  }
  return out;
}

std::optional<double> average_precision(const std::vector<double>& scores,
                                        const std::vector<int>& truth) {
  if (scores.size() != truth.size()) {
    throw ShapeError("average_precision: length mismatch");
  }
  const int positives = std::accumulate(truth.begin(), truth.end(), 0);
  if (positives == 0) return std::nullopt;

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&scores](std::size_t a, std::size_t b) {
                     return scores[a] > scores[b];
                   });

  double ap = 0.0;
  int seen_positives = 0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    if (truth[order[k]] == 1) {
      ++seen_positives;
      ap += static_cast<double>(seen_positives) / static_cast<double>(k + 1);
    }
  }
  return ap / positives;
}

std::optional<double> roc_auc(const std::vector<double>& scores,
                              const std::vector<int>& truth) {
  if (scores.size() != truth.size()) {
    throw ShapeError("roc_auc: length mismatch");
  }
  const int positives = std::accumulate(truth.begin(), truth.end(), 0);
  const int negatives = static_cast<int>(truth.size()) - positives;
  if (positives == 0 || negatives == 0) return std::nullopt;

  // Rank-sum with tie-averaged ranks.
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&scores](std::size_t a, std::size_t b) {
              return scores[a] < scores[b];
            });

  std::vector<double> rank(scores.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() &&
           scores[order[j + 1]] == scores[order[i]]) {
      ++j;
    }
    const double avg_rank = (static_cast<double>(i + 1) +
                             static_cast<double>(j + 1)) / 2.0;
    for (std::size_t k = i; k <= j; ++k) rank[order[k]] = avg_rank;
    i = j + 1;
  }

  double rank_sum_pos = 0.0;
  for (std::size_t k = 0; k < truth.size(); ++k) {
    if (truth[k] == 1) rank_sum_pos += rank[k];
  }
  const double p = positives;
  const double u = rank_sum_pos - p * (p + 1.0) / 2.0;
  return u / (p * static_cast<double>(negatives));
}

ThresholdMetrics threshold_metrics(const std::vector<int>& decisions,
                                   const std::vector<int>& truth) {
  if (decisions.size() != truth.size()) {
    throw ShapeError("threshold_metrics: length mismatch");
  }
  double tp = 0, tn = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] == 1) {
      decisions[i] == 1 ? ++tp : ++fn;
    } else {
      decisions[i] == 1 ? ++fp : ++tn;
    }
  }
  ThresholdMetrics m;
  if (tp + fn > 0) {
    m.sensitivity = tp / (tp + fn);
    m.sensitivity_defined = true;
  }
  if (tn + fp > 0) {
    m.specificity = tn / (tn + fp);
    m.specificity_defined = true;
  }
  if (2 * tp + fp + fn > 0) {
    m.f1 = 2 * tp / (2 * tp + fp + fn);
    m.f1_defined = true;
  }
  return m;
}

MajorityMinoritySplit majority_minority_split(const DatasetManifest& manifest,
                                              Modality modality) {
  const std::vector<std::size_t> idx = manifest.indices_of(modality);
  if (idx.empty()) {
    throw DataError("majority_minority_split: no " + modality_name(modality) +
                    " records");
  }
  MajorityMinoritySplit split;
  const double total = static_cast<double>(idx.size());
  for (int c = 0; c < manifest.num_classes; ++c) {
    int count = 0;
    for (const std::size_t i : idx) {
      count += manifest.records[i].labels[static_cast<std::size_t>(c)];
    }
    // Strictly more than 10% of images counts as majority.
    if (static_cast<double>(count) / total > 0.10) {
      split.majority.push_back(c);
    } else {
      split.minority.push_back(c);
    }
  }
  return split;
}

EvalReport make_report(const std::vector<EyePrediction>& predictions,
                       const DatasetManifest& manifest, Modality modality) {
  if (predictions.empty()) throw DataError("make_report: no predictions");
  const int C = manifest.num_classes;
  const std::vector<std::size_t> idx = manifest.indices_of(modality);

  EvalReport report;
  report.modality = modality_name(modality);
  report.num_eyes = static_cast<int>(predictions.size());
  report.total_images = static_cast<int>(idx.size());

  const MajorityMinoritySplit split =
      majority_minority_split(manifest, modality);
  for (const int c : split.majority) {
    report.majority_classes.push_back(
        manifest.class_names[static_cast<std::size_t>(c)]);
  }
  for (const int c : split.minority) {
    report.minority_classes.push_back(
        manifest.class_names[static_cast<std::size_t>(c)]);
  }

  double ap_sum = 0.0, auc_sum = 0.0;
  int ap_n = 0, auc_n = 0;
  double sens_sum = 0.0, spec_sum = 0.0, f1_sum = 0.0;
  double maj_ap_sum = 0.0, min_ap_sum = 0.0;
  int maj_ap_n = 0, min_ap_n = 0;
  const std::vector<int> majority_set(split.majority.begin(),
                                      split.majority.end());

  for (int c = 0; c < C; ++c) {
    PerClassMetrics pc;
    pc.name = manifest.class_names[static_cast<std::size_t>(c)];

    std::vector<double> scores;
    std::vector<int> decisions, truth;
    for (const auto& pred : predictions) {
      scores.push_back(pred.scores[c]);
      decisions.push_back(pred.decisions[static_cast<std::size_t>(c)]);
      truth.push_back(pred.truth[static_cast<std::size_t>(c)]);
    }
    pc.positive_eyes = std::accumulate(truth.begin(), truth.end(), 0);
    for (const std::size_t i : idx) {
      pc.positive_images +=
          manifest.records[i].labels[static_cast<std::size_t>(c)];
    }

    pc.ap = average_precision(scores, truth);
    if (pc.ap.has_value()) {
      ap_sum += *pc.ap;
      ++ap_n;
      const bool is_majority =
          std::find(majority_set.begin(), majority_set.end(), c) !=
          majority_set.end();
      if (is_majority) {
        maj_ap_sum += *pc.ap;
        ++maj_ap_n;
      } else {
        min_ap_sum += *pc.ap;
        ++min_ap_n;
      }
    } else {
      report.flags.push_back("class " + pc.name +
                             ": AP undefined (no positive eyes), excluded");
    }

    pc.auc = roc_auc(scores, truth);
    if (pc.auc.has_value()) {
      auc_sum += *pc.auc;
      ++auc_n;
    } else {
      report.flags.push_back("class " + pc.name +
                             ": AUC undefined (single-class truth), excluded");
    }

    pc.threshold = threshold_metrics(decisions, truth);
    if (!pc.threshold.sensitivity_defined) {
      report.flags.push_back("class " + pc.name +
                             ": sensitivity denominator zero");
    }
    if (!pc.threshold.specificity_defined) {
      report.flags.push_back("class " + pc.name +
                             ": specificity denominator zero");
    }
    if (!pc.threshold.f1_defined) {
      report.flags.push_back("class " + pc.name + ": F1 denominator zero");
    }
    sens_sum += pc.threshold.sensitivity;
    spec_sum += pc.threshold.specificity;
    f1_sum += pc.threshold.f1;

    report.per_class.push_back(std::move(pc));
  }

  // Macro aggregates; AP/AUC means run over classes where they are defined.
  report.map = ap_n > 0 ? ap_sum / ap_n : 0.0;
  report.mean_auc = auc_n > 0 ? auc_sum / auc_n : 0.0;
  report.mean_sensitivity = sens_sum / C;
  report.mean_specificity = spec_sum / C;
  report.mean_f1 = f1_sum / C;
  if (maj_ap_n > 0) {
    report.majority_map = maj_ap_sum / maj_ap_n;
  } else {
    report.flags.push_back("majority MAP undefined (no eligible class)");
  }
  if (min_ap_n > 0) {
    report.minority_map = min_ap_sum / min_ap_n;
  } else {
    report.flags.push_back("minority MAP undefined (no eligible class)");
  }
  return report;
}

EvalReport evaluate_model(const ModelParams& params,
                          const DatasetManifest& manifest, Modality modality) {
  const Matrix probs = predict_images(params, manifest, modality);
  return make_report(ensemble_eye(manifest, modality, probs), manifest,
                     modality);
}

namespace {

Json optional_to_json(const std::optional<double>& v) {
  if (v.has_value()) return Json(*v);
  return Json(nullptr);
}

}  // namespace

void save_report_json(const EvalReport& report, const std::string& path) {
  Json j;
  j["format_version"] = 1;
  j["modality"] = report.modality;
  j["num_eyes"] = report.num_eyes;
  j["total_images"] = report.total_images;
  j["aggregates"] = Json{{"map", report.map},
                         {"sensitivity", report.mean_sensitivity},
                         {"specificity", report.mean_specificity},
                         {"f1", report.mean_f1},
                         {"auc", report.mean_auc}};
  j["majority"] = Json{{"classes", report.majority_classes},
                       {"map", optional_to_json(report.majority_map)}};
  j["minority"] = Json{{"classes", report.minority_classes},
                       {"map", optional_to_json(report.minority_map)}};
  j["per_class"] = Json::array();
  for (const auto& pc : report.per_class) {
    j["per_class"].push_back(
        Json{{"name", pc.name},
             {"positive_eyes", pc.positive_eyes},
             {"positive_images", pc.positive_images},
             {"ap", optional_to_json(pc.ap)},
             {"auc", optional_to_json(pc.auc)},
             {"sensitivity", pc.threshold.sensitivity},
             {"specificity", pc.threshold.specificity},
             {"f1", pc.threshold.f1}});
  }
  j["flags"] = report.flags;
  write_text_file(path, j.dump(1) + "\n");
}

void save_report_csv(const EvalReport& report, const std::string& path) {
  std::ostringstream os;
  os.precision(17);
  // Column order: MAP, Sensitivity, Specificity, F1, AUC.
  os << "scope,map,sensitivity,specificity,f1,auc\n";
  os << "overall," << report.map << ',' << report.mean_sensitivity << ','
     << report.mean_specificity << ',' << report.mean_f1 << ','
     << report.mean_auc << '\n';
  for (const auto& pc : report.per_class) {
    os << "class:" << pc.name << ',' << (pc.ap.has_value() ? *pc.ap : 0.0)
       << ',' << pc.threshold.sensitivity << ',' << pc.threshold.specificity
       << ',' << pc.threshold.f1 << ','
       << (pc.auc.has_value() ? *pc.auc : 0.0) << '\n';
  }
  write_text_file(path, os.str());
}

}  // namespace fddm
