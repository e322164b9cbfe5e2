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

#include "fddm/training.hpp"

#include <cmath>
#include <sstream>

#include "json_util.hpp"

namespace fddm {

namespace {

// Salt for deriving the fundus shuffle seed from the data seed, keeping the
// two streams independent while the OCT stream stays identical to the
// single-modal baseline's.
constexpr std::uint64_t kFundusStreamSalt = 0xF0D5F0D5F0D5F0D5ULL;

void record_epoch(TrainLog& log, int epoch, int steps_per_epoch,
                  const ModelParams& params,
                  const DatasetManifest* eval_data, Modality eval_modality,
                  int eval_every) {
  EpochRecord rec;
  rec.epoch = epoch;
  double total = 0.0, cls = 0.0;
  const std::size_t begin = log.steps.size() - steps_per_epoch;
  for (std::size_t i = begin; i < log.steps.size(); ++i) {
    total += log.steps[i].l_total;
    cls += log.steps[i].l_cls;
  }
  rec.mean_l_total = total / steps_per_epoch;
  rec.mean_l_cls = cls / steps_per_epoch;
  if (eval_data != nullptr && eval_every > 0 && epoch % eval_every == 0) {
    rec.eval_map = evaluate_model(params, *eval_data, eval_modality).map;
  }
  log.epochs.push_back(std::move(rec));
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs < 1) throw ParamError("train: epochs must be >= 1");
  if (batch_size < 1) throw ParamError("train: batch_size must be >= 1");
  if (lr < 0.0) throw ParamError("train: lr must be >= 0");
  if (momentum < 0.0 || momentum >= 1.0) {
    throw ParamError("train: momentum must be in [0, 1)");
  }
  if (weight_decay < 0.0) throw ParamError("train: weight_decay must be >= 0");
  if (eval_every < 0) throw ParamError("train: eval_every must be >= 0");
  weights.validate();
}

std::uint64_t fundus_stream_seed(std::uint64_t data_seed) {
  return mix_seed(data_seed ^ kFundusStreamSalt);
}

TrainConfig make_default_train_config(int input_dim, int num_classes) {
  TrainConfig cfg;
  cfg.teacher_backbone.input_dim = input_dim;
  cfg.teacher_backbone.hidden_dims = {24};
  cfg.teacher_backbone.feature_dim = 12;
  cfg.teacher_backbone.num_classes = num_classes;
  cfg.student_backbone.input_dim = input_dim;
  cfg.student_backbone.hidden_dims = {24};
  cfg.student_backbone.feature_dim = 10;
  cfg.student_backbone.num_classes = num_classes;
  return cfg;
}

TrainResult train_single_modal(const DatasetManifest& train, Modality modality,
                               const BackboneConfig& backbone,
                               const TrainConfig& cfg,
                               const DatasetManifest* eval_data) {
  cfg.validate();
  TrainResult result;
  result.params = init_params(backbone, cfg.init_seed);
  result.optimizer =
      make_optimizer(result.params, cfg.lr, cfg.momentum, cfg.weight_decay);

  BatchStream stream(train, modality, cfg.batch_size, cfg.data_seed);
  const int steps_per_epoch = stream.batches_per_epoch();

  int step = 0;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (int b = 0; b < steps_per_epoch; ++b) {
      const Batch batch = stream.next();
      const ScalarWithGrads obj =
          classification_objective(result.params, batch.features, batch.labels);
      if (!std::isfinite(obj.value)) {
        throw TrainError("training diverged at step " + std::to_string(step));
      }
      sgd_step(result.params, obj.grads, result.optimizer);

      StepRecord rec;
      rec.step = step++;
      rec.l_cls = obj.value;
      rec.l_total = obj.value;
      rec.model_batch = batch.record_indices;
      result.log.steps.push_back(std::move(rec));
    }
    record_epoch(result.log, epoch, steps_per_epoch, result.params, eval_data,
                 modality, cfg.eval_every);
  }
  return result;
}

TrainResult train_teacher(const DatasetManifest& fundus_train,
                          const TrainConfig& cfg,
                          const DatasetManifest* eval_data) {
  return train_single_modal(fundus_train, Modality::kFundus,
                            cfg.teacher_backbone, cfg, eval_data);
}

TrainResult train_student(const DatasetManifest& oct_train,
                          const DatasetManifest& fundus_train,
                          const ModelParams& teacher, const TrainConfig& cfg,
                          const DatasetManifest* eval_data) {
  cfg.validate();
  if (teacher.config.num_classes != cfg.student_backbone.num_classes) {
    throw ParamError("train_student: teacher has " +
                     std::to_string(teacher.config.num_classes) +
                     " classes, student config has " +
                     std::to_string(cfg.student_backbone.num_classes));
  }

  BackboneConfig student_cfg = cfg.student_backbone;
  if (student_cfg.projector_dim == 0) {
    student_cfg.projector_dim = teacher.config.feature_dim;
  } else if (student_cfg.projector_dim != teacher.config.feature_dim) {
    throw ParamError(
        "train_student: projector_dim must match the teacher feature dim");
  }

  TrainResult result;
  result.params = init_params(student_cfg, cfg.init_seed);
  result.optimizer =
      make_optimizer(result.params, cfg.lr, cfg.momentum, cfg.weight_decay);

  const bool want_cpm = cfg.weights.alpha > 0.0;
  const bool want_csa = cfg.weights.beta > 0.0;
  const bool distill = want_cpm || want_csa;

  BatchStream oct_stream(oct_train, Modality::kOct, cfg.batch_size,
                         cfg.data_seed);
  std::optional<BatchStream> fundus_stream;
  if (distill) {
    fundus_stream.emplace(fundus_train, Modality::kFundus, cfg.batch_size,
                          fundus_stream_seed(cfg.data_seed));
  }

  const int steps_per_epoch = oct_stream.batches_per_epoch();
  int step = 0;
  int zero_distill_steps = 0;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (int b = 0; b < steps_per_epoch; ++b) {
      const Batch oct = oct_stream.next();

      TeacherContext ctx;
      StepRecord rec;
      if (distill) {
        const Batch fundus = fundus_stream->next();
        ctx = make_teacher_context(teacher, fundus.features, fundus.labels,
                                   want_cpm, want_csa);
        rec.teacher_batch = fundus.record_indices;
      }

      const LossBreakdown breakdown = student_objective(
          result.params, ctx, oct.features, oct.labels, cfg.weights);
      if (!std::isfinite(breakdown.l_total)) {
        throw TrainError("training diverged at step " + std::to_string(step));
      }
      sgd_step(result.params, breakdown.grads, result.optimizer);

      rec.step = step++;
      rec.l_cls = breakdown.l_cls;
      rec.l_cpm = breakdown.l_cpm;
      rec.l_csa = breakdown.l_csa;
      rec.l_total = breakdown.l_total;
      rec.cpm_skipped = breakdown.cpm_skipped;
      rec.csa_skipped = breakdown.csa_skipped;
      rec.model_batch = oct.record_indices;
      result.log.steps.push_back(std::move(rec));

      if (breakdown.cpm_skipped) ++result.log.cpm_skipped_steps;
      if (breakdown.csa_skipped) ++result.log.csa_skipped_steps;
      result.log.csa_dropped_rows += breakdown.csa_dropped_rows;
      if (distill && (!want_cpm || breakdown.cpm_skipped) &&
          (!want_csa || breakdown.csa_skipped)) {
        ++zero_distill_steps;
      }
    }
    record_epoch(result.log, epoch, steps_per_epoch, result.params, eval_data,
                 Modality::kOct, cfg.eval_every);
  }

  if (distill && step > 0 &&
      zero_distill_steps > static_cast<int>(0.9 * step)) {
    result.log.warnings.push_back(
        "distillation contributed nothing in " +
        std::to_string(zero_distill_steps) + " of " + std::to_string(step) +
        " steps (no class overlap between streams)");
  }
  return result;
}

AblationResult run_ablation(const DatasetManifest& train,
                            const DatasetManifest& test,
                            const TrainConfig& cfg) {
  cfg.validate();
  const TrainResult teacher = train_teacher(train, cfg);

  const struct {
    const char* name;
    bool cpm;
    bool csa;
  } grid[] = {{"baseline", false, false},
              {"csa_only", false, true},
              {"cpm_only", true, false},
              {"full", true, true}};

  AblationResult result;
  for (const auto& cell : grid) {
    TrainConfig cell_cfg = cfg;
    cell_cfg.weights.alpha = cell.cpm ? cfg.weights.alpha : 0.0;
    cell_cfg.weights.beta = cell.csa ? cfg.weights.beta : 0.0;
    const TrainResult student =
        train_student(train, train, teacher.params, cell_cfg);
    AblationCell out;
    out.name = cell.name;
    out.cpm_on = cell.cpm;
    out.csa_on = cell.csa;
    out.report = evaluate_model(student.params, test, Modality::kOct);
    result.cells.push_back(std::move(out));
  }
  return result;
}

void save_train_log(const TrainLog& log, const std::string& path) {
  std::ostringstream os;
  for (const auto& s : log.steps) {
    Json j;
    j["type"] = "step";
    j["step"] = s.step;
    j["l_cls"] = s.l_cls;
    j["l_cpm"] = s.l_cpm;
    j["l_csa"] = s.l_csa;
    j["l_total"] = s.l_total;
    j["cpm_skipped"] = s.cpm_skipped;
    j["csa_skipped"] = s.csa_skipped;
    j["model_batch"] = s.model_batch;
    j["teacher_batch"] = s.teacher_batch;
    os << j.dump() << '\n';
  }
  for (const auto& e : log.epochs) {
    Json j;
    j["type"] = "epoch";
    j["epoch"] = e.epoch;
    j["mean_l_total"] = e.mean_l_total;
    j["mean_l_cls"] = e.mean_l_cls;
    if (e.eval_map.has_value()) {
      j["eval_map"] = *e.eval_map;
    } else {
      j["eval_map"] = nullptr;
    }
    os << j.dump() << '\n';
  }
  Json summary;
  summary["type"] = "summary";
  summary["cpm_skipped_steps"] = log.cpm_skipped_steps;
  summary["csa_skipped_steps"] = log.csa_skipped_steps;
  summary["csa_dropped_rows"] = log.csa_dropped_rows;
  summary["warnings"] = log.warnings;
  os << summary.dump() << '\n';
  write_text_file(path, os.str());
}

void save_ablation_csv(const AblationResult& result, const std::string& path) {
  std::ostringstream os;
  os.precision(17);
  os << "method,cpm,csa,map_overall,map_majority,map_minority,f1,auc\n";
  for (const auto& cell : result.cells) {
    os << cell.name << ',' << (cell.cpm_on ? 1 : 0) << ','
       << (cell.csa_on ? 1 : 0) << ',' << cell.report.map << ','
       << (cell.report.majority_map.has_value() ? *cell.report.majority_map
                                                : 0.0)
       << ','
       << (cell.report.minority_map.has_value() ? *cell.report.minority_map
                                                : 0.0)
       << ',' << cell.report.mean_f1 << ',' << cell.report.mean_auc << '\n';
  }
  write_text_file(path, os.str());
}

void save_ablation_json(const AblationResult& result,
                        const std::string& path) {
  Json cells = Json::array();
  for (const auto& cell : result.cells) {
    Json j;
    j["method"] = cell.name;
    j["cpm"] = cell.cpm_on;
    j["csa"] = cell.csa_on;
    j["map_overall"] = cell.report.map;
    j["map_majority"] = cell.report.majority_map.has_value()
                            ? Json(*cell.report.majority_map)
                            : Json(nullptr);
    j["map_minority"] = cell.report.minority_map.has_value()
                            ? Json(*cell.report.minority_map)
                            : Json(nullptr);
    j["f1"] = cell.report.mean_f1;
    j["auc"] = cell.report.mean_auc;
    cells.push_back(std::move(j));
  }
  Json out;
  out["format_version"] = 1;
  out["cells"] = cells;
  write_text_file(path, out.dump(1) + "\n");
}

}  // namespace fddm
