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

// Training loops: teacher pretraining on the fundus stream, student
// training with the full distillation objective against a frozen teacher,
// and the CPM/CSA on-off ablation grid. The fundus and OCT streams are
// shuffled by independent generators; no step consumes paired data.

#ifndef FDDM_TRAINING_HPP_
#define FDDM_TRAINING_HPP_

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fddm/data.hpp"
#include "fddm/eval.hpp"
#include "fddm/losses.hpp"
#include "fddm/model.hpp"

namespace fddm {

struct TrainConfig {
  int epochs = 150;
  double lr = 1e-3;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  int batch_size = 8;
  LossWeights weights;  // alpha = 2, beta = 1, tau = 4
  std::uint64_t init_seed = 1;
  std::uint64_t data_seed = 2;
  BackboneConfig teacher_backbone;
  BackboneConfig student_backbone;
  int eval_every = 0;  // epochs between mid-training evals; 0 disables

  void validate() const;
};

/// Paper-default hyperparameters with desk-scale backbones sized for the
/// given data shape.
TrainConfig make_default_train_config(int input_dim, int num_classes);

/// Seed of the fundus shuffle used by train_student for a given data seed.
/// The OCT stream uses data_seed itself, so the two shuffles are
/// independent and the OCT stream matches the single-modal baseline's.
std::uint64_t fundus_stream_seed(std::uint64_t data_seed);

struct StepRecord {
  int step = 0;
  double l_cls = 0.0;
  double l_cpm = 0.0;
  double l_csa = 0.0;
  double l_total = 0.0;
  bool cpm_skipped = false;
  bool csa_skipped = false;
  std::vector<std::size_t> model_batch;    // record indices of this model's batch
  std::vector<std::size_t> teacher_batch;  // fundus batch (student runs only)
};

struct EpochRecord {
  int epoch = 0;
  double mean_l_total = 0.0;
  double mean_l_cls = 0.0;
  std::optional<double> eval_map;
};

struct TrainLog {
  std::vector<StepRecord> steps;
  std::vector<EpochRecord> epochs;
  int cpm_skipped_steps = 0;
  int csa_skipped_steps = 0;
  int csa_dropped_rows = 0;
  std::vector<std::string> warnings;
};

void save_train_log(const TrainLog& log, const std::string& path);

struct TrainResult {
  ModelParams params;
  OptimizerState optimizer;
  TrainLog log;
};

/// Classification-only training on one modality stream. This is both the
/// teacher recipe and the single-modal baseline.
TrainResult train_single_modal(const DatasetManifest& train, Modality modality,
                               const BackboneConfig& backbone,
                               const TrainConfig& cfg,
                               const DatasetManifest* eval_data = nullptr);

/// Teacher pretraining: BCE on the fundus stream.
TrainResult train_teacher(const DatasetManifest& fundus_train,
                          const TrainConfig& cfg,
                          const DatasetManifest* eval_data = nullptr);

/// Student training with the combined objective against a frozen teacher.
/// Per step one OCT batch and one fundus batch are drawn from independently
/// seeded shuffles; the teacher forward runs without gradients.
TrainResult train_student(const DatasetManifest& oct_train,
                          const DatasetManifest& fundus_train,
                          const ModelParams& teacher, const TrainConfig& cfg,
                          const DatasetManifest* eval_data = nullptr);

struct AblationCell {
  std::string name;
  bool cpm_on = false;
  bool csa_on = false;
  EvalReport report;
};

struct AblationResult {
  std::vector<AblationCell> cells;  // baseline, csa_only, cpm_only, full
};

/// Trains the four-cell grid {off/off, off/on, on/off, on/on} with shared
/// seeds and one shared teacher, evaluating each student on the test OCT
/// eyes.
AblationResult run_ablation(const DatasetManifest& train,
                            const DatasetManifest& test,
                            const TrainConfig& cfg);

void save_ablation_csv(const AblationResult& result, const std::string& path);
void save_ablation_json(const AblationResult& result, const std::string& path);

}  // namespace fddm

#endif  // FDDM_TRAINING_HPP_
