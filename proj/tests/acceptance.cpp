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

// Acceptance suite. Each criterion prints one [PASS]/[FAIL] line; the
// process exits non-zero if any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "fddm/data.hpp"
#include "fddm/eval.hpp"
#include "fddm/losses.hpp"
#include "fddm/model.hpp"
#include "fddm/numeric.hpp"
#include "fddm/training.hpp"

using namespace fddm;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double now_seconds() {
  using clock = std::chrono::steady_clock;
  static const clock::time_point start = clock::now();
  return std::chrono::duration<double>(clock::now() - start).count();
}

// ---------------------------------------------------------------------------
// Criterion 1: analytic gradients of L_CLS, L_CPM, L_CSA, L_OCT pass
// finite-difference checks (20 instances, B=4, C=3, D=5, input_dim=6).
// ---------------------------------------------------------------------------
Outcome criterion_gradients() {
  const auto t0 = std::chrono::steady_clock::now();

  BackboneConfig teacher_cfg;
  teacher_cfg.input_dim = 6;
  teacher_cfg.hidden_dims = {6};
  teacher_cfg.feature_dim = 5;  // D
  teacher_cfg.num_classes = 3;
  BackboneConfig student_cfg;
  student_cfg.input_dim = 6;
  student_cfg.hidden_dims = {6};
  student_cfg.feature_dim = 4;
  student_cfg.num_classes = 3;
  student_cfg.projector_dim = 5;

  const int B = 4, C = 3;
  Rng rng(2024);
  double worst = 0.0;

  for (int trial = 0; trial < 20; ++trial) {
    const std::uint64_t s = mix_seed(7000 + static_cast<std::uint64_t>(trial));
    const ModelParams teacher = init_params(teacher_cfg, s);
    const ModelParams student = init_params(student_cfg, mix_seed(s));

    Matrix X(B, 6), Xf(B, 6), Y(B, C), Yf(B, C);
    for (int i = 0; i < B; ++i) {
      for (int d = 0; d < 6; ++d) {
        X(i, d) = rng.normal();
        Xf(i, d) = rng.normal();
      }
      for (int c = 0; c < C; ++c) {
        Y(i, c) = i == c || rng.uniform() < 0.4 ? 1.0 : 0.0;
        Yf(i, c) = i == c || rng.uniform() < 0.4 ? 1.0 : 0.0;
      }
    }
    const TeacherContext ctx =
        make_teacher_context(teacher, Xf, Yf, true, true);
    LossWeights w;
    const Vector x0 = flatten(student.tensors);

    const auto fd = [&](auto&& objective, const ParamSet& analytic) {
      const auto f = [&](const Vector& flat) {
        ModelParams probe = student;
        unflatten(flat, probe.tensors);
        return objective(probe);
      };
      worst = std::max(worst, grad_check(f, x0, flatten(analytic)));
    };

    fd([&](const ModelParams& p) {
      return classification_objective(p, X, Y).value;
    }, classification_objective(student, X, Y).grads);
    fd([&](const ModelParams& p) {
      return cpm_objective(p, *ctx.prototypes, X, Y, w.tau).value;
    }, cpm_objective(student, *ctx.prototypes, X, Y, w.tau).grads);
    fd([&](const ModelParams& p) {
      return csa_objective(p, *ctx.profile, X, Y, w.tau).value;
    }, csa_objective(student, *ctx.profile, X, Y, w.tau).grads);
    fd([&](const ModelParams& p) {
      return student_objective(p, ctx, X, Y, w).l_total;
    }, student_objective(student, ctx, X, Y, w).grads);
  }

  const double elapsed =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  std::ostringstream os;
  os << "max rel err " << worst << " over 20 instances x 4 losses, "
     << elapsed << " s";
  return {worst < 1e-5 && elapsed < 30.0, os.str()};
}

// ---------------------------------------------------------------------------
// Criterion 2: loss identities.
// ---------------------------------------------------------------------------
Outcome criterion_loss_identities() {
  Rng rng(11);

  // (a) matched prototypes -> L_CPM = 0
  Matrix protos(3, 5);
  for (int c = 0; c < 3; ++c) {
    for (int d = 0; d < 5; ++d) protos(c, d) = rng.uniform(-2.0, 2.0);
  }
  const PrototypeSet set_a{protos, {1, 1, 1}};
  const bool cpm_null = loss_cpm(set_a, set_a, 4.0).loss == 0.0;

  // (b) matched profiles -> L_CSA = 0; uniform positive row scaling keeps
  // it below 1e-10
  Matrix rows(4, 4);
  for (int a = 0; a < 4; ++a) {
    for (int b = 0; b < 4; ++b) rows(a, b) = rng.uniform(-2.0, 2.0);
  }
  const ClassLogitProfile prof{rows, {1, 1, 1, 1}};
  const ClassLogitProfile scaled{Matrix(2.5 * rows), {1, 1, 1, 1}};
  const bool csa_null = loss_csa(prof, prof, 4.0).loss == 0.0;
  const bool csa_scale = loss_csa(prof, scaled, 4.0).loss < 1e-10;

  // (c) L_OCT = L_CLS + 2 L_CPM + 1 L_CSA at the default weights
  BackboneConfig scfg;
  scfg.input_dim = 6;
  scfg.hidden_dims = {6};
  scfg.feature_dim = 4;
  scfg.num_classes = 3;
  scfg.projector_dim = 5;
  BackboneConfig tcfg = scfg;
  tcfg.feature_dim = 5;
  tcfg.projector_dim = 0;
  const ModelParams student = init_params(scfg, 31);
  const ModelParams teacher = init_params(tcfg, 32);

  bool identity_ok = true;
  for (int trial = 0; trial < 10; ++trial) {
    Matrix X(4, 6), Xf(4, 6), Y(4, 3), Yf(4, 3);
    for (int i = 0; i < 4; ++i) {
      for (int d = 0; d < 6; ++d) {
        X(i, d) = rng.normal();
        Xf(i, d) = rng.normal();
      }
      for (int c = 0; c < 3; ++c) {
        Y(i, c) = i == c || rng.uniform() < 0.5 ? 1.0 : 0.0;
        Yf(i, c) = i == c || rng.uniform() < 0.5 ? 1.0 : 0.0;
      }
    }
    const TeacherContext ctx =
        make_teacher_context(teacher, Xf, Yf, true, true);
    LossWeights w;  // alpha 2, beta 1, tau 4
    const LossBreakdown out = student_objective(student, ctx, X, Y, w);
    if (std::abs(out.l_total -
                 (out.l_cls + 2.0 * out.l_cpm + 1.0 * out.l_csa)) > 1e-10) {
      identity_ok = false;
    }
  }

  std::ostringstream os;
  os << "cpm nullity " << (cpm_null ? "ok" : "VIOLATED") << ", csa nullity "
     << (csa_null ? "ok" : "VIOLATED") << ", cosine scale invariance "
     << (csa_scale ? "ok" : "VIOLATED") << ", weighted-sum identity "
     << (identity_ok ? "ok" : "VIOLATED");
  return {cpm_null && csa_null && csa_scale && identity_ok, os.str()};
}

// ---------------------------------------------------------------------------
// Criterion 3: AP and AUC against brute-force references.
// ---------------------------------------------------------------------------
double ap_reference(const std::vector<double>& scores,
                    const std::vector<int>& truth) {
  std::vector<std::size_t> remaining(scores.size());
  std::iota(remaining.begin(), remaining.end(), 0);
  std::vector<std::size_t> ranking;
  while (!remaining.empty()) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < remaining.size(); ++k) {
      if (scores[remaining[k]] > scores[remaining[best]]) best = k;
    }
    ranking.push_back(remaining[best]);
    remaining.erase(remaining.begin() + static_cast<std::ptrdiff_t>(best));
  }
  double ap = 0.0;
  int positives = 0, seen = 0;
  for (const int t : truth) positives += t;
  for (std::size_t k = 0; k < ranking.size(); ++k) {
    if (truth[ranking[k]] == 1) {
      ++seen;
      ap += static_cast<double>(seen) / static_cast<double>(k + 1);
    }
  }
  return ap / positives;
}

double auc_reference(const std::vector<double>& scores,
                     const std::vector<int>& truth) {
  double wins = 0.0;
  long pairs = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] != 1) continue;
    for (std::size_t j = 0; j < truth.size(); ++j) {
      if (truth[j] != 0) continue;
      ++pairs;
      if (scores[i] > scores[j]) {
        wins += 1.0;
      } else if (scores[i] == scores[j]) {
        wins += 0.5;
      }
    }
  }
  return wins / static_cast<double>(pairs);
}

Outcome criterion_metric_oracles() {
  // frozen worked examples
  const double ap_example = *average_precision({0.9, 0.8, 0.7}, {1, 0, 1});
  const double auc_example = *roc_auc({0.9, 0.8, 0.7, 0.1}, {1, 0, 1, 0});
  const bool examples_ok =
      std::abs(ap_example - (1.0 + 2.0 / 3.0) / 2.0) < 1e-15 &&
      std::abs(auc_example - 0.75) < 1e-15;

  Rng rng(13);
  double worst_ap = 0.0, worst_auc = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = 2 + static_cast<int>(rng.bounded(49));
    std::vector<double> scores;
    std::vector<int> truth;
    for (int i = 0; i < n; ++i) {
      scores.push_back(std::round(rng.uniform() * 8.0) / 8.0);
      truth.push_back(rng.uniform() < 0.4 ? 1 : 0);
    }
    truth[0] = 1;
    worst_ap = std::max(worst_ap, std::abs(*average_precision(scores, truth) -
                                           ap_reference(scores, truth)));
    truth[static_cast<std::size_t>(n - 1)] = 0;
    worst_auc = std::max(worst_auc, std::abs(*roc_auc(scores, truth) -
                                             auc_reference(scores, truth)));
  }

  std::ostringstream os;
  os << "worked examples " << (examples_ok ? "exact" : "WRONG")
     << ", 1000-instance max |dAP| = " << worst_ap << ", max |dAUC| = "
     << worst_auc;
  return {examples_ok && worst_ap < 1e-9 && worst_auc < 1e-9, os.str()};
}

// ---------------------------------------------------------------------------
// Criterion 4: alpha=beta=0 student trajectory is bitwise the single-modal
// baseline for 3 epochs on the default dataset.
// ---------------------------------------------------------------------------
Outcome criterion_reduction() {
  const GeneratorConfig gen = default_generator_config();
  const DatasetManifest full = generate_synthetic(gen);
  const SplitResult split = split_by_patient(full, 0.2, 7);

  TrainConfig cfg = make_default_train_config(gen.input_dim, gen.num_classes);
  cfg.weights.alpha = 0.0;
  cfg.weights.beta = 0.0;
  const ModelParams teacher = init_params(cfg.teacher_backbone, 999);

  bool all_equal = true;
  for (int epochs = 1; epochs <= 3; ++epochs) {
    TrainConfig run = cfg;
    run.epochs = epochs;
    const TrainResult student =
        train_student(split.train, split.train, teacher, run);
    const TrainResult baseline = train_single_modal(
        split.train, Modality::kOct, run.student_backbone, run);

    const Vector sf = flatten(student.params.tensors);
    const Vector bf = flatten(baseline.params.tensors);
    if (!(sf.head(bf.size()) == bf)) all_equal = false;

    // per-step loss sequences must agree bit for bit as well
    if (student.log.steps.size() != baseline.log.steps.size()) {
      all_equal = false;
    } else {
      for (std::size_t i = 0; i < student.log.steps.size(); ++i) {
        if (student.log.steps[i].l_cls != baseline.log.steps[i].l_cls ||
            student.log.steps[i].model_batch !=
                baseline.log.steps[i].model_batch) {
          all_equal = false;
        }
      }
    }
  }
  return {all_equal,
          all_equal ? "backbone+head trajectories bitwise identical at "
                      "epochs 1, 2, 3 (params and per-step losses)"
                    : "trajectories DIVERGED"};
}

// ---------------------------------------------------------------------------
// Criterion 5: end-to-end distillation benefit across 5 seeds.
// ---------------------------------------------------------------------------
Outcome criterion_distillation_benefit() {
  const auto t0 = std::chrono::steady_clock::now();
  const GeneratorConfig gen = default_generator_config();
  const DatasetManifest full = generate_synthetic(gen);
  const SplitResult split = split_by_patient(full, 0.2, 7);

  double mean[4] = {0.0, 0.0, 0.0, 0.0};
  for (int s = 1; s <= 5; ++s) {
    TrainConfig cfg =
        make_default_train_config(gen.input_dim, gen.num_classes);
    cfg.init_seed = 100 + static_cast<std::uint64_t>(s);
    cfg.data_seed = 200 + static_cast<std::uint64_t>(s);
    const AblationResult r = run_ablation(split.train, split.test, cfg);
    for (std::size_t i = 0; i < 4; ++i) {
      mean[i] += r.cells[i].report.map / 5.0;
    }
  }
  const double base = mean[0], csa = mean[1], cpm = mean[2], fullm = mean[3];
  const double elapsed =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();

  const bool beats_baseline = fullm >= base;
  const bool beats_singles = fullm >= std::max(csa, cpm);
  std::ostringstream os;
  os.precision(4);
  os << std::fixed << "mean MAP over 5 seeds: baseline " << base
     << ", csa_only " << csa << ", cpm_only " << cpm << ", full " << fullm
     << " (full-baseline " << std::showpos << fullm - base
     << ", full-maxsingle " << fullm - std::max(csa, cpm) << std::noshowpos
     << "), " << elapsed << " s";
  return {beats_baseline && beats_singles && elapsed < 600.0, os.str()};
}

// ---------------------------------------------------------------------------
// Criterion 6: unpaired-training contract.
// ---------------------------------------------------------------------------
Outcome criterion_unpaired() {
  const GeneratorConfig gen = default_generator_config();
  const DatasetManifest full = generate_synthetic(gen);
  const SplitResult split = split_by_patient(full, 0.2, 7);

  TrainConfig cfg = make_default_train_config(gen.input_dim, gen.num_classes);
  cfg.epochs = 2;
  const TrainResult teacher = train_teacher(split.train, cfg);
  const TrainResult student =
      train_student(split.train, split.train, teacher.params, cfg);

  // each stream must replay from its own seed alone
  BatchStream oct_replay(split.train, Modality::kOct, cfg.batch_size,
                         cfg.data_seed);
  BatchStream fundus_replay(split.train, Modality::kFundus, cfg.batch_size,
                            fundus_stream_seed(cfg.data_seed));
  bool replay_ok = true;
  int steps_with_shared_eye = 0;
  int steps_without_shared_eye = 0;
  for (const auto& step : student.log.steps) {
    if (step.model_batch != oct_replay.next().record_indices) replay_ok = false;
    if (step.teacher_batch != fundus_replay.next().record_indices) {
      replay_ok = false;
    }
    std::vector<std::string> oct_eyes, fundus_eyes;
    for (const auto idx : step.model_batch) {
      oct_eyes.push_back(split.train.records[idx].eye_id);
    }
    bool shared = false;
    for (const auto idx : step.teacher_batch) {
      const std::string& eye = split.train.records[idx].eye_id;
      if (std::find(oct_eyes.begin(), oct_eyes.end(), eye) != oct_eyes.end()) {
        shared = true;
      }
    }
    shared ? ++steps_with_shared_eye : ++steps_without_shared_eye;
  }

  // no pairing constraint in either direction: some steps share an eye by
  // chance, some do not
  const bool unconstrained =
      steps_with_shared_eye > 0 && steps_without_shared_eye > 0;
  std::ostringstream os;
  os << "streams replay independently seeded shuffles ("
     << (replay_ok ? "ok" : "MISMATCH") << "); eye overlap by chance only ("
     << steps_with_shared_eye << " steps with, " << steps_without_shared_eye
     << " without)";
  return {replay_ok && unconstrained, os.str()};
}

// ---------------------------------------------------------------------------
// Criterion 7: eye-level any-positive ensemble, exhaustive over 1..4 images.
// ---------------------------------------------------------------------------
Outcome criterion_eye_ensemble() {
  int cases = 0;
  for (int n = 1; n <= 4; ++n) {
    for (int bits = 0; bits < (1 << n); ++bits) {
      DatasetManifest m;
      m.num_classes = 2;
      m.class_names = {"a", "b"};
      for (int i = 0; i < n; ++i) {
        ImageRecord rec;
        rec.record_id = "r" + std::to_string(i);
        rec.eye_id = "eye";
        rec.patient_id = "p";
        rec.modality = Modality::kOct;
        rec.labels = {1, 0};
        rec.features = Vector::Zero(2);
        m.records.push_back(std::move(rec));
      }
      Matrix probs(n, 2);
      bool any = false;
      for (int i = 0; i < n; ++i) {
        const bool indicates = (bits >> i) & 1;
        probs(i, 0) = indicates ? 0.8 : 0.2;
        probs(i, 1) = 0.3;
        any = any || indicates;
      }
      const auto preds = ensemble_eye(m, Modality::kOct, probs);
      if (preds.size() != 1 ||
          preds[0].decisions[0] != (any ? 1 : 0) ||
          preds[0].decisions[1] != 0 ||
          preds[0].scores[0] != (any ? 0.8 : 0.2)) {
        return {false, "max rule violated at n=" + std::to_string(n) +
                           " bits=" + std::to_string(bits)};
      }
      ++cases;
    }
  }
  return {true, "all " + std::to_string(cases) +
                    " boolean combinations reproduce the any-positive rule"};
}

// ---------------------------------------------------------------------------
// Criterion 8: CLI pipeline determinism (byte-identical reruns).
// ---------------------------------------------------------------------------
std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
}

Outcome criterion_cli_determinism() {
  const std::string cli = FDDM_CLI_PATH;
  const fs::path root = fs::absolute("acceptance_cli_runs");
  fs::remove_all(root);
  fs::create_directories(root);

  const fs::path config = root / "config.json";
  {
    std::ofstream out(config);
    out << R"({
  "generator": {"num_patients": 40, "seed": 5},
  "split": {"test_fraction": 0.2, "seed": 7},
  "train": {"epochs": 10}
})";
  }

  const auto run_pipeline = [&](const fs::path& dir) -> bool {
    fs::create_directories(dir);
    const auto shell = [&](const std::string& args) {
      const std::string cmd = cli + " " + args + " > " +
                              (dir / "stdout.txt").string() + " 2>&1";
      return std::system(cmd.c_str()) == 0;
    };
    const std::string cfg = " --config " + config.string();
    return shell("synth" + cfg + " --out " + (dir / "data.ndjson").string()) &&
           shell("train-teacher" + cfg + " --data " +
                 (dir / "data.ndjson").string() + " --out " +
                 (dir / "teacher.json").string()) &&
           shell("train-student" + cfg + " --data " +
                 (dir / "data.ndjson").string() + " --teacher " +
                 (dir / "teacher.json").string() + " --out " +
                 (dir / "student.json").string()) &&
           shell("eval" + cfg + " --checkpoint " +
                 (dir / "student.json").string() + " --data " +
                 (dir / "data.ndjson").string() + " --out " +
                 (dir / "report").string());
  };

  if (!run_pipeline(root / "a") || !run_pipeline(root / "b")) {
    return {false, "pipeline command failed (see acceptance_cli_runs/)"};
  }

  bool identical = true;
  std::string first_diff;
  for (const char* name : {"data.ndjson", "teacher.json", "student.json",
                           "report.json", "report.csv"}) {
    if (slurp(root / "a" / name) != slurp(root / "b" / name)) {
      identical = false;
      if (first_diff.empty()) first_diff = name;
    }
  }
  if (identical) fs::remove_all(root);
  return {identical, identical
                         ? "synth/train-teacher/train-student/eval reruns are "
                           "byte-identical (dataset, checkpoints, reports)"
                         : "rerun differs at " + first_diff};
}

}  // namespace

int main() {
  (void)now_seconds();
  const struct {
    int id;
    const char* name;
    std::function<Outcome()> run;
  } criteria[] = {
      {1, "gradient correctness", criterion_gradients},
      {2, "loss identities", criterion_loss_identities},
      {3, "metric oracles", criterion_metric_oracles},
      {4, "reduction to baseline", criterion_reduction},
      {5, "end-to-end distillation benefit", criterion_distillation_benefit},
      {6, "unpaired-training contract", criterion_unpaired},
      {7, "eye-level ensemble", criterion_eye_ensemble},
      {8, "pipeline determinism", criterion_cli_determinism},
  };

  int failures = 0;
  for (const auto& c : criteria) {
    Outcome outcome;
    try {
      outcome = c.run();
    } catch (const std::exception& e) {
      outcome = {false, std::string("exception: ") + e.what()};
    }
    std::printf("[%s] criterion %d: %s — %s\n",
                outcome.pass ? "PASS" : "FAIL", c.id, c.name,
                outcome.detail.c_str());
    std::fflush(stdout);
    if (!outcome.pass) ++failures;
  }
  if (failures > 0) {
    std::printf("%d of 8 criteria failed\n", failures);
    return 1;
  }
  std::printf("all 8 criteria passed\n");
  return 0;
}
