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

// fddm: synthetic data generation, teacher/student training, the ablation
// grid, evaluation, and a gradient-check harness, driven by a JSON config
// file whose values CLI flags override.
//
// Exit codes: 0 success, 1 I/O or file-content error, 2 config/usage error,
// 3 training divergence, 4 gradient-check failure.

#include <cstdlib>
#include <iomanip>
#include <iostream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "fddm/data.hpp"
#include "fddm/eval.hpp"
#include "fddm/losses.hpp"
#include "fddm/model.hpp"
#include "fddm/numeric.hpp"
#include "fddm/training.hpp"

namespace {

using Json = nlohmann::ordered_json;
using namespace fddm;

// ---------------------------------------------------------------------------
// Config file
// ---------------------------------------------------------------------------

struct SplitConfig {
  bool present = false;
  double test_fraction = 0.2;
  std::uint64_t seed = 7;
};

struct RunConfig {
  GeneratorConfig generator = default_generator_config();
  SplitConfig split;
  // Training hyperparameters; backbone input/num_classes are resolved from
  // the dataset at command time.
  int epochs = 150;
  double lr = 1e-3;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  int batch_size = 8;
  double tau = 4.0;
  double alpha = 2.0;
  double beta = 1.0;
  std::uint64_t init_seed = 1;
  std::uint64_t data_seed = 2;
  int eval_every = 0;
  std::vector<int> teacher_hidden{24};
  int teacher_feature_dim = 12;
  std::vector<int> student_hidden{24};
  int student_feature_dim = 10;
};

void require_keys(const Json& obj, const std::set<std::string>& allowed,
                  const std::string& where) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (allowed.find(it.key()) == allowed.end()) {
      throw ParamError("config: unknown key '" + where + it.key() + "'");
    }
  }
}

Matrix matrix_from_config(const Json& j, const std::string& name) {
  if (!j.is_array() || j.empty()) {
    throw ParamError("config: " + name + " must be an array of arrays");
  }
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = static_cast<Eigen::Index>(j.at(0).size());
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const Json& row = j.at(static_cast<std::size_t>(i));
    if (static_cast<Eigen::Index>(row.size()) != cols) {
      throw ParamError("config: " + name + " has ragged rows");
    }
    for (Eigen::Index k = 0; k < cols; ++k) {
      m(i, k) = row.at(static_cast<std::size_t>(k)).get<double>();
    }
  }
  return m;
}

void apply_generator_section(const Json& g, GeneratorConfig& cfg) {
  require_keys(g,
               {"num_patients", "eyes_per_patient",
                "images_per_eye_per_modality", "num_classes", "input_dim",
                "class_prevalence", "label_correlation", "signal_strength",
                "noise_std", "seed", "class_names"},
               "generator.");
  bool classes_changed = false;
  if (g.contains("num_patients")) cfg.num_patients = g["num_patients"];
  if (g.contains("eyes_per_patient")) cfg.eyes_per_patient = g["eyes_per_patient"];
  if (g.contains("images_per_eye_per_modality")) {
    cfg.images_per_eye_per_modality = g["images_per_eye_per_modality"];
  }
  if (g.contains("num_classes")) {
    cfg.num_classes = g["num_classes"];
    classes_changed = true;
  }
  if (g.contains("input_dim")) cfg.input_dim = g["input_dim"];
  if (g.contains("class_prevalence")) {
    cfg.class_prevalence = g["class_prevalence"].get<std::vector<double>>();
  } else if (classes_changed) {
    cfg.class_prevalence.assign(static_cast<std::size_t>(cfg.num_classes), 0.3);
  }
  if (g.contains("label_correlation")) {
    cfg.label_correlation =
        matrix_from_config(g["label_correlation"], "generator.label_correlation");
  } else if (classes_changed) {
    cfg.label_correlation = Matrix::Identity(cfg.num_classes, cfg.num_classes);
  }
  if (g.contains("signal_strength")) {
    const Json& s = g["signal_strength"];
    require_keys(s, {"fundus", "oct"}, "generator.signal_strength.");
    if (s.contains("fundus")) cfg.signal_strength_fundus = s["fundus"];
    if (s.contains("oct")) cfg.signal_strength_oct = s["oct"];
  }
  if (g.contains("noise_std")) cfg.noise_std = g["noise_std"];
  if (g.contains("seed")) cfg.seed = g["seed"];
  if (g.contains("class_names")) {
    cfg.class_names = g["class_names"].get<std::vector<std::string>>();
  }
}

void apply_train_section(const Json& t, RunConfig& cfg) {
  require_keys(t,
               {"epochs", "lr", "momentum", "weight_decay", "batch_size",
                "tau", "alpha", "beta", "init_seed", "data_seed", "eval_every",
                "teacher", "student"},
               "train.");
  if (t.contains("epochs")) cfg.epochs = t["epochs"];
  if (t.contains("lr")) cfg.lr = t["lr"];
  if (t.contains("momentum")) cfg.momentum = t["momentum"];
  if (t.contains("weight_decay")) cfg.weight_decay = t["weight_decay"];
  if (t.contains("batch_size")) cfg.batch_size = t["batch_size"];
  if (t.contains("tau")) cfg.tau = t["tau"];
  if (t.contains("alpha")) cfg.alpha = t["alpha"];
  if (t.contains("beta")) cfg.beta = t["beta"];
  if (t.contains("init_seed")) cfg.init_seed = t["init_seed"];
  if (t.contains("data_seed")) cfg.data_seed = t["data_seed"];
  if (t.contains("eval_every")) cfg.eval_every = t["eval_every"];
  const auto backbone = [](const Json& b, const std::string& where,
                           std::vector<int>& hidden, int& feature_dim) {
    require_keys(b, {"hidden_dims", "feature_dim"}, where);
    if (b.contains("hidden_dims")) hidden = b["hidden_dims"].get<std::vector<int>>();
    if (b.contains("feature_dim")) feature_dim = b["feature_dim"];
  };
  if (t.contains("teacher")) {
    backbone(t["teacher"], "train.teacher.", cfg.teacher_hidden,
             cfg.teacher_feature_dim);
  }
  if (t.contains("student")) {
    backbone(t["student"], "train.student.", cfg.student_hidden,
             cfg.student_feature_dim);
  }
}

RunConfig load_run_config(const std::string& path) {
  RunConfig cfg;
  if (path.empty()) return cfg;

  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file: " + path);
  Json j;
  try {
    j = Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path + ": " + e.what());
  }
  require_keys(j, {"generator", "split", "train"}, "");
  if (j.contains("generator")) apply_generator_section(j["generator"], cfg.generator);
  if (j.contains("split")) {
    const Json& s = j["split"];
    require_keys(s, {"test_fraction", "seed"}, "split.");
    cfg.split.present = true;
    if (s.contains("test_fraction")) cfg.split.test_fraction = s["test_fraction"];
    if (s.contains("seed")) cfg.split.seed = s["seed"];
  }
  if (j.contains("train")) apply_train_section(j["train"], cfg);
  return cfg;
}

TrainConfig to_train_config(const RunConfig& cfg, int input_dim,
                            int num_classes) {
  TrainConfig out;
  out.epochs = cfg.epochs;
  out.lr = cfg.lr;
  out.momentum = cfg.momentum;
  out.weight_decay = cfg.weight_decay;
  out.batch_size = cfg.batch_size;
  out.weights.tau = cfg.tau;
  out.weights.alpha = cfg.alpha;
  out.weights.beta = cfg.beta;
  out.init_seed = cfg.init_seed;
  out.data_seed = cfg.data_seed;
  out.eval_every = cfg.eval_every;
  out.teacher_backbone.input_dim = input_dim;
  out.teacher_backbone.hidden_dims = cfg.teacher_hidden;
  out.teacher_backbone.feature_dim = cfg.teacher_feature_dim;
  out.teacher_backbone.num_classes = num_classes;
  out.student_backbone.input_dim = input_dim;
  out.student_backbone.hidden_dims = cfg.student_hidden;
  out.student_backbone.feature_dim = cfg.student_feature_dim;
  out.student_backbone.num_classes = num_classes;
  return out;
}

// ---------------------------------------------------------------------------
// Shared command plumbing
// ---------------------------------------------------------------------------

std::string resolve_out(const std::string& path) {
  if (path.empty() || path.front() == '/') return path;
  const char* base = std::getenv("FDDM_OUT_DIR");
  if (base == nullptr || base[0] == '\0') return path;
  std::string prefix(base);
  if (prefix.back() != '/') prefix += '/';
  return prefix + path;
}

int dataset_input_dim(const DatasetManifest& m) {
  if (m.records.empty()) throw DataError("dataset has no records");
  return static_cast<int>(m.records.front().features.size());
}

// Applies the config's split section and returns the requested side.
DatasetManifest select_side(const DatasetManifest& full, const RunConfig& cfg,
                            bool test_side) {
  if (!cfg.split.present) return full;
  SplitResult split =
      split_by_patient(full, cfg.split.test_fraction, cfg.split.seed);
  return test_side ? std::move(split.test) : std::move(split.train);
}

void print_train_header(const std::string& what, const TrainConfig& cfg) {
  std::cout << what << " config: epochs=" << cfg.epochs << " lr=" << cfg.lr
            << " momentum=" << cfg.momentum
            << " weight_decay=" << cfg.weight_decay
            << " batch_size=" << cfg.batch_size << " tau=" << cfg.weights.tau
            << " alpha=" << cfg.weights.alpha << " beta=" << cfg.weights.beta
            << " init_seed=" << cfg.init_seed << " data_seed=" << cfg.data_seed
            << "\n";
}

void print_eval_line(const std::string& label, const EvalReport& r) {
  std::cout << label << ": map=" << r.map
            << " sensitivity=" << r.mean_sensitivity
            << " specificity=" << r.mean_specificity << " f1=" << r.mean_f1
            << " auc=" << r.mean_auc << "\n";
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

int cmd_synth(const RunConfig& run, const std::string& out) {
  const DatasetManifest m = generate_synthetic(run.generator);
  save_dataset(m, out);

  // summary table: per-class eye and image counts
  const auto fundus = m.indices_of(Modality::kFundus);
  const auto oct = m.indices_of(Modality::kOct);
  const auto eyes = group_by_eye(m, Modality::kFundus);

  std::cout << "wrote " << out << "\n";
  std::cout << std::left << std::setw(12) << "category" << std::setw(8)
            << "eyes" << std::setw(15) << "fundus_images" << std::setw(12)
            << "oct_images" << "\n";
  for (int c = 0; c < m.num_classes; ++c) {
    int eye_count = 0, fundus_count = 0, oct_count = 0;
    for (const auto& g : eyes) eye_count += g.labels[static_cast<std::size_t>(c)];
    for (const auto i : fundus) fundus_count += m.records[i].labels[static_cast<std::size_t>(c)];
    for (const auto i : oct) oct_count += m.records[i].labels[static_cast<std::size_t>(c)];
    std::cout << std::left << std::setw(12)
              << m.class_names[static_cast<std::size_t>(c)] << std::setw(8)
              << eye_count << std::setw(15) << fundus_count << std::setw(12)
              << oct_count << "\n";
  }
  std::cout << std::left << std::setw(12) << "total" << std::setw(8)
            << eyes.size() << std::setw(15) << fundus.size() << std::setw(12)
            << oct.size() << "\n";
  return 0;
}

int cmd_train_teacher(const RunConfig& run, const std::string& data_path,
                      const std::string& out, const std::string& log_path) {
  const DatasetManifest full = load_dataset(data_path);
  const DatasetManifest train = select_side(full, run, false);
  const DatasetManifest test = select_side(full, run, true);

  const TrainConfig cfg =
      to_train_config(run, dataset_input_dim(full), full.num_classes);
  print_train_header("teacher", cfg);

  const TrainResult r = train_teacher(train, cfg);
  Checkpoint ckpt;
  ckpt.params = r.params;
  ckpt.optimizer = r.optimizer;
  ckpt.init_seed = cfg.init_seed;
  ckpt.data_seed = cfg.data_seed;
  save_checkpoint(out, ckpt);
  if (!log_path.empty()) save_train_log(r.log, log_path);

  std::cout << "final epoch mean L_CLS = " << r.log.epochs.back().mean_l_cls
            << "\n";
  if (run.split.present) {
    print_eval_line("teacher eval (test fundus)",
                    evaluate_model(r.params, test, Modality::kFundus));
  }
  std::cout << "wrote " << out << "\n";
  return 0;
}

int cmd_train_student(const RunConfig& run, const std::string& data_path,
                      const std::string& teacher_path, const std::string& out,
                      const std::string& log_path) {
  const DatasetManifest full = load_dataset(data_path);
  const DatasetManifest train = select_side(full, run, false);
  const DatasetManifest test = select_side(full, run, true);
  const Checkpoint teacher = load_checkpoint(teacher_path);

  const TrainConfig cfg =
      to_train_config(run, dataset_input_dim(full), full.num_classes);
  print_train_header("student", cfg);

  const TrainResult r = train_student(train, train, teacher.params, cfg);
  Checkpoint ckpt;
  ckpt.params = r.params;
  ckpt.optimizer = r.optimizer;
  ckpt.init_seed = cfg.init_seed;
  ckpt.data_seed = cfg.data_seed;
  save_checkpoint(out, ckpt);
  if (!log_path.empty()) save_train_log(r.log, log_path);

  std::cout << "final epoch mean L_OCT = " << r.log.epochs.back().mean_l_total
            << " (cpm_skipped_steps=" << r.log.cpm_skipped_steps
            << " csa_skipped_steps=" << r.log.csa_skipped_steps << ")\n";
  for (const auto& w : r.log.warnings) std::cout << "warning: " << w << "\n";
  if (run.split.present) {
    print_eval_line("student eval (test oct)",
                    evaluate_model(r.params, test, Modality::kOct));
  }
  std::cout << "wrote " << out << "\n";
  return 0;
}

int cmd_ablate(const RunConfig& run, const std::string& data_path,
               const std::string& test_path, const std::string& out_dir) {
  DatasetManifest train, test;
  if (!test_path.empty()) {
    train = load_dataset(data_path);
    test = load_dataset(test_path);
  } else {
    const DatasetManifest full = load_dataset(data_path);
    if (!run.split.present) {
      throw ParamError(
          "ablate: provide --test or a split section in the config");
    }
    SplitResult split =
        split_by_patient(full, run.split.test_fraction, run.split.seed);
    train = std::move(split.train);
    test = std::move(split.test);
  }

  const TrainConfig cfg =
      to_train_config(run, dataset_input_dim(train), train.num_classes);
  print_train_header("ablation", cfg);
  const AblationResult result = run_ablation(train, test, cfg);

  const std::string csv = out_dir + "/ablation.csv";
  const std::string json = out_dir + "/ablation.json";
  save_ablation_csv(result, csv);
  save_ablation_json(result, json);

  std::cout << std::left << std::setw(10) << "method" << std::setw(5) << "cpm"
            << std::setw(5) << "csa" << std::setw(12) << "map" << std::setw(12)
            << "map_major" << std::setw(12) << "map_minor" << std::setw(12)
            << "f1" << std::setw(12) << "auc" << "\n";
  for (const auto& cell : result.cells) {
    std::cout << std::left << std::setw(10) << cell.name << std::setw(5)
              << (cell.cpm_on ? 1 : 0) << std::setw(5) << (cell.csa_on ? 1 : 0)
              << std::setw(12) << cell.report.map << std::setw(12)
              << (cell.report.majority_map ? *cell.report.majority_map : 0.0)
              << std::setw(12)
              << (cell.report.minority_map ? *cell.report.minority_map : 0.0)
              << std::setw(12) << cell.report.mean_f1 << std::setw(12)
              << cell.report.mean_auc << "\n";
  }
  std::cout << "wrote " << csv << " and " << json << "\n";
  return 0;
}

int cmd_eval(const RunConfig& run, const std::string& ckpt_path,
             const std::string& data_path, const std::string& out_prefix,
             const std::string& modality_name_str) {
  const Checkpoint ckpt = load_checkpoint(ckpt_path);
  const DatasetManifest full = load_dataset(data_path);
  const DatasetManifest test = select_side(full, run, true);
  const Modality modality = modality_from_name(modality_name_str);

  const EvalReport report = evaluate_model(ckpt.params, test, modality);
  save_report_json(report, out_prefix + ".json");
  save_report_csv(report, out_prefix + ".csv");
  print_eval_line("eval", report);
  for (const auto& flag : report.flags) std::cout << "flag: " << flag << "\n";
  std::cout << "wrote " << out_prefix << ".json and " << out_prefix
            << ".csv\n";
  return 0;
}

int cmd_gradcheck(std::uint64_t seed, int trials,
                  const std::string& corrupt) {
  if (trials < 1) throw ParamError("gradcheck: trials must be >= 1");
  const std::set<std::string> names{"L_CLS", "L_CPM", "L_CSA", "L_OCT"};
  if (!corrupt.empty() && names.find(corrupt) == names.end()) {
    throw ParamError("gradcheck: unknown loss name " + corrupt);
  }

  // the desk-scale gradient-check instance: B=4, C=3, teacher D=5, input 6
  BackboneConfig teacher_cfg;
  teacher_cfg.input_dim = 6;
  teacher_cfg.hidden_dims = {6};
  teacher_cfg.feature_dim = 5;
  teacher_cfg.num_classes = 3;
  BackboneConfig student_cfg;
  student_cfg.input_dim = 6;
  student_cfg.hidden_dims = {6};
  student_cfg.feature_dim = 4;
  student_cfg.num_classes = 3;
  student_cfg.projector_dim = 5;

  const int B = 4, C = 3;
  double worst_cls = 0.0, worst_cpm = 0.0, worst_csa = 0.0, worst_oct = 0.0;
  Rng rng(seed);

  for (int trial = 0; trial < trials; ++trial) {
    const std::uint64_t s = mix_seed(seed + static_cast<std::uint64_t>(trial));
    const ModelParams teacher = init_params(teacher_cfg, s);
    const ModelParams student = init_params(student_cfg, mix_seed(s));

    // every class present on both sides so no loss silently degenerates
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
    const TeacherContext ctx = make_teacher_context(teacher, Xf, Yf, true, true);
    LossWeights w;  // paper defaults
    const Vector x0 = flatten(student.tensors);

    const auto check = [&](const std::string& name, auto&& objective,
                           const ParamSet& analytic, double& worst) {
      ParamSet grads = analytic;
      if (corrupt == name) grads.encoder[0].W(0, 0) += 1e-2;
      const auto f = [&](const Vector& flat) {
        ModelParams probe = student;
        unflatten(flat, probe.tensors);
        return objective(probe);
      };
      worst = std::max(worst, grad_check(f, x0, flatten(grads)));
    };

    check("L_CLS",
          [&](const ModelParams& p) {
            return classification_objective(p, X, Y).value;
          },
          classification_objective(student, X, Y).grads, worst_cls);
    check("L_CPM",
          [&](const ModelParams& p) {
            return cpm_objective(p, *ctx.prototypes, X, Y, w.tau).value;
          },
          cpm_objective(student, *ctx.prototypes, X, Y, w.tau).grads,
          worst_cpm);
    check("L_CSA",
          [&](const ModelParams& p) {
            return csa_objective(p, *ctx.profile, X, Y, w.tau).value;
          },
          csa_objective(student, *ctx.profile, X, Y, w.tau).grads, worst_csa);
    check("L_OCT",
          [&](const ModelParams& p) {
            return student_objective(p, ctx, X, Y, w).l_total;
          },
          student_objective(student, ctx, X, Y, w).grads, worst_oct);
  }

  constexpr double kTol = 1e-5;
  const struct {
    const char* name;
    double err;
  } rows[] = {{"L_CLS", worst_cls},
              {"L_CPM", worst_cpm},
              {"L_CSA", worst_csa},
              {"L_OCT", worst_oct}};
  std::string failed;
  for (const auto& row : rows) {
    const bool pass = row.err < kTol;
    std::cout << std::left << std::setw(8) << row.name
              << " max_rel_err=" << std::scientific << std::setprecision(3)
              << row.err << std::defaultfloat << (pass ? "  PASS" : "  FAIL")
              << "\n";
    if (!pass && failed.empty()) failed = row.name;
  }
  if (!failed.empty()) {
    std::cout << "gradcheck failed: " << failed << "\n";
    return 4;
  }
  std::cout << "all gradients verified over " << trials << " instances\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fundus-enhanced disease-aware distillation (FDDM) toolkit"};
  app.require_subcommand(1);

  std::string config_path, data_path, test_path, teacher_path, ckpt_path;
  std::string out_path, log_path, modality = "oct";
  std::uint64_t seed_flag = 0;
  int epochs_flag = 0, trials = 20;
  double alpha_flag = 0.0, beta_flag = 0.0, tau_flag = 0.0;
  std::uint64_t init_seed_flag = 0, data_seed_flag = 0;
  std::string corrupt;

  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  synth->add_option("--config", config_path, "JSON config file");
  synth->add_option("--out", out_path, "output dataset path")->required();
  auto* synth_seed = synth->add_option("--seed", seed_flag, "generator seed");

  const auto add_train_flags = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "JSON config file");
    cmd->add_option("--data", data_path, "dataset path")->required();
    cmd->add_option("--out", out_path, "checkpoint output path")->required();
    cmd->add_option("--log", log_path, "training log output path");
    cmd->add_option("--epochs", epochs_flag, "override train.epochs");
    cmd->add_option("--init-seed", init_seed_flag, "override train.init_seed");
    cmd->add_option("--data-seed", data_seed_flag, "override train.data_seed");
  };

  auto* teach = app.add_subcommand("train-teacher",
                                   "train the fundus teacher (BCE only)");
  add_train_flags(teach);

  auto* stud = app.add_subcommand(
      "train-student", "train the OCT student against a frozen teacher");
  add_train_flags(stud);
  stud->add_option("--teacher", teacher_path, "teacher checkpoint")->required();
  auto* alpha_opt = stud->add_option("--alpha", alpha_flag, "CPM weight");
  auto* beta_opt = stud->add_option("--beta", beta_flag, "CSA weight");
  auto* tau_opt = stud->add_option("--tau", tau_flag, "temperature");

  auto* ablate = app.add_subcommand("ablate", "run the CPM/CSA on-off grid");
  ablate->add_option("--config", config_path, "JSON config file");
  ablate->add_option("--data", data_path, "training dataset (or full set)")
      ->required();
  ablate->add_option("--test", test_path, "held-out dataset");
  ablate->add_option("--out", out_path, "output directory")->required();

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  eval->add_option("--config", config_path, "JSON config file");
  eval->add_option("--checkpoint", ckpt_path, "model checkpoint")->required();
  eval->add_option("--data", data_path, "dataset path")->required();
  eval->add_option("--out", out_path, "report path prefix")->required();
  eval->add_option("--modality", modality, "fundus or oct (default oct)");

  auto* gradcheck = app.add_subcommand(
      "gradcheck", "finite-difference checks for every loss gradient");
  gradcheck->add_option("--seed", seed_flag, "instance seed");
  gradcheck->add_option("--trials", trials, "number of random instances");
  gradcheck->add_option("--corrupt", corrupt,
                        "fault injection: corrupt the named loss gradient");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    RunConfig run = load_run_config(config_path);
    if (*synth) {
      if (synth_seed->count() > 0) run.generator.seed = seed_flag;
      return cmd_synth(run, resolve_out(out_path));
    }
    if (*teach || *stud) {
      if (epochs_flag > 0) run.epochs = epochs_flag;
      if (init_seed_flag > 0) run.init_seed = init_seed_flag;
      if (data_seed_flag > 0) run.data_seed = data_seed_flag;
      if (alpha_opt->count() > 0) run.alpha = alpha_flag;
      if (beta_opt->count() > 0) run.beta = beta_flag;
      if (tau_opt->count() > 0) run.tau = tau_flag;
      if (*teach) {
        return cmd_train_teacher(run, data_path, resolve_out(out_path),
                                 resolve_out(log_path));
      }
      return cmd_train_student(run, data_path, teacher_path,
                               resolve_out(out_path), resolve_out(log_path));
    }
    if (*ablate) {
      return cmd_ablate(run, data_path, test_path, resolve_out(out_path));
    }
    if (*eval) {
      return cmd_eval(run, ckpt_path, data_path, resolve_out(out_path),
                      modality);
    }
    if (*gradcheck) return cmd_gradcheck(seed_flag, trials, corrupt);
    return 2;
  } catch (const TrainError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const SchemaError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const Error& e) {
    // ParamError, ShapeError, InputError, DomainError, CapabilityError,
    // DataError: user-facing configuration problems.
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
