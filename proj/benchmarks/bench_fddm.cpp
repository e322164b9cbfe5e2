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

// Microbenchmarks for the hot paths: numeric kernels at training batch
// shapes, the combined student objective, and a full training epoch.

#include <benchmark/benchmark.h>

#include "fddm/data.hpp"
#include "fddm/losses.hpp"
#include "fddm/model.hpp"
#include "fddm/numeric.hpp"
#include "fddm/training.hpp"

namespace {

using namespace fddm;

constexpr int kBatch = 8;
constexpr int kClasses = 6;
constexpr int kInputDim = 32;

Matrix bench_batch(Rng& rng, int rows, int cols) {
  Matrix m(rows, cols);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) m(i, j) = rng.normal();
  }
  return m;
}

Matrix bench_labels(Rng& rng, int rows, int cols) {
  Matrix m(rows, cols);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) {
      m(i, j) = i % cols == j || rng.uniform() < 0.3 ? 1.0 : 0.0;
    }
  }
  return m;
}

void BM_softmax_tau(benchmark::State& state) {
  Rng rng(1);
  const Vector v = rng.normal_vector(state.range(0));
  for (auto _ : state) {
    benchmark::DoNotOptimize(softmax_tau(v, 4.0));
  }
}
BENCHMARK(BM_softmax_tau)->Arg(12)->Arg(64)->Arg(512);

void BM_bce_with_logits(benchmark::State& state) {
  Rng rng(2);
  const Matrix z = bench_batch(rng, kBatch, kClasses);
  const Matrix y = bench_labels(rng, kBatch, kClasses);
  for (auto _ : state) {
    benchmark::DoNotOptimize(bce_with_logits(z, y));
  }
}
BENCHMARK(BM_bce_with_logits);

void BM_masked_class_mean(benchmark::State& state) {
  Rng rng(3);
  const Matrix x = bench_batch(rng, kBatch, 12);
  const Matrix y = bench_labels(rng, kBatch, kClasses);
  for (auto _ : state) {
    benchmark::DoNotOptimize(masked_class_mean(x, y));
  }
}
BENCHMARK(BM_masked_class_mean);

void BM_student_objective(benchmark::State& state) {
  Rng rng(4);
  BackboneConfig tcfg;
  tcfg.input_dim = kInputDim;
  tcfg.hidden_dims = {24};
  tcfg.feature_dim = 12;
  tcfg.num_classes = kClasses;
  BackboneConfig scfg = tcfg;
  scfg.feature_dim = 10;
  scfg.projector_dim = 12;

  const ModelParams teacher = init_params(tcfg, 5);
  const ModelParams student = init_params(scfg, 6);
  const Matrix xf = bench_batch(rng, kBatch, kInputDim);
  const Matrix yf = bench_labels(rng, kBatch, kClasses);
  const Matrix xo = bench_batch(rng, kBatch, kInputDim);
  const Matrix yo = bench_labels(rng, kBatch, kClasses);
  const TeacherContext ctx = make_teacher_context(teacher, xf, yf, true, true);
  const LossWeights w;

  for (auto _ : state) {
    benchmark::DoNotOptimize(student_objective(student, ctx, xo, yo, w));
  }
}
BENCHMARK(BM_student_objective);

void BM_teacher_epoch(benchmark::State& state) {
  GeneratorConfig gen = default_generator_config();
  gen.num_patients = 40;
  const DatasetManifest data = generate_synthetic(gen);

  TrainConfig cfg = make_default_train_config(gen.input_dim, gen.num_classes);
  cfg.epochs = 1;
  for (auto _ : state) {
    benchmark::DoNotOptimize(train_teacher(data, cfg));
  }
}
BENCHMARK(BM_teacher_epoch)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
