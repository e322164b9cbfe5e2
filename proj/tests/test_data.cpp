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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>

#include "fddm/data.hpp"
#include "test_util.hpp"

using namespace fddm;

namespace {

GeneratorConfig tiny_config() {
  GeneratorConfig cfg;
  cfg.num_patients = 5;
  cfg.eyes_per_patient = 2;
  cfg.images_per_eye_per_modality = 2;
  cfg.num_classes = 3;
  cfg.input_dim = 4;
  cfg.class_prevalence = {0.4, 0.3, 0.2};
  cfg.label_correlation = Matrix::Identity(3, 3);
  cfg.seed = 11;
  return cfg;
}

}  // namespace

TEST_CASE("generate_synthetic: noiseless single-class images are identical") {
  GeneratorConfig cfg;
  cfg.num_patients = 20;
  cfg.eyes_per_patient = 1;
  cfg.images_per_eye_per_modality = 3;
  cfg.num_classes = 1;
  cfg.input_dim = 4;
  cfg.class_prevalence = {0.5};
  cfg.label_correlation = Matrix::Identity(1, 1);
  cfg.signal_strength_fundus = 1.0;
  cfg.signal_strength_oct = 1.0;
  cfg.noise_std = 0.0;
  cfg.seed = 3;

  const DatasetManifest m = generate_synthetic(cfg);
  for (const Modality mod : {Modality::kFundus, Modality::kOct}) {
    Vector positive_signature;
    for (const std::size_t i : m.indices_of(mod)) {
      const ImageRecord& rec = m.records[i];
      if (rec.labels[0] == 1) {
        if (positive_signature.size() == 0) {
          positive_signature = rec.features;
        } else {
          CHECK((rec.features - positive_signature).norm() == 0.0);
        }
      } else {
        CHECK(rec.features.norm() == 0.0);
      }
    }
  }
}

TEST_CASE("generate_synthetic: identity copula gives uncorrelated labels") {
  GeneratorConfig cfg;
  cfg.num_patients = 1000;
  cfg.eyes_per_patient = 2;
  cfg.images_per_eye_per_modality = 1;
  cfg.num_classes = 4;
  cfg.input_dim = 2;
  cfg.class_prevalence = {0.3, 0.3, 0.3, 0.3};
  cfg.label_correlation = Matrix::Identity(4, 4);
  cfg.seed = 5;

  const DatasetManifest m = generate_synthetic(cfg);
  std::vector<std::vector<int>> eye_labels;
  std::set<std::string> seen;
  for (const auto& rec : m.records) {
    if (seen.insert(rec.eye_id).second) eye_labels.push_back(rec.labels);
  }
  REQUIRE(eye_labels.size() == 2000);

  for (int a = 0; a < 4; ++a) {
    double mean_a = 0.0;
    for (const auto& l : eye_labels) mean_a += l[static_cast<std::size_t>(a)];
    mean_a /= static_cast<double>(eye_labels.size());
    // empirical prevalence tracks the requested 0.3
    CHECK(std::abs(mean_a - 0.3) < 0.03);

    for (int b = a + 1; b < 4; ++b) {
      double mean_b = 0.0, cov = 0.0, var_a = 0.0, var_b = 0.0;
      for (const auto& l : eye_labels) {
        mean_b += l[static_cast<std::size_t>(b)];
      }
      mean_b /= static_cast<double>(eye_labels.size());
      for (const auto& l : eye_labels) {
        const double da = l[static_cast<std::size_t>(a)] - mean_a;
        const double db = l[static_cast<std::size_t>(b)] - mean_b;
        cov += da * db;
        var_a += da * da;
        var_b += db * db;
      }
      const double corr = cov / std::sqrt(var_a * var_b);
      CHECK(std::abs(corr) < 0.1);
    }
  }
}

TEST_CASE("generate_synthetic: positive copula correlation raises co-occurrence") {
  GeneratorConfig cfg = tiny_config();
  cfg.num_patients = 1000;
  cfg.images_per_eye_per_modality = 1;
  cfg.num_classes = 2;
  cfg.class_prevalence = {0.3, 0.3};
  cfg.label_correlation = Matrix::Identity(2, 2);
  cfg.label_correlation(0, 1) = cfg.label_correlation(1, 0) = 0.7;
  cfg.seed = 7;

  const DatasetManifest m = generate_synthetic(cfg);
  int both = 0, first = 0, eyes = 0;
  std::set<std::string> seen;
  for (const auto& rec : m.records) {
    if (!seen.insert(rec.eye_id).second) continue;
    ++eyes;
    first += rec.labels[0];
    both += rec.labels[0] * rec.labels[1];
  }
  // P(both) should clearly exceed the independent 0.09
  CHECK(static_cast<double>(both) / eyes > 0.13);
}

TEST_CASE("generate_synthetic is deterministic in the seed") {
  const GeneratorConfig cfg = tiny_config();
  const DatasetManifest a = generate_synthetic(cfg);
  const DatasetManifest b = generate_synthetic(cfg);
  REQUIRE(a.records.size() == b.records.size());
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    CHECK(a.records[i].record_id == b.records[i].record_id);
    CHECK(a.records[i].features == b.records[i].features);
    CHECK(a.records[i].labels == b.records[i].labels);
  }

  GeneratorConfig other = cfg;
  other.seed = 12;
  const DatasetManifest c = generate_synthetic(other);
  bool any_diff = false;
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    if (a.records[i].features != c.records[i].features) any_diff = true;
  }
  CHECK(any_diff);
}

TEST_CASE("generate_synthetic: records of one eye share labels") {
  const DatasetManifest m = generate_synthetic(tiny_config());
  std::map<std::string, std::vector<int>> eye_labels;
  for (const auto& rec : m.records) {
    const auto [it, inserted] = eye_labels.emplace(rec.eye_id, rec.labels);
    if (!inserted) CHECK(it->second == rec.labels);
  }
  CHECK(eye_labels.size() == 10);
  CHECK(m.records.size() == 5 * 2 * 2 * 2);
}

TEST_CASE("generate_synthetic rejects a non-PSD correlation") {
  GeneratorConfig cfg = tiny_config();
  cfg.num_classes = 2;
  cfg.class_prevalence = {0.3, 0.3};
  cfg.label_correlation = Matrix(2, 2);
  cfg.label_correlation << 1.0, 2.0, 2.0, 1.0;
  CHECK_THROWS_WITH_AS(generate_synthetic(cfg),
                       doctest::Contains("label_correlation"), ParamError);
}

TEST_CASE("dataset save/load round trip is bit exact") {
  const DatasetManifest m = generate_synthetic(tiny_config());
  const std::string path = test::temp_path("roundtrip.ndjson");
  save_dataset(m, path);
  const DatasetManifest loaded = load_dataset(path);
  std::remove(path.c_str());

  CHECK(loaded.num_classes == m.num_classes);
  CHECK(loaded.class_names == m.class_names);
  REQUIRE(loaded.records.size() == m.records.size());
  for (std::size_t i = 0; i < m.records.size(); ++i) {
    CHECK(loaded.records[i].record_id == m.records[i].record_id);
    CHECK(loaded.records[i].eye_id == m.records[i].eye_id);
    CHECK(loaded.records[i].patient_id == m.records[i].patient_id);
    CHECK(loaded.records[i].modality == m.records[i].modality);
    CHECK(loaded.records[i].labels == m.records[i].labels);
    CHECK(loaded.records[i].features == m.records[i].features);
  }
}

TEST_CASE("load_dataset reports schema problems with line numbers") {
  const std::string path = test::temp_path("badschema.ndjson");
  {
    std::ofstream out(path);
    out << R"({"num_classes":2,"class_names":["a","b"]})" << "\n";
    out << R"({"record_id":"r1","eye_id":"e1","patient_id":"p1","modality":"oct","labels":[1,0],"features":[0.5]})"
        << "\n";
    out << R"({"record_id":"r2","eye_id":"e1","patient_id":"p1","modality":"oct","labels":[1],"features":[0.5]})"
        << "\n";
  }
  CHECK_THROWS_WITH_AS(load_dataset(path), doctest::Contains(":3"),
                       SchemaError);
  std::remove(path.c_str());
}

TEST_CASE("load_dataset reports malformed JSON with line numbers") {
  const std::string path = test::temp_path("badjson.ndjson");
  {
    std::ofstream out(path);
    out << R"({"num_classes":2,"class_names":["a","b"]})" << "\n";
    out << "this is not json\n";
  }
  CHECK_THROWS_WITH_AS(load_dataset(path), doctest::Contains(":2"),
                       ParseError);
  std::remove(path.c_str());
}

TEST_CASE("load_dataset flags duplicate ids and inconsistent eye labels") {
  const std::string path = test::temp_path("badeye.ndjson");
  {
    std::ofstream out(path);
    out << R"({"num_classes":2,"class_names":["a","b"]})" << "\n";
    out << R"({"record_id":"r1","eye_id":"e1","patient_id":"p1","modality":"oct","labels":[1,0],"features":[0.5]})"
        << "\n";
    out << R"({"record_id":"r2","eye_id":"e1","patient_id":"p1","modality":"oct","labels":[0,1],"features":[0.5]})"
        << "\n";
  }
  CHECK_THROWS_WITH_AS(load_dataset(path),
                       doctest::Contains("inconsistent labels"), SchemaError);
  std::remove(path.c_str());
}

TEST_CASE("load_dataset rejects an empty file") {
  const std::string path = test::temp_path("empty.ndjson");
  { std::ofstream out(path); }
  CHECK_THROWS_AS(load_dataset(path), DataError);
  std::remove(path.c_str());
}

TEST_CASE("split_by_patient: 10 equal patients at 0.2 gives 2 test patients") {
  GeneratorConfig cfg = tiny_config();
  cfg.num_patients = 10;
  const DatasetManifest m = generate_synthetic(cfg);
  const SplitResult split = split_by_patient(m, 0.2, 9);

  std::set<std::string> train_patients, test_patients;
  for (const auto& r : split.train.records) train_patients.insert(r.patient_id);
  for (const auto& r : split.test.records) test_patients.insert(r.patient_id);
  CHECK(test_patients.size() == 2);
  CHECK(train_patients.size() == 8);
}

TEST_CASE("split_by_patient is patient-disjoint and loss-free") {
  Rng rng(99);
  for (int trial = 0; trial < 100; ++trial) {
    GeneratorConfig cfg = tiny_config();
    cfg.num_patients = 2 + static_cast<int>(rng.bounded(11));
    cfg.eyes_per_patient = 1 + static_cast<int>(rng.bounded(3));
    cfg.images_per_eye_per_modality = 1;
    cfg.seed = 1000 + static_cast<std::uint64_t>(trial);
    const DatasetManifest m = generate_synthetic(cfg);
    const double fraction = rng.uniform(0.15, 0.6);
    SplitResult split;
    try {
      split = split_by_patient(m, fraction, trial);
    } catch (const DataError&) {
      continue;  // degenerate draw (all patients landed in test)
    }

    std::set<std::string> train_patients, test_patients;
    for (const auto& r : split.train.records) {
      train_patients.insert(r.patient_id);
    }
    for (const auto& r : split.test.records) test_patients.insert(r.patient_id);
    for (const auto& p : test_patients) CHECK(train_patients.count(p) == 0);
    CHECK(split.train.records.size() + split.test.records.size() ==
          m.records.size());
    CHECK_FALSE(test_patients.empty());
    CHECK_FALSE(train_patients.empty());
  }
}

TEST_CASE("split_by_patient is deterministic in the seed") {
  const DatasetManifest m = generate_synthetic(tiny_config());
  const SplitResult a = split_by_patient(m, 0.3, 42);
  const SplitResult b = split_by_patient(m, 0.3, 42);
  REQUIRE(a.test.records.size() == b.test.records.size());
  for (std::size_t i = 0; i < a.test.records.size(); ++i) {
    CHECK(a.test.records[i].record_id == b.test.records[i].record_id);
  }
}

TEST_CASE("split_by_patient rejects degenerate input") {
  GeneratorConfig cfg = tiny_config();
  cfg.num_patients = 1;
  const DatasetManifest m = generate_synthetic(cfg);
  CHECK_THROWS_AS(split_by_patient(m, 0.2, 1), DataError);

  const DatasetManifest m2 = generate_synthetic(tiny_config());
  CHECK_THROWS_AS(split_by_patient(m2, 0.0, 1), ParamError);
  CHECK_THROWS_AS(split_by_patient(m2, 1.0, 1), ParamError);
}

TEST_CASE("batch_stream: epochs are disjoint full batches") {
  GeneratorConfig cfg = tiny_config();
  cfg.num_patients = 8;
  cfg.eyes_per_patient = 1;
  cfg.images_per_eye_per_modality = 2;  // 16 OCT records
  const DatasetManifest m = generate_synthetic(cfg);

  BatchStream stream(m, Modality::kOct, 8, 5);
  CHECK(stream.batches_per_epoch() == 2);

  const Batch b1 = stream.next();
  const Batch b2 = stream.next();
  std::set<std::size_t> seen(b1.record_indices.begin(),
                             b1.record_indices.end());
  for (const std::size_t idx : b2.record_indices) {
    CHECK(seen.insert(idx).second);  // no repeats within the epoch
  }
  CHECK(seen.size() == 16);
  for (const std::size_t idx : seen) {
    CHECK(m.records[idx].modality == Modality::kOct);
  }

  // labels/features rows match the records they claim to be
  for (int i = 0; i < 8; ++i) {
    const ImageRecord& rec = m.records[b1.record_indices[static_cast<std::size_t>(i)]];
    CHECK(b1.features.row(i).transpose() == rec.features);
    for (int c = 0; c < m.num_classes; ++c) {
      CHECK(b1.labels(i, c) == rec.labels[static_cast<std::size_t>(c)]);
    }
  }
}

TEST_CASE("batch_stream: partial final batches are dropped") {
  GeneratorConfig cfg = tiny_config();
  cfg.num_patients = 19;
  cfg.eyes_per_patient = 1;
  cfg.images_per_eye_per_modality = 1;  // 19 OCT records
  const DatasetManifest m = generate_synthetic(cfg);
  BatchStream stream(m, Modality::kOct, 8, 5);
  CHECK(stream.batches_per_epoch() == 2);
  std::set<std::size_t> epoch;
  for (int b = 0; b < 2; ++b) {
    for (const std::size_t idx : stream.next().record_indices) {
      CHECK(epoch.insert(idx).second);
    }
  }
  CHECK(epoch.size() == 16);
}

TEST_CASE("batch_stream is deterministic in the seed") {
  const DatasetManifest m = generate_synthetic(tiny_config());
  BatchStream a(m, Modality::kFundus, 4, 77);
  BatchStream b(m, Modality::kFundus, 4, 77);
  for (int i = 0; i < 10; ++i) {
    CHECK(a.next().record_indices == b.next().record_indices);
  }
}

TEST_CASE("batch_stream rejects an undersized modality subset") {
  const DatasetManifest m = generate_synthetic(tiny_config());  // 20 per modality
  CHECK_THROWS_AS(BatchStream(m, Modality::kOct, 21, 1), DataError);

  DatasetManifest fundus_only = m;
  fundus_only.records.clear();
  for (const auto& rec : m.records) {
    if (rec.modality == Modality::kFundus) fundus_only.records.push_back(rec);
  }
  CHECK_THROWS_AS(BatchStream(fundus_only, Modality::kOct, 1, 1), DataError);
}

TEST_CASE("group_by_eye collects a modality's records per eye") {
  const DatasetManifest m = generate_synthetic(tiny_config());
  const auto groups = group_by_eye(m, Modality::kOct);
  CHECK(groups.size() == 10);
  for (const auto& g : groups) {
    CHECK(g.record_indices.size() == 2);
    for (const std::size_t idx : g.record_indices) {
      CHECK(m.records[idx].eye_id == g.eye_id);
      CHECK(m.records[idx].modality == Modality::kOct);
      CHECK(m.records[idx].labels == g.labels);
    }
  }
}
