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

// Synthetic two-modality multi-label data. Eye-level labels are drawn
// through a Gaussian copula (controllable co-occurrence), image features
// are sums of per-class signature directions plus noise, where the fundus
// and OCT signatures of a class share a common latent component. Everything
// is bit-deterministic in the seeds.

#ifndef FDDM_DATA_HPP_
#define FDDM_DATA_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "fddm/common.hpp"

namespace fddm {

enum class Modality { kFundus, kOct };

std::string modality_name(Modality m);
Modality modality_from_name(const std::string& name);

struct ImageRecord {
  std::string record_id;
  std::string eye_id;
  std::string patient_id;
  Modality modality = Modality::kFundus;
  std::vector<int> labels;  // length C, each 0 or 1
  Vector features;
};

struct GeneratorConfig {
  int num_patients = 200;
  int eyes_per_patient = 2;
  int images_per_eye_per_modality = 3;
  int num_classes = 6;
  int input_dim = 32;
  std::vector<double> class_prevalence;  // each in (0,1)
  Matrix label_correlation;              // C x C copula correlation
  double signal_strength_fundus = 1.0;
  double signal_strength_oct = 1.0;
  double noise_std = 1.0;
  std::uint64_t seed = 1;
  std::vector<std::string> class_names;  // optional, defaults to c00..

  void validate() const;
};

/// The default desk-scale config: 200 patients, 2 eyes each, 3 images per
/// eye and modality, 6 classes with mixed prevalences and block-correlated
/// labels.
GeneratorConfig default_generator_config();

struct DatasetManifest {
  std::vector<ImageRecord> records;
  int num_classes = 0;
  std::vector<std::string> class_names;
  std::string provenance;

  std::vector<std::size_t> indices_of(Modality m) const;
  std::size_t count_of(Modality m) const { return indices_of(m).size(); }
};

DatasetManifest generate_synthetic(const GeneratorConfig& config);

/// NDJSON: one header object, then one record object per line, LF endings.
/// Feature values survive a save/load round trip bit-for-bit.
void save_dataset(const DatasetManifest& manifest, const std::string& path);
DatasetManifest load_dataset(const std::string& path);

struct SplitResult {
  DatasetManifest train;
  DatasetManifest test;
};

/// Patient-disjoint split: patients are shuffled by seed and assigned to
/// the test side until its eye-count fraction reaches test_fraction.
SplitResult split_by_patient(const DatasetManifest& manifest,
                             double test_fraction, std::uint64_t seed);

struct Batch {
  Matrix features;                         // B x input_dim
  Matrix labels;                           // B x C, entries 0/1
  std::vector<std::size_t> record_indices; // into manifest.records
};

/// Epoch-shuffled full batches over one modality; the final partial batch
/// of an epoch is dropped. The manifest must outlive the stream.
class BatchStream {
 public:
  BatchStream(const DatasetManifest& manifest, Modality modality,
              int batch_size, std::uint64_t seed);

  Batch next();
  int batches_per_epoch() const {
    return static_cast<int>(indices_.size()) / batch_size_;
  }

 private:
  void reshuffle();

  const DatasetManifest* manifest_;
  std::vector<std::size_t> indices_;  // modality subset, manifest order
  std::vector<std::size_t> order_;    // shuffled view of indices_
  int batch_size_;
  std::size_t cursor_ = 0;
  Rng rng_;
};

struct EyeGroup {
  std::string eye_id;
  std::string patient_id;
  std::vector<int> labels;
  std::vector<std::size_t> record_indices;
};

/// Groups one modality's records by eye, in first-appearance order.
std::vector<EyeGroup> group_by_eye(const DatasetManifest& manifest,
                                   Modality modality);

}  // namespace fddm

#endif  // FDDM_DATA_HPP_
