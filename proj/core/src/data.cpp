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

#include "fddm/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

#include <boost/math/distributions/normal.hpp>
#include <Eigen/Cholesky>

#include "json_util.hpp"

namespace fddm {

std::string modality_name(Modality m) {
  return m == Modality::kFundus ? "fundus" : "oct";
}

Modality modality_from_name(const std::string& name) {
  if (name == "fundus") return Modality::kFundus;
  if (name == "oct") return Modality::kOct;
  throw SchemaError("unknown modality: " + name);
}

void GeneratorConfig::validate() const {
  if (num_patients < 1) throw ParamError("generator: num_patients must be >= 1");
  if (eyes_per_patient < 1) {
    throw ParamError("generator: eyes_per_patient must be >= 1");
  }
  if (images_per_eye_per_modality < 1) {
    throw ParamError("generator: images_per_eye_per_modality must be >= 1");
  }
  if (num_classes < 1) throw ParamError("generator: num_classes must be >= 1");
  if (input_dim < 1) throw ParamError("generator: input_dim must be >= 1");
  if (static_cast<int>(class_prevalence.size()) != num_classes) {
    throw ParamError("generator: class_prevalence must have num_classes entries");
  }
  for (const double p : class_prevalence) {
    if (!(p > 0.0 && p < 1.0)) {
      throw ParamError("generator: class_prevalence entries must lie in (0,1)");
    }
  }
  if (label_correlation.rows() != num_classes ||
      label_correlation.cols() != num_classes) {
    throw ParamError("generator: label_correlation must be num_classes square");
  }
  for (Eigen::Index i = 0; i < label_correlation.rows(); ++i) {
    if (std::abs(label_correlation(i, i) - 1.0) > 1e-9) {
      throw ParamError("generator: label_correlation diagonal must be 1");
    }
    for (Eigen::Index j = 0; j < i; ++j) {
      if (std::abs(label_correlation(i, j) - label_correlation(j, i)) > 1e-9) {
        throw ParamError("generator: label_correlation must be symmetric");
      }
    }
  }
  if (signal_strength_fundus < 0.0 || signal_strength_oct < 0.0) {
    throw ParamError("generator: signal strengths must be >= 0");
  }
  if (noise_std < 0.0) throw ParamError("generator: noise_std must be >= 0");
  if (!class_names.empty() &&
      static_cast<int>(class_names.size()) != num_classes) {
    throw ParamError("generator: class_names must have num_classes entries");
  }
}

GeneratorConfig default_generator_config() {
  GeneratorConfig cfg;
  cfg.num_patients = 200;
  cfg.eyes_per_patient = 2;
  cfg.images_per_eye_per_modality = 3;
  cfg.num_classes = 6;
  cfg.input_dim = 32;
  cfg.class_prevalence = {0.45, 0.30, 0.25, 0.15, 0.08, 0.05};
  // Two correlated disease blocks with weak cross-block coupling.
  cfg.label_correlation = Matrix::Identity(6, 6);
  const auto set_pair = [&cfg](int i, int j, double rho) {
    cfg.label_correlation(i, j) = rho;
    cfg.label_correlation(j, i) = rho;
  };
  set_pair(0, 1, 0.5);
  set_pair(0, 2, 0.5);
  set_pair(1, 2, 0.5);
  set_pair(3, 4, 0.5);
  set_pair(3, 5, 0.5);
  set_pair(4, 5, 0.5);
  for (int i = 0; i < 3; ++i) {
    for (int j = 3; j < 6; ++j) set_pair(i, j, 0.1);
  }
  cfg.signal_strength_fundus = 1.0;
  cfg.signal_strength_oct = 1.0;
  cfg.noise_std = 0.5;
  cfg.seed = 1;
  return cfg;
}

std::vector<std::size_t> DatasetManifest::indices_of(Modality m) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (records[i].modality == m) out.push_back(i);
  }
  return out;
}

namespace {

std::string default_class_name(int c) {
  std::ostringstream os;
  os << "c" << (c < 10 ? "0" : "") << c;
  return os.str();
}

std::string config_fingerprint(const GeneratorConfig& cfg) {
  std::ostringstream os;
  os.precision(17);
  os << cfg.num_patients << '|' << cfg.eyes_per_patient << '|'
     << cfg.images_per_eye_per_modality << '|' << cfg.num_classes << '|'
     << cfg.input_dim << '|' << cfg.signal_strength_fundus << '|'
     << cfg.signal_strength_oct << '|' << cfg.noise_std << '|' << cfg.seed;
  for (const double p : cfg.class_prevalence) os << ',' << p;
  for (Eigen::Index i = 0; i < cfg.label_correlation.size(); ++i) {
    os << ',' << cfg.label_correlation.data()[i];
  }
  for (const auto& n : cfg.class_names) os << ',' << n;
  std::ostringstream hex;
  hex << std::hex << fnv1a(os.str());
  return hex.str();
}

}  // namespace

DatasetManifest generate_synthetic(const GeneratorConfig& config) {
  config.validate();

  Eigen::LLT<Matrix> llt(config.label_correlation);
  if (llt.info() != Eigen::Success) {
    throw ParamError(
        "generator: label_correlation is not positive definite "
        "(Cholesky factorization failed)");
  }
  const Matrix chol = llt.matrixL();

  const boost::math::normal_distribution<double> norm01;
  Vector thresholds(config.num_classes);
  for (int c = 0; c < config.num_classes; ++c) {
    thresholds[c] = boost::math::quantile(
        norm01, config.class_prevalence[static_cast<std::size_t>(c)]);
  }

  Rng rng(config.seed);

  // Per-class signature directions. Each modality's signature mixes a
  // shared latent direction (80% of the variance) with a modality-specific
  // one, so the two modalities carry overlapping, complementary signal.
  std::vector<Vector> sig_fundus, sig_oct;
  const double shared_scale = std::sqrt(0.8);
  const double own_scale = std::sqrt(0.2);
  for (int c = 0; c < config.num_classes; ++c) {
    const Vector shared = rng.normal_vector(config.input_dim);
    const Vector own_f = rng.normal_vector(config.input_dim);
    const Vector own_o = rng.normal_vector(config.input_dim);
    Vector f = shared_scale * shared + own_scale * own_f;
    Vector o = shared_scale * shared + own_scale * own_o;
    sig_fundus.push_back(f / f.norm());
    sig_oct.push_back(o / o.norm());
  }

  DatasetManifest manifest;
  manifest.num_classes = config.num_classes;
  if (config.class_names.empty()) {
    for (int c = 0; c < config.num_classes; ++c) {
      manifest.class_names.push_back(default_class_name(c));
    }
  } else {
    manifest.class_names = config.class_names;
  }
  manifest.provenance = "generator:" + config_fingerprint(config);

  const auto make_image = [&](const std::vector<int>& labels, Modality m) {
    const double strength = m == Modality::kFundus
                                ? config.signal_strength_fundus
                                : config.signal_strength_oct;
    const auto& sigs = m == Modality::kFundus ? sig_fundus : sig_oct;
    Vector x = Vector::Zero(config.input_dim);
    for (int c = 0; c < config.num_classes; ++c) {
      if (labels[static_cast<std::size_t>(c)] == 1) {
        x += strength * sigs[static_cast<std::size_t>(c)];
      }
    }
    x += config.noise_std * rng.normal_vector(config.input_dim);
    return x;
  };

  for (int p = 0; p < config.num_patients; ++p) {
    std::ostringstream pid;
    pid << "p" << std::setw(4) << std::setfill('0') << p;
    for (int e = 0; e < config.eyes_per_patient; ++e) {
      const std::string eye_id = pid.str() + "_e" + std::to_string(e);

      const Vector z = chol * rng.normal_vector(config.num_classes);
      std::vector<int> labels(static_cast<std::size_t>(config.num_classes));
      for (int c = 0; c < config.num_classes; ++c) {
        labels[static_cast<std::size_t>(c)] = z[c] <= thresholds[c] ? 1 : 0;
      }

      for (const Modality m : {Modality::kFundus, Modality::kOct}) {
        for (int k = 0; k < config.images_per_eye_per_modality; ++k) {
          ImageRecord rec;
          rec.record_id =
              eye_id + "_" + modality_name(m) + "_" + std::to_string(k);
          rec.eye_id = eye_id;
          rec.patient_id = pid.str();
          rec.modality = m;
          rec.labels = labels;
          rec.features = make_image(labels, m);
          manifest.records.push_back(std::move(rec));
        }
      }
    }
  }
  return manifest;
}

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

void save_dataset(const DatasetManifest& manifest, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);

  Json header;
  header["num_classes"] = manifest.num_classes;
  header["class_names"] = manifest.class_names;
  out << header.dump() << '\n';

  for (const auto& rec : manifest.records) {
    Json j;
    j["record_id"] = rec.record_id;
    j["eye_id"] = rec.eye_id;
    j["patient_id"] = rec.patient_id;
    j["modality"] = modality_name(rec.modality);
    j["labels"] = rec.labels;
    j["features"] = vector_to_json(rec.features);
    out << j.dump() << '\n';
  }
  if (!out) throw IoError("failed while writing: " + path);
}

DatasetManifest load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path);

  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line) || line.empty()) {
    throw DataError("empty dataset file: " + path);
  }
  ++line_no;

  DatasetManifest manifest;
  try {
    const Json header = Json::parse(line);
    manifest.num_classes = header.at("num_classes").get<int>();
    manifest.class_names =
        header.at("class_names").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path + ":1: bad header: " + e.what());
  }
  if (manifest.num_classes < 1 ||
      static_cast<int>(manifest.class_names.size()) != manifest.num_classes) {
    throw SchemaError(path + ":1: class_names/num_classes mismatch");
  }
  manifest.provenance = "file:" + path;

  std::set<std::string> seen_ids;
  std::map<std::string, std::vector<int>> eye_labels;
  std::map<std::string, std::string> eye_patient;
  Eigen::Index feature_dim = -1;

  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::string where = path + ":" + std::to_string(line_no);

    Json j;
    try {
      j = Json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(where + ": " + e.what());
    }

    ImageRecord rec;
    try {
      rec.record_id = j.at("record_id").get<std::string>();
      rec.eye_id = j.at("eye_id").get<std::string>();
      rec.patient_id = j.at("patient_id").get<std::string>();
      rec.modality = modality_from_name(j.at("modality").get<std::string>());
      rec.labels = j.at("labels").get<std::vector<int>>();
      rec.features = vector_from_json(j.at("features"));
    } catch (const nlohmann::json::exception& e) {
      throw SchemaError(where + ": " + e.what());
    }

    if (static_cast<int>(rec.labels.size()) != manifest.num_classes) {
      throw SchemaError(where + ": labels length " +
                        std::to_string(rec.labels.size()) +
                        " does not match num_classes " +
                        std::to_string(manifest.num_classes));
    }
    for (const int v : rec.labels) {
      if (v != 0 && v != 1) {
        throw SchemaError(where + ": labels must be 0 or 1");
      }
    }
    if (!all_finite(rec.features)) {
      throw SchemaError(where + ": non-finite feature value");
    }
    if (feature_dim < 0) {
      feature_dim = rec.features.size();
    } else if (rec.features.size() != feature_dim) {
      throw SchemaError(where + ": inconsistent feature dimension");
    }
    if (!seen_ids.insert(rec.record_id).second) {
      throw SchemaError(where + ": duplicate record_id " + rec.record_id);
    }
    const auto [it, inserted] = eye_labels.emplace(rec.eye_id, rec.labels);
    if (!inserted && it->second != rec.labels) {
      throw SchemaError(where + ": eye " + rec.eye_id +
                        " has inconsistent labels across records");
    }
    const auto [pit, pinserted] =
        eye_patient.emplace(rec.eye_id, rec.patient_id);
    if (!pinserted && pit->second != rec.patient_id) {
      throw SchemaError(where + ": eye " + rec.eye_id +
                        " appears under two patients");
    }
    manifest.records.push_back(std::move(rec));
  }
  if (manifest.records.empty()) {
    throw DataError("dataset has a header but no records: " + path);
  }
  return manifest;
}

// ---------------------------------------------------------------------------
// Splitting and batching
// ---------------------------------------------------------------------------

SplitResult split_by_patient(const DatasetManifest& manifest,
                             double test_fraction, std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw ParamError("split: test_fraction must lie in (0,1)");
  }

  std::vector<std::string> patients;  // first-appearance order
  std::map<std::string, std::set<std::string>> patient_eyes;
  for (const auto& rec : manifest.records) {
    if (patient_eyes.find(rec.patient_id) == patient_eyes.end()) {
      patients.push_back(rec.patient_id);
    }
    patient_eyes[rec.patient_id].insert(rec.eye_id);
  }
  if (patients.size() < 2) {
    throw DataError("split: need at least two patients, got " +
                    std::to_string(patients.size()));
  }
  std::size_t total_eyes = 0;
  for (const auto& [_, eyes] : patient_eyes) total_eyes += eyes.size();

  Rng rng(seed);
  rng.shuffle(patients);

  std::set<std::string> test_patients;
  std::size_t test_eyes = 0;
  for (const auto& p : patients) {
    if (static_cast<double>(test_eyes) / static_cast<double>(total_eyes) >=
        test_fraction) {
      break;
    }
    test_patients.insert(p);
    test_eyes += patient_eyes[p].size();
  }
  if (test_patients.size() == patients.size()) {
    throw DataError("split: test fraction leaves no training patients");
  }

  SplitResult result;
  for (DatasetManifest* part : {&result.train, &result.test}) {
    part->num_classes = manifest.num_classes;
    part->class_names = manifest.class_names;
  }
  result.train.provenance = manifest.provenance + "|split:train";
  result.test.provenance = manifest.provenance + "|split:test";
  for (const auto& rec : manifest.records) {
    if (test_patients.count(rec.patient_id) > 0) {
      result.test.records.push_back(rec);
    } else {
      result.train.records.push_back(rec);
    }
  }
  return result;
}

BatchStream::BatchStream(const DatasetManifest& manifest, Modality modality,
                         int batch_size, std::uint64_t seed)
    : manifest_(&manifest),
      indices_(manifest.indices_of(modality)),
      batch_size_(batch_size),
      rng_(seed) {
  if (batch_size < 1) throw ParamError("batch_size must be >= 1");
  if (indices_.size() < static_cast<std::size_t>(batch_size)) {
    throw DataError("batch stream: only " + std::to_string(indices_.size()) +
                    " " + modality_name(modality) +
                    " records, need at least " + std::to_string(batch_size));
  }
  order_ = indices_;
  reshuffle();
}

void BatchStream::reshuffle() {
  rng_.shuffle(order_);
  cursor_ = 0;
}

Batch BatchStream::next() {
  const std::size_t batch = static_cast<std::size_t>(batch_size_);
  if (cursor_ + batch > order_.size()) reshuffle();

  const auto& records = manifest_->records;
  const Eigen::Index dim = records[order_[cursor_]].features.size();
  Batch out;
  out.features.resize(batch_size_, dim);
  out.labels.resize(batch_size_, manifest_->num_classes);
  for (int i = 0; i < batch_size_; ++i) {
    const std::size_t idx = order_[cursor_ + static_cast<std::size_t>(i)];
    const ImageRecord& rec = records[idx];
    out.features.row(i) = rec.features.transpose();
    for (int c = 0; c < manifest_->num_classes; ++c) {
      out.labels(i, c) = rec.labels[static_cast<std::size_t>(c)];
    }
    out.record_indices.push_back(idx);
  }
  cursor_ += batch;
  return out;
}

std::vector<EyeGroup> group_by_eye(const DatasetManifest& manifest,
                                   Modality modality) {
  std::vector<EyeGroup> groups;
  std::map<std::string, std::size_t> position;
  for (std::size_t i = 0; i < manifest.records.size(); ++i) {
    const ImageRecord& rec = manifest.records[i];
    if (rec.modality != modality) continue;
    auto it = position.find(rec.eye_id);
    if (it == position.end()) {
      position.emplace(rec.eye_id, groups.size());
      groups.push_back(
          EyeGroup{rec.eye_id, rec.patient_id, rec.labels, {i}});
    } else {
      groups[it->second].record_indices.push_back(i);
    }
  }
  return groups;
}

}  // namespace fddm
