// Copyright 2026 The cbattack Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace cbattack {

/// Real-valued biometric embedding. Ingested and generated vectors carry unit
/// Euclidean norm.
using FeatureVector = Eigen::VectorXd;

struct Subject {
    std::string id;
    std::vector<FeatureVector> samples;
};

/// Immutable collection of subjects sharing one feature dimension.
class FeatureSet {
public:
    /// Throws DimensionError if any sample disagrees with \p dimension, and
    /// IngestionError on non-finite values or a subject without samples.
    FeatureSet(std::vector<Subject> subjects, Eigen::Index dimension);

    const std::vector<Subject>& subjects() const noexcept { return subjects_; }
    Eigen::Index dimension() const noexcept { return dimension_; }
    std::size_t total_samples() const noexcept;

    bool operator==(const FeatureSet& other) const;

private:
    std::vector<Subject> subjects_;
    Eigen::Index dimension_;
};

/// Enrolment uses sample 0 of each subject, verification the rest.
struct ProtocolSplit {
    std::vector<std::string> subject_ids;
    std::vector<FeatureVector> enroll;
    std::vector<std::vector<FeatureVector>> verify;
    Eigen::Index dimension = 0;

    std::size_t subject_count() const noexcept { return subject_ids.size(); }
    std::size_t verify_count() const noexcept;
};

struct SyntheticSpec {
    std::size_t n_subjects = 20;
    std::size_t samples_per_subject = 10;
    Eigen::Index dimension = 64;
    double within_class_noise = 0.1;
    std::uint64_t seed = 0;
};

enum class FeatureFormat { csv, binary };

/// Reads a feature file and L2-normalizes every vector. Samples of a subject
/// are ordered by sample_idx; subjects keep their first-appearance order.
FeatureSet load_features(const std::filesystem::path& path, FeatureFormat format);

/// Writes \p set verbatim. CSV uses shortest round-trip decimal formatting.
void save_features(const FeatureSet& set, const std::filesystem::path& path, FeatureFormat format);

/// Gaussian class means with Gaussian within-class noise, L2-normalized.
FeatureSet generate_synthetic(const SyntheticSpec& spec);

ProtocolSplit split_protocol(const FeatureSet& set);

/// Scales \p v to unit norm. Vectors already within 1e-12 of unit norm are
/// returned unchanged so that re-ingesting normalized data is bit-exact.
FeatureVector normalize(const FeatureVector& v);

/// 64-bit content digest of a feature set (FNV-1a over ids and raw values).
std::uint64_t digest(const FeatureSet& set);

} // namespace cbattack
