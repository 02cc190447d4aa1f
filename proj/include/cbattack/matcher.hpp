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

#include "cbattack/dataset.hpp"
#include "cbattack/transforms.hpp"

#include <filesystem>
#include <span>
#include <vector>

namespace cbattack {

/// Decision rule: accept iff distance <= theta.
struct ThresholdCalibration {
    double theta = 0.0;
    double theta_squared = 0.0;
    double eer = 0.0;
    double fmr_at_theta = 0.0;
    double fnmr_at_theta = 0.0;
};

struct ScoreLists {
    std::vector<double> genuine;
    std::vector<double> impostor;
};

/// Fraction of differing positions. Throws DimensionError on length or
/// alphabet mismatch.
double hamming_distance(const HashVector& a, const HashVector& b);

/// Hashes every enrol/verify sample under \p params and scores
/// enrol_i vs verify_i (genuine) and enrol_i vs verify_j, i != j (impostor).
ScoreLists score_population(const ProtocolSplit& split, const SchemeParams& params);

/// Same scoring on already computed templates.
ScoreLists score_templates(std::span<const HashVector> enroll, std::span<const std::vector<HashVector>> verify);

/// Fraction of impostor scores accepted at \p theta.
double false_match_rate(std::span<const double> impostor, double theta);
/// Fraction of genuine scores rejected at \p theta.
double false_non_match_rate(std::span<const double> genuine, double theta);

/// Equal-error-rate operating point. Candidate thresholds are the midpoints
/// between consecutive distinct scores of the pooled lists plus the largest
/// score (accept everything); the candidate minimizing |FNMR - FMR| wins and
/// ties go to the smallest threshold.
ThresholdCalibration calibrate_threshold(std::span<const double> genuine, std::span<const double> impostor);

/// Writes "label,score" rows (label genuine|impostor).
void write_scores_csv(const ScoreLists& scores, const std::filesystem::path& path);

} // namespace cbattack
