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

#include "cbattack/attacks.hpp"
#include "cbattack/dataset.hpp"
#include "cbattack/matcher.hpp"
#include "cbattack/optimizer.hpp"
#include "cbattack/transforms.hpp"

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace cbattack {

/// Squared normalized Hamming distance between the stolen template and the
/// preimage's template under the stolen token.
double compute_tre(const HashVector& h, const HashVector& h_hat);

/// Mean of squared distances. Throws on an empty list.
double compute_tee(std::span<const double> test_distances);

/// Mean squared deviation of the test distances from the training distance.
double compute_var(std::span<const double> test_distances, double train_distance);

// Seed roles (see rng.hpp for the derivation function).
std::uint64_t attack_token_seed(std::uint64_t master_seed, Eigen::Index l);
std::uint64_t verify_token_seed(std::uint64_t master_seed, Eigen::Index l, std::size_t repetition);
std::uint64_t optimizer_seed(std::uint64_t master_seed, AttackKind attack, Eigen::Index l, const std::string& subject_id);

/// One re-issue of every template under a fresh token, with the decision
/// threshold calibrated on that token.
struct VerificationRound {
    std::uint64_t token_seed = 0;
    SchemeParams params;
    std::vector<HashVector> enroll;
    std::vector<std::vector<HashVector>> verify;
    ThresholdCalibration calibration;
};

VerificationRound make_verification_round(const ProtocolSplit& split, const SchemeConfig& scheme, std::uint64_t token_seed);

std::vector<VerificationRound> make_verification_rounds(const ProtocolSplit& split, const SchemeConfig& scheme,
                                                        std::uint64_t master_seed, std::size_t n_reps);

struct AttackMetrics {
    double sar = 0.0;
    double fai = 0.0;
    double tee = 0.0;
    double tre = 0.0;
    double var = 0.0;
    /// Mean over repetitions of the verification-side calibration.
    double fmr = 0.0;
    double eer = 0.0;
    double theta_squared = 0.0;
    std::size_t n_repetitions = 0;
    std::size_t comparisons = 0;
    std::size_t accepted = 0;
};

/// Per-subject error decomposition, the raw material of the error-trend plot.
struct SubjectErrors {
    std::string subject_id;
    double train_distance = 0.0;
    std::vector<double> test_distances;
};

/// Scores preimages against re-issued templates.
///
/// SAR counts every (preimage, verification sample) pair over all subjects and
/// repetitions; a pair is accepted when the preimage's template and the
/// sample's template under the repetition's token are within that
/// repetition's threshold. TEE/VAR use the enrolment sample re-hashed under
/// the fresh token. Throws ProtocolError naming any subject without a
/// preimage.
AttackMetrics evaluate_attack(const ProtocolSplit& split, const std::map<std::string, FeatureVector>& preimages,
                              const SchemeParams& attack_params, std::span<const VerificationRound> rounds,
                              std::vector<SubjectErrors>* errors = nullptr);

struct ExperimentConfig {
    /// Scheme settings; the code length is taken from l_values.
    SchemeConfig scheme;
    std::vector<Eigen::Index> l_values{8, 16, 32, 64, 128, 256, 512};
    std::vector<AttackKind> attacks{AttackKind::gasa, AttackKind::csa};
    opt::GaConfig ga;
    opt::AlgaConfig alga;
    std::size_t n_reps = 10;
    std::uint64_t master_seed = 0;
    double margin = 1e-6;
    std::size_t jobs = 1;
};

struct ReportRow {
    Scheme scheme = Scheme::iom;
    Eigen::Index k = 0;
    Eigen::Index l = 0;
    AttackKind attack = AttackKind::csa;
    AttackMetrics metrics;
    double mean_generations = 0.0;
    double mean_time_s = 0.0;
    double convergence_rate = 0.0;
    std::string error;
};

struct ExperimentReport {
    std::vector<ReportRow> rows;
    std::uint64_t master_seed = 0;
    std::uint64_t dataset_digest = 0;
};

/// Called once per finished attack with the target it was run on.
using OutcomeSink = std::function<void(Eigen::Index l, AttackKind attack, const std::string& subject_id,
                                       std::uint64_t seed, const AttackOutcome& outcome)>;

/// Attacks every enrolled template of \p split for one code length.
std::vector<AttackOutcome> attack_population(const ProtocolSplit& split, const ExperimentConfig& config, Eigen::Index l,
                                             AttackKind attack);

/// Full protocol: for each L, derive the attack-side token, hash the enrolment
/// samples, attack each one and evaluate under n_reps fresh tokens. A failing
/// configuration yields a row with \c error set instead of aborting the run.
ExperimentReport run_experiment(const FeatureSet& dataset, const ExperimentConfig& config,
                                const OutcomeSink& sink = {});

/// Fills theta/eer/fmr columns from the rounds and SAR/TEE/... from the
/// preimages; shared by run_experiment and the CLI's evaluate phase.
ReportRow make_report_row(const ProtocolSplit& split, const ExperimentConfig& config, Eigen::Index l,
                          AttackKind attack, const std::map<std::string, FeatureVector>& preimages,
                          std::span<const VerificationRound> rounds, std::vector<SubjectErrors>* errors = nullptr);

/// "scheme,K,L,theta_sq,eer,fmr,attack,sar,fai,tee,tre,var,generations,time_s".
/// time_s is left empty unless \p include_timing is set; wall-clock time
/// cannot be reproduced and would break byte-identical reruns.
std::string report_csv(const ExperimentReport& report, bool include_timing = false);

/// Spearman rank correlation (average ranks for ties).
double spearman(std::span<const double> a, std::span<const double> b);

} // namespace cbattack
