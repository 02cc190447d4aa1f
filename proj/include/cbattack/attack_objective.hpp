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

#include "cbattack/optimizer.hpp"
#include "cbattack/transforms.hpp"

#include <span>
#include <vector>

namespace cbattack {

/// What the attacker holds: the stolen template and the parameters that
/// produced it.
class AttackTarget {
public:
    /// Throws DimensionError when the hash does not fit the parameters.
    /// \p margin is the BioHash sign margin (ignored for IoM).
    AttackTarget(SchemeParams params, HashVector compromised_hash, double margin = 1e-6);

    Scheme scheme() const noexcept { return scheme_of(params_); }
    const SchemeParams& params() const noexcept { return params_; }
    const HashVector& compromised_hash() const noexcept { return hash_; }
    double margin() const noexcept { return margin_; }
    Eigen::Index dimension() const noexcept { return input_dimension(params_); }
    Eigen::Index constraint_count() const noexcept;

private:
    SchemeParams params_;
    HashVector hash_;
    double margin_;
};

/// Feasible iff every value is <= 0.
struct ConstraintVector {
    std::vector<double> values;

    bool feasible() const noexcept;
};

/// Normalized Hamming distance between the stolen hash and the transform of
/// \p x_hat under the stolen parameters.
double loss(const AttackTarget& target, const FeatureVector& x_hat);

/// Entry l*K + k is z_k - z_{h_l} with z = R_l x_hat (h_l 0-based here).
ConstraintVector iom_constraints(const AttackTarget& target, const FeatureVector& x_hat);

/// Entry l is (1 - 2 h_l)(x_hat . b_l - tau) + margin.
ConstraintVector biohash_constraints(const AttackTarget& target, const FeatureVector& x_hat);

/// Dispatches on the target's scheme.
ConstraintVector constraints(const AttackTarget& target, const FeatureVector& x_hat);

/// Largest entry. Throws DimensionError on an empty vector.
double violation(std::span<const double> c);
inline double violation(const ConstraintVector& c) { return violation(c.values); }

/// Batched loss + constraints of one target, for the optimizers. With
/// \p unit_sphere set, candidates are projected onto the unit sphere:
/// enrolled features are unit-norm, and the IoM loss and constraint signs do
/// not depend on the preimage's scale.
class TargetProblem final : public opt::Problem {
public:
    explicit TargetProblem(const AttackTarget& target, bool unit_sphere = true);

    Eigen::Index dimension() const override { return target_.dimension(); }
    Eigen::Index constraint_count() const override { return target_.constraint_count(); }
    void evaluate(const Eigen::MatrixXd& points, Eigen::VectorXd& loss, Eigen::MatrixXd& constraints) const override;
    void repair(Eigen::MatrixXd& points) const override;

private:
    const AttackTarget& target_;
    bool unit_sphere_;
};

} // namespace cbattack
