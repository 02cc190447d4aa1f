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

#include "cbattack/attack_objective.hpp"

#include "cbattack/errors.hpp"
#include "cbattack/matcher.hpp"

#include <algorithm>
#include <cmath>

namespace cbattack {

AttackTarget::AttackTarget(SchemeParams params, HashVector compromised_hash, double margin)
    : params_(std::move(params)), hash_(std::move(compromised_hash)), margin_(margin)
{
    if (static_cast<Eigen::Index>(hash_.size()) != code_length(params_)) {
        throw DimensionError("compromised hash has length " + std::to_string(hash_.size()) +
                             " but the parameters produce " + std::to_string(code_length(params_)) + " codes");
    }
    if (hash_.alphabet != alphabet_of(params_))
        throw DimensionError("compromised hash alphabet does not match the scheme");
    const int lo = scheme() == Scheme::iom ? 1 : 0;
    const int hi = scheme() == Scheme::iom ? hash_.alphabet : 1;
    for (int c : hash_.codes) {
        if (c < lo || c > hi)
            throw DimensionError("compromised hash code " + std::to_string(c) + " is outside the alphabet");
    }
    if (!(margin_ >= 0.0))
        throw ConfigError("constraint margin must be >= 0");
}

Eigen::Index AttackTarget::constraint_count() const noexcept
{
    if (const auto* iom = std::get_if<IoMParams>(&params_))
        return iom->l * iom->k;
    return std::get<BioHashParams>(params_).l;
}

bool ConstraintVector::feasible() const noexcept
{
    return std::all_of(values.begin(), values.end(), [](double v) { return v <= 0.0; });
}

double loss(const AttackTarget& target, const FeatureVector& x_hat)
{
    return hamming_distance(target.compromised_hash(), transform(target.params(), x_hat));
}

ConstraintVector iom_constraints(const AttackTarget& target, const FeatureVector& x_hat)
{
    const auto* params = std::get_if<IoMParams>(&target.params());
    if (!params)
        throw ConfigError("IoM constraints requested for a " + to_string(target.scheme()) + " target");
    if (x_hat.size() != params->n)
        throw DimensionError("preimage dimension does not match the target");
    const Eigen::VectorXd z = params->projections * x_hat;
    ConstraintVector c;
    c.values.resize(static_cast<std::size_t>(params->l * params->k));
    for (Eigen::Index l = 0; l < params->l; ++l) {
        const double top = z[l * params->k + target.compromised_hash().codes[static_cast<std::size_t>(l)] - 1];
        for (Eigen::Index k = 0; k < params->k; ++k)
            c.values[static_cast<std::size_t>(l * params->k + k)] = z[l * params->k + k] - top;
    }
    return c;
}

ConstraintVector biohash_constraints(const AttackTarget& target, const FeatureVector& x_hat)
{
    const auto* params = std::get_if<BioHashParams>(&target.params());
    if (!params)
        throw ConfigError("BioHash constraints requested for a " + to_string(target.scheme()) + " target");
    if (x_hat.size() != params->n)
        throw DimensionError("preimage dimension does not match the target");
    const Eigen::VectorXd p = params->basis * x_hat;
    ConstraintVector c;
    c.values.resize(static_cast<std::size_t>(params->l));
    for (Eigen::Index l = 0; l < params->l; ++l) {
        const double sign = 1.0 - 2.0 * target.compromised_hash().codes[static_cast<std::size_t>(l)];
        c.values[static_cast<std::size_t>(l)] = sign * (p[l] - params->tau) + target.margin();
    }
    return c;
}

ConstraintVector constraints(const AttackTarget& target, const FeatureVector& x_hat)
{
    return target.scheme() == Scheme::iom ? iom_constraints(target, x_hat) : biohash_constraints(target, x_hat);
}

double violation(std::span<const double> c)
{
    if (c.empty())
        throw DimensionError("violation of an empty constraint vector");
    return *std::max_element(c.begin(), c.end());
}

TargetProblem::TargetProblem(const AttackTarget& target, bool unit_sphere)
    : target_(target), unit_sphere_(unit_sphere)
{
}

void TargetProblem::repair(Eigen::MatrixXd& points) const
{
    if (!unit_sphere_)
        return;
    for (Eigen::Index j = 0; j < points.cols(); ++j) {
        const double norm = points.col(j).norm();
        if (norm > 0.0 && std::isfinite(norm))
            points.col(j) /= norm;
    }
}

void TargetProblem::evaluate(const Eigen::MatrixXd& points, Eigen::VectorXd& loss, Eigen::MatrixXd& constraints) const
{
    const auto& codes = target_.compromised_hash().codes;
    const auto n_points = points.cols();
    if (const auto* iom = std::get_if<IoMParams>(&target_.params())) {
        const auto k = iom->k;
        constraints.noalias() = iom->projections * points;
        for (Eigen::Index j = 0; j < n_points; ++j) {
            double* col = constraints.col(j).data();
            std::size_t mismatches = 0;
            for (Eigen::Index l = 0; l < iom->l; ++l) {
                double* z = col + l * k;
                const Eigen::Index target_index = codes[static_cast<std::size_t>(l)] - 1;
                Eigen::Index best = 0;
                for (Eigen::Index i = 1; i < k; ++i) {
                    if (z[i] > z[best])
                        best = i;
                }
                mismatches += best != target_index;
                const double top = z[target_index];
                for (Eigen::Index i = 0; i < k; ++i)
                    z[i] -= top;
            }
            loss[j] = static_cast<double>(mismatches) / static_cast<double>(iom->l);
        }
        return;
    }

    const auto& bio = std::get<BioHashParams>(target_.params());
    constraints.noalias() = bio.basis * points;
    for (Eigen::Index j = 0; j < n_points; ++j) {
        std::size_t mismatches = 0;
        for (Eigen::Index l = 0; l < bio.l; ++l) {
            const double centred = constraints(l, j) - bio.tau;
            const int bit = centred > 0.0 ? 1 : 0;
            const int want = codes[static_cast<std::size_t>(l)];
            mismatches += bit != want;
            constraints(l, j) = (1.0 - 2.0 * want) * centred + target_.margin();
        }
        loss[j] = static_cast<double>(mismatches) / static_cast<double>(bio.l);
    }
}

} // namespace cbattack
