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

#include "cbattack/attacks.hpp"

#include "cbattack/errors.hpp"

namespace cbattack {

namespace {

AttackOutcome finish(const AttackTarget& target, opt::OptResult result)
{
    AttackOutcome outcome;
    outcome.preimage = std::move(result.x);
    outcome.final_loss = loss(target, outcome.preimage);
    outcome.final_violation = violation(constraints(target, outcome.preimage));
    outcome.converged = result.converged;
    outcome.trace = std::move(result.trace);
    return outcome;
}

} // namespace

std::string to_string(AttackKind kind)
{
    return kind == AttackKind::gasa ? "gasa" : "csa";
}

AttackKind parse_attack(const std::string& name)
{
    if (name == "gasa")
        return AttackKind::gasa;
    if (name == "csa")
        return AttackKind::csa;
    throw ConfigError("unknown attack '" + name + "' (expected gasa or csa)");
}

std::size_t AttackOutcome::reported_generations(AttackKind kind) const
{
    return kind == AttackKind::csa ? trace.outer_iterations : trace.generations;
}

AttackOutcome gasa(const AttackTarget& target, const opt::GaConfig& config, std::span<const FeatureVector> seeds)
{
    // Plain GA over R^N. Only the barrier needs the sphere: it is unbounded
    // along the feasible cone.
    const TargetProblem problem(target, false);
    return finish(target, opt::ga_minimize(problem, config, seeds));
}

AttackOutcome csa(const AttackTarget& target, const opt::AlgaConfig& config)
{
    const TargetProblem problem(target);
    return finish(target, opt::alga_minimize(problem, config));
}

} // namespace cbattack
