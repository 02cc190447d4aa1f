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

#include "cbattack/attack_objective.hpp"
#include "cbattack/optimizer.hpp"

#include <span>

namespace cbattack {

enum class AttackKind { gasa, csa };

std::string to_string(AttackKind kind);
AttackKind parse_attack(const std::string& name);

struct AttackOutcome {
    FeatureVector preimage;
    double final_loss = 1.0;
    double final_violation = 0.0;
    bool converged = false;
    opt::OptTrace trace;

    /// Generation count in the unit reported per attack: outer iterations for
    /// CSA, inner GA generations for GASA.
    std::size_t reported_generations(AttackKind kind) const;
};

/// Unconstrained GA on the loss. \p seeds are planted in the initial
/// population. The violation of the returned preimage is measured afterwards.
AttackOutcome gasa(const AttackTarget& target, const opt::GaConfig& config, std::span<const FeatureVector> seeds = {});

/// ALGA on the loss subject to the scheme's inequality constraints.
AttackOutcome csa(const AttackTarget& target, const opt::AlgaConfig& config);

} // namespace cbattack
