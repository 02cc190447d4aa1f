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

#include <Eigen/Core>

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

namespace cbattack {

enum class Scheme { iom, biohash };

std::string to_string(Scheme scheme);
/// Throws ConfigError for anything other than "iom" / "biohash".
Scheme parse_scheme(const std::string& name);

/// Protected template. IoM codes are 1-based indices in [1, alphabet];
/// BioHash codes are bits (alphabet 2, codes in {0, 1}).
struct HashVector {
    std::vector<int> codes;
    int alphabet = 2;

    std::size_t size() const noexcept { return codes.size(); }
    bool operator==(const HashVector&) const = default;
};

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// L random K x N Gaussian matrices, stacked row-wise: row l*K + k is row k
/// of matrix l.
struct IoMParams {
    std::uint64_t token_seed = 0;
    Eigen::Index n = 0;
    Eigen::Index k = 0;
    Eigen::Index l = 0;
    RowMatrix projections;

    auto matrix(Eigen::Index index) const { return projections.middleRows(index * k, k); }
};

/// L projection vectors (rows of basis) and a discretization threshold.
struct BioHashParams {
    std::uint64_t token_seed = 0;
    Eigen::Index n = 0;
    Eigen::Index l = 0;
    double tau = 0.0;
    bool orthonormal = true;
    RowMatrix basis;
};

using SchemeParams = std::variant<IoMParams, BioHashParams>;

/// Everything except the token needed to derive scheme parameters.
struct SchemeConfig {
    Scheme scheme = Scheme::iom;
    Eigen::Index k = 16;
    Eigen::Index l = 512;
    double tau = 0.0;
    bool orthonormalize = true;
};

// Token derivation: stream "cbrng-v1" keyed by derive_seed(token_seed, "iom")
// or derive_seed(token_seed, "biohash"); entries are drawn in row-major order
// of the stacked matrix.
IoMParams derive_iom_params(std::uint64_t token_seed, Eigen::Index n, Eigen::Index k, Eigen::Index l);

/// Gaussian draws, orthonormalized with modified Gram-Schmidt unless
/// \p orthonormalize is false. Requires l <= n.
BioHashParams derive_biohash_params(std::uint64_t token_seed, Eigen::Index n, Eigen::Index l, double tau = 0.0,
                                    bool orthonormalize = true);

/// Explicit parameters, mostly for tests and worked examples.
IoMParams make_iom_params(const std::vector<Eigen::MatrixXd>& matrices);
BioHashParams make_biohash_params(const Eigen::MatrixXd& basis_rows, double tau);

SchemeParams derive_params(const SchemeConfig& config, Eigen::Index n, std::uint64_t token_seed);

/// h_l = 1 + argmax_k (R_l x)_k, lowest index wins ties.
HashVector iom_hash(const IoMParams& params, const FeatureVector& x);

/// h_l = 1 if x.b_l - tau > 0, else 0.
HashVector biohash(const BioHashParams& params, const FeatureVector& x);

HashVector transform(const SchemeParams& params, const FeatureVector& x);

Scheme scheme_of(const SchemeParams& params);
Eigen::Index code_length(const SchemeParams& params);
Eigen::Index input_dimension(const SchemeParams& params);
int alphabet_of(const SchemeParams& params);

} // namespace cbattack
