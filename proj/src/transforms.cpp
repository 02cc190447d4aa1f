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

#include "cbattack/transforms.hpp"

#include "cbattack/errors.hpp"
#include "cbattack/rng.hpp"

#include <cmath>

namespace cbattack {

namespace {

void check_dimension(Eigen::Index expected, const FeatureVector& x)
{
    if (x.size() != expected) {
        throw DimensionError("feature dimension " + std::to_string(x.size()) + " does not match parameter dimension " +
                             std::to_string(expected));
    }
}

} // namespace

std::string to_string(Scheme scheme)
{
    return scheme == Scheme::iom ? "iom" : "biohash";
}

Scheme parse_scheme(const std::string& name)
{
    if (name == "iom")
        return Scheme::iom;
    if (name == "biohash")
        return Scheme::biohash;
    throw ConfigError("unknown scheme '" + name + "' (expected iom or biohash)");
}

IoMParams derive_iom_params(std::uint64_t token_seed, Eigen::Index n, Eigen::Index k, Eigen::Index l)
{
    if (n < 1 || k < 2 || l < 1) {
        throw ConfigError("IoM parameters need N >= 1, K >= 2, L >= 1 (got N=" + std::to_string(n) +
                          ", K=" + std::to_string(k) + ", L=" + std::to_string(l) + ")");
    }
    IoMParams p;
    p.token_seed = token_seed;
    p.n = n;
    p.k = k;
    p.l = l;
    p.projections.resize(l * k, n);
    RandomStream rng(derive_seed(token_seed, "iom"));
    double* data = p.projections.data();
    for (Eigen::Index i = 0; i < p.projections.size(); ++i)
        data[i] = rng.normal();
    return p;
}

BioHashParams derive_biohash_params(std::uint64_t token_seed, Eigen::Index n, Eigen::Index l, double tau,
                                    bool orthonormalize)
{
    if (n < 1 || l < 1 || l > n) {
        throw ConfigError("BioHash parameters need 1 <= L <= N (got N=" + std::to_string(n) + ", L=" +
                          std::to_string(l) + ")");
    }
    if (!std::isfinite(tau))
        throw ConfigError("BioHash tau must be finite");
    BioHashParams p;
    p.token_seed = token_seed;
    p.n = n;
    p.l = l;
    p.tau = tau;
    p.orthonormal = orthonormalize;
    p.basis.resize(l, n);
    RandomStream rng(derive_seed(token_seed, "biohash"));
    double* data = p.basis.data();
    for (Eigen::Index i = 0; i < p.basis.size(); ++i)
        data[i] = rng.normal();

    if (orthonormalize) {
        for (Eigen::Index i = 0; i < l; ++i) {
            for (Eigen::Index j = 0; j < i; ++j)
                p.basis.row(i) -= p.basis.row(i).dot(p.basis.row(j)) * p.basis.row(j);
            const double norm = p.basis.row(i).norm();
            if (!(norm > 1e-10))
                throw ConfigError("degenerate BioHash draw; try another token");
            p.basis.row(i) /= norm;
        }
    }
    return p;
}

IoMParams make_iom_params(const std::vector<Eigen::MatrixXd>& matrices)
{
    if (matrices.empty())
        throw ConfigError("IoM parameters need at least one matrix");
    const auto k = matrices.front().rows();
    const auto n = matrices.front().cols();
    if (k < 2 || n < 1)
        throw ConfigError("IoM matrices must be K x N with K >= 2");
    IoMParams p;
    p.n = n;
    p.k = k;
    p.l = static_cast<Eigen::Index>(matrices.size());
    p.projections.resize(p.l * k, n);
    for (Eigen::Index i = 0; i < p.l; ++i) {
        const auto& m = matrices[static_cast<std::size_t>(i)];
        if (m.rows() != k || m.cols() != n)
            throw DimensionError("IoM matrices must all share one shape");
        if (!m.allFinite())
            throw ConfigError("IoM matrices must be finite");
        p.projections.middleRows(i * k, k) = m;
    }
    return p;
}

BioHashParams make_biohash_params(const Eigen::MatrixXd& basis_rows, double tau)
{
    if (basis_rows.rows() < 1 || basis_rows.cols() < 1 || basis_rows.rows() > basis_rows.cols())
        throw ConfigError("BioHash basis must be L x N with 1 <= L <= N");
    BioHashParams p;
    p.n = basis_rows.cols();
    p.l = basis_rows.rows();
    p.tau = tau;
    p.orthonormal = false;
    p.basis = basis_rows;
    return p;
}

SchemeParams derive_params(const SchemeConfig& config, Eigen::Index n, std::uint64_t token_seed)
{
    if (config.scheme == Scheme::iom)
        return derive_iom_params(token_seed, n, config.k, config.l);
    return derive_biohash_params(token_seed, n, config.l, config.tau, config.orthonormalize);
}

HashVector iom_hash(const IoMParams& params, const FeatureVector& x)
{
    check_dimension(params.n, x);
    const Eigen::VectorXd z = params.projections * x;
    HashVector h;
    h.alphabet = static_cast<int>(params.k);
    h.codes.resize(static_cast<std::size_t>(params.l));
    for (Eigen::Index l = 0; l < params.l; ++l) {
        const double* block = z.data() + l * params.k;
        Eigen::Index best = 0;
        for (Eigen::Index k = 1; k < params.k; ++k) {
            if (block[k] > block[best])
                best = k;
        }
        h.codes[static_cast<std::size_t>(l)] = static_cast<int>(best) + 1;
    }
    return h;
}

HashVector biohash(const BioHashParams& params, const FeatureVector& x)
{
    check_dimension(params.n, x);
    const Eigen::VectorXd p = params.basis * x;
    HashVector h;
    h.alphabet = 2;
    h.codes.resize(static_cast<std::size_t>(params.l));
    for (Eigen::Index l = 0; l < params.l; ++l)
        h.codes[static_cast<std::size_t>(l)] = p[l] - params.tau > 0.0 ? 1 : 0;
    return h;
}

HashVector transform(const SchemeParams& params, const FeatureVector& x)
{
    return std::visit(
        [&x](const auto& p) -> HashVector {
            if constexpr (std::is_same_v<std::decay_t<decltype(p)>, IoMParams>)
                return iom_hash(p, x);
            else
                return biohash(p, x);
        },
        params);
}

Scheme scheme_of(const SchemeParams& params)
{
    return std::holds_alternative<IoMParams>(params) ? Scheme::iom : Scheme::biohash;
}

Eigen::Index code_length(const SchemeParams& params)
{
    return std::visit([](const auto& p) { return p.l; }, params);
}

Eigen::Index input_dimension(const SchemeParams& params)
{
    return std::visit([](const auto& p) { return p.n; }, params);
}

int alphabet_of(const SchemeParams& params)
{
    if (const auto* iom = std::get_if<IoMParams>(&params))
        return static_cast<int>(iom->k);
    return 2;
}

} // namespace cbattack
