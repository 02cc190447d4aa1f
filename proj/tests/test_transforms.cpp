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

#include "cbattack/dataset.hpp"
#include "cbattack/errors.hpp"
#include "cbattack/matcher.hpp"
#include "cbattack/rng.hpp"
#include "cbattack/transforms.hpp"

#include "oracles.hpp"

#include <doctest.h>

using namespace cbattack;

namespace {

FeatureVector vec(std::initializer_list<double> v)
{
    FeatureVector x(static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (double d : v)
        x[i++] = d;
    return x;
}

Eigen::MatrixXd mat2(double a, double b, double c, double d)
{
    Eigen::MatrixXd m(2, 2);
    m << a, b, c, d;
    return m;
}

FeatureVector random_vector(RandomStream& rng, Eigen::Index n)
{
    FeatureVector x(n);
    for (auto& v : x)
        v = rng.normal();
    return x;
}

} // namespace

TEST_CASE("iom identity/permutation example")
{
    const auto p = make_iom_params({mat2(1, 0, 0, 1), mat2(0, 1, 1, 0)});
    const auto h = iom_hash(p, vec({3, 1}));
    CHECK(h.codes == std::vector<int>{1, 2});
    CHECK(h.alphabet == 2);
}

TEST_CASE("iom ties go to the lowest index")
{
    const auto p = make_iom_params({mat2(1, 0, 1, 0)});
    CHECK(iom_hash(p, vec({1, 5})).codes == std::vector<int>{1});
}

TEST_CASE("iom_hash matches the plain-loop oracle")
{
    RandomStream rng(123);
    for (int trial = 0; trial < 1000; ++trial) {
        const auto n = 1 + static_cast<Eigen::Index>(rng.below(12));
        const auto k = 2 + static_cast<Eigen::Index>(rng.below(9));
        const auto l = 1 + static_cast<Eigen::Index>(rng.below(20));
        const auto p = derive_iom_params(rng.next_u64(), n, k, l);
        const auto x = random_vector(rng, n);
        const auto h = iom_hash(p, x);
        REQUIRE(h.codes == oracle::iom_hash(p, oracle::to_std(x)));
        REQUIRE(h.alphabet == k);
    }
}

TEST_CASE("biohash axis example and boundary")
{
    Eigen::MatrixXd basis(2, 2);
    basis << 1, 0, 0, 1;
    const auto p = make_biohash_params(basis, 0.0);
    CHECK(biohash(p, vec({0.5, -0.2})).codes == std::vector<int>{1, 0});
    // x.b == tau maps to 0
    CHECK(biohash(p, vec({0.0, 0.0})).codes == std::vector<int>{0, 0});
    const auto q = make_biohash_params(basis, 0.5);
    CHECK(biohash(q, vec({0.5, 0.7})).codes == std::vector<int>{0, 1});
}

TEST_CASE("biohash matches the plain-loop oracle")
{
    RandomStream rng(321);
    for (int trial = 0; trial < 1000; ++trial) {
        const auto n = 1 + static_cast<Eigen::Index>(rng.below(16));
        const auto l = 1 + static_cast<Eigen::Index>(rng.below(static_cast<std::size_t>(n)));
        const double tau = trial % 2 ? 0.0 : rng.normal() * 0.3;
        const auto p = derive_biohash_params(rng.next_u64(), n, l, tau, trial % 3 != 0);
        const auto x = random_vector(rng, n);
        REQUIRE(biohash(p, x).codes == oracle::biohash(p, oracle::to_std(x)));
    }
}

TEST_CASE("iom derivation is deterministic with the documented shape")
{
    const auto a = derive_iom_params(1, 512, 16, 512);
    const auto b = derive_iom_params(1, 512, 16, 512);
    CHECK(a.projections == b.projections);
    CHECK(a.projections.rows() == 512 * 16);
    CHECK(a.projections.cols() == 512);
    CHECK(a.matrix(511).rows() == 16);
    CHECK(a.matrix(511).cols() == 512);
    CHECK_FALSE(derive_iom_params(2, 8, 4, 4).projections == derive_iom_params(3, 8, 4, 4).projections);
}

TEST_CASE("iom entries are standard normal")
{
    const auto p = derive_iom_params(77, 512, 16, 128);
    const double n = double(p.projections.size());
    REQUIRE(n >= 1e6);
    const double mean = p.projections.mean();
    const double var = (p.projections.array() - mean).square().sum() / n;
    CHECK(std::abs(mean) < 3.0 / std::sqrt(n));
    CHECK(std::abs(var - 1.0) < 3.0 * std::sqrt(2.0 / n));
}

TEST_CASE("biohash basis is orthonormal unless disabled")
{
    const auto p = derive_biohash_params(5, 64, 48, 0.0, true);
    const Eigen::MatrixXd gram = p.basis * p.basis.transpose();
    CHECK((gram - Eigen::MatrixXd::Identity(48, 48)).cwiseAbs().maxCoeff() < 1e-12);
    const auto raw = derive_biohash_params(5, 64, 48, 0.0, false);
    CHECK((raw.basis * raw.basis.transpose() - Eigen::MatrixXd::Identity(48, 48)).cwiseAbs().maxCoeff() > 0.1);
    CHECK(derive_biohash_params(5, 64, 48).basis == p.basis);
}

TEST_CASE("hash length and code range")
{
    RandomStream rng(8);
    const auto p = derive_iom_params(9, 10, 5, 40);
    for (int i = 0; i < 50; ++i) {
        const auto h = iom_hash(p, random_vector(rng, 10));
        REQUIRE(h.size() == 40);
        for (int c : h.codes) {
            CHECK(c >= 1);
            CHECK(c <= 5);
        }
    }
}

TEST_CASE("renewability: independent tokens decorrelate hashes")
{
    RandomStream rng(4);
    const auto x = random_vector(rng, 64);
    const auto a = derive_iom_params(100, 64, 16, 512);
    const auto b = derive_iom_params(101, 64, 16, 512);
    CHECK(hamming_distance(iom_hash(a, x), iom_hash(b, x)) == doctest::Approx(15.0 / 16.0).epsilon(0.05 / (15.0 / 16.0)));
    const auto c = derive_biohash_params(100, 600, 512);
    const auto d = derive_biohash_params(101, 600, 512);
    const auto y = random_vector(rng, 600);
    CHECK(std::abs(hamming_distance(biohash(c, y), biohash(d, y)) - 0.5) <= 0.05);
}

TEST_CASE("similarity preservation on low-noise synthetic data")
{
    const auto split = split_protocol(generate_synthetic({20, 5, 64, 0.1, 3}));
    const auto p = derive_iom_params(6, 64, 16, 512);
    const auto scores = score_population(split, p);
    double g = 0.0, i = 0.0;
    for (double s : scores.genuine)
        g += s;
    for (double s : scores.impostor)
        i += s;
    CHECK(g / double(scores.genuine.size()) < i / double(scores.impostor.size()));
}

TEST_CASE("biohash flips with the sign of a basis vector")
{
    RandomStream rng(12);
    const auto p = derive_biohash_params(3, 16, 8);
    Eigen::MatrixXd flipped = p.basis;
    flipped.row(3) *= -1.0;
    const auto q = make_biohash_params(flipped, 0.0);
    for (int t = 0; t < 100; ++t) {
        const auto x = random_vector(rng, 16);
        const auto a = biohash(p, x), b = biohash(q, x);
        for (std::size_t l = 0; l < 8; ++l) {
            if (l == 3)
                CHECK(a.codes[l] != b.codes[l]);
            else
                CHECK(a.codes[l] == b.codes[l]);
        }
    }
}

TEST_CASE("transform dispatch and parameter queries")
{
    SchemeConfig iom{Scheme::iom, 8, 32, 0.0, true};
    const auto p = derive_params(iom, 20, 5);
    CHECK(scheme_of(p) == Scheme::iom);
    CHECK(code_length(p) == 32);
    CHECK(input_dimension(p) == 20);
    CHECK(alphabet_of(p) == 8);
    SchemeConfig bio{Scheme::biohash, 0, 16, 0.1, true};
    const auto q = derive_params(bio, 20, 5);
    CHECK(scheme_of(q) == Scheme::biohash);
    CHECK(alphabet_of(q) == 2);
    CHECK(std::get<BioHashParams>(q).tau == 0.1);
    RandomStream rng(1);
    const auto x = random_vector(rng, 20);
    CHECK(transform(p, x) == iom_hash(std::get<IoMParams>(p), x));
    CHECK(transform(q, x) == biohash(std::get<BioHashParams>(q), x));
}

TEST_CASE("transform errors")
{
    CHECK_THROWS_AS(derive_iom_params(1, 0, 2, 1), ConfigError);
    CHECK_THROWS_AS(derive_iom_params(1, 4, 1, 1), ConfigError);
    CHECK_THROWS_AS(derive_iom_params(1, 4, 2, 0), ConfigError);
    CHECK_THROWS_AS(derive_biohash_params(1, 4, 5), ConfigError);
    CHECK_THROWS_AS(iom_hash(derive_iom_params(1, 4, 2, 2), FeatureVector::Ones(5)), DimensionError);
    CHECK_THROWS_AS(biohash(derive_biohash_params(1, 4, 2), FeatureVector::Ones(3)), DimensionError);
    CHECK_THROWS_AS(parse_scheme("bloom"), ConfigError);
    CHECK(parse_scheme("iom") == Scheme::iom);
    CHECK(parse_scheme("biohash") == Scheme::biohash);
    CHECK(to_string(Scheme::biohash) == "biohash");
}
