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
#include "cbattack/rng.hpp"

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

FeatureVector random_vector(RandomStream& rng, Eigen::Index n)
{
    FeatureVector x(n);
    for (auto& v : x)
        v = rng.normal();
    return x;
}

IoMParams identity_iom()
{
    Eigen::MatrixXd m(2, 2);
    m << 1, 0, 0, 1;
    return make_iom_params({m});
}

} // namespace

TEST_CASE("loss of the original is zero")
{
    RandomStream rng(1);
    const auto p = derive_iom_params(2, 12, 6, 30);
    const auto x = random_vector(rng, 12);
    const AttackTarget t(p, iom_hash(p, x));
    CHECK(loss(t, x) == 0.0);
    const auto b = derive_biohash_params(2, 12, 10);
    const AttackTarget tb(b, biohash(b, x));
    CHECK(loss(tb, x) == 0.0);
}

TEST_CASE("loss on the identity/permutation example")
{
    Eigen::MatrixXd r1(2, 2), r2(2, 2);
    r1 << 1, 0, 0, 1;
    r2 << 0, 1, 1, 0;
    const auto p = make_iom_params({r1, r2});
    const AttackTarget t(p, HashVector{{1, 2}, 2});
    CHECK(loss(t, vec({3, 1})) == 0.0);
    CHECK(loss(t, vec({1, 3})) == 1.0);
}

TEST_CASE("loss matches transform-then-count oracle")
{
    RandomStream rng(2);
    for (int trial = 0; trial < 1000; ++trial) {
        const auto n = 2 + static_cast<Eigen::Index>(rng.below(10));
        const auto l = 1 + static_cast<Eigen::Index>(rng.below(static_cast<std::size_t>(n)));
        const auto x = random_vector(rng, n);
        const auto x_hat = random_vector(rng, n);
        if (trial % 2 == 0) {
            const auto p = derive_iom_params(rng.next_u64(), n, 2 + static_cast<Eigen::Index>(rng.below(6)), l);
            const auto h = oracle::iom_hash(p, oracle::to_std(x));
            const AttackTarget t(p, HashVector{h, static_cast<int>(p.k)});
            REQUIRE(loss(t, x_hat) == oracle::hamming(h, oracle::iom_hash(p, oracle::to_std(x_hat))));
        } else {
            const auto p = derive_biohash_params(rng.next_u64(), n, l);
            const auto h = oracle::biohash(p, oracle::to_std(x));
            const AttackTarget t(p, HashVector{h, 2});
            REQUIRE(loss(t, x_hat) == oracle::hamming(h, oracle::biohash(p, oracle::to_std(x_hat))));
        }
    }
}

TEST_CASE("loss takes values on the 1/L grid")
{
    RandomStream rng(3);
    const auto p = derive_iom_params(4, 8, 4, 13);
    const AttackTarget t(p, iom_hash(p, random_vector(rng, 8)));
    for (int i = 0; i < 200; ++i) {
        const double v = loss(t, random_vector(rng, 8)) * 13.0;
        CHECK(v == std::round(v));
        CHECK(v >= 0.0);
        CHECK(v <= 13.0);
    }
}

TEST_CASE("iom constraint examples")
{
    const auto p = identity_iom();
    const AttackTarget t1(p, HashVector{{1}, 2});
    const auto c1 = iom_constraints(t1, vec({3, 1}));
    CHECK(c1.values == std::vector<double>{0.0, -2.0});
    CHECK(c1.feasible());
    CHECK(violation(c1) == 0.0);
    const AttackTarget t2(p, HashVector{{2}, 2});
    const auto c2 = iom_constraints(t2, vec({3, 1}));
    CHECK(c2.values == std::vector<double>{2.0, 0.0});
    CHECK_FALSE(c2.feasible());
    CHECK(violation(c2) == 2.0);
}

TEST_CASE("iom constraint length is L*K and includes the zero entries")
{
    RandomStream rng(4);
    const auto p = derive_iom_params(5, 6, 5, 7);
    const AttackTarget t(p, iom_hash(p, random_vector(rng, 6)));
    CHECK(t.constraint_count() == 35);
    const auto c = iom_constraints(t, random_vector(rng, 6));
    REQUIRE(c.values.size() == 35);
    for (std::size_t l = 0; l < 7; ++l)
        CHECK(c.values[l * 5 + std::size_t(t.compromised_hash().codes[l] - 1)] == 0.0);
}

TEST_CASE("iom feasibility is equivalent to hash equality")
{
    RandomStream rng(5);
    for (int trial = 0; trial < 1000; ++trial) {
        const auto n = 2 + static_cast<Eigen::Index>(rng.below(8));
        const auto k = 2 + static_cast<Eigen::Index>(rng.below(4));
        const auto l = 1 + static_cast<Eigen::Index>(rng.below(4));
        const auto p = derive_iom_params(rng.next_u64(), n, k, l);
        const auto x = random_vector(rng, n);
        const AttackTarget t(p, iom_hash(p, x));
        // Nearby points keep the hash often enough to exercise both sides.
        const FeatureVector x_hat = x + 0.5 * random_vector(rng, n);
        const bool same = oracle::iom_hash(p, oracle::to_std(x_hat)) == t.compromised_hash().codes;
        REQUIRE(iom_constraints(t, x_hat).feasible() == same);
        REQUIRE((violation(iom_constraints(t, x_hat)) <= 0.0) == same);
    }
}

TEST_CASE("feasible iom points have zero loss and the property is scale invariant")
{
    RandomStream rng(6);
    for (int trial = 0; trial < 300; ++trial) {
        const auto p = derive_iom_params(rng.next_u64(), 10, 8, 20);
        const auto x = random_vector(rng, 10);
        const AttackTarget t(p, iom_hash(p, x));
        // The original is feasible by construction; so is any positive rescale.
        for (double alpha : {1.0, 0.01, 7.5}) {
            const FeatureVector y = alpha * x;
            CHECK(violation(iom_constraints(t, y)) <= 0.0);
            CHECK(loss(t, y) == 0.0);
        }
        const auto z = random_vector(rng, 10);
        CHECK(loss(t, 3.0 * z) == loss(t, z));
        CHECK(iom_constraints(t, 3.0 * z).feasible() == iom_constraints(t, z).feasible());
    }
}

TEST_CASE("biohash constraint examples")
{
    Eigen::MatrixXd basis(1, 2);
    basis << 1, 0;
    const auto p = make_biohash_params(basis, 0.0);
    const AttackTarget t1(p, HashVector{{1}, 2}, 0.0);
    CHECK(biohash_constraints(t1, vec({0.5, 0})).values == std::vector<double>{-0.5});
    CHECK(biohash_constraints(t1, vec({0.5, 0})).feasible());
    const AttackTarget t0(p, HashVector{{0}, 2}, 0.0);
    CHECK(biohash_constraints(t0, vec({0.5, 0})).values == std::vector<double>{0.5});
    CHECK_FALSE(biohash_constraints(t0, vec({0.5, 0})).feasible());
    // With a margin, the boundary point is infeasible for both bits.
    const AttackTarget m(p, HashVector{{0}, 2}, 1e-6);
    CHECK_FALSE(biohash_constraints(m, vec({0.0, 0})).feasible());
}

TEST_CASE("biohash feasibility with margin implies hash equality")
{
    RandomStream rng(7);
    int feasible = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        const auto n = 2 + static_cast<Eigen::Index>(rng.below(8));
        const auto l = 1 + static_cast<Eigen::Index>(rng.below(static_cast<std::size_t>(n)));
        const auto p = derive_biohash_params(rng.next_u64(), n, l, rng.normal() * 0.1);
        const auto x = random_vector(rng, n);
        const AttackTarget t(p, biohash(p, x), 1e-6);
        const FeatureVector x_hat = x + 0.3 * random_vector(rng, n);
        const auto c = biohash_constraints(t, x_hat);
        REQUIRE(c.values.size() == static_cast<std::size_t>(l));
        if (c.feasible()) {
            ++feasible;
            REQUIRE(oracle::biohash(p, oracle::to_std(x_hat)) == t.compromised_hash().codes);
        }
    }
    CHECK(feasible > 100);
}

TEST_CASE("violation")
{
    CHECK(violation(std::vector<double>{0.0, -2.0}) == 0.0);
    CHECK(violation(std::vector<double>{2.0, 0.0}) == 2.0);
    CHECK_THROWS_AS(violation(std::vector<double>{}), DimensionError);
    RandomStream rng(8);
    for (int i = 0; i < 200; ++i) {
        ConstraintVector c;
        for (std::size_t j = 0; j < 1 + rng.below(6); ++j)
            c.values.push_back(rng.normal());
        CHECK(c.feasible() == (violation(c) <= 0.0));
    }
}

TEST_CASE("constraints dispatch and scheme mismatch")
{
    RandomStream rng(9);
    const auto p = derive_iom_params(1, 4, 3, 2);
    const auto b = derive_biohash_params(1, 4, 2);
    const auto x = random_vector(rng, 4);
    const AttackTarget ti(p, iom_hash(p, x));
    const AttackTarget tb(b, biohash(b, x));
    CHECK(constraints(ti, x).values == iom_constraints(ti, x).values);
    CHECK(constraints(tb, x).values == biohash_constraints(tb, x).values);
    CHECK_THROWS_AS(biohash_constraints(ti, x), ConfigError);
    CHECK_THROWS_AS(iom_constraints(tb, x), ConfigError);
    CHECK_THROWS_AS(loss(ti, random_vector(rng, 5)), DimensionError);
}

TEST_CASE("target validation")
{
    const auto p = derive_iom_params(1, 4, 3, 2);
    CHECK_THROWS_AS(AttackTarget(p, HashVector{{1}, 3}), DimensionError);
    CHECK_THROWS_AS(AttackTarget(p, HashVector{{1, 4}, 3}), DimensionError);
    CHECK_THROWS_AS(AttackTarget(p, HashVector{{1, 2}, 2}), DimensionError);
    CHECK_THROWS_AS(AttackTarget(p, HashVector{{1, 2}, 3}, -1.0), ConfigError);
}

TEST_CASE("batched problem agrees with the scalar functions")
{
    RandomStream rng(10);
    for (int s = 0; s < 2; ++s) {
        const SchemeParams p = s == 0 ? SchemeParams(derive_iom_params(3, 9, 5, 11))
                                      : SchemeParams(derive_biohash_params(3, 9, 7, 0.05));
        const auto x = random_vector(rng, 9);
        const AttackTarget t(p, transform(p, x));
        const TargetProblem problem(t);
        Eigen::MatrixXd pts(9, 6);
        for (Eigen::Index j = 0; j < 6; ++j)
            pts.col(j) = random_vector(rng, 9);
        Eigen::VectorXd l(6);
        Eigen::MatrixXd c(t.constraint_count(), 6);
        problem.evaluate(pts, l, c);
        for (Eigen::Index j = 0; j < 6; ++j) {
            const FeatureVector col = pts.col(j);
            CHECK(l[j] == loss(t, col));
            const auto ref = constraints(t, col);
            for (std::size_t i = 0; i < ref.values.size(); ++i)
                CHECK(c(Eigen::Index(i), j) == doctest::Approx(ref.values[i]).epsilon(1e-12));
        }
    }
}

TEST_CASE("sphere repair")
{
    const auto p = derive_iom_params(3, 5, 3, 2);
    const AttackTarget t(p, HashVector{{1, 2}, 3});
    Eigen::MatrixXd pts = Eigen::MatrixXd::Constant(5, 3, 2.0);
    pts.col(2).setZero();
    TargetProblem(t, true).repair(pts);
    CHECK(pts.col(0).norm() == doctest::Approx(1.0));
    CHECK(pts.col(2).norm() == 0.0);
    Eigen::MatrixXd raw = Eigen::MatrixXd::Constant(5, 1, 2.0);
    TargetProblem(t, false).repair(raw);
    CHECK(raw(0, 0) == 2.0);
}
