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

#include "oracles.hpp"

#include <doctest.h>

#include <cstring>
#include <fstream>

using namespace cbattack;
namespace fs = std::filesystem;

namespace {

void write_file(const fs::path& p, const std::string& text)
{
    std::ofstream out(p, std::ios::binary);
    out << text;
}

FeatureSet small_set(std::size_t subjects, std::size_t samples, Eigen::Index n, double sigma, std::uint64_t seed)
{
    return generate_synthetic({subjects, samples, n, sigma, seed});
}

} // namespace

TEST_CASE("csv rows are normalized")
{
    TempDir dir;
    write_file(dir.path / "f.csv", "subject_id,sample_idx,f0,f1\ns1,0,3.0,4.0\ns1,1,0.0,1.0\n");
    const auto set = load_features(dir.path / "f.csv", FeatureFormat::csv);
    REQUIRE(set.subjects().size() == 1);
    REQUIRE(set.dimension() == 2);
    const auto& s = set.subjects()[0].samples;
    REQUIRE(s.size() == 2);
    CHECK(s[0][0] == doctest::Approx(0.6).epsilon(1e-15));
    CHECK(s[0][1] == doctest::Approx(0.8).epsilon(1e-15));
    CHECK(s[1][0] == 0.0);
    CHECK(s[1][1] == 1.0);
}

TEST_CASE("csv dimension mismatch is an ingestion error naming the line")
{
    TempDir dir;
    write_file(dir.path / "f.csv", "subject_id,sample_idx,f0,f1\ns1,0,3.0,4.0\ns1,1,0.0,1.0,2.0\n");
    try {
        load_features(dir.path / "f.csv", FeatureFormat::csv);
        FAIL("expected an ingestion error");
    } catch (const IngestionError& e) {
        CHECK(std::string(e.what()).find("line 3") != std::string::npos);
    }
}

TEST_CASE("csv ingestion errors")
{
    TempDir dir;
    const auto load = [&](const std::string& text) {
        write_file(dir.path / "f.csv", text);
        return load_features(dir.path / "f.csv", FeatureFormat::csv);
    };
    CHECK_THROWS_AS(load("subject_id,sample_idx,f0\ns1,0,nan\n"), IngestionError);
    CHECK_THROWS_AS(load("subject_id,sample_idx,f0\ns1,0,abc\n"), IngestionError);
    CHECK_THROWS_AS(load("subject_id,sample_idx,f0\ns1,x,1\n"), IngestionError);
    CHECK_THROWS_AS(load("subject_id,sample_idx,f0\ns1,0,1\ns1,0,2\n"), IngestionError);
    CHECK_THROWS_AS(load("id,idx,f0\ns1,0,1\n"), IngestionError);
    CHECK_THROWS_AS(load(""), IngestionError);
    CHECK_THROWS_AS(load("subject_id,sample_idx,f0,f1\ns1,0,0,0\n"), NormalizationError);
    CHECK_THROWS_AS(load_features(dir.path / "missing.csv", FeatureFormat::csv), IngestionError);
}

TEST_CASE("csv samples are ordered by sample_idx and subjects by first appearance")
{
    TempDir dir;
    write_file(dir.path / "f.csv", "subject_id,sample_idx,f0,f1\nb,1,0,1\na,0,1,0\nb,0,1,0\na,1,0,1\n");
    const auto set = load_features(dir.path / "f.csv", FeatureFormat::csv);
    REQUIRE(set.subjects().size() == 2);
    CHECK(set.subjects()[0].id == "b");
    CHECK(set.subjects()[1].id == "a");
    CHECK(set.subjects()[0].samples[0][0] == 1.0);
    CHECK(set.subjects()[0].samples[1][1] == 1.0);
}

TEST_CASE("binary round-trip is bit-exact")
{
    TempDir dir;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto set = small_set(4, 3, 9, 0.3, seed);
        save_features(set, dir.path / "f.cbf", FeatureFormat::binary);
        const auto back = load_features(dir.path / "f.cbf", FeatureFormat::binary);
        REQUIRE(back == set);
        for (std::size_t s = 0; s < set.subjects().size(); ++s) {
            for (std::size_t i = 0; i < set.subjects()[s].samples.size(); ++i) {
                const auto& a = set.subjects()[s].samples[i];
                const auto& b = back.subjects()[s].samples[i];
                CHECK(std::memcmp(a.data(), b.data(), sizeof(double) * std::size_t(a.size())) == 0);
            }
        }
    }
}

TEST_CASE("csv round-trip is exact")
{
    TempDir dir;
    const auto set = small_set(3, 4, 5, 0.2, 17);
    save_features(set, dir.path / "f.csv", FeatureFormat::csv);
    CHECK(load_features(dir.path / "f.csv", FeatureFormat::csv) == set);
}

TEST_CASE("binary format layout")
{
    TempDir dir;
    const FeatureSet set({{"ab", {FeatureVector::Unit(2, 0), FeatureVector::Unit(2, 1)}}}, 2);
    save_features(set, dir.path / "f.cbf", FeatureFormat::binary);
    std::ifstream in(dir.path / "f.cbf", std::ios::binary);
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    // magic + N + count + idlen + id + samples + 4 doubles
    REQUIRE(bytes.size() == 4 + 4 + 4 + 4 + 2 + 4 + 4 * 8);
    CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "CBF1");
    CHECK(bytes[4] == 2);
    CHECK(bytes[8] == 1);
    CHECK(bytes[12] == 2);
    CHECK(bytes[16] == 'a');
    CHECK(bytes[18] == 2);
    double first = 0.0;
    std::memcpy(&first, bytes.data() + 22, 8);
    CHECK(first == 1.0);

    // Truncation and trailing garbage are rejected.
    write_file(dir.path / "t.cbf", std::string(bytes.begin(), bytes.end() - 1));
    CHECK_THROWS_AS(load_features(dir.path / "t.cbf", FeatureFormat::binary), IngestionError);
    write_file(dir.path / "g.cbf", std::string(bytes.begin(), bytes.end()) + "x");
    CHECK_THROWS_AS(load_features(dir.path / "g.cbf", FeatureFormat::binary), IngestionError);
    write_file(dir.path / "m.cbf", "CBF2" + std::string(bytes.begin() + 4, bytes.end()));
    CHECK_THROWS_AS(load_features(dir.path / "m.cbf", FeatureFormat::binary), IngestionError);
}

TEST_CASE("synthetic with zero noise repeats the class mean")
{
    const auto set = small_set(2, 3, 8, 0.0, 7);
    for (const auto& s : set.subjects()) {
        REQUIRE(s.samples.size() == 3);
        CHECK(s.samples[0] == s.samples[1]);
        CHECK(s.samples[0] == s.samples[2]);
    }
    CHECK(set.subjects()[0].samples[0] != set.subjects()[1].samples[0]);
}

TEST_CASE("synthetic is deterministic and seed-dependent")
{
    CHECK(small_set(5, 4, 16, 0.3, 9) == small_set(5, 4, 16, 0.3, 9));
    CHECK_FALSE(small_set(5, 4, 16, 0.3, 9) == small_set(5, 4, 16, 0.3, 10));
    CHECK(digest(small_set(5, 4, 16, 0.3, 9)) == digest(small_set(5, 4, 16, 0.3, 9)));
    CHECK(digest(small_set(5, 4, 16, 0.3, 9)) != digest(small_set(5, 4, 16, 0.3, 10)));
}

TEST_CASE("synthetic intra-subject cosine exceeds inter-subject cosine")
{
    const auto set = small_set(20, 10, 64, 0.1, 1);
    double intra = 0.0, inter = 0.0;
    std::size_t n_intra = 0, n_inter = 0;
    const auto& subs = set.subjects();
    for (std::size_t a = 0; a < subs.size(); ++a) {
        for (std::size_t b = 0; b < subs.size(); ++b) {
            for (std::size_t i = 0; i < subs[a].samples.size(); ++i) {
                for (std::size_t j = 0; j < subs[b].samples.size(); ++j) {
                    if (a == b && i == j)
                        continue;
                    const double c = subs[a].samples[i].dot(subs[b].samples[j]);
                    (a == b ? intra : inter) += c;
                    ++(a == b ? n_intra : n_inter);
                }
            }
        }
    }
    CHECK(intra / double(n_intra) > inter / double(n_inter));
}

TEST_CASE("every generated vector is unit norm")
{
    for (double sigma : {0.0, 0.1, 1.0, 3.0}) {
        const auto set = small_set(6, 5, 32, sigma, 4);
        for (const auto& s : set.subjects()) {
            for (const auto& v : s.samples)
                CHECK(std::abs(v.norm() - 1.0) <= 1e-9);
        }
    }
}

TEST_CASE("synthetic spec validation")
{
    CHECK_THROWS_AS(small_set(1, 3, 8, 0.1, 0), ConfigError);
    CHECK_THROWS_AS(small_set(3, 1, 8, 0.1, 0), ConfigError);
    CHECK_THROWS_AS(small_set(3, 3, 0, 0.1, 0), ConfigError);
    CHECK_THROWS_AS(small_set(3, 3, 8, -0.1, 0), ConfigError);
}

TEST_CASE("split takes the first sample for enrolment")
{
    const FeatureVector a = FeatureVector::Unit(3, 0), b = FeatureVector::Unit(3, 1), c = FeatureVector::Unit(3, 2);
    const FeatureSet set({{"s", {a, b, c}}, {"t", {c, a}}}, 3);
    const auto split = split_protocol(set);
    REQUIRE(split.subject_count() == 2);
    CHECK(split.subject_ids[0] == "s");
    CHECK(split.enroll[0] == a);
    REQUIRE(split.verify[0].size() == 2);
    CHECK(split.verify[0][0] == b);
    CHECK(split.verify[0][1] == c);
    CHECK(split.enroll[1] == c);
    CHECK(split.verify_count() == 3);
}

TEST_CASE("LFW-sized split: 158 x 10")
{
    const auto split = split_protocol(small_set(158, 10, 4, 0.1, 2));
    CHECK(split.enroll.size() == 158);
    CHECK(split.verify_count() == 1422);
    CHECK(split.enroll.size() + split.verify_count() == 1580);
}

TEST_CASE("subject with one sample is a protocol error")
{
    const FeatureSet set({{"s", {FeatureVector::Unit(2, 0), FeatureVector::Unit(2, 1)}}, {"t", {FeatureVector::Unit(2, 0)}}},
                         2);
    CHECK_THROWS_AS(split_protocol(set), ProtocolError);
}

TEST_CASE("feature set validation")
{
    CHECK_THROWS_AS(FeatureSet({{"s", {FeatureVector::Unit(3, 0)}}}, 2), DimensionError);
    CHECK_THROWS_AS(FeatureSet({{"s", {}}}, 2), IngestionError);
    FeatureVector bad = FeatureVector::Unit(2, 0);
    bad[1] = std::nan("");
    CHECK_THROWS_AS(FeatureSet({{"s", {bad}}}, 2), IngestionError);
}

TEST_CASE("normalize")
{
    FeatureVector v(2);
    v << 3.0, 4.0;
    CHECK(normalize(v).norm() == doctest::Approx(1.0));
    CHECK_THROWS_AS(normalize(FeatureVector::Zero(3)), NormalizationError);
    const FeatureVector u = FeatureVector::Unit(4, 2);
    CHECK(normalize(u) == u);
}
