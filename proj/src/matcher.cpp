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

#include "cbattack/matcher.hpp"

#include "cbattack/csv.hpp"
#include "cbattack/errors.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace cbattack {

double hamming_distance(const HashVector& a, const HashVector& b)
{
    if (a.size() != b.size()) {
        throw DimensionError("hash length mismatch: " + std::to_string(a.size()) + " vs " + std::to_string(b.size()));
    }
    if (a.alphabet != b.alphabet)
        throw DimensionError("hash alphabet mismatch");
    if (a.codes.empty())
        throw DimensionError("cannot compare empty hashes");
    std::size_t diff = 0;
    for (std::size_t i = 0; i < a.codes.size(); ++i)
        diff += a.codes[i] != b.codes[i];
    return static_cast<double>(diff) / static_cast<double>(a.codes.size());
}

ScoreLists score_templates(std::span<const HashVector> enroll, std::span<const std::vector<HashVector>> verify)
{
    if (enroll.empty() || enroll.size() != verify.size())
        throw ProtocolError("scoring needs one enrolment template per subject and at least one subject");
    ScoreLists scores;
    for (std::size_t i = 0; i < enroll.size(); ++i) {
        for (std::size_t j = 0; j < verify.size(); ++j) {
            auto& bucket = i == j ? scores.genuine : scores.impostor;
            for (const auto& probe : verify[j])
                bucket.push_back(hamming_distance(enroll[i], probe));
        }
    }
    if (scores.genuine.empty())
        throw ProtocolError("split has no verification samples");
    return scores;
}

ScoreLists score_population(const ProtocolSplit& split, const SchemeParams& params)
{
    if (split.subject_ids.empty())
        throw ProtocolError("empty protocol split");
    std::vector<HashVector> enroll;
    std::vector<std::vector<HashVector>> verify(split.verify.size());
    enroll.reserve(split.enroll.size());
    for (const auto& x : split.enroll)
        enroll.push_back(transform(params, x));
    for (std::size_t i = 0; i < split.verify.size(); ++i) {
        for (const auto& x : split.verify[i])
            verify[i].push_back(transform(params, x));
    }
    return score_templates(enroll, verify);
}

double false_match_rate(std::span<const double> impostor, double theta)
{
    if (impostor.empty())
        throw ProtocolError("empty impostor score list");
    const auto accepted = std::count_if(impostor.begin(), impostor.end(), [theta](double d) { return d <= theta; });
    return static_cast<double>(accepted) / static_cast<double>(impostor.size());
}

double false_non_match_rate(std::span<const double> genuine, double theta)
{
    if (genuine.empty())
        throw ProtocolError("empty genuine score list");
    const auto rejected = std::count_if(genuine.begin(), genuine.end(), [theta](double d) { return d > theta; });
    return static_cast<double>(rejected) / static_cast<double>(genuine.size());
}

ThresholdCalibration calibrate_threshold(std::span<const double> genuine, std::span<const double> impostor)
{
    if (genuine.empty() || impostor.empty())
        throw ProtocolError("threshold calibration needs non-empty genuine and impostor lists");
    for (double d : genuine) {
        if (!std::isfinite(d))
            throw ProtocolError("non-finite genuine score");
    }
    for (double d : impostor) {
        if (!std::isfinite(d))
            throw ProtocolError("non-finite impostor score");
    }

    std::vector<double> g(genuine.begin(), genuine.end());
    std::vector<double> im(impostor.begin(), impostor.end());
    std::sort(g.begin(), g.end());
    std::sort(im.begin(), im.end());
    std::vector<double> pooled;
    pooled.reserve(g.size() + im.size());
    std::merge(g.begin(), g.end(), im.begin(), im.end(), std::back_inserter(pooled));
    pooled.erase(std::unique(pooled.begin(), pooled.end()), pooled.end());

    std::vector<double> candidates;
    candidates.reserve(pooled.size());
    for (std::size_t i = 0; i + 1 < pooled.size(); ++i)
        candidates.push_back(0.5 * (pooled[i] + pooled[i + 1]));
    candidates.push_back(pooled.back());

    const double ng = static_cast<double>(g.size());
    const double ni = static_cast<double>(im.size());
    ThresholdCalibration best;
    double best_gap = INFINITY;
    std::size_t gi = 0;
    std::size_t ii = 0;
    // Candidates ascend, so the accepted counts only move forward.
    for (double theta : candidates) {
        while (gi < g.size() && g[gi] <= theta)
            ++gi;
        while (ii < im.size() && im[ii] <= theta)
            ++ii;
        const double fnmr = static_cast<double>(g.size() - gi) / ng;
        const double fmr = static_cast<double>(ii) / ni;
        const double gap = std::abs(fnmr - fmr);
        if (gap < best_gap) {
            best_gap = gap;
            best.theta = theta;
            best.eer = 0.5 * (fnmr + fmr);
            best.fmr_at_theta = fmr;
            best.fnmr_at_theta = fnmr;
        }
    }
    best.theta_squared = best.theta * best.theta;
    return best;
}

void write_scores_csv(const ScoreLists& scores, const std::filesystem::path& path)
{
    std::ofstream out(path);
    if (!out)
        throw Error("cannot write " + path.string());
    out << "label,score\n";
    for (double d : scores.genuine)
        out << "genuine," << csv::format_double(d) << '\n';
    for (double d : scores.impostor)
        out << "impostor," << csv::format_double(d) << '\n';
}

} // namespace cbattack
