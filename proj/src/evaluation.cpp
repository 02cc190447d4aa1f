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

#include "cbattack/evaluation.hpp"

#include "cbattack/csv.hpp"
#include "cbattack/errors.hpp"
#include "cbattack/parallel.hpp"
#include "cbattack/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace cbattack {

namespace {

/// Mean that does not depend on the order of \p values.
double ordered_mean(std::vector<double> values)
{
    if (values.empty())
        return std::nan("");
    std::sort(values.begin(), values.end());
    double sum = 0.0;
    for (double v : values)
        sum += v;
    return sum / static_cast<double>(values.size());
}

std::vector<double> average_ranks(std::span<const double> v)
{
    std::vector<std::size_t> order(v.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&v](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> ranks(v.size());
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]])
            ++j;
        const double rank = 0.5 * double(i + j) + 1.0;
        for (std::size_t t = i; t <= j; ++t)
            ranks[order[t]] = rank;
        i = j + 1;
    }
    return ranks;
}

} // namespace

double compute_tre(const HashVector& h, const HashVector& h_hat)
{
    const double d = hamming_distance(h, h_hat);
    return d * d;
}

double compute_tee(std::span<const double> test_distances)
{
    if (test_distances.empty())
        throw ProtocolError("TEE needs at least one test distance");
    double sum = 0.0;
    for (double d : test_distances)
        sum += d * d;
    return sum / static_cast<double>(test_distances.size());
}

double compute_var(std::span<const double> test_distances, double train_distance)
{
    if (test_distances.empty())
        throw ProtocolError("VAR needs at least one test distance");
    double sum = 0.0;
    for (double d : test_distances)
        sum += (d - train_distance) * (d - train_distance);
    return sum / static_cast<double>(test_distances.size());
}

std::uint64_t attack_token_seed(std::uint64_t master_seed, Eigen::Index l)
{
    return derive_seed(master_seed, "attack-token", static_cast<std::uint64_t>(l));
}

std::uint64_t verify_token_seed(std::uint64_t master_seed, Eigen::Index l, std::size_t repetition)
{
    return derive_seed(derive_seed(master_seed, "verify-token", static_cast<std::uint64_t>(l)), "rep", repetition);
}

std::uint64_t optimizer_seed(std::uint64_t master_seed, AttackKind attack, Eigen::Index l, const std::string& subject_id)
{
    const auto base = derive_seed(derive_seed(master_seed, "optimizer"), to_string(attack), static_cast<std::uint64_t>(l));
    return derive_seed(base, subject_id);
}

VerificationRound make_verification_round(const ProtocolSplit& split, const SchemeConfig& scheme, std::uint64_t token_seed)
{
    VerificationRound round;
    round.token_seed = token_seed;
    round.params = derive_params(scheme, split.dimension, token_seed);
    round.enroll.reserve(split.enroll.size());
    for (const auto& x : split.enroll)
        round.enroll.push_back(transform(round.params, x));
    round.verify.resize(split.verify.size());
    for (std::size_t i = 0; i < split.verify.size(); ++i) {
        for (const auto& x : split.verify[i])
            round.verify[i].push_back(transform(round.params, x));
    }
    const auto scores = score_templates(round.enroll, round.verify);
    round.calibration = calibrate_threshold(scores.genuine, scores.impostor);
    return round;
}

std::vector<VerificationRound> make_verification_rounds(const ProtocolSplit& split, const SchemeConfig& scheme,
                                                        std::uint64_t master_seed, std::size_t n_reps)
{
    if (n_reps < 1)
        throw ConfigError("n_reps must be at least 1");
    std::vector<VerificationRound> rounds;
    rounds.reserve(n_reps);
    for (std::size_t r = 0; r < n_reps; ++r)
        rounds.push_back(make_verification_round(split, scheme, verify_token_seed(master_seed, scheme.l, r)));
    return rounds;
}

AttackMetrics evaluate_attack(const ProtocolSplit& split, const std::map<std::string, FeatureVector>& preimages,
                              const SchemeParams& attack_params, std::span<const VerificationRound> rounds,
                              std::vector<SubjectErrors>* errors)
{
    if (rounds.empty())
        throw ConfigError("evaluation needs at least one verification round");
    std::string missing;
    for (const auto& id : split.subject_ids) {
        if (!preimages.contains(id))
            missing += (missing.empty() ? "" : ", ") + id;
    }
    if (!missing.empty())
        throw ProtocolError("no preimage for subject(s): " + missing);

    AttackMetrics m;
    m.n_repetitions = rounds.size();
    std::vector<double> tee_per_subject, tre_per_subject, var_per_subject;
    for (std::size_t i = 0; i < split.subject_ids.size(); ++i) {
        const auto& x_hat = preimages.at(split.subject_ids[i]);
        const HashVector h = transform(attack_params, split.enroll[i]);
        const double train = hamming_distance(h, transform(attack_params, x_hat));

        std::vector<double> test;
        test.reserve(rounds.size());
        for (const auto& round : rounds) {
            const HashVector probe = transform(round.params, x_hat);
            test.push_back(hamming_distance(round.enroll[i], probe));
            for (const auto& sample : round.verify[i]) {
                ++m.comparisons;
                m.accepted += hamming_distance(probe, sample) <= round.calibration.theta;
            }
        }
        tee_per_subject.push_back(compute_tee(test));
        tre_per_subject.push_back(train * train);
        var_per_subject.push_back(compute_var(test, train));
        if (errors)
            errors->push_back({split.subject_ids[i], train, std::move(test)});
    }

    std::vector<double> fmr, eer, theta_sq;
    for (const auto& round : rounds) {
        fmr.push_back(round.calibration.fmr_at_theta);
        eer.push_back(round.calibration.eer);
        theta_sq.push_back(round.calibration.theta_squared);
    }
    m.sar = static_cast<double>(m.accepted) / static_cast<double>(m.comparisons);
    m.fmr = ordered_mean(fmr);
    m.eer = ordered_mean(eer);
    m.theta_squared = ordered_mean(theta_sq);
    m.fai = m.sar - m.fmr;
    m.tee = ordered_mean(tee_per_subject);
    m.tre = ordered_mean(tre_per_subject);
    m.var = ordered_mean(var_per_subject);
    return m;
}

std::vector<AttackOutcome> attack_population(const ProtocolSplit& split, const ExperimentConfig& config, Eigen::Index l,
                                             AttackKind attack)
{
    SchemeConfig scheme = config.scheme;
    scheme.l = l;
    const SchemeParams params = derive_params(scheme, split.dimension, attack_token_seed(config.master_seed, l));
    std::vector<AttackOutcome> outcomes(split.subject_count());
    parallel_for(split.subject_count(), config.jobs, [&](std::size_t i) {
        const AttackTarget target(params, transform(params, split.enroll[i]), config.margin);
        const auto seed = optimizer_seed(config.master_seed, attack, l, split.subject_ids[i]);
        if (attack == AttackKind::gasa) {
            opt::GaConfig ga = config.ga;
            ga.seed = seed;
            outcomes[i] = gasa(target, ga);
        } else {
            opt::AlgaConfig alga = config.alga;
            alga.ga.seed = seed;
            outcomes[i] = csa(target, alga);
        }
    });
    return outcomes;
}

ReportRow make_report_row(const ProtocolSplit& split, const ExperimentConfig& config, Eigen::Index l,
                          AttackKind attack, const std::map<std::string, FeatureVector>& preimages,
                          std::span<const VerificationRound> rounds, std::vector<SubjectErrors>* errors)
{
    SchemeConfig scheme = config.scheme;
    scheme.l = l;
    ReportRow row;
    row.scheme = scheme.scheme;
    row.k = scheme.scheme == Scheme::iom ? scheme.k : 2;
    row.l = l;
    row.attack = attack;
    const SchemeParams params = derive_params(scheme, split.dimension, attack_token_seed(config.master_seed, l));
    row.metrics = evaluate_attack(split, preimages, params, rounds, errors);
    return row;
}

ExperimentReport run_experiment(const FeatureSet& dataset, const ExperimentConfig& config, const OutcomeSink& sink)
{
    if (config.l_values.empty())
        throw ConfigError("experiment needs at least one code length");
    if (config.attacks.empty())
        throw ConfigError("experiment needs at least one attack");
    config.ga.validate();
    config.alga.validate();

    ExperimentReport report;
    report.master_seed = config.master_seed;
    report.dataset_digest = digest(dataset);
    const ProtocolSplit split = split_protocol(dataset);

    for (const auto l : config.l_values) {
        std::vector<VerificationRound> rounds;
        std::string round_error;
        try {
            SchemeConfig scheme = config.scheme;
            scheme.l = l;
            rounds = make_verification_rounds(split, scheme, config.master_seed, config.n_reps);
        } catch (const std::exception& e) {
            round_error = e.what();
        }
        for (const auto attack : config.attacks) {
            ReportRow row;
            row.scheme = config.scheme.scheme;
            row.k = config.scheme.scheme == Scheme::iom ? config.scheme.k : 2;
            row.l = l;
            row.attack = attack;
            if (!round_error.empty()) {
                row.error = round_error;
                report.rows.push_back(row);
                continue;
            }
            try {
                const auto outcomes = attack_population(split, config, l, attack);
                std::map<std::string, FeatureVector> preimages;
                std::vector<double> generations, times;
                std::size_t converged = 0;
                for (std::size_t i = 0; i < outcomes.size(); ++i) {
                    const auto& id = split.subject_ids[i];
                    preimages.emplace(id, outcomes[i].preimage);
                    generations.push_back(static_cast<double>(outcomes[i].reported_generations(attack)));
                    times.push_back(outcomes[i].trace.wall_time_s);
                    converged += outcomes[i].converged;
                    if (sink)
                        sink(l, attack, id, optimizer_seed(config.master_seed, attack, l, id), outcomes[i]);
                }
                row = make_report_row(split, config, l, attack, preimages, rounds);
                row.mean_generations = ordered_mean(generations);
                row.mean_time_s = ordered_mean(times);
                row.convergence_rate = static_cast<double>(converged) / static_cast<double>(outcomes.size());
            } catch (const std::exception& e) {
                row.error = e.what();
            }
            report.rows.push_back(row);
        }
    }
    return report;
}

std::string report_csv(const ExperimentReport& report, bool include_timing)
{
    std::ostringstream out;
    out << "scheme,K,L,theta_sq,eer,fmr,attack,sar,fai,tee,tre,var,generations,time_s\n";
    const auto f = [](double v) { return csv::format_double(v); };
    for (const auto& row : report.rows) {
        out << to_string(row.scheme) << ',' << row.k << ',' << row.l << ',';
        if (!row.error.empty()) {
            out << "nan,nan,nan," << to_string(row.attack) << ",nan,nan,nan,nan,nan,nan,\n";
            continue;
        }
        const auto& m = row.metrics;
        out << f(m.theta_squared) << ',' << f(m.eer) << ',' << f(m.fmr) << ',' << to_string(row.attack) << ','
            << f(m.sar) << ',' << f(m.fai) << ',' << f(m.tee) << ',' << f(m.tre) << ',' << f(m.var) << ','
            << f(row.mean_generations) << ',';
        if (include_timing)
            out << f(row.mean_time_s);
        out << '\n';
    }
    return out.str();
}

double spearman(std::span<const double> a, std::span<const double> b)
{
    if (a.size() != b.size() || a.size() < 2)
        throw DimensionError("spearman needs two equally long series of at least two values");
    const auto ra = average_ranks(a);
    const auto rb = average_ranks(b);
    const double ma = ordered_mean(ra);
    const double mb = ordered_mean(rb);
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < ra.size(); ++i) {
        sab += (ra[i] - ma) * (rb[i] - mb);
        saa += (ra[i] - ma) * (ra[i] - ma);
        sbb += (rb[i] - mb) * (rb[i] - mb);
    }
    if (saa == 0.0 || sbb == 0.0)
        return 0.0;
    return sab / std::sqrt(saa * sbb);
}

} // namespace cbattack
