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

#include "cbattack/optimizer.hpp"

#include "cbattack/csv.hpp"
#include "cbattack/errors.hpp"
#include "cbattack/rng.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

namespace cbattack::opt {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

/// Ordering key. Points inside the domain always precede points outside it.
struct Rank {
    bool in_domain = false;
    double value = kInf;
};

bool better(const Rank& a, const Rank& b)
{
    if (a.in_domain != b.in_domain)
        return a.in_domain;
    return a.value < b.value;
}

struct Population {
    Eigen::MatrixXd points;
    Eigen::VectorXd loss;
    Eigen::VectorXd violation;
    Eigen::MatrixXd constraints;
    std::vector<Rank> rank;
};

using RankFn = std::function<void(Population&)>;

class GaEngine {
public:
    GaEngine(const Problem& problem, const GaConfig& config, RandomStream& rng, OptTrace& trace)
        : problem_(problem), config_(config), rng_(rng), trace_(trace),
          max_generations_(config.generation_limit(problem.dimension()))
    {
    }

    /// Fixes the mutation unit from the starting population.
    void set_initial_range(const Eigen::MatrixXd& points)
    {
        initial_range_ = (points.rowwise().maxCoeff() - points.rowwise().minCoeff()).cwiseMax(1e-12);
    }

    struct Run {
        Eigen::VectorXd best_x;
        Rank best_rank;
        double best_loss = kInf;
        double best_violation = kInf;
        Eigen::VectorXd best_constraints;
        bool stalled = false;
    };

    void evaluate(Population& pop, const RankFn& rank_fn)
    {
        const auto n = pop.points.cols();
        const auto m = problem_.constraint_count();
        pop.loss.resize(n);
        pop.constraints.resize(m, n);
        problem_.evaluate(pop.points, pop.loss, pop.constraints);
        pop.violation.resize(n);
        for (Eigen::Index j = 0; j < n; ++j)
            pop.violation[j] = m > 0 ? pop.constraints.col(j).maxCoeff() : std::numeric_limits<double>::quiet_NaN();
        pop.rank.assign(static_cast<std::size_t>(n), Rank{});
        rank_fn(pop);
        for (auto& r : pop.rank) {
            if (!std::isfinite(r.value))
                r = Rank{};
        }
        trace_.evaluations += static_cast<std::size_t>(n);
    }

    /// Runs one GA to termination; \p pop must already be evaluated under
    /// \p rank_fn and is left holding the final generation.
    Run run(Population& pop, const RankFn& rank_fn, std::size_t outer)
    {
        std::vector<Rank> history;
        Run result;
        for (std::size_t gen = 0;; ++gen) {
            const auto order = ranking(pop);
            const auto best = static_cast<Eigen::Index>(order.front());
            result.best_x = pop.points.col(best);
            result.best_rank = pop.rank[order.front()];
            result.best_loss = pop.loss[best];
            result.best_violation = pop.violation[best];
            result.best_constraints = pop.constraints.col(best);
            history.push_back(result.best_rank);

            double sum = 0.0;
            std::size_t finite = 0;
            for (Eigen::Index j = 0; j < pop.loss.size(); ++j) {
                if (std::isfinite(pop.loss[j])) {
                    sum += pop.loss[j];
                    ++finite;
                }
            }
            trace_.records.push_back({trace_.records.size(), outer, result.best_loss, result.best_violation,
                                      finite ? sum / static_cast<double>(finite) : kInf});

            if (gen >= max_generations_)
                break;
            if (gen >= config_.stall_generations && stalled(history, config_.stall_generations)) {
                result.stalled = true;
                break;
            }
            breed(pop, order, trace_.generations);
            evaluate(pop, rank_fn);
            ++trace_.generations;
        }
        return result;
    }

private:
    std::vector<std::size_t> ranking(const Population& pop) const
    {
        std::vector<std::size_t> order(pop.rank.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(),
                         [&pop](std::size_t a, std::size_t b) { return better(pop.rank[a], pop.rank[b]); });
        return order;
    }

    bool stalled(const std::vector<Rank>& history, std::size_t window) const
    {
        const Rank& now = history.back();
        const Rank& then = history[history.size() - 1 - window];
        if (now.in_domain != then.in_domain)
            return false;
        if (!std::isfinite(now.value))
            return true;
        return then.value - now.value <= config_.function_tolerance * std::max(1.0, std::abs(now.value));
    }

    /// Stochastic-uniform sampling on rank-scaled expectations (1/sqrt(rank)).
    std::vector<std::size_t> select(const std::vector<std::size_t>& order, std::size_t count)
    {
        std::vector<double> cumulative(order.size());
        double total = 0.0;
        for (std::size_t r = 0; r < order.size(); ++r) {
            total += 1.0 / std::sqrt(static_cast<double>(r + 1));
            cumulative[r] = total;
        }
        std::vector<std::size_t> parents;
        parents.reserve(count);
        const double step = total / static_cast<double>(count);
        double pointer = rng_.uniform() * step;
        std::size_t r = 0;
        for (std::size_t i = 0; i < count; ++i) {
            while (r + 1 < order.size() && cumulative[r] <= pointer)
                ++r;
            parents.push_back(order[r]);
            pointer += step;
        }
        for (std::size_t i = parents.size(); i > 1; --i)
            std::swap(parents[i - 1], parents[rng_.below(i)]);
        return parents;
    }

    void breed(Population& pop, const std::vector<std::size_t>& order, std::size_t gen)
    {
        const auto n = order.size();
        const auto dim = pop.points.rows();
        const std::size_t n_elite = config_.elite_count();
        const auto n_cross = static_cast<std::size_t>(std::lround(config_.crossover_fraction * double(n - n_elite)));
        const std::size_t n_mutate = n - n_elite - n_cross;
        const auto parents = select(order, 2 * n_cross + n_mutate);

        // Mutation step per coordinate: the configured scale times the initial
        // population's range, shrinking linearly with the generation count of the
        // whole run (cumulative across ALGA subproblems).
        const double shrink = std::max(0.0, 1.0 - double(gen) / double(max_generations_));
        const Eigen::VectorXd step = config_.mutation_scale * shrink * initial_range_;

        Eigen::MatrixXd next(dim, static_cast<Eigen::Index>(n));
        Eigen::Index col = 0;
        for (std::size_t i = 0; i < n_elite; ++i)
            next.col(col++) = pop.points.col(static_cast<Eigen::Index>(order[i]));
        std::size_t p = 0;
        for (std::size_t i = 0; i < n_cross; ++i) {
            const auto a = static_cast<Eigen::Index>(parents[p++]);
            const auto b = static_cast<Eigen::Index>(parents[p++]);
            for (Eigen::Index d = 0; d < dim; ++d)
                next(d, col) = rng_.coin() ? pop.points(d, a) : pop.points(d, b);
            ++col;
        }
        for (std::size_t i = 0; i < n_mutate; ++i) {
            const auto a = static_cast<Eigen::Index>(parents[p++]);
            for (Eigen::Index d = 0; d < dim; ++d)
                next(d, col) = pop.points(d, a) + step[d] * rng_.normal();
            ++col;
        }
        problem_.repair(next);
        pop.points.swap(next);
    }

    const Problem& problem_;
    const GaConfig& config_;
    RandomStream& rng_;
    OptTrace& trace_;
    std::size_t max_generations_;
    Eigen::VectorXd initial_range_;
};

Eigen::MatrixXd initial_population(Eigen::Index dim, std::size_t size, RandomStream& rng,
                                   std::span<const Eigen::VectorXd> seeds)
{
    Eigen::MatrixXd points(dim, static_cast<Eigen::Index>(size));
    for (Eigen::Index j = 0; j < points.cols(); ++j) {
        if (static_cast<std::size_t>(j) < seeds.size()) {
            if (seeds[static_cast<std::size_t>(j)].size() != dim)
                throw DimensionError("seed individual has the wrong dimension");
            points.col(j) = seeds[static_cast<std::size_t>(j)];
            continue;
        }
        for (Eigen::Index d = 0; d < dim; ++d)
            points(d, j) = rng.normal();
    }
    return points;
}

double seconds_since(std::chrono::steady_clock::time_point start)
{
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

} // namespace

FunctionProblem::FunctionProblem(Objective objective, Eigen::Index dim) : objective_(std::move(objective)), dim_(dim)
{
    if (dim_ < 1)
        throw ConfigError("problem dimension must be positive");
}

FunctionProblem::FunctionProblem(Objective objective, ConstraintFunction constraints, Eigen::Index dim)
    : objective_(std::move(objective)), constraints_(std::move(constraints)), dim_(dim)
{
    if (dim_ < 1)
        throw ConfigError("problem dimension must be positive");
    n_constraints_ = constraints_(Eigen::VectorXd::Zero(dim_)).size();
    if (n_constraints_ < 1)
        throw ConfigError("constraint function returned no entries");
}

void FunctionProblem::evaluate(const Eigen::MatrixXd& points, Eigen::VectorXd& loss, Eigen::MatrixXd& constraints) const
{
    Eigen::VectorXd x(dim_);
    for (Eigen::Index j = 0; j < points.cols(); ++j) {
        x = points.col(j);
        loss[j] = objective_(x);
        if (n_constraints_ > 0) {
            const Eigen::VectorXd c = constraints_(x);
            if (c.size() != n_constraints_)
                throw DimensionError("constraint function changed its output length");
            constraints.col(j) = c;
        }
    }
}

std::size_t GaConfig::elite_count() const
{
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(elite_fraction * double(population_size))));
}

std::size_t GaConfig::generation_limit(Eigen::Index dim) const
{
    return max_generations > 0 ? max_generations : 100 * static_cast<std::size_t>(std::max<Eigen::Index>(1, dim));
}

void GaConfig::validate() const
{
    if (population_size < 4)
        throw ConfigError("GA population_size must be at least 4");
    if (!(elite_fraction >= 0.0 && elite_fraction < 1.0))
        throw ConfigError("GA elite_fraction must lie in [0, 1)");
    if (elite_count() >= population_size)
        throw ConfigError("GA elite count must leave room for offspring");
    if (!(crossover_fraction >= 0.0 && crossover_fraction <= 1.0))
        throw ConfigError("GA crossover_fraction must lie in [0, 1]");
    if (!(mutation_scale > 0.0) || !std::isfinite(mutation_scale))
        throw ConfigError("GA mutation_scale must be positive");
    if (!(function_tolerance >= 0.0))
        throw ConfigError("GA function_tolerance must be >= 0");
    if (stall_generations < 1)
        throw ConfigError("GA stall_generations must be at least 1");
}

void AlgaConfig::validate() const
{
    ga.validate();
    if (!(tau1 >= 0.0) || !(tau2 >= 0.0))
        throw ConfigError("ALGA tolerances tau1, tau2 must be >= 0");
    if (!(initial_penalty > 0.0) || !(initial_multiplier > 0.0))
        throw ConfigError("ALGA initial_penalty and initial_multiplier must be positive");
    if (!(penalty_growth > 1.0))
        throw ConfigError("ALGA penalty_growth must exceed 1");
    if (!(initial_feasibility_tolerance > 0.0))
        throw ConfigError("ALGA initial_feasibility_tolerance must be positive");
    if (max_outer_iterations < 1)
        throw ConfigError("ALGA max_outer_iterations must be at least 1");
}

OptResult ga_minimize(const Problem& problem, const GaConfig& config, std::span<const Eigen::VectorXd> seeds)
{
    config.validate();
    const auto start = std::chrono::steady_clock::now();
    RandomStream rng(config.seed);
    OptResult result;
    GaEngine engine(problem, config, rng, result.trace);

    Population pop;
    pop.points = initial_population(problem.dimension(), config.population_size, rng, seeds);
    problem.repair(pop.points);
    engine.set_initial_range(pop.points);
    const RankFn by_loss = [](Population& p) {
        for (Eigen::Index j = 0; j < p.loss.size(); ++j)
            p.rank[static_cast<std::size_t>(j)] = Rank{true, p.loss[j]};
    };
    engine.evaluate(pop, by_loss);
    const auto run = engine.run(pop, by_loss, 0);

    result.x = run.best_x;
    result.loss = run.best_loss;
    result.violation = run.best_violation;
    result.converged = run.stalled;
    result.trace.wall_time_s = seconds_since(start);
    return result;
}

OptResult ga_minimize(const Objective& objective, Eigen::Index dim, const GaConfig& config)
{
    return ga_minimize(FunctionProblem(objective, dim), config);
}

OptResult alga_minimize(const Problem& problem, const AlgaConfig& config)
{
    config.validate();
    const auto start = std::chrono::steady_clock::now();
    const auto m = problem.constraint_count();
    RandomStream rng(config.ga.seed);
    OptResult result;
    GaEngine engine(problem, config.ga, rng, result.trace);

    Eigen::VectorXd lambda = Eigen::VectorXd::Constant(m, config.initial_multiplier);
    double rho = config.initial_penalty;
    double eta = std::max(config.tau2, config.initial_feasibility_tolerance);

    struct Candidate {
        Eigen::VectorXd x;
        double loss = kInf;
        double violation = kInf;
    } best_feasible;

    Eigen::VectorXd shift;
    const RankFn barrier = [&](Population& p) {
        for (Eigen::Index j = 0; j < p.points.cols(); ++j) {
            const auto c = p.constraints.col(j);
            if (std::isfinite(p.loss[j]) && p.violation[j] <= config.tau2 && p.loss[j] < best_feasible.loss) {
                best_feasible = {p.points.col(j), p.loss[j], p.violation[j]};
            }
            const Eigen::ArrayXd slack = shift.array() - c.array();
            if (m > 0 && !(slack.minCoeff() > 0.0)) {
                p.rank[static_cast<std::size_t>(j)] = Rank{false, (-slack).max(0.0).sum()};
                continue;
            }
            const double penalty = m > 0 ? (lambda.array() * shift.array() * slack.log()).sum() : 0.0;
            p.rank[static_cast<std::size_t>(j)] = Rank{true, p.loss[j] - penalty};
        }
    };

    Population pop;
    pop.points = initial_population(problem.dimension(), config.ga.population_size, rng, {});
    problem.repair(pop.points);
    engine.set_initial_range(pop.points);

    double previous_loss = std::numeric_limits<double>::quiet_NaN();
    GaEngine::Run last;
    for (std::size_t outer = 1; outer <= config.max_outer_iterations; ++outer) {
        shift = rho * lambda;
        // Ranks depend on the subproblem, so the carried population is re-scored.
        engine.evaluate(pop, barrier);
        last = engine.run(pop, barrier, outer);
        result.trace.outer_iterations = outer;

        const double loss = last.best_loss;
        const double v = last.best_violation;
        if (outer > 1 && std::abs(previous_loss - loss) <= config.tau1 && v <= config.tau2) {
            result.converged = true;
            break;
        }
        const Eigen::ArrayXd slack = shift.array() - last.best_constraints.array();
        if (v <= eta && (m == 0 || slack.minCoeff() > 0.0)) {
            lambda = (lambda.array() * shift.array() / slack).max(1e-100).min(1e100).matrix();
            eta = std::max(config.tau2, eta * 0.1);
        } else {
            rho /= config.penalty_growth;
        }
        previous_loss = loss;
    }

    if (result.converged || !std::isfinite(best_feasible.loss)) {
        result.x = last.best_x;
        result.loss = last.best_loss;
        result.violation = last.best_violation;
    } else {
        result.x = best_feasible.x;
        result.loss = best_feasible.loss;
        result.violation = best_feasible.violation;
    }
    result.trace.wall_time_s = seconds_since(start);
    return result;
}

OptResult alga_minimize(const Objective& objective, const ConstraintFunction& constraints, Eigen::Index dim,
                        const AlgaConfig& config)
{
    return alga_minimize(FunctionProblem(objective, constraints, dim), config);
}

void write_trace_csv(const OptTrace& trace, const std::filesystem::path& path)
{
    std::ofstream out(path);
    if (!out)
        throw Error("cannot write " + path.string());
    out << "generation,best_loss,best_violation,mean_loss\n";
    for (const auto& r : trace.records) {
        out << r.generation << ',' << csv::format_double(r.best_loss) << ',' << csv::format_double(r.best_violation)
            << ',' << csv::format_double(r.mean_loss) << '\n';
    }
}

} // namespace cbattack::opt
