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

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

namespace cbattack::opt {

/// A (possibly constrained) minimization problem evaluated a population at a
/// time. Constraints are feasible when <= 0.
class Problem {
public:
    virtual ~Problem() = default;

    virtual Eigen::Index dimension() const = 0;
    virtual Eigen::Index constraint_count() const { return 0; }

    /// Column j of \p points is one candidate. Implementations write loss[j]
    /// and, when constraint_count() > 0, constraints.col(j). Both outputs are
    /// presized by the caller.
    virtual void evaluate(const Eigen::MatrixXd& points, Eigen::VectorXd& loss, Eigen::MatrixXd& constraints) const = 0;

    /// Maps freshly created individuals back into the search domain. Applied
    /// to the initial population and to every new generation.
    virtual void repair(Eigen::MatrixXd& /*points*/) const {}
};

using Objective = std::function<double(const Eigen::VectorXd&)>;
using ConstraintFunction = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

/// Adapts point-wise callables to Problem. The constraint function must return
/// the same number of entries for every input.
class FunctionProblem final : public Problem {
public:
    FunctionProblem(Objective objective, Eigen::Index dim);
    FunctionProblem(Objective objective, ConstraintFunction constraints, Eigen::Index dim);

    Eigen::Index dimension() const override { return dim_; }
    Eigen::Index constraint_count() const override { return n_constraints_; }
    void evaluate(const Eigen::MatrixXd& points, Eigen::VectorXd& loss, Eigen::MatrixXd& constraints) const override;

private:
    Objective objective_;
    ConstraintFunction constraints_;
    Eigen::Index dim_;
    Eigen::Index n_constraints_ = 0;
};

struct GaConfig {
    std::size_t population_size = 200;
    /// 0 selects 100 * dimension.
    std::size_t max_generations = 0;
    double elite_fraction = 0.05;
    double crossover_fraction = 0.8;
    double mutation_scale = 1.0;
    std::size_t stall_generations = 50;
    double function_tolerance = 1e-6;
    std::uint64_t seed = 0;

    std::size_t elite_count() const;
    std::size_t generation_limit(Eigen::Index dim) const;
    /// Throws ConfigError when an invariant is broken.
    void validate() const;
};

struct AlgaConfig {
    GaConfig ga;
    double tau1 = 1e-6;
    double tau2 = 1e-3;
    double initial_penalty = 10.0;
    double penalty_growth = 100.0;
    double initial_multiplier = 1.0;
    double initial_feasibility_tolerance = 0.1258925;
    std::size_t max_outer_iterations = 30;

    void validate() const;
};

struct GenerationRecord {
    /// Sequence number of the record within the run.
    std::size_t generation = 0;
    std::size_t outer_iteration = 0;
    double best_loss = 0.0;
    double best_violation = 0.0;
    double mean_loss = 0.0;
};

struct OptTrace {
    std::vector<GenerationRecord> records;
    /// Inner GA generations over the whole run.
    std::size_t generations = 0;
    /// Lagrangian-barrier subproblems solved (0 for a plain GA run).
    std::size_t outer_iterations = 0;
    std::size_t evaluations = 0;
    double wall_time_s = 0.0;
};

struct OptResult {
    Eigen::VectorXd x;
    double loss = 0.0;
    /// Max constraint value at x; NaN for unconstrained problems.
    double violation = 0.0;
    /// GA: stopped on stall rather than the generation cap.
    /// ALGA: the two-tolerance stopping rule was met.
    bool converged = false;
    OptTrace trace;
};

/// Real-coded GA: rank scaling, stochastic-uniform selection, elitism,
/// scattered crossover and Gaussian mutation. The mutation step of coordinate
/// d is mutation_scale * (1 - gen / max_generations) * (range of coordinate d
/// in the initial population). Under ALGA gen counts generations across all
/// subproblems. Minimizes the problem's loss;
/// constraints, if any, are only recorded. \p seeds are copied into the
/// initial population ahead of the Gaussian draws.
OptResult ga_minimize(const Problem& problem, const GaConfig& config, std::span<const Eigen::VectorXd> seeds = {});
OptResult ga_minimize(const Objective& objective, Eigen::Index dim, const GaConfig& config);

/// Augmented Lagrangian GA. Each outer iteration minimizes the Lagrangian
/// barrier
///     LB(x) = loss(x) - sum_i lambda_i s_i log(s_i - c_i(x)),  s_i = rho lambda_i
/// with the inner GA, warm-started from the previous population. Points outside
/// the barrier domain rank behind every point inside it, ordered by
/// sum_i max(0, c_i - s_i). After a subproblem the multipliers are updated
/// (lambda_i <- lambda_i s_i / (s_i - c_i)) when the violation is within the
/// current feasibility tolerance, which then tightens tenfold; otherwise rho
/// shrinks by penalty_growth. Stops when |loss_{n-1} - loss_n| <= tau1 and
/// violation <= tau2.
OptResult alga_minimize(const Problem& problem, const AlgaConfig& config);
OptResult alga_minimize(const Objective& objective, const ConstraintFunction& constraints, Eigen::Index dim,
                        const AlgaConfig& config);

/// "generation,best_loss,best_violation,mean_loss"
void write_trace_csv(const OptTrace& trace, const std::filesystem::path& path);

} // namespace cbattack::opt
