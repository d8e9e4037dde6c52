#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "morphprint/mesh.hpp"

namespace morphprint {

struct Evaluation {
    std::vector<double> objectives;
    /// Total constraint violation; 0 means feasible.
    double violation = 0.0;
    std::string reason;

    bool feasible() const { return violation <= 0.0; }
};

using Evaluator = std::function<Evaluation(const Eigen::VectorXd&)>;

/// Pareto dominance on objectives (all minimized).
bool pareto_dominates(std::span<const double> a, std::span<const double> b);
/// Feasible beats infeasible, smaller violation beats larger, otherwise Pareto.
bool constrained_dominates(const Evaluation& a, const Evaluation& b);

/// Fronts of indices, best first.
std::vector<std::vector<std::size_t>> fast_non_dominated_sort(std::span<const Evaluation> evals);
/// Crowding distance of each member of `front` (same order); boundary
/// members get +infinity.
std::vector<double> crowding_distance(std::span<const Evaluation> evals, std::span<const std::size_t> front);

/// Dominated hypervolume of a minimization front w.r.t. a reference point
/// (2 or 3 objectives). Points not strictly better than the reference are ignored.
double hypervolume(const std::vector<std::vector<double>>& points, std::span<const double> reference);

struct Nsga2Options {
    std::size_t population = 100;
    std::size_t generations = 100;
    double crossover_probability = 0.9;
    double eta_crossover = 15.0;
    double eta_mutation = 20.0;
    /// Per-variable mutation probability; <= 0 selects 1/n.
    double mutation_probability = 0.0;
    std::uint64_t seed = 42;
    /// Reuse evaluations of decision vectors equal on a 1e-9 grid.
    bool cache = true;
    /// Hypervolume reference; empty derives one from the initial population.
    std::vector<double> reference;
};

struct Individual {
    Eigen::VectorXd x;
    Evaluation eval;
    std::size_t rank = 0;
    double crowding = 0.0;
};

struct GenerationLog {
    std::size_t generation = 0;
    /// Per objective, the smallest value among feasible members.
    std::vector<double> best;
    std::size_t feasible = 0;
    std::size_t front_size = 0;
    double hypervolume = 0.0;
};

struct ParetoFront {
    std::vector<Individual> population;
    std::vector<GenerationLog> history;
    std::vector<double> reference;
    std::size_t evaluations = 0;
    std::size_t cache_hits = 0;

    /// Rank-0 feasible members.
    std::vector<Individual> front() const;
};

/// Throws Error for an odd or too small population, inconsistent bounds, or
/// an initial population with no feasible member.
ParetoFront nsga2(const Evaluator& evaluate, const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
                  const Nsga2Options& options = {});

} // namespace morphprint
