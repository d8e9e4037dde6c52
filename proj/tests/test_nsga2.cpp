#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "morphprint/nsga2.hpp"

using namespace morphprint;

namespace {

Evaluation schaffer(const Eigen::VectorXd& x)
{
    return {{x[0] * x[0], (x[0] - 2.0) * (x[0] - 2.0)}, 0.0, {}};
}

Nsga2Options options(std::size_t pop, std::size_t gens, std::uint64_t seed = 42)
{
    Nsga2Options o;
    o.population = pop;
    o.generations = gens;
    o.seed = seed;
    return o;
}

void check_mutually_non_dominated(const std::vector<Individual>& front)
{
    for (std::size_t i = 0; i < front.size(); ++i) {
        for (std::size_t j = 0; j < front.size(); ++j) {
            if (i != j) {
                CHECK_FALSE(pareto_dominates(front[i].eval.objectives, front[j].eval.objectives));
            }
        }
    }
}

} // namespace

TEST_SUITE("nsga2")
{
    TEST_CASE("dominance relations")
    {
        const std::vector<double> a{1, 2}, b{2, 2}, c{0, 3};
        CHECK(pareto_dominates(a, b));
        CHECK_FALSE(pareto_dominates(b, a));
        CHECK_FALSE(pareto_dominates(a, c));
        CHECK_FALSE(pareto_dominates(a, a));
        const Evaluation feas{{5, 5}, 0.0, {}}, slight{{0, 0}, 0.1, "x"}, worse{{0, 0}, 0.5, "y"};
        CHECK(constrained_dominates(feas, slight));
        CHECK(constrained_dominates(slight, worse));
        CHECK_FALSE(constrained_dominates(worse, slight));
        CHECK_FALSE(constrained_dominates(slight, feas));
    }

    TEST_CASE("sorting and crowding")
    {
        const std::vector<Evaluation> e{
            {{1, 4}, 0, {}}, {{2, 2}, 0, {}}, {{4, 1}, 0, {}}, {{3, 3}, 0, {}}, {{5, 5}, 0, {}}, {{0, 0}, 1, {}}};
        const auto fronts = fast_non_dominated_sort(e);
        REQUIRE(fronts.size() == 4);
        auto sorted = [](std::vector<std::size_t> v) {
            std::sort(v.begin(), v.end());
            return v;
        };
        CHECK(sorted(fronts[0]) == std::vector<std::size_t>{0, 1, 2});
        CHECK(fronts[1] == std::vector<std::size_t>{3});
        CHECK(fronts[2] == std::vector<std::size_t>{4});
        CHECK(fronts[3] == std::vector<std::size_t>{5});
        const std::vector<std::size_t> f0{0, 1, 2};
        const auto cd = crowding_distance(e, f0);
        CHECK(std::isinf(cd[0]));
        CHECK(std::isinf(cd[2]));
        CHECK(cd[1] == doctest::Approx(2.0));
    }

    TEST_CASE("identical objectives put everyone in the first front")
    {
        const std::vector<Evaluation> e(6, Evaluation{{1, 1}, 0, {}});
        const auto fronts = fast_non_dominated_sort(e);
        REQUIRE(fronts.size() == 1);
        CHECK(fronts[0].size() == 6);

        const auto r = nsga2([](const Eigen::VectorXd&) { return Evaluation{{1, 1}, 0, {}}; },
                             Eigen::VectorXd::Zero(2), Eigen::VectorXd::Ones(2), options(12, 5));
        for (const auto& ind : r.population) {
            CHECK(ind.rank == 0);
        }
    }

    TEST_CASE("hypervolume")
    {
        const std::vector<double> ref2{3, 3};
        CHECK(hypervolume({{1, 2}, {2, 1}}, ref2) == doctest::Approx(3.0));
        CHECK(hypervolume({{1, 2}, {2, 1}, {2.5, 2.5}}, ref2) == doctest::Approx(3.0));
        CHECK(hypervolume({{4, 0}}, ref2) == 0.0);
        const std::vector<double> ref3{1, 2, 3};
        CHECK(hypervolume({{0, 0, 0}}, ref3) == doctest::Approx(6.0));
        CHECK(hypervolume({{0, 0, 0}, {0.5, 1, 2}}, ref3) == doctest::Approx(6.0));
        CHECK(hypervolume({{0, 1, 2}, {0.5, 0, 2}}, ref3) == doctest::Approx(1.0 * 1 * 1 + 0.5 * 1 * 1));
    }

    TEST_CASE("convex bi-objective front")
    {
        const Eigen::VectorXd lo = Eigen::VectorXd::Constant(1, -5.0), hi = Eigen::VectorXd::Constant(1, 5.0);
        const auto r = nsga2(schaffer, lo, hi, options(100, 100));
        const auto front = r.front();
        REQUIRE(front.size() >= 50);
        std::vector<double> xs;
        double worst = 0.0;
        for (const auto& ind : front) {
            const double f1 = ind.eval.objectives[0], f2 = ind.eval.objectives[1];
            const double s = std::sqrt(f1) - 2.0;
            worst = std::max(worst, std::abs(f2 - s * s));
            xs.push_back(ind.x[0]);
        }
        CHECK(worst <= 0.05);
        std::sort(xs.begin(), xs.end());
        CHECK(xs.front() <= 0.05);
        CHECK(xs.back() >= 1.95);
        for (std::size_t i = 1; i < xs.size(); ++i) {
            CHECK(xs[i] - xs[i - 1] <= 0.1);
        }
        check_mutually_non_dominated(front);
    }

    TEST_CASE("every front member is mutually non-dominated")
    {
        const auto three = [](const Eigen::VectorXd& x) {
            return Evaluation{{x[0], x[1], 2.0 - x[0] * x[0] - x[1] + 0.3 * std::sin(5 * x[0])}, 0.0, {}};
        };
        for (std::uint64_t seed : {1u, 2u, 3u}) {
            const auto r = nsga2(three, Eigen::VectorXd::Zero(2), Eigen::VectorXd::Ones(2), options(40, 30, seed));
            check_mutually_non_dominated(r.front());
            for (const auto& ind : r.population) {
                CHECK(ind.crowding >= 0.0);
            }
        }
    }

    TEST_CASE("single objective collapses onto the minimizer")
    {
        const auto r = nsga2([](const Eigen::VectorXd& x) { return Evaluation{{(x[0] - 1.0) * (x[0] - 1.0)}, 0, {}}; },
                             Eigen::VectorXd::Constant(1, -4.0), Eigen::VectorXd::Constant(1, 4.0), options(20, 100));
        const auto front = r.front();
        REQUIRE_FALSE(front.empty());
        for (const auto& ind : front) {
            CHECK(std::abs(ind.x[0] - 1.0) <= 1e-3);
        }
    }

    TEST_CASE("best objective values never worsen")
    {
        const Eigen::VectorXd lo = Eigen::VectorXd::Constant(3, -2.0), hi = Eigen::VectorXd::Constant(3, 2.0);
        const auto zdt = [](const Eigen::VectorXd& x) {
            return Evaluation{{x.squaredNorm(), (x.array() - 1.0).square().sum()}, 0.0, {}};
        };
        const auto r = nsga2(zdt, lo, hi, options(24, 40));
        REQUIRE(r.history.size() == 41);
        for (std::size_t g = 1; g < r.history.size(); ++g) {
            for (std::size_t k = 0; k < 2; ++k) {
                CHECK(r.history[g].best[k] <= r.history[g - 1].best[k]);
            }
        }
    }

    TEST_CASE("fixed seed gives an identical result")
    {
        const Eigen::VectorXd lo = Eigen::VectorXd::Constant(1, -5.0), hi = Eigen::VectorXd::Constant(1, 5.0);
        const auto a = nsga2(schaffer, lo, hi, options(20, 15, 9));
        const auto b = nsga2(schaffer, lo, hi, options(20, 15, 9));
        REQUIRE(a.population.size() == b.population.size());
        for (std::size_t i = 0; i < a.population.size(); ++i) {
            CHECK(a.population[i].x == b.population[i].x);
            CHECK(a.population[i].eval.objectives == b.population[i].eval.objectives);
            CHECK(a.population[i].rank == b.population[i].rank);
        }
        for (std::size_t g = 0; g < a.history.size(); ++g) {
            CHECK(a.history[g].hypervolume == b.history[g].hypervolume);
        }
        const auto c = nsga2(schaffer, lo, hi, options(20, 15, 10));
        CHECK(c.population[0].x != a.population[0].x);
    }

    TEST_CASE("constraints: infeasible members never reach the front")
    {
        const auto constrained = [](const Eigen::VectorXd& x) {
            Evaluation e = schaffer(x);
            e.violation = std::max(0.0, 0.5 - x[0]);
            if (e.violation > 0.0) {
                e.reason = "x below 0.5";
            }
            return e;
        };
        const auto r = nsga2(constrained, Eigen::VectorXd::Constant(1, -5.0), Eigen::VectorXd::Constant(1, 5.0),
                             options(40, 30));
        for (const auto& ind : r.front()) {
            CHECK(ind.eval.feasible());
            CHECK(ind.x[0] >= 0.5);
        }
    }

    TEST_CASE("evaluations are cached")
    {
        std::size_t calls = 0;
        const auto counted = [&calls](const Eigen::VectorXd& x) {
            ++calls;
            return Evaluation{{std::round(x[0]), -std::round(x[0])}, 0.0, {}};
        };
        const auto r = nsga2(counted, Eigen::VectorXd::Zero(1), Eigen::VectorXd::Ones(1), options(8, 10));
        CHECK(calls == r.evaluations);
        CHECK(r.evaluations + r.cache_hits == 8 * 11);
    }

    TEST_CASE("invalid setups are rejected")
    {
        const Eigen::VectorXd lo = Eigen::VectorXd::Zero(1), hi = Eigen::VectorXd::Ones(1);
        CHECK_THROWS_AS(nsga2(schaffer, lo, hi, options(7, 1)), Error);
        CHECK_THROWS_AS(nsga2(schaffer, lo, hi, options(2, 1)), Error);
        CHECK_THROWS_AS(nsga2(schaffer, hi, lo + Eigen::VectorXd::Constant(1, -1.0), options(8, 1)), Error);
        const auto never = [](const Eigen::VectorXd&) { return Evaluation{{0.0}, 1.0, "always infeasible"}; };
        CHECK_THROWS_WITH_AS(nsga2(never, lo, hi, options(8, 1)), doctest::Contains("bounds"), Error);
    }
}
