#include "morphprint/nsga2.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <numeric>
#include <random>

namespace morphprint {

bool pareto_dominates(std::span<const double> a, std::span<const double> b)
{
    if (a.size() != b.size()) {
        throw Error("pareto_dominates: objective vectors differ in length");
    }
    bool strictly = false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i] > b[i]) {
            return false;
        }
        strictly = strictly || a[i] < b[i];
    }
    return strictly;
}

bool constrained_dominates(const Evaluation& a, const Evaluation& b)
{
    if (a.feasible() && !b.feasible()) {
        return true;
    }
    if (!a.feasible()) {
        return !b.feasible() && a.violation < b.violation;
    }
    return pareto_dominates(a.objectives, b.objectives);
}

std::vector<std::vector<std::size_t>> fast_non_dominated_sort(std::span<const Evaluation> evals)
{
    const std::size_t n = evals.size();
    std::vector<std::vector<std::size_t>> dominated(n);
    std::vector<std::size_t> count(n, 0);
    std::vector<std::vector<std::size_t>> fronts(1);
    for (std::size_t p = 0; p < n; ++p) {
        for (std::size_t q = p + 1; q < n; ++q) {
            if (constrained_dominates(evals[p], evals[q])) {
                dominated[p].push_back(q);
                ++count[q];
            } else if (constrained_dominates(evals[q], evals[p])) {
                dominated[q].push_back(p);
                ++count[p];
            }
        }
    }
    for (std::size_t p = 0; p < n; ++p) {
        if (count[p] == 0) {
            fronts[0].push_back(p);
        }
    }
    for (std::size_t i = 0; !fronts[i].empty(); ++i) {
        std::vector<std::size_t> next;
        for (auto p : fronts[i]) {
            for (auto q : dominated[p]) {
                if (--count[q] == 0) {
                    next.push_back(q);
                }
            }
        }
        std::sort(next.begin(), next.end());
        fronts.push_back(std::move(next));
    }
    fronts.pop_back();
    return fronts;
}

std::vector<double> crowding_distance(std::span<const Evaluation> evals, std::span<const std::size_t> front)
{
    const std::size_t n = front.size();
    std::vector<double> dist(n, 0.0);
    if (n == 0) {
        return dist;
    }
    for (auto i : front) {
        if (!evals[i].feasible()) {
            return dist;
        }
    }
    const std::size_t m = evals[front[0]].objectives.size();
    std::vector<std::size_t> order(n);
    for (std::size_t k = 0; k < m; ++k) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            return evals[front[a]].objectives[k] < evals[front[b]].objectives[k];
        });
        const double lo = evals[front[order.front()]].objectives[k];
        const double hi = evals[front[order.back()]].objectives[k];
        dist[order.front()] = std::numeric_limits<double>::infinity();
        dist[order.back()] = std::numeric_limits<double>::infinity();
        if (!(hi > lo)) {
            continue;
        }
        for (std::size_t i = 1; i + 1 < n; ++i) {
            const double gap = evals[front[order[i + 1]]].objectives[k] - evals[front[order[i - 1]]].objectives[k];
            dist[order[i]] += gap / (hi - lo);
        }
    }
    return dist;
}

namespace {

double hypervolume_2d(std::vector<std::array<double, 2>> pts, double r0, double r1)
{
    std::sort(pts.begin(), pts.end());
    double hv = 0.0;
    double best_y = r1;
    for (const auto& p : pts) {
        if (p[1] < best_y) {
            hv += (r0 - p[0]) * (best_y - p[1]);
            best_y = p[1];
        }
    }
    return hv;
}

} // namespace

double hypervolume(const std::vector<std::vector<double>>& points, std::span<const double> ref)
{
    const std::size_t m = ref.size();
    if (m != 2 && m != 3) {
        throw Error("hypervolume: only 2 or 3 objectives are supported");
    }
    std::vector<std::vector<double>> pts;
    for (const auto& p : points) {
        if (p.size() != m) {
            throw Error("hypervolume: point dimension does not match the reference");
        }
        bool inside = true;
        for (std::size_t k = 0; k < m; ++k) {
            inside = inside && p[k] < ref[k];
        }
        if (inside) {
            pts.push_back(p);
        }
    }
    if (m == 2) {
        std::vector<std::array<double, 2>> p2;
        for (const auto& p : pts) {
            p2.push_back({p[0], p[1]});
        }
        return hypervolume_2d(std::move(p2), ref[0], ref[1]);
    }
    // Sweep along the third objective, accumulating 2D slices.
    std::sort(pts.begin(), pts.end(), [](const auto& a, const auto& b) { return a[2] < b[2]; });
    double hv = 0.0;
    std::vector<std::array<double, 2>> active;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        active.push_back({pts[i][0], pts[i][1]});
        const double z_next = i + 1 < pts.size() ? pts[i + 1][2] : ref[2];
        if (z_next > pts[i][2]) {
            hv += hypervolume_2d(active, ref[0], ref[1]) * (z_next - pts[i][2]);
        }
    }
    return hv;
}

std::vector<Individual> ParetoFront::front() const
{
    std::vector<Individual> out;
    for (const auto& ind : population) {
        if (ind.rank == 0 && ind.eval.feasible()) {
            out.push_back(ind);
        }
    }
    return out;
}

namespace {

class Engine {
public:
    Engine(const Evaluator& f, const Eigen::VectorXd& lo, const Eigen::VectorXd& hi, const Nsga2Options& opt)
        : f_(f), lo_(lo), hi_(hi), opt_(opt), rng_(opt.seed)
    {
        pm_ = opt.mutation_probability > 0.0 ? opt.mutation_probability : 1.0 / static_cast<double>(lo.size());
    }

    Evaluation evaluate(const Eigen::VectorXd& x, ParetoFront& out)
    {
        std::vector<long long> key;
        if (opt_.cache) {
            key.reserve(static_cast<std::size_t>(x.size()));
            for (Eigen::Index i = 0; i < x.size(); ++i) {
                key.push_back(std::llround(x[i] * 1e9));
            }
            auto it = cache_.find(key);
            if (it != cache_.end()) {
                ++out.cache_hits;
                return it->second;
            }
        }
        Evaluation e = f_(x);
        ++out.evaluations;
        if (opt_.cache) {
            cache_.emplace(std::move(key), e);
        }
        return e;
    }

    Eigen::VectorXd random_point()
    {
        Eigen::VectorXd x(lo_.size());
        for (Eigen::Index i = 0; i < x.size(); ++i) {
            x[i] = lo_[i] + uni_(rng_) * (hi_[i] - lo_[i]);
        }
        return x;
    }

    const Individual& tournament(const std::vector<Individual>& pop)
    {
        std::uniform_int_distribution<std::size_t> pick(0, pop.size() - 1);
        const Individual& a = pop[pick(rng_)];
        const Individual& b = pop[pick(rng_)];
        if (a.rank != b.rank) {
            return a.rank < b.rank ? a : b;
        }
        if (a.crowding != b.crowding) {
            return a.crowding > b.crowding ? a : b;
        }
        return uni_(rng_) < 0.5 ? a : b;
    }

    void crossover(Eigen::VectorXd& c1, Eigen::VectorXd& c2)
    {
        if (uni_(rng_) > opt_.crossover_probability) {
            return;
        }
        const double eta = opt_.eta_crossover;
        for (Eigen::Index i = 0; i < c1.size(); ++i) {
            if (uni_(rng_) > 0.5 || std::abs(c1[i] - c2[i]) <= 1e-14 || hi_[i] <= lo_[i]) {
                continue;
            }
            const double y1 = std::min(c1[i], c2[i]), y2 = std::max(c1[i], c2[i]);
            const double yl = lo_[i], yu = hi_[i];
            const double r = uni_(rng_);
            auto betaq = [&](double beta) {
                const double alpha = 2.0 - std::pow(beta, -(eta + 1.0));
                return r <= 1.0 / alpha ? std::pow(r * alpha, 1.0 / (eta + 1.0))
                                        : std::pow(1.0 / (2.0 - r * alpha), 1.0 / (eta + 1.0));
            };
            double v1 = 0.5 * ((y1 + y2) - betaq(1.0 + 2.0 * (y1 - yl) / (y2 - y1)) * (y2 - y1));
            double v2 = 0.5 * ((y1 + y2) + betaq(1.0 + 2.0 * (yu - y2) / (y2 - y1)) * (y2 - y1));
            v1 = std::clamp(v1, yl, yu);
            v2 = std::clamp(v2, yl, yu);
            if (uni_(rng_) < 0.5) {
                std::swap(v1, v2);
            }
            c1[i] = v1;
            c2[i] = v2;
        }
    }

    void mutate(Eigen::VectorXd& x)
    {
        const double eta = opt_.eta_mutation;
        for (Eigen::Index i = 0; i < x.size(); ++i) {
            if (uni_(rng_) > pm_ || hi_[i] <= lo_[i]) {
                continue;
            }
            const double yl = lo_[i], yu = hi_[i], y = x[i];
            const double d1 = (y - yl) / (yu - yl), d2 = (yu - y) / (yu - yl);
            const double r = uni_(rng_);
            const double pw = 1.0 / (eta + 1.0);
            double dq = 0.0;
            if (r < 0.5) {
                const double val = 2.0 * r + (1.0 - 2.0 * r) * std::pow(1.0 - d1, eta + 1.0);
                dq = std::pow(val, pw) - 1.0;
            } else {
                const double val = 2.0 * (1.0 - r) + 2.0 * (r - 0.5) * std::pow(1.0 - d2, eta + 1.0);
                dq = 1.0 - std::pow(val, pw);
            }
            x[i] = std::clamp(y + dq * (yu - yl), yl, yu);
        }
    }

private:
    const Evaluator& f_;
    Eigen::VectorXd lo_, hi_;
    Nsga2Options opt_;
    std::mt19937_64 rng_;
    std::uniform_real_distribution<double> uni_{0.0, 1.0};
    double pm_ = 0.0;
    std::map<std::vector<long long>, Evaluation> cache_;
};

void assign_ranks(std::vector<Individual>& pop)
{
    std::vector<Evaluation> evals;
    for (const auto& ind : pop) {
        evals.push_back(ind.eval);
    }
    const auto fronts = fast_non_dominated_sort(evals);
    for (std::size_t r = 0; r < fronts.size(); ++r) {
        const auto cd = crowding_distance(evals, fronts[r]);
        for (std::size_t i = 0; i < fronts[r].size(); ++i) {
            pop[fronts[r][i]].rank = r;
            pop[fronts[r][i]].crowding = cd[i];
        }
    }
}

GenerationLog log_generation(std::size_t g, const std::vector<Individual>& pop, std::span<const double> ref)
{
    GenerationLog log;
    log.generation = g;
    std::vector<std::vector<double>> front;
    for (const auto& ind : pop) {
        if (!ind.eval.feasible()) {
            continue;
        }
        ++log.feasible;
        if (log.best.empty()) {
            log.best = ind.eval.objectives;
        }
        for (std::size_t k = 0; k < log.best.size(); ++k) {
            log.best[k] = std::min(log.best[k], ind.eval.objectives[k]);
        }
        if (ind.rank == 0) {
            front.push_back(ind.eval.objectives);
        }
    }
    log.front_size = front.size();
    if (ref.size() == 2 || ref.size() == 3) {
        log.hypervolume = hypervolume(front, ref);
    }
    return log;
}

} // namespace

ParetoFront nsga2(const Evaluator& evaluate, const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
                  const Nsga2Options& options)
{
    if (options.population < 4 || options.population % 2 != 0) {
        throw Error("nsga2: population must be even and at least 4");
    }
    if (lower.size() == 0 || lower.size() != upper.size()) {
        throw Error("nsga2: bounds must be non-empty and of equal length");
    }
    for (Eigen::Index i = 0; i < lower.size(); ++i) {
        if (!(lower[i] <= upper[i]) || !std::isfinite(lower[i]) || !std::isfinite(upper[i])) {
            throw Error("nsga2: invalid bounds for variable " + std::to_string(i));
        }
    }
    Engine engine(evaluate, lower, upper, options);
    ParetoFront out;
    std::vector<Individual> pop;
    for (std::size_t i = 0; i < options.population; ++i) {
        Individual ind;
        ind.x = engine.random_point();
        ind.eval = engine.evaluate(ind.x, out);
        pop.push_back(std::move(ind));
    }
    const auto feasible = std::count_if(pop.begin(), pop.end(), [](const Individual& i) { return i.eval.feasible(); });
    if (feasible == 0) {
        throw Error("nsga2: no feasible individual in the initial population; review the variable bounds (first "
                    "reason: " +
                    pop.front().eval.reason + ")");
    }
    std::size_t m = 0;
    for (const auto& ind : pop) {
        if (ind.eval.feasible()) {
            m = ind.eval.objectives.size();
            break;
        }
    }
    for (const auto& ind : pop) {
        if (ind.eval.feasible() && ind.eval.objectives.size() != m) {
            throw Error("nsga2: evaluator returned inconsistent objective counts");
        }
    }
    out.reference = options.reference;
    if (out.reference.empty() && (m == 2 || m == 3)) {
        out.reference.assign(m, -std::numeric_limits<double>::infinity());
        for (const auto& ind : pop) {
            if (ind.eval.feasible()) {
                for (std::size_t k = 0; k < m; ++k) {
                    out.reference[k] = std::max(out.reference[k], ind.eval.objectives[k]);
                }
            }
        }
        for (auto& r : out.reference) {
            r = r + 0.1 * std::abs(r) + 1e-12;
        }
    }
    assign_ranks(pop);
    out.history.push_back(log_generation(0, pop, out.reference));

    for (std::size_t g = 1; g <= options.generations; ++g) {
        std::vector<Individual> merged = pop;
        while (merged.size() < 2 * options.population) {
            Eigen::VectorXd c1 = engine.tournament(pop).x;
            Eigen::VectorXd c2 = engine.tournament(pop).x;
            engine.crossover(c1, c2);
            engine.mutate(c1);
            engine.mutate(c2);
            for (auto* c : {&c1, &c2}) {
                Individual ind;
                ind.x = *c;
                ind.eval = engine.evaluate(ind.x, out);
                merged.push_back(std::move(ind));
            }
        }
        std::vector<Evaluation> evals;
        for (const auto& ind : merged) {
            evals.push_back(ind.eval);
        }
        const auto fronts = fast_non_dominated_sort(evals);
        std::vector<Individual> next;
        for (const auto& front : fronts) {
            if (next.size() + front.size() <= options.population) {
                for (auto i : front) {
                    next.push_back(merged[i]);
                }
                continue;
            }
            const auto cd = crowding_distance(evals, front);
            std::vector<std::size_t> order(front.size());
            std::iota(order.begin(), order.end(), std::size_t{0});
            std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return cd[a] > cd[b]; });
            for (std::size_t k = 0; next.size() < options.population; ++k) {
                next.push_back(merged[front[order[k]]]);
            }
            break;
        }
        pop = std::move(next);
        assign_ranks(pop);
        out.history.push_back(log_generation(g, pop, out.reference));
    }
    out.population = std::move(pop);
    return out;
}

} // namespace morphprint
