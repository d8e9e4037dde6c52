#include "morphprint/ellipsoid.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include <Eigen/Eigenvalues>
#include <Eigen/LU>
#include <Eigen/SVD>

namespace morphprint {

Mat3 rotation_x(double a)
{
    Mat3 r;
    r << 1, 0, 0, 0, std::cos(a), -std::sin(a), 0, std::sin(a), std::cos(a);
    return r;
}

Mat3 rotation_y(double a)
{
    Mat3 r;
    r << std::cos(a), 0, std::sin(a), 0, 1, 0, -std::sin(a), 0, std::cos(a);
    return r;
}

Mat3 rotation_z(double a)
{
    Mat3 r;
    r << std::cos(a), -std::sin(a), 0, std::sin(a), std::cos(a), 0, 0, 0, 1;
    return r;
}

Mat3 rotation_zyx(const EulerAngles& e) { return rotation_z(e.z) * rotation_y(e.y) * rotation_x(e.x); }

EulerAngles euler_zyx(const Mat3& r)
{
    EulerAngles e;
    const double s = std::clamp(-r(2, 0), -1.0, 1.0);
    e.y = std::asin(s);
    if (std::abs(r(2, 0)) < 1.0 - 1e-12) {
        e.x = std::atan2(r(2, 1), r(2, 2));
        e.z = std::atan2(r(1, 0), r(0, 0));
    } else if (r(2, 0) < 0.0) {
        e.y = std::numbers::pi / 2.0;
        e.x = std::atan2(r(0, 1), r(1, 1));
        e.z = 0.0;
    } else {
        e.y = -std::numbers::pi / 2.0;
        e.x = std::atan2(-r(0, 1), r(1, 1));
        e.z = 0.0;
    }
    return e;
}

namespace {

// Fills the missing row `m` of a rotation from the two others.
void complete_rotation(Mat3& r, int m)
{
    const Vec3 a = r.row((m + 1) % 3).transpose();
    const Vec3 b = r.row((m + 2) % 3).transpose();
    r.row(m) = a.cross(b).normalized().transpose();
}

} // namespace

EllipsoidAxes decompose(const Mat3& shape)
{
    const double scale = shape.cwiseAbs().maxCoeff();
    if (!(scale > 0.0) || (shape - shape.transpose()).cwiseAbs().maxCoeff() > 1e-9 * scale) {
        throw Error("decompose: shape matrix must be symmetric and nonzero");
    }
    Eigen::SelfAdjointEigenSolver<Mat3> es(0.5 * (shape + shape.transpose()));
    const Vec3 lambda = es.eigenvalues();
    const Mat3 vecs = es.eigenvectors();
    if (!(lambda.minCoeff() > 0.0)) {
        throw Error("decompose: shape matrix is not positive definite");
    }

    EllipsoidAxes out;
    Mat3 r = Mat3::Zero();
    Vec3 lam_axis = Vec3::Zero();
    const double tie = 1e-10 * lambda.maxCoeff();
    const bool tie01 = lambda[1] - lambda[0] <= tie;
    const bool tie12 = lambda[2] - lambda[1] <= tie;

    if (tie01 && tie12) {
        r.setIdentity();
        lam_axis.setConstant(lambda.mean());
    } else if (tie01 || tie12) {
        const int single = tie01 ? 2 : 0;
        const double pair_lambda = tie01 ? 0.5 * (lambda[0] + lambda[1]) : 0.5 * (lambda[1] + lambda[2]);
        Vec3 w = vecs.col(single);
        int k = 0;
        w.cwiseAbs().maxCoeff(&k);
        if (w[k] < 0.0) {
            w = -w;
        }
        const int k1 = (k + 1) % 3;
        const int k2 = (k + 2) % 3;
        Vec3 u = Vec3::Unit(k1) - w[k1] * w;
        u.normalize();
        r.row(k) = w.transpose();
        r.row(k1) = u.transpose();
        complete_rotation(r, k2);
        lam_axis[k] = lambda[single];
        lam_axis[k1] = pair_lambda;
        lam_axis[k2] = pair_lambda;
    } else {
        std::array<int, 3> perm = {0, 1, 2};
        std::array<int, 3> best = perm;
        double best_score = -1.0;
        do {
            double score = 0.0;
            for (int j = 0; j < 3; ++j) {
                score += std::abs(vecs(perm[j], j));
            }
            if (score > best_score + 1e-15) {
                best_score = score;
                best = perm;
            }
        } while (std::next_permutation(perm.begin(), perm.end()));
        for (int j = 0; j < 3; ++j) {
            Vec3 v = vecs.col(j);
            if (v[best[j]] < 0.0) {
                v = -v;
            }
            r.row(best[j]) = v.transpose();
            lam_axis[best[j]] = lambda[j];
        }
        if (r.determinant() < 0.0) {
            int weakest = 0;
            r.diagonal().cwiseAbs().minCoeff(&weakest);
            r.row(weakest) *= -1.0;
        }
    }
    out.rotation = r;
    out.semi_axes = lam_axis.cwiseSqrt().cwiseInverse();
    out.angles = euler_zyx(r);
    return out;
}

Mat3 compose_shape(const Vec3& semi_axes, const EulerAngles& angles)
{
    const Mat3 r = rotation_zyx(angles);
    const Vec3 d = semi_axes.cwiseProduct(semi_axes).cwiseInverse();
    return r.transpose() * d.asDiagonal() * r;
}

ObliqueEllipsoid::ObliqueEllipsoid(const Vec3& center, const Mat3& shape)
    : center_(center), shape_(0.5 * (shape + shape.transpose())), axes_(decompose(shape_))
{
}

ObliqueEllipsoid ObliqueEllipsoid::from_axes(const Vec3& center, const Vec3& semi_axes, const EulerAngles& angles)
{
    return ObliqueEllipsoid(center, compose_shape(semi_axes, angles));
}

double ObliqueEllipsoid::volume() const { return 4.0 / 3.0 * std::numbers::pi * axes_.semi_axes.prod(); }

BoundingBox ObliqueEllipsoid::bounds() const
{
    const Mat3 inv = shape_.inverse();
    const Vec3 half = inv.diagonal().cwiseSqrt();
    return BoundingBox{center_ - half, center_ + half};
}

ObliqueEllipsoid ObliqueEllipsoid::scaled(double factor) const
{
    return ObliqueEllipsoid(center_, shape_ / (factor * factor));
}

// ---------------------------------------------------------------------------

ObliqueEllipsoid mvee(std::span<const Vec3> points, const MveeOptions& options)
{
    if (!(options.eps > 0.0)) {
        throw Error("mvee: eps must be positive");
    }
    const auto n = static_cast<Eigen::Index>(points.size());
    constexpr int d = 3;
    Eigen::Matrix<double, 3, Eigen::Dynamic> p(3, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        p.col(i) = points[static_cast<std::size_t>(i)];
    }
    if (n > 0) {
        const Vec3 mean = p.rowwise().mean();
        const Eigen::Matrix<double, 3, Eigen::Dynamic> centered = p.colwise() - mean;
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(centered);
        const auto sv = svd.singularValues();
        int rank = 0;
        for (Eigen::Index i = 0; i < sv.size(); ++i) {
            if (sv[i] > 1e-10 * std::max(sv[0], 1e-300)) {
                ++rank;
            }
        }
        if (sv.size() == 0 || sv[0] == 0.0) {
            rank = 0;
        }
        if (rank < d) {
            throw DegenerateInputError("mvee: points span an affine subspace of dimension " + std::to_string(rank) +
                                           " (need 3)",
                                       rank);
        }
    } else {
        throw DegenerateInputError("mvee: no points", 0);
    }

    Eigen::Matrix<double, 4, Eigen::Dynamic> q(4, n);
    q.topRows<3>() = p;
    q.row(3).setOnes();

    Eigen::VectorXd u = Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n));
    Eigen::VectorXd m(n);
    const double lifted = d + 1.0;
    double residual = std::numeric_limits<double>::infinity();
    bool converged = false;
    for (int it = 0; it < options.max_iterations; ++it) {
        const Eigen::Matrix4d x = q * u.asDiagonal() * q.transpose();
        const Eigen::Matrix4d xinv = x.inverse();
        m = (q.transpose() * xinv).cwiseProduct(q.transpose()).rowwise().sum();

        Eigen::Index jp = 0;
        const double kp = m.maxCoeff(&jp);
        Eigen::Index jm = -1;
        double km = std::numeric_limits<double>::infinity();
        for (Eigen::Index i = 0; i < n; ++i) {
            if (u[i] > 0.0 && m[i] < km) {
                km = m[i];
                jm = i;
            }
        }
        const double eps_plus = kp / lifted - 1.0;
        const double eps_minus = 1.0 - km / lifted;
        residual = eps_plus;
        if (eps_plus <= options.eps) {
            converged = true;
            break;
        }
        if (eps_plus >= eps_minus || jm < 0) {
            const double beta = (kp - lifted) / (lifted * (kp - 1.0));
            u *= 1.0 - beta;
            u[jp] += beta;
        } else {
            // Away step: shift weight off the least-needed support point.
            double beta = (km - lifted) / (lifted * (km - 1.0));
            const double floor_beta = -u[jm] / (1.0 - u[jm]);
            const bool drop = beta <= floor_beta;
            beta = std::max(beta, floor_beta);
            u *= 1.0 - beta;
            u[jm] += beta;
            if (drop) {
                u[jm] = 0.0;
            }
        }
    }
    if (!converged) {
        throw ConvergenceError("mvee: no convergence after " + std::to_string(options.max_iterations) +
                                   " iterations (residual " + std::to_string(residual) + ")",
                               residual);
    }

    const Vec3 c = p * u;
    const Mat3 cov = p * u.asDiagonal() * p.transpose() - c * c.transpose();
    Mat3 a = cov.inverse() / static_cast<double>(d);
    a = 0.5 * (a + a.transpose());
    double worst = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const Vec3 v = p.col(i) - c;
        worst = std::max(worst, v.dot(a * v));
    }
    a /= worst;
    return ObliqueEllipsoid(c, a);
}

// ---------------------------------------------------------------------------

std::vector<std::uint32_t> kmeans(std::span<const Vec3> points, std::size_t k, std::uint64_t seed, int max_iterations)
{
    const std::size_t n = points.size();
    if (k == 0 || n == 0) {
        throw Error("kmeans: need k >= 1 and at least one point");
    }
    k = std::min(k, n);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uni(0.0, 1.0);

    std::vector<Vec3> centers;
    centers.push_back(points[static_cast<std::size_t>(uni(rng) * static_cast<double>(n)) % n]);
    std::vector<double> dist(n, std::numeric_limits<double>::infinity());
    while (centers.size() < k) {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            dist[i] = std::min(dist[i], (points[i] - centers.back()).squaredNorm());
            total += dist[i];
        }
        if (total <= 0.0) {
            break;
        }
        double target = uni(rng) * total;
        std::size_t pick = n - 1;
        for (std::size_t i = 0; i < n; ++i) {
            target -= dist[i];
            if (target <= 0.0 && dist[i] > 0.0) {
                pick = i;
                break;
            }
        }
        centers.push_back(points[pick]);
    }

    std::vector<std::uint32_t> label(n, 0);
    for (int it = 0; it < max_iterations; ++it) {
        bool changed = it == 0;
        for (std::size_t i = 0; i < n; ++i) {
            std::uint32_t best = 0;
            double best_d = std::numeric_limits<double>::infinity();
            for (std::size_t c = 0; c < centers.size(); ++c) {
                const double dd = (points[i] - centers[c]).squaredNorm();
                if (dd < best_d) {
                    best_d = dd;
                    best = static_cast<std::uint32_t>(c);
                }
            }
            if (label[i] != best) {
                label[i] = best;
                changed = true;
            }
        }
        if (!changed) {
            break;
        }
        std::vector<Vec3> sum(centers.size(), Vec3::Zero());
        std::vector<std::size_t> count(centers.size(), 0);
        for (std::size_t i = 0; i < n; ++i) {
            sum[label[i]] += points[i];
            ++count[label[i]];
        }
        for (std::size_t c = 0; c < centers.size(); ++c) {
            if (count[c]) {
                centers[c] = sum[c] / static_cast<double>(count[c]);
            }
        }
    }
    return label;
}

// ---------------------------------------------------------------------------

bool GraspSpace::contains(const Vec3& x, double slack) const { return containing(x, slack).has_value(); }

std::optional<std::size_t> GraspSpace::containing(const Vec3& x, double slack) const
{
    for (std::size_t e = 0; e < ellipsoids.size(); ++e) {
        if (ellipsoids[e].contains(x, slack)) {
            return e;
        }
    }
    return std::nullopt;
}

double GraspSpace::violation(const Vec3& x) const
{
    double best = std::numeric_limits<double>::infinity();
    for (const auto& e : ellipsoids) {
        best = std::min(best, e.quadratic_form(x));
    }
    return std::max(0.0, best - 1.0);
}

UnionStats union_statistics(std::span<const ObliqueEllipsoid> ellipsoids, std::size_t samples, std::uint64_t seed)
{
    UnionStats stats;
    if (ellipsoids.empty() || samples == 0) {
        return stats;
    }
    BoundingBox box;
    for (const auto& e : ellipsoids) {
        box = box.merged(e.bounds());
    }
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    auto inside_any = [&](const Vec3& x, std::size_t skip) {
        for (std::size_t e = 0; e < ellipsoids.size(); ++e) {
            if (e != skip && ellipsoids[e].quadratic_form(x) < 1.0) {
                return true;
            }
        }
        return false;
    };

    std::size_t hits = 0;
    Vec3 sum = Vec3::Zero();
    const Vec3 extent = box.strokes();
    for (std::size_t s = 0; s < samples; ++s) {
        const Vec3 x = box.min + Vec3(uni(rng), uni(rng), uni(rng)).cwiseProduct(extent);
        if (inside_any(x, ellipsoids.size())) {
            ++hits;
            sum += x;
        }
    }
    stats.volume = box.volume() * static_cast<double>(hits) / static_cast<double>(samples);
    stats.centroid = hits ? Vec3(sum / static_cast<double>(hits)) : box.center();

    // Boundary area: sample each ellipsoid surface through the unit-sphere
    // parametrization and keep the part not buried in another ellipsoid.
    const std::size_t per = std::max<std::size_t>(1, samples / ellipsoids.size());
    for (std::size_t e = 0; e < ellipsoids.size(); ++e) {
        const auto& ell = ellipsoids[e];
        const Mat3& r = ell.rotation();
        const Vec3& ax = ell.semi_axes();
        const Mat3 m = r.transpose() * ax.asDiagonal() * r;
        const Mat3 minv = r.transpose() * ax.cwiseInverse().asDiagonal() * r;
        const double det = ax.prod();
        double acc = 0.0;
        for (std::size_t s = 0; s < per; ++s) {
            const double z = 2.0 * uni(rng) - 1.0;
            const double phi = 2.0 * std::numbers::pi * uni(rng);
            const double rad = std::sqrt(std::max(0.0, 1.0 - z * z));
            const Vec3 dir(rad * std::cos(phi), rad * std::sin(phi), z);
            const Vec3 x = ell.center() + m * dir;
            if (!inside_any(x, e)) {
                acc += det * (minv * dir).norm();
            }
        }
        stats.surface_area += 4.0 * std::numbers::pi * acc / static_cast<double>(per);
    }
    return stats;
}

namespace {

struct PointGroup {
    std::vector<std::uint32_t> members;
    std::vector<char> in;
};

std::vector<Vec3> gather(const Mesh& mesh, const PointGroup& g)
{
    std::vector<Vec3> pts;
    pts.reserve(g.members.size());
    for (auto v : g.members) {
        pts.push_back(mesh.vertices()[v]);
    }
    return pts;
}

std::optional<std::size_t> covering(const std::vector<ObliqueEllipsoid>& ells, const Mesh& mesh, std::size_t f,
                                    double slack, std::size_t preferred)
{
    const auto c = mesh.corners(f);
    auto covers = [&](std::size_t e) {
        return ells[e].contains(c[0], slack) && ells[e].contains(c[1], slack) && ells[e].contains(c[2], slack);
    };
    if (preferred < ells.size() && covers(preferred)) {
        return preferred;
    }
    for (std::size_t e = 0; e < ells.size(); ++e) {
        if (covers(e)) {
            return e;
        }
    }
    return std::nullopt;
}

} // namespace

GraspSpace build_grasp_space(const Mesh& mesh, const GraspSpaceOptions& options)
{
    if (options.max_ellipsoids < 1) {
        throw Error("build_grasp_space: max_ellipsoids must be >= 1");
    }
    if (!(options.reach_margin >= 1.0)) {
        throw Error("build_grasp_space: reach_margin must be >= 1");
    }
    if (mesh.vertex_count() < 4) {
        throw DegenerateInputError("build_grasp_space: mesh has fewer than 4 vertices", 0);
    }
    const auto& verts = mesh.vertices();
    const std::size_t k = std::max<std::size_t>(1, std::min(options.max_ellipsoids, verts.size() / 4));
    const auto labels = kmeans(verts, k, options.seed);

    std::vector<PointGroup> groups(k);
    for (auto& g : groups) {
        g.in.assign(verts.size(), 0);
    }
    for (std::uint32_t v = 0; v < verts.size(); ++v) {
        groups[labels[v]].members.push_back(v);
        groups[labels[v]].in[v] = 1;
    }
    std::erase_if(groups, [](const PointGroup& g) { return g.members.empty(); });

    auto centroid_of = [&](const PointGroup& g) {
        Vec3 s = Vec3::Zero();
        for (auto v : g.members) {
            s += verts[v];
        }
        return Vec3(s / static_cast<double>(g.members.size()));
    };

    // Fit every group; a group too flat or small for an ellipsoid is merged
    // into the group with the nearest centroid.
    std::vector<ObliqueEllipsoid> ells;
    for (;;) {
        ells.clear();
        std::optional<std::size_t> bad;
        for (std::size_t g = 0; g < groups.size(); ++g) {
            try {
                ells.push_back(mvee(gather(mesh, groups[g]), options.mvee));
            } catch (const DegenerateInputError&) {
                bad = g;
                break;
            }
        }
        if (!bad) {
            break;
        }
        if (groups.size() == 1) {
            throw DegenerateInputError("build_grasp_space: mesh vertices are coplanar", 2);
        }
        const Vec3 c = centroid_of(groups[*bad]);
        std::size_t target = *bad == 0 ? 1 : 0;
        for (std::size_t g = 0; g < groups.size(); ++g) {
            if (g != *bad && (centroid_of(groups[g]) - c).squaredNorm() < (centroid_of(groups[target]) - c).squaredNorm()) {
                target = g;
            }
        }
        for (auto v : groups[*bad].members) {
            if (!groups[target].in[v]) {
                groups[target].in[v] = 1;
                groups[target].members.push_back(v);
            }
        }
        groups.erase(groups.begin() + static_cast<std::ptrdiff_t>(*bad));
    }

    auto preferred_of = [&](std::size_t f) -> std::size_t {
        const auto& face = mesh.faces()[f];
        for (std::size_t g = 0; g < groups.size(); ++g) {
            if (groups[g].in[face[0]] && groups[g].in[face[1]] && groups[g].in[face[2]]) {
                return g;
            }
        }
        return groups.size();
    };

    GraspSpace space;
    int iter = 0;
    for (; iter < options.max_refinements; ++iter) {
        std::vector<char> dirty(groups.size(), 0);
        for (std::size_t f = 0; f < mesh.face_count(); ++f) {
            if (covering(ells, mesh, f, options.envelope_eps, preferred_of(f))) {
                continue;
            }
            // Faces straddling subsets join the ellipsoid nearest to their centroid.
            const Vec3 c = mesh.face_centroid(f);
            std::size_t best = 0;
            for (std::size_t e = 1; e < ells.size(); ++e) {
                if (ells[e].quadratic_form(c) < ells[best].quadratic_form(c)) {
                    best = e;
                }
            }
            for (auto v : mesh.faces()[f]) {
                if (!groups[best].in[v]) {
                    groups[best].in[v] = 1;
                    groups[best].members.push_back(v);
                }
            }
            dirty[best] = 1;
        }
        if (std::none_of(dirty.begin(), dirty.end(), [](char c) { return c != 0; })) {
            break;
        }
        for (std::size_t g = 0; g < groups.size(); ++g) {
            if (dirty[g]) {
                ells[g] = mvee(gather(mesh, groups[g]), options.mvee);
            }
        }
    }
    space.refinements = iter;
    if (options.reach_margin != 1.0) {
        for (auto& e : ells) {
            e = e.scaled(options.reach_margin);
        }
    }

    space.facet_cover.assign(mesh.face_count(), 0);
    for (std::size_t f = 0; f < mesh.face_count(); ++f) {
        const auto e = covering(ells, mesh, f, options.envelope_eps, preferred_of(f));
        if (!e) {
            space.uncovered_faces.push_back(static_cast<std::uint32_t>(f));
            continue;
        }
        space.facet_cover[f] = static_cast<std::uint32_t>(*e);
        for (const auto& c : mesh.corners(f)) {
            space.envelope_error = std::max(space.envelope_error, ells[*e].quadratic_form(c) - 1.0);
        }
    }
    space.envelope_error = std::max(0.0, space.envelope_error);
    space.complete = space.uncovered_faces.empty();
    space.ellipsoids = std::move(ells);

    const auto stats = union_statistics(space.ellipsoids, options.monte_carlo_samples, options.seed);
    space.centroid = stats.centroid;
    space.surface_area = stats.surface_area;
    space.volume = stats.volume;
    return space;
}

} // namespace morphprint
