#include <doctest.h>

#include <cmath>

#include <Eigen/Dense>

#include "morphprint/laplacian.hpp"
#include "morphprint/primitives.hpp"

using namespace morphprint;

namespace {

Mesh regular_tetrahedron()
{
    const double s = 1.0 / std::sqrt(3.0);
    return Mesh({{s, s, s}, {s, -s, -s}, {-s, s, -s}, {-s, -s, s}}, {{0, 1, 2}, {0, 3, 1}, {0, 2, 3}, {1, 3, 2}});
}

Mesh flat_grid(int n)
{
    std::vector<Vec3> v;
    std::vector<Face> f;
    for (int y = 0; y < n; ++y) {
        for (int x = 0; x < n; ++x) {
            v.emplace_back(x, y, 0);
        }
    }
    auto id = [n](int x, int y) { return static_cast<std::uint32_t>(y * n + x); };
    for (int y = 0; y + 1 < n; ++y) {
        for (int x = 0; x + 1 < n; ++x) {
            f.push_back({id(x, y), id(x + 1, y), id(x + 1, y + 1)});
            f.push_back({id(x, y), id(x + 1, y + 1), id(x, y + 1)});
        }
    }
    return Mesh(std::move(v), std::move(f));
}

std::uint32_t extreme_vertex(const Mesh& m, const Vec3& dir)
{
    std::uint32_t best = 0;
    for (std::uint32_t i = 1; i < m.vertex_count(); ++i) {
        if (m.vertices()[i].dot(dir) > m.vertices()[best].dot(dir)) {
            best = i;
        }
    }
    return best;
}

/// Sphere with both poles anchored and the +x vertex pulled outward by 10%.
MorphSystem pulled_sphere(const Mesh& s, const Vec3& shift = Vec3::Zero())
{
    auto sys = build_laplacian(s);
    const auto top = extreme_vertex(s, Vec3::UnitZ());
    const auto bottom = extreme_vertex(s, -Vec3::UnitZ());
    const auto pull = extreme_vertex(s, Vec3::UnitX());
    sys.add_anchor(top, s.vertices()[top] + shift);
    sys.add_anchor(bottom, s.vertices()[bottom] + shift);
    sys.add_control(pull, 1.1 * s.vertices()[pull] + shift);
    return sys;
}

/// Dense least-squares oracle of the stacked system [L; W] V = [Delta; W u].
Eigen::MatrixX3d dense_solve(const MorphSystem& sys)
{
    const auto n = static_cast<Eigen::Index>(sys.vertex_count());
    const auto c = static_cast<Eigen::Index>(sys.anchors().size() + sys.controls().size());
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n + c, n);
    Eigen::MatrixX3d b = Eigen::MatrixX3d::Zero(n + c, 3);
    a.topRows(n) = Eigen::MatrixXd(sys.laplacian());
    b.topRows(n) = sys.deltas();
    Eigen::Index row = n;
    auto stack = [&](const PositionMap& m, double w) {
        for (const auto& [i, u] : m) {
            a(row, i) = std::sqrt(w);
            b.row(row) = std::sqrt(w) * u.transpose();
            ++row;
        }
    };
    stack(sys.anchors(), sys.anchor_weight);
    stack(sys.controls(), sys.control_weight);
    return a.colPivHouseholderQr().solve(b);
}

double max_radius(std::span<const Vec3> v)
{
    double r = 0.0;
    for (const auto& p : v) {
        r = std::max(r, p.norm());
    }
    return r;
}

} // namespace

TEST_SUITE("laplacian")
{
    TEST_CASE("uniform weights on a regular tetrahedron are 1/3")
    {
        const auto sys = build_laplacian(regular_tetrahedron());
        for (std::uint32_t i = 0; i < 4; ++i) {
            for (std::uint32_t j = 0; j < 4; ++j) {
                if (i != j) {
                    CHECK(sys.weight(i, j) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
                }
            }
        }
    }

    TEST_CASE("weights of every row sum to one")
    {
        const auto s = primitives::icosphere(5.0, 2);
        for (auto mode : {WeightMode::Uniform, WeightMode::GaussUniform}) {
            LaplacianOptions opt;
            opt.mode = mode;
            const auto sys = build_laplacian(s, opt);
            const Eigen::SparseMatrix<double>& l = sys.laplacian();
            const Eigen::VectorXd rows = l * Eigen::VectorXd::Ones(l.cols());
            CHECK(rows.cwiseAbs().maxCoeff() <= 1e-12);
            for (Eigen::Index i = 0; i < l.rows(); ++i) {
                CHECK(l.coeff(i, i) == 1.0);
            }
        }
    }

    TEST_CASE("interior vertices of a flat grid have zero differential coordinates")
    {
        const int n = 6;
        const auto g = flat_grid(n);
        const auto sys = build_laplacian(g);
        for (int y = 1; y + 1 < n; ++y) {
            for (int x = 1; x + 1 < n; ++x) {
                const auto i = static_cast<std::uint32_t>(y * n + x);
                Vec3 avg = Vec3::Zero();
                for (auto j : g.neighbors()[i]) {
                    avg += g.vertices()[j];
                }
                avg /= static_cast<double>(g.neighbors()[i].size());
                CHECK((g.vertices()[i] - avg).norm() <= 1e-12);
                CHECK(sys.deltas().row(i).norm() <= 1e-12);
            }
        }
    }

    TEST_CASE("isolated vertex is named in the error")
    {
        Mesh m({{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {5, 5, 5}}, {{0, 1, 2}});
        CHECK_THROWS_WITH_AS(build_laplacian(m), doctest::Contains("3"), Error);
    }

    TEST_CASE("no constraints is rejected")
    {
        const auto sys = build_laplacian(regular_tetrahedron());
        CHECK_THROWS_AS(solve_morph(sys), Error);
    }

    TEST_CASE("anchoring every vertex at rest reproduces the mesh")
    {
        const auto s = primitives::icosphere(4.0, 2);
        auto sys = build_laplacian(s);
        sys.anchor_free_vertices();
        const auto r = solve_morph(sys);
        for (std::size_t i = 0; i < s.vertex_count(); ++i) {
            CHECK((r.vertices[i] - s.vertices()[i]).norm() <= 1e-9);
        }
        CHECK(r.energy <= 1e-18);
    }

    TEST_CASE("translated constraints translate the rest shape exactly")
    {
        const auto s = primitives::icosphere(4.0, 2);
        const Vec3 t(3, -1, 2.5);
        auto sys = build_laplacian(s);
        for (std::uint32_t i : {0u, 7u, 19u}) {
            sys.add_anchor(i, s.vertices()[i] + t);
        }
        sys.add_control(33, s.vertices()[33] + t);
        const auto r = solve_morph(sys);
        Eigen::MatrixX3d v(s.vertex_count(), 3);
        for (std::size_t i = 0; i < s.vertex_count(); ++i) {
            CHECK((r.vertices[i] - (s.vertices()[i] + t)).norm() <= 1e-9);
            v.row(static_cast<Eigen::Index>(i)) = r.vertices[i].transpose();
        }
        CHECK((sys.laplacian() * v - sys.deltas()).norm() <= 1e-9);
    }

    TEST_CASE("pulling one sphere vertex outward")
    {
        const auto s = primitives::icosphere(10.0, 2);
        const auto sys = pulled_sphere(s);
        const auto r = solve_morph(sys);
        CHECK(max_radius(r.vertices) > max_radius(s.vertices()));
        CHECK(r.energy > 0.0);
        CHECK(r.residual <= 1e-8);
        const auto oracle = dense_solve(sys);
        for (std::size_t i = 0; i < s.vertex_count(); ++i) {
            for (int k = 0; k < 3; ++k) {
                CHECK(std::abs(r.vertices[i][k] - oracle(static_cast<Eigen::Index>(i), k)) <= 1e-8);
            }
        }
    }

    TEST_CASE("sparse solve matches the dense oracle with weights and Gauss mode")
    {
        const auto s = primitives::icosphere(3.0, 1, Vec3(1, 2, 3));
        LaplacianOptions opt;
        opt.mode = WeightMode::GaussUniform;
        opt.gauss_sigma = 0.7;
        auto sys = build_laplacian(s, opt);
        sys.anchor_weight = 4.0;
        sys.control_weight = 0.5;
        sys.add_anchor(0, s.vertices()[0]);
        sys.add_anchor(5, s.vertices()[5] + Vec3(0, 0, 0.2));
        sys.add_control(11, s.vertices()[11] * 1.2);
        const auto r = solve_morph(sys);
        const auto oracle = dense_solve(sys);
        for (std::size_t i = 0; i < s.vertex_count(); ++i) {
            for (int k = 0; k < 3; ++k) {
                CHECK(std::abs(r.vertices[i][k] - oracle(static_cast<Eigen::Index>(i), k)) <= 1e-8);
            }
        }
        CHECK(std::abs(morph_energy(sys, r.vertices) - r.energy) <= 1e-9 * std::max(1.0, r.energy));
    }

    TEST_CASE("reported energy equals direct evaluation")
    {
        const auto s = primitives::icosphere(10.0, 2);
        const auto sys = pulled_sphere(s);
        const auto r = solve_morph(sys);
        CHECK(std::abs(morph_energy(sys, r.vertices) - r.energy) <= 1e-9 * std::max(1.0, r.energy));
        CHECK(r.energy >= 0.0);
    }

    TEST_CASE("translation equivariance of a deforming solve")
    {
        const auto s = primitives::icosphere(10.0, 2);
        const Vec3 t(-4, 7, 1.5);
        const auto a = solve_morph(pulled_sphere(s));
        const auto b = solve_morph(pulled_sphere(s, t));
        for (std::size_t i = 0; i < s.vertex_count(); ++i) {
            CHECK((b.vertices[i] - (a.vertices[i] + t)).norm() <= 1e-9);
        }
        CHECK(b.energy == doctest::Approx(a.energy).epsilon(1e-9));
    }

    TEST_CASE("adding anchors never loosens the existing anchors")
    {
        const auto s = primitives::icosphere(10.0, 2);
        auto sys = pulled_sphere(s);
        auto deviation = [&](const MorphResult& r, const PositionMap& anchors) {
            double d = 0.0;
            for (const auto& [i, u] : anchors) {
                d += (r.vertices[i] - u).squaredNorm();
            }
            return std::sqrt(d);
        };
        const PositionMap original = sys.anchors();
        double previous = deviation(solve_morph(sys), original);
        const auto pull = extreme_vertex(s, Vec3::UnitX());
        std::vector<std::uint32_t> extra;
        for (std::uint32_t i = 0; i < s.vertex_count(); ++i) {
            if (sys.role(i) == VertexRole::Free && (s.vertices()[i] - s.vertices()[pull]).norm() > 4.0) {
                extra.push_back(i);
            }
        }
        for (std::size_t k = 0; k < extra.size(); ++k) {
            sys.add_anchor(extra[k], s.vertices()[extra[k]]);
            if (k % 10 == 9 || k + 1 == extra.size()) {
                const double now = deviation(solve_morph(sys), original);
                CHECK(now <= previous + 1e-12);
                previous = now;
            }
        }
    }

    TEST_CASE("vertex roles are exclusive")
    {
        auto sys = build_laplacian(regular_tetrahedron());
        sys.add_anchor(0, Vec3::Zero());
        CHECK_THROWS_AS(sys.add_control(0, Vec3::Zero()), Error);
        CHECK_THROWS_AS(sys.add_anchor(0, Vec3::Zero()), Error);
        CHECK(sys.role(0) == VertexRole::Anchor);
        CHECK(sys.role(1) == VertexRole::Free);
        CHECK(parse_weight_mode("gauss-uniform") == WeightMode::GaussUniform);
        CHECK_THROWS_AS(parse_weight_mode("cotan"), Error);
    }

    TEST_CASE("grasp morph: identity, interior target, far target")
    {
        const auto s = primitives::icosphere(10.0, 2);
        GraspSpaceOptions gopt;
        gopt.max_ellipsoids = 1;
        gopt.monte_carlo_samples = 2000;
        const auto space = build_grasp_space(s, gopt);
        REQUIRE(space.ellipsoids.size() == 1);
        const auto& e = space.ellipsoids[0];

        const auto same = morph_by_grasp(s, space, {});
        for (std::size_t i = 0; i < s.vertex_count(); ++i) {
            CHECK((same.vertices[i] - s.vertices()[i]).norm() <= 1e-9);
        }

        const std::uint32_t v = extreme_vertex(s, Vec3::UnitX());
        const auto moved = morph_by_grasp(s, space, {{v, e.center()}});
        CHECK((moved.vertices[v] - s.vertices()[v]).norm() > 1.0);

        Vec3 far = s.vertices()[0];
        for (const auto& p : s.vertices()) {
            if (e.quadratic_form(p) > e.quadratic_form(far)) {
                far = p;
            }
        }
        const Vec3 outside = e.center() + 2.0 * (far - e.center()) / std::sqrt(e.quadratic_form(far));
        CHECK(e.quadratic_form(outside) > 1.0);
        try {
            morph_by_grasp(s, space, {{v, outside}});
            FAIL("target outside the grasp space accepted");
        } catch (const ConstraintViolation& err) {
            CHECK(err.vertex() == v);
        }
    }
}
