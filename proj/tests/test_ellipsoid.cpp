#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "morphprint/ellipsoid.hpp"
#include "morphprint/hand.hpp"
#include "morphprint/primitives.hpp"
#include "support.hpp"

using namespace morphprint;

namespace {

double rel_frobenius(const Mat3& a, const Mat3& b) { return (a - b).norm() / b.norm(); }

std::vector<Vec3> cube_corners(double h)
{
    std::vector<Vec3> p;
    for (int i = 0; i < 8; ++i) {
        p.emplace_back(i & 1 ? h : -h, i & 2 ? h : -h, i & 4 ? h : -h);
    }
    return p;
}

bool shrink_excludes_a_point(const ObliqueEllipsoid& e, std::span<const Vec3> points)
{
    const auto small = e.scaled(1.0 - 1e-3);
    for (const auto& p : points) {
        if (!small.contains(p)) {
            return true;
        }
    }
    return false;
}

} // namespace

TEST_SUITE("ellipsoid")
{
    TEST_CASE("rotations follow the Z-Y-X convention and invert")
    {
        const EulerAngles a{0.3, -0.7, 1.1};
        const Mat3 r = rotation_zyx(a);
        CHECK((r - rotation_z(a.z) * rotation_y(a.y) * rotation_x(a.x)).norm() <= 1e-15);
        CHECK((r.transpose() * r - Mat3::Identity()).norm() <= 1e-12);
        CHECK(r.determinant() == doctest::Approx(1.0));
        const auto back = euler_zyx(r);
        CHECK(back.x == doctest::Approx(a.x));
        CHECK(back.y == doctest::Approx(a.y));
        CHECK(back.z == doctest::Approx(a.z));
        const auto gimbal = euler_zyx(rotation_zyx({0.4, std::numbers::pi / 2, 0.0}));
        CHECK(gimbal.z == 0.0);
    }

    TEST_CASE("MVEE of the cube corners is the circumsphere")
    {
        const auto pts = cube_corners(1.0);
        const auto e = mvee(pts);
        CHECK(e.center().norm() <= 1e-4);
        for (int k = 0; k < 3; ++k) {
            CHECK(std::abs(e.semi_axes()[k] - std::sqrt(3.0)) <= 1e-4);
        }
        for (const auto& p : pts) {
            CHECK(e.contains(p, 1e-9));
        }
        CHECK(shrink_excludes_a_point(e, pts));
    }

    TEST_CASE("MVEE of a regular tetrahedron is its circumsphere")
    {
        const double s = 1.0 / std::sqrt(3.0);
        const std::vector<Vec3> pts{{s, s, s}, {s, -s, -s}, {-s, s, -s}, {-s, -s, s}};
        const auto e = mvee(pts, {1e-8, 10000});
        CHECK(e.center().norm() <= 1e-4);
        for (int k = 0; k < 3; ++k) {
            CHECK(std::abs(e.semi_axes()[k] - 1.0) <= 1e-4);
        }
        CHECK(shrink_excludes_a_point(e, pts));
    }

    TEST_CASE("MVEE recovers an ellipsoid from surface samples")
    {
        const Vec3 c(1, 2, 3);
        const Vec3 r(3, 2, 1.5);
        const EulerAngles ang{0.2, -0.4, 0.7};
        const Mat3 a = compose_shape(r, ang);
        const Mat3 rot = rotation_zyx(ang);
        std::mt19937_64 rng(3);
        std::normal_distribution<double> n(0.0, 1.0);
        std::vector<Vec3> pts;
        for (int i = 0; i < 400; ++i) {
            const Vec3 u = Vec3(n(rng), n(rng), n(rng)).normalized();
            pts.push_back(c + rot.transpose() * r.cwiseProduct(u));
        }
        const auto e = mvee(pts);
        CHECK(rel_frobenius(e.shape(), a) <= 1e-3);
        CHECK((e.center() - c).norm() <= 1e-3);
        for (const auto& p : pts) {
            CHECK(e.contains(p, 1e-9));
        }
        CHECK(shrink_excludes_a_point(e, pts));
    }

    TEST_CASE("MVEE is equivariant under rigid motions")
    {
        std::mt19937_64 rng(11);
        std::normal_distribution<double> n(0.0, 1.0);
        for (int trial = 0; trial < 50; ++trial) {
            std::vector<Vec3> pts(12);
            for (auto& p : pts) {
                p = Vec3(3 * n(rng), 2 * n(rng), n(rng));
            }
            const Mat3 rot = testing::random_rotation(rng);
            const Vec3 t(n(rng), n(rng), n(rng));
            std::vector<Vec3> moved;
            for (const auto& p : pts) {
                moved.push_back(rot * p + t);
            }
            const auto e0 = mvee(pts);
            const auto e1 = mvee(moved);
            CHECK((e1.center() - (rot * e0.center() + t)).norm() <= 1e-6);
            CHECK((e1.shape() - rot * e0.shape() * rot.transpose()).norm() <= 1e-6 * e0.shape().norm());
        }
    }

    TEST_CASE("coplanar input is rejected with its rank")
    {
        const std::vector<Vec3> pts{{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {1, 1, 0}, {0.5, 0.2, 0}};
        try {
            mvee(pts);
            FAIL("coplanar points accepted");
        } catch (const DegenerateInputError& e) {
            CHECK(e.rank() == 2);
        }
        CHECK_THROWS_AS(mvee(std::vector<Vec3>{{0, 0, 0}, {1, 0, 0}, {0, 1, 0}}), DegenerateInputError);
    }

    TEST_CASE("iteration cap raises a convergence error")
    {
        std::mt19937_64 rng(5);
        std::normal_distribution<double> n(0.0, 1.0);
        std::vector<Vec3> pts(50);
        for (auto& p : pts) {
            p = Vec3(n(rng), n(rng), n(rng));
        }
        CHECK_THROWS_AS(mvee(pts, {1e-12, 2}), ConvergenceError);
    }

    TEST_CASE("decompose examples")
    {
        const auto d = decompose(Vec3(0.25, 1.0 / 9.0, 1.0 / 16.0).asDiagonal());
        CHECK((d.semi_axes - Vec3(2, 3, 4)).norm() <= 1e-12);
        CHECK(d.angles.x == 0.0);
        CHECK(d.angles.y == 0.0);
        CHECK(d.angles.z == 0.0);

        const auto s = decompose(Mat3::Identity());
        CHECK((s.semi_axes - Vec3::Ones()).norm() <= 1e-12);
        CHECK(s.angles.x == 0.0);
        CHECK(s.angles.y == 0.0);
        CHECK(s.angles.z == 0.0);

        const Mat3 rz = rotation_z(0.3);
        const Mat3 a = rz.transpose() * Vec3(1, 0.25, 1.0 / 9.0).asDiagonal() * rz;
        const auto z = decompose(a);
        CHECK(std::abs(z.angles.z - 0.3) <= 1e-6);
        CHECK(std::abs(z.angles.x) <= 1e-9);
        CHECK(std::abs(z.angles.y) <= 1e-9);
        CHECK((z.semi_axes - Vec3(1, 2, 3)).norm() <= 1e-9);
    }

    TEST_CASE("decompose then reconstruct is the identity on A")
    {
        std::mt19937_64 rng(21);
        std::uniform_real_distribution<double> axis(0.1, 10.0);
        for (int trial = 0; trial < 200; ++trial) {
            const Mat3 q = testing::random_rotation(rng);
            Vec3 r(axis(rng), axis(rng), axis(rng));
            if (trial % 4 == 0) {
                r[1] = r[0];
            }
            const Mat3 a = q.transpose() * r.cwiseProduct(r).cwiseInverse().asDiagonal() * q;
            const auto d = decompose(a);
            CHECK(rel_frobenius(compose_shape(d.semi_axes, d.angles), a) <= 1e-9);
            const Eigen::SelfAdjointEigenSolver<Mat3> eig(a);
            Vec3 expect = eig.eigenvalues().cwiseSqrt().cwiseInverse();
            Vec3 got = d.semi_axes;
            std::sort(expect.data(), expect.data() + 3);
            std::sort(got.data(), got.data() + 3);
            CHECK((got - expect).norm() <= 1e-9 * expect.norm());
        }
    }

    TEST_CASE("ellipsoid volume and bounds")
    {
        const auto e = ObliqueEllipsoid::from_axes(Vec3(1, 1, 1), Vec3(1, 2, 3), {});
        CHECK(e.volume() == doctest::Approx(8.0 * std::numbers::pi));
        CHECK((e.bounds().min - Vec3(0, -1, -2)).norm() <= 1e-12);
        CHECK((e.bounds().max - Vec3(2, 3, 4)).norm() <= 1e-12);
        CHECK(e.contains(e.center()));
        CHECK((e.scaled(2.0).semi_axes() - Vec3(2, 4, 6)).norm() <= 1e-12);
    }

    TEST_CASE("k-means separates distant clusters")
    {
        std::vector<Vec3> pts;
        for (int i = 0; i < 20; ++i) {
            pts.emplace_back(i * 0.01, 0, 0);
            pts.emplace_back(100 + i * 0.01, 0, 0);
        }
        const auto labels = kmeans(pts, 2, 42);
        for (std::size_t i = 0; i < pts.size(); i += 2) {
            CHECK(labels[i] == labels[0]);
            CHECK(labels[i + 1] == labels[1]);
        }
        CHECK(labels[0] != labels[1]);
    }

    TEST_CASE("union statistics of a sphere")
    {
        const std::vector<ObliqueEllipsoid> one{ObliqueEllipsoid::from_axes(Vec3(5, 0, 0), Vec3::Ones(), {})};
        const auto s = union_statistics(one, 200000, 42);
        CHECK(std::abs(s.volume / (4.0 / 3.0 * std::numbers::pi) - 1.0) <= 0.02);
        CHECK(std::abs(s.surface_area / (4.0 * std::numbers::pi) - 1.0) <= 0.05);
        CHECK((s.centroid - Vec3(5, 0, 0)).norm() <= 0.02);
    }

    TEST_CASE("grasp space of a cube with one ellipsoid")
    {
        const auto cube = primitives::box(Vec3::Constant(-1), Vec3::Constant(1));
        GraspSpaceOptions opt;
        opt.max_ellipsoids = 1;
        opt.monte_carlo_samples = 20000;
        const auto space = build_grasp_space(cube, opt);
        REQUIRE(space.ellipsoids.size() == 1);
        CHECK(space.complete);
        CHECK(space.facet_cover.size() == 12);
        for (auto c : space.facet_cover) {
            CHECK(c == 0);
        }
        const auto direct = mvee(cube_corners(1.0));
        CHECK(rel_frobenius(space.ellipsoids[0].shape(), direct.shape()) <= 1e-9);
    }

    TEST_CASE("two distant cubes split into two ellipsoids")
    {
        const std::vector<Mesh> parts{primitives::box(Vec3::Zero(), Vec3::Ones()),
                                      primitives::box(Vec3(100, 0, 0), Vec3(101, 1, 1))};
        const auto both = Mesh::merge(parts);
        GraspSpaceOptions opt;
        opt.max_ellipsoids = 2;
        opt.monte_carlo_samples = 20000;
        const auto space = build_grasp_space(both, opt);
        REQUIRE(space.ellipsoids.size() == 2);
        CHECK(space.complete);
        std::array<int, 2> per{0, 0};
        for (std::size_t f = 0; f < both.face_count(); ++f) {
            const auto& e = space.ellipsoids[space.facet_cover[f]];
            for (const auto& p : both.corners(f)) {
                CHECK(e.contains(p, opt.envelope_eps));
            }
            const bool left = both.face_centroid(f).x() < 50;
            CHECK((e.center().x() < 50) == left);
            per[space.facet_cover[f]]++;
        }
        CHECK(per[0] == 12);
        CHECK(per[1] == 12);
    }

    TEST_CASE("synthetic hand is fully covered")
    {
        const auto hand = make_synthetic_hand();
        GraspSpaceOptions opt;
        opt.monte_carlo_samples = 50000;
        const auto space = build_grasp_space(hand.mesh, opt);
        CHECK(space.complete);
        CHECK(space.uncovered_faces.empty());
        REQUIRE(space.facet_cover.size() == hand.mesh.face_count());
        CHECK(space.ellipsoids.size() <= opt.max_ellipsoids);
        for (std::size_t f = 0; f < hand.mesh.face_count(); ++f) {
            const auto& e = space.ellipsoids[space.facet_cover[f]];
            for (const auto& p : hand.mesh.corners(f)) {
                CHECK(e.quadratic_form(p) <= 1.0 + opt.envelope_eps);
            }
        }
        CHECK(space.envelope_error <= opt.envelope_eps);
        BoundingBox box;
        for (const auto& e : space.ellipsoids) {
            box = box.merged(e.bounds());
        }
        CHECK(space.volume > 0.0);
        CHECK(space.volume <= box.volume());
        CHECK(space.contains(space.ellipsoids[0].center()));
    }

    TEST_CASE("reach margin scales every semi-axis")
    {
        const auto cube = primitives::box(Vec3::Constant(-1), Vec3::Constant(1));
        GraspSpaceOptions opt;
        opt.max_ellipsoids = 1;
        opt.monte_carlo_samples = 1000;
        const auto tight = build_grasp_space(cube, opt);
        opt.reach_margin = 1.5;
        const auto loose = build_grasp_space(cube, opt);
        CHECK((loose.ellipsoids[0].semi_axes() - 1.5 * tight.ellipsoids[0].semi_axes()).norm() <= 1e-9);
        opt.reach_margin = 0.5;
        CHECK_THROWS_AS(build_grasp_space(cube, opt), Error);
    }
}
