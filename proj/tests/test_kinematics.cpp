#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "morphprint/kinematics.hpp"

using namespace morphprint;

namespace {

constexpr double half_pi = std::numbers::pi / 2;

KinematicChain planar(double t0, double t1)
{
    KinematicChain c;
    c.links = {{t0, 0, 1, 0}, {t1, 0, 1, 0}};
    return c;
}

KinematicChain random_chain(std::mt19937_64& rng, int links)
{
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    KinematicChain c;
    for (int i = 0; i < links; ++i) {
        c.links.push_back({u(rng), u(rng), u(rng) + 2.5, u(rng)});
    }
    c.base.block<3, 1>(0, 3) = Vec3(u(rng), u(rng), u(rng));
    return c;
}

double orthonormality(const Mat4& t)
{
    const Mat3 r = t.topLeftCorner<3, 3>();
    return (r.transpose() * r - Mat3::Identity()).norm();
}

} // namespace

TEST_SUITE("kinematics")
{
    TEST_CASE("link transform closed forms")
    {
        CHECK((link_transform({}) - Mat4::Identity()).norm() <= 1e-15);

        const Mat4 rz = link_transform({half_pi, 0, 0, 0});
        Mat4 expect = Mat4::Identity();
        expect.topLeftCorner<2, 2>() << 0, -1, 1, 0;
        CHECK((rz - expect).norm() <= 1e-15);

        // Entry-by-entry product Rot(z,t) Trans(z,d) Trans(x,a) Rot(x,al).
        const double t = half_pi, d = 1, a = 2, al = half_pi;
        const double ct = std::cos(t), st = std::sin(t), ca = std::cos(al), sa = std::sin(al);
        Mat4 m;
        m << ct, -st * ca, st * sa, a * ct, st, ct * ca, -ct * sa, a * st, 0, sa, ca, d, 0, 0, 0, 1;
        const Mat4 got = link_transform({t, d, a, al});
        CHECK((got - m).norm() <= 1e-15);
        CHECK(got(0, 3) == doctest::Approx(0.0).epsilon(1e-15));
        CHECK(got(1, 3) == doctest::Approx(2.0));
        CHECK(got(2, 3) == doctest::Approx(1.0));
        CHECK(got.row(3) == Eigen::RowVector4d(0, 0, 0, 1));
    }

    TEST_CASE("planar two-link forward kinematics")
    {
        const Vec3 straight = forward_kinematics(planar(0, 0)).block<3, 1>(0, 3);
        CHECK((straight - Vec3(2, 0, 0)).norm() <= 1e-12);
        const Vec3 bent = forward_kinematics(planar(half_pi, -half_pi)).block<3, 1>(0, 3);
        CHECK((bent - Vec3(1, 1, 0)).norm() <= 1e-12);

        std::mt19937_64 rng(1);
        std::uniform_real_distribution<double> u(-3.0, 3.0);
        for (int i = 0; i < 20; ++i) {
            const double a = u(rng), b = u(rng);
            const Vec3 tip = forward_kinematics(planar(a, b)).block<3, 1>(0, 3);
            CHECK(std::abs(tip.x() - (std::cos(a) + std::cos(a + b))) <= 1e-12);
            CHECK(std::abs(tip.y() - (std::sin(a) + std::sin(a + b))) <= 1e-12);
        }

        KinematicChain identities;
        identities.links.resize(4);
        CHECK((forward_kinematics(identities) - Mat4::Identity()).norm() <= 1e-15);
    }

    TEST_CASE("frames stay orthonormal")
    {
        std::mt19937_64 rng(2);
        for (int i = 0; i < 20; ++i) {
            for (const auto& f : link_frames(random_chain(rng, 5))) {
                CHECK(orthonormality(f) <= 1e-12);
                CHECK(f.row(3) == Eigen::RowVector4d(0, 0, 0, 1));
            }
        }
    }

    TEST_CASE("composition of chains")
    {
        std::mt19937_64 rng(3);
        for (int i = 0; i < 10; ++i) {
            const auto a = random_chain(rng, 2);
            auto b = random_chain(rng, 3);
            CHECK_THROWS_AS(concatenate(a, b), Error);
            b.base = Mat4::Identity();
            const auto ab = concatenate(a, b);
            CHECK(ab.size() == 5);
            const Mat4 expect = forward_kinematics(a) * forward_kinematics(b);
            CHECK((forward_kinematics(ab) - expect).norm() <= 1e-9 * expect.norm());
        }
    }

    TEST_CASE("planar Jacobian and rotating lever")
    {
        const auto j = jacobian(planar(0, 0));
        Eigen::Matrix<double, 3, 2> lin;
        lin << 0, 0, 2, 1, 0, 0;
        CHECK((j.topRows<3>() - lin).norm() <= 1e-12);
        CHECK((j.bottomRows<3>().row(2) - Eigen::RowVector2d(1, 1)).norm() <= 1e-12);
        CHECK((jacobian_fd(planar(0, 0)).topRows<3>() - lin).norm() <= 1e-6);

        KinematicChain lever;
        lever.links = {{0, 0, 1, 0}};
        const double rate = -0.7;
        const Vec3 v = jacobian(lever).topRows<3>() * Eigen::VectorXd::Constant(1, rate);
        CHECK((v - Vec3(0, rate, 0)).norm() <= 1e-12);
    }

    TEST_CASE("analytic Jacobian matches central differences")
    {
        std::mt19937_64 rng(4);
        for (int i = 0; i < 100; ++i) {
            const auto c = random_chain(rng, 1 + i % 5);
            const auto j = jacobian(c);
            const auto fd = jacobian_fd(c, 1e-6);
            CHECK((j - fd).cwiseAbs().maxCoeff() <= 1e-5 * std::max(1.0, j.cwiseAbs().maxCoeff()));
        }
    }

    TEST_CASE("Jacobian of an attached point")
    {
        std::mt19937_64 rng(5);
        const auto c = random_chain(rng, 3);
        const Mat4 tip = forward_kinematics(c);
        const Vec3 local(0.3, -0.2, 0.5);
        const Vec3 p = (tip * local.homogeneous()).head<3>();
        const auto j = jacobian_at(c, p);
        const double h = 1e-6;
        for (std::size_t k = 0; k < c.size(); ++k) {
            Eigen::VectorXd q = c.joints();
            q[static_cast<Eigen::Index>(k)] += h;
            const Vec3 plus = (forward_kinematics(c.with_joints(q)) * local.homogeneous()).head<3>();
            q[static_cast<Eigen::Index>(k)] -= 2 * h;
            const Vec3 minus = (forward_kinematics(c.with_joints(q)) * local.homogeneous()).head<3>();
            CHECK((j.block(0, static_cast<Eigen::Index>(k), 3, 1) - (plus - minus) / (2 * h)).norm() <= 1e-6);
        }
        CHECK_THROWS_AS(c.with_joints(Eigen::VectorXd::Zero(2)), Error);
    }

    TEST_CASE("joint torques")
    {
        const auto c = planar(0, 0);
        CHECK(joint_torques(c, Vec3(Vec3::Zero())).norm() == 0.0);
        const auto tau = joint_torques(c, Vec3(0, 1, 0));
        CHECK((tau - Eigen::Vector2d(2, 1)).norm() <= 1e-12);

        std::mt19937_64 rng(6);
        std::normal_distribution<double> n(0.0, 1.0);
        const auto r = random_chain(rng, 4);
        Vec6 f1, f2;
        for (int k = 0; k < 6; ++k) {
            f1[k] = n(rng);
            f2[k] = n(rng);
        }
        CHECK((joint_torques(r, Vec6(f1 + f2)) - joint_torques(r, f1) - joint_torques(r, f2)).norm() <= 1e-12);
    }

    TEST_CASE("statics and kinematics are power dual")
    {
        std::mt19937_64 rng(7);
        std::normal_distribution<double> n(0.0, 1.0);
        for (int i = 0; i < 50; ++i) {
            const auto c = random_chain(rng, 1 + i % 4);
            Eigen::VectorXd qdot(static_cast<Eigen::Index>(c.size()));
            for (auto& x : qdot) {
                x = n(rng);
            }
            Vec6 f;
            for (auto& x : f) {
                x = n(rng);
            }
            const Vec6 twist = jacobian(c) * qdot;
            const double lhs = joint_torques(c, f).dot(qdot);
            CHECK(std::abs(lhs - f.dot(twist)) <= 1e-9 * std::max(1.0, std::abs(lhs)));
        }
    }

    TEST_CASE("contact frames are right-handed with the normal last")
    {
        for (const Vec3& nrm : {Vec3(0, 0, 1), Vec3(1, 2, 3).normalized(), Vec3(-1, 0, 0)}) {
            const Mat3 f = contact_frame(nrm);
            CHECK((f.transpose() * f - Mat3::Identity()).norm() <= 1e-12);
            CHECK(f.determinant() == doctest::Approx(1.0));
            CHECK((f.col(2) - nrm).norm() <= 1e-12);
        }
    }

    TEST_CASE("normal translation transmits to the normal contact velocity")
    {
        const std::vector<Contact> one{{Vec3::Zero(), Vec3::UnitZ()}};
        const auto g = grasp_matrix(one);
        CHECK(g.rows() == 6);
        CHECK(g.cols() == 4);
        Vec6 u = Vec6::Zero();
        u[2] = 0.8;
        const Eigen::VectorXd xdot = g.transpose() * u;
        CHECK(xdot[2] == doctest::Approx(0.8));
        CHECK(std::abs(xdot[0]) <= 1e-15);
        CHECK(std::abs(xdot[1]) <= 1e-15);
    }

    TEST_CASE("antipodal soft contacts: rank is reported")
    {
        const std::vector<Contact> contacts{{Vec3(1, 0, 0), Vec3(-1, 0, 0)}, {Vec3(-1, 0, 0), Vec3(1, 0, 0)}};
        const auto g = grasp_matrix(contacts);
        CHECK(g.cols() == 8);
        const Eigen::JacobiSVD<Eigen::MatrixXd> svd(g);
        const auto& s = svd.singularValues();
        int oracle = 0;
        for (Eigen::Index i = 0; i < s.size(); ++i) {
            oracle += s[i] > 1e-10 * s[0];
        }
        CHECK(numeric_rank(g) == oracle);
        // Rotation about the contact axis is only resisted by the normal moments.
        CHECK(oracle == 6);

        std::vector<KinematicChain> fingers;
        for (const auto& ct : contacts) {
            KinematicChain c;
            // Coincident joint axes make each finger Jacobian rank one.
            c.links = {{0, 0, 0, 0}, {0, 0, 2, 0}};
            c.base.block<3, 1>(0, 3) = ct.point - Vec3(2, 0, 0);
            fingers.push_back(c);
        }
        const auto j = hand_jacobian(fingers, contacts);
        CHECK(j.rows() == 8);
        CHECK(j.cols() == 4);
        Vec6 u = Vec6::Zero();
        u[1] = 1.0;
        const auto rates = solve_grasp_rates(g, j, u);
        CHECK(rates.grasp_rank == oracle);
        CHECK(rates.jacobian_rank == numeric_rank(j));
        CHECK(rates.jacobian_rank == 2);
        CHECK(rates.rank_deficient);
        CHECK(rates.joint_rates.size() == 4);
    }

    TEST_CASE("zero object velocity gives zero rates")
    {
        const std::vector<Contact> contacts{{Vec3(0, 1, 0), Vec3(0, -1, 0)}};
        KinematicChain c;
        c.links = {{0.2, 0, 1, half_pi}, {0.1, 0, 1, 0}, {0.3, 0, 1, 0}};
        const std::vector<KinematicChain> fingers{c};
        const auto rates = solve_grasp_rates(grasp_matrix(contacts), hand_jacobian(fingers, contacts), Vec6::Zero());
        CHECK(rates.contact_velocity.norm() == 0.0);
        CHECK(rates.joint_rates.norm() == 0.0);
        CHECK(rates.residual == 0.0);
    }
}
