#include <doctest.h>

#include <cmath>
#include <map>
#include <numbers>

#include "morphprint/io.hpp"
#include "morphprint/mesh.hpp"
#include "morphprint/primitives.hpp"
#include "support.hpp"

using namespace morphprint;
namespace fs = std::filesystem;

TEST_SUITE("mesh")
{
    TEST_CASE("ASCII STL cube loads as 8 vertices and 12 faces")
    {
        const auto dir = testing::scratch("mesh_ascii");
        io::write_text(dir / "cube.stl", testing::cube_ascii_stl);
        const auto loaded = load_mesh(dir / "cube.stl");
        CHECK(loaded.mesh.vertex_count() == 8);
        CHECK(loaded.mesh.face_count() == 12);
        CHECK(loaded.report.input_triangles == 12);
        CHECK_FALSE(loaded.report.orientation_flipped);
        CHECK(loaded.mesh.is_closed());
    }

    TEST_CASE("duplicated vertex records are welded")
    {
        const auto cube = primitives::box(Vec3::Zero(), Vec3::Ones());
        std::vector<Vec3> soup;
        for (std::size_t f = 0; f < cube.face_count(); ++f) {
            for (const auto& c : cube.corners(f)) {
                soup.push_back(c);
            }
        }
        const auto loaded = prepare_mesh(soup);
        CHECK(soup.size() == 36);
        CHECK(loaded.mesh.vertex_count() == 8);
        CHECK(loaded.report.welded_vertices == 28);
    }

    TEST_CASE("open surface reports exactly the boundary edges")
    {
        const auto cube = primitives::box(Vec3::Zero(), Vec3::Ones());
        std::vector<Face> faces(cube.faces().begin() + 1, cube.faces().end());
        LoadOptions lenient;
        lenient.require_closed = false;
        const auto open = prepare_mesh(cube.vertices(), faces, lenient);
        // Brute-force edge use count oracle.
        std::map<std::pair<std::uint32_t, std::uint32_t>, int> uses;
        for (const auto& f : open.mesh.faces()) {
            for (int k = 0; k < 3; ++k) {
                auto a = f[k], b = f[(k + 1) % 3];
                uses[{std::min(a, b), std::max(a, b)}]++;
            }
        }
        std::vector<Edge> expected;
        for (const auto& [e, n] : uses) {
            if (n == 1) {
                expected.push_back({e.first, e.second});
            }
        }
        REQUIRE(expected.size() == 3);
        CHECK(open.mesh.boundary_edges() == expected);
        try {
            prepare_mesh(cube.vertices(), faces);
            FAIL("open mesh accepted");
        } catch (const ManifoldError& e) {
            CHECK(e.boundary_edges() == expected);
            CHECK(e.nonmanifold_edges().empty());
        }
        CHECK_THROWS_AS(signed_volume(open.mesh), ManifoldError);
        CHECK(surface_area(open.mesh) == doctest::Approx(5.5).epsilon(1e-12));
    }

    TEST_CASE("degenerate faces are dropped with a warning")
    {
        std::vector<Vec3> v{{0, 0, 0}, {1, 0, 0}, {2, 0, 0}, {0, 1, 0}};
        std::vector<Face> f{{0, 1, 2}, {0, 1, 3}};
        LoadOptions opt;
        opt.require_closed = false;
        const auto loaded = prepare_mesh(v, f, opt);
        CHECK(loaded.report.dropped_degenerate == 1);
        CHECK(loaded.mesh.face_count() == 1);
        CHECK_FALSE(loaded.report.warnings.empty());
    }

    TEST_CASE("unit cube metrology is exact")
    {
        const auto m = measure(primitives::box(Vec3::Zero(), Vec3::Ones()));
        CHECK(std::abs(m.surface_area - 6.0) <= 1e-12);
        CHECK(std::abs(m.volume - 1.0) <= 1e-12);
        CHECK((m.centroid - Vec3::Constant(0.5)).norm() <= 1e-12);
        CHECK(m.aabb.strokes() == Vec3::Ones());
        CHECK(m.aabb.diagonal() == doctest::Approx(std::sqrt(3.0)));
        CHECK(m.centroid_ratio.isApprox(Vec3::Constant(0.5)));
        CHECK_FALSE(m.inverted);
    }

    TEST_CASE("inside-out cube has volume -1 and is repaired on load")
    {
        const auto flipped = primitives::box(Vec3::Zero(), Vec3::Ones()).flipped();
        CHECK(signed_volume(flipped) == doctest::Approx(-1.0).epsilon(1e-12));
        CHECK(measure(flipped).inverted);
        const auto loaded = prepare_mesh(flipped.vertices(), flipped.faces());
        CHECK(loaded.report.orientation_flipped);
        CHECK(signed_volume(loaded.mesh) == doctest::Approx(1.0).epsilon(1e-12));
    }

    TEST_CASE("icosphere volume approaches the analytic sphere")
    {
        const auto s = primitives::icosphere(10.0, 3);
        CHECK(s.face_count() == 1280);
        const double exact = 4.0 / 3.0 * std::numbers::pi * 1000.0;
        CHECK(std::abs(signed_volume(s) - exact) / exact <= 0.01);
        CHECK(measure(s).centroid.norm() <= 1e-9);
    }

    TEST_CASE("rigid motions keep volume, mirrors negate it")
    {
        std::mt19937_64 rng(7);
        const auto s = primitives::icosphere(3.0, 2, Vec3(1, 2, 3));
        const double v0 = signed_volume(s);
        const double a0 = surface_area(s);
        for (int t = 0; t < 5; ++t) {
            Eigen::Affine3d xf = Eigen::Affine3d::Identity();
            xf.linear() = testing::random_rotation(rng);
            xf.translation() = Vec3(t, -2.0 * t, 0.5);
            const auto moved = s.transformed(xf);
            CHECK(signed_volume(moved) == doctest::Approx(v0).epsilon(1e-12));
            CHECK(surface_area(moved) == doctest::Approx(a0).epsilon(1e-12));
        }
        Eigen::Affine3d mirror = Eigen::Affine3d::Identity();
        mirror.linear()(0, 0) = -1.0;
        CHECK(signed_volume(s.transformed(mirror)) == doctest::Approx(-v0).epsilon(1e-12));
    }

    TEST_CASE("uniform scaling: area s^2, volume s^3")
    {
        const auto s = primitives::icosphere(2.0, 2);
        const double v0 = signed_volume(s), a0 = surface_area(s);
        for (double k : {0.5, 3.0, 7.25}) {
            Eigen::Affine3d xf(Eigen::Scaling(k));
            const auto scaled = s.transformed(xf);
            CHECK(std::abs(signed_volume(scaled) / (k * k * k * v0) - 1.0) <= 1e-9);
            CHECK(std::abs(surface_area(scaled) / (k * k * a0) - 1.0) <= 1e-9);
        }
    }

    TEST_CASE("AABB of a union is the componentwise hull")
    {
        const auto a = primitives::box(Vec3(-1, 0, 2), Vec3(0, 1, 3));
        const auto b = primitives::icosphere(1.5, 1, Vec3(4, -2, 0));
        const std::vector<Mesh> parts{a, b};
        const auto both = bounding_box(Mesh::merge(parts));
        const auto ba = bounding_box(a), bb = bounding_box(b);
        CHECK(both.min == ba.min.cwiseMin(bb.min));
        CHECK(both.max == ba.max.cwiseMax(bb.max));
        CHECK(both.merged(ba).min == both.min);
    }

    TEST_CASE("adjacency is symmetric")
    {
        const auto s = primitives::icosphere(1.0, 2);
        const auto& n = s.neighbors();
        for (std::uint32_t i = 0; i < n.size(); ++i) {
            for (auto j : n[i]) {
                CHECK(std::binary_search(n[j].begin(), n[j].end(), i));
            }
        }
    }

    TEST_CASE("binary STL and OBJ round trips preserve the mesh")
    {
        const auto dir = testing::scratch("mesh_roundtrip");
        const auto s = primitives::icosphere(5.0, 2, Vec3(1, 1, 1));
        for (const char* name : {"s.stl", "s.obj"}) {
            save_mesh(s, dir / name);
            const auto back = load_mesh(dir / name);
            CHECK(back.mesh.face_count() == s.face_count());
            CHECK(back.mesh.vertex_count() == s.vertex_count());
            CHECK(signed_volume(back.mesh) == doctest::Approx(signed_volume(s)).epsilon(1e-5));
        }
        save_mesh(s, dir / "a.stl", MeshFormat::StlAscii);
        CHECK(io::read_text(dir / "a.stl").rfind("solid", 0) == 0);
        CHECK(load_mesh(dir / "a.stl").mesh.face_count() == s.face_count());
    }

    TEST_CASE("malformed files raise parse errors")
    {
        const auto dir = testing::scratch("mesh_bad");
        io::write_text(dir / "short.stl", std::string(40, '\0'));
        CHECK_THROWS_AS(load_mesh(dir / "short.stl", MeshFormat::StlBinary), ParseError);
        io::write_text(dir / "bad.obj", "v 0 0 0\nv 1 0 0\nf 1 2 9\n");
        CHECK_THROWS_AS(load_mesh(dir / "bad.obj"), ParseError);
        CHECK_THROWS_AS(parse_mesh_format("ply"), Error);
    }
}
