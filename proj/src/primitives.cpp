#include "morphprint/primitives.hpp"

#include <cmath>
#include <map>
#include <numbers>

namespace morphprint::primitives {

namespace {

struct Builder {
    std::vector<Vec3> vertices;
    std::vector<Face> faces;

    std::uint32_t add(const Vec3& p)
    {
        vertices.push_back(p);
        return static_cast<std::uint32_t>(vertices.size() - 1);
    }

    // Triangle wound so that its normal points along `outward`.
    void tri(std::uint32_t a, std::uint32_t b, std::uint32_t c, const Vec3& outward)
    {
        const Vec3 n = (vertices[b] - vertices[a]).cross(vertices[c] - vertices[a]);
        if (n.dot(outward) < 0.0) {
            std::swap(b, c);
        }
        faces.push_back({a, b, c});
    }

    void quad(std::uint32_t a, std::uint32_t b, std::uint32_t c, std::uint32_t d, const Vec3& outward)
    {
        tri(a, b, c, outward);
        tri(a, c, d, outward);
    }

    Mesh build() &&
    {
        return Mesh(std::move(vertices), std::move(faces));
    }
};

// Soup-based builder for shapes whose shared vertices coincide exactly.
struct SoupBuilder {
    std::vector<Vec3> soup;

    void tri(Vec3 a, Vec3 b, Vec3 c, const Vec3& outward)
    {
        if ((b - a).cross(c - a).dot(outward) < 0.0) {
            std::swap(b, c);
        }
        soup.insert(soup.end(), {a, b, c});
    }

    void quad(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d, const Vec3& outward)
    {
        tri(a, b, c, outward);
        tri(a, c, d, outward);
    }

    Mesh build() &&
    {
        LoadOptions opt;
        opt.weld_tolerance = 1e-9;
        return prepare_mesh(std::span<const Vec3>(soup), opt).mesh;
    }
};

} // namespace

Mesh box(const Vec3& min, const Vec3& max, int subdivisions)
{
    if (subdivisions < 1) {
        throw Error("box: subdivisions must be >= 1");
    }
    if ((max.array() <= min.array()).any()) {
        throw Error("box: max must exceed min on every axis");
    }
    const int n = subdivisions;
    SoupBuilder b;
    // (normal axis, sign); the two remaining axes span the face.
    for (int axis = 0; axis < 3; ++axis) {
        const int u = (axis + 1) % 3;
        const int v = (axis + 2) % 3;
        for (int side = 0; side < 2; ++side) {
            Vec3 outward = Vec3::Zero();
            outward[axis] = side ? 1.0 : -1.0;
            auto point = [&](int i, int j) {
                Vec3 p;
                p[axis] = side ? max[axis] : min[axis];
                p[u] = min[u] + (max[u] - min[u]) * i / n;
                p[v] = min[v] + (max[v] - min[v]) * j / n;
                return p;
            };
            for (int i = 0; i < n; ++i) {
                for (int j = 0; j < n; ++j) {
                    b.quad(point(i, j), point(i + 1, j), point(i + 1, j + 1), point(i, j + 1), outward);
                }
            }
        }
    }
    return std::move(b).build();
}

Mesh icosphere(double radius, int level, const Vec3& center)
{
    const double t = (1.0 + std::sqrt(5.0)) / 2.0;
    Builder b;
    for (const Vec3& p : {Vec3(-1, t, 0), Vec3(1, t, 0), Vec3(-1, -t, 0), Vec3(1, -t, 0), Vec3(0, -1, t),
                          Vec3(0, 1, t), Vec3(0, -1, -t), Vec3(0, 1, -t), Vec3(t, 0, -1), Vec3(t, 0, 1),
                          Vec3(-t, 0, -1), Vec3(-t, 0, 1)}) {
        b.add(p.normalized());
    }
    std::vector<Face> faces = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4},
                               {11, 10, 2}, {10, 7, 6}, {7, 1, 8},  {3, 9, 4},  {3, 4, 2},   {3, 2, 6}, {3, 6, 8},
                               {3, 8, 9},  {4, 9, 5},  {2, 4, 11}, {6, 2, 10}, {8, 6, 7},   {9, 8, 1}};
    for (int l = 0; l < level; ++l) {
        std::map<std::pair<std::uint32_t, std::uint32_t>, std::uint32_t> midpoint;
        auto mid = [&](std::uint32_t a, std::uint32_t c) {
            auto key = std::minmax(a, c);
            auto it = midpoint.find(key);
            if (it != midpoint.end()) {
                return it->second;
            }
            const auto idx = b.add((b.vertices[a] + b.vertices[c]).normalized());
            midpoint.emplace(key, idx);
            return idx;
        };
        std::vector<Face> next;
        next.reserve(faces.size() * 4);
        for (const auto& f : faces) {
            const auto ab = mid(f[0], f[1]);
            const auto bc = mid(f[1], f[2]);
            const auto ca = mid(f[2], f[0]);
            next.push_back({f[0], ab, ca});
            next.push_back({f[1], bc, ab});
            next.push_back({f[2], ca, bc});
            next.push_back({ab, bc, ca});
        }
        faces = std::move(next);
    }
    for (const auto& f : faces) {
        const Vec3 c = (b.vertices[f[0]] + b.vertices[f[1]] + b.vertices[f[2]]) / 3.0;
        b.tri(f[0], f[1], f[2], c);
    }
    for (auto& v : b.vertices) {
        v = center + radius * v;
    }
    return std::move(b).build();
}

Mesh square_frame(double outer_side, double inner_side, double height, const Vec3& base_center)
{
    if (!(inner_side > 0.0 && outer_side > inner_side && height > 0.0)) {
        throw Error("square_frame: need 0 < inner_side < outer_side and height > 0");
    }
    const double ho = outer_side / 2.0, hi = inner_side / 2.0;
    const Vec3 c = base_center;
    auto corner = [&](double half, int k, double z) {
        // k = 0..3 counter-clockwise from (+,+)
        const double sx = (k == 0 || k == 3) ? 1.0 : -1.0;
        const double sy = (k == 0 || k == 1) ? 1.0 : -1.0;
        return Vec3(c.x() + sx * half, c.y() + sy * half, c.z() + z);
    };
    SoupBuilder b;
    for (int k = 0; k < 4; ++k) {
        const int k1 = (k + 1) % 4;
        const Vec3 edge_mid = (corner(ho, k, 0) + corner(ho, k1, 0)) / 2.0 - c;
        const Vec3 out(edge_mid.x(), edge_mid.y(), 0.0);
        b.quad(corner(ho, k, 0), corner(ho, k1, 0), corner(ho, k1, height), corner(ho, k, height), out);
        b.quad(corner(hi, k, 0), corner(hi, k1, 0), corner(hi, k1, height), corner(hi, k, height), -out);
        b.quad(corner(ho, k, height), corner(ho, k1, height), corner(hi, k1, height), corner(hi, k, height),
               Vec3::UnitZ());
        b.quad(corner(ho, k, 0), corner(ho, k1, 0), corner(hi, k1, 0), corner(hi, k, 0), -Vec3::UnitZ());
    }
    return std::move(b).build();
}

Mesh tube_y(const Vec3& start, double length, double radius, int sides, int rings)
{
    if (sides < 3 || rings < 2 || length <= 0.0 || radius <= 0.0) {
        throw Error("tube_y: need sides >= 3, rings >= 2, positive length and radius");
    }
    Builder b;
    std::vector<std::vector<std::uint32_t>> ring(rings);
    for (int r = 0; r < rings; ++r) {
        const double y = length * r / (rings - 1);
        for (int s = 0; s < sides; ++s) {
            const double phi = 2.0 * std::numbers::pi * s / sides;
            ring[r].push_back(b.add(start + Vec3(radius * std::cos(phi), y, radius * std::sin(phi))));
        }
    }
    const auto base = b.add(start);
    const auto tip = b.add(start + Vec3(0, length, 0));
    for (int r = 0; r + 1 < rings; ++r) {
        for (int s = 0; s < sides; ++s) {
            const int s1 = (s + 1) % sides;
            const Vec3 mid = (b.vertices[ring[r][s]] + b.vertices[ring[r][s1]]) / 2.0 - start;
            const Vec3 out(mid.x(), 0.0, mid.z());
            b.quad(ring[r][s], ring[r][s1], ring[r + 1][s1], ring[r + 1][s], out);
        }
    }
    for (int s = 0; s < sides; ++s) {
        const int s1 = (s + 1) % sides;
        b.tri(base, ring[0][s], ring[0][s1], -Vec3::UnitY());
        b.tri(tip, ring[rings - 1][s], ring[rings - 1][s1], Vec3::UnitY());
    }
    return std::move(b).build();
}

} // namespace morphprint::primitives
