#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace morphprint {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;
using Face = std::array<std::uint32_t, 3>;

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ParseError : public Error {
public:
    using Error::Error;
};

/// Undirected edge with a < b.
struct Edge {
    std::uint32_t a = 0;
    std::uint32_t b = 0;
    friend bool operator==(const Edge&, const Edge&) = default;
    friend auto operator<=>(const Edge&, const Edge&) = default;
};

/// Raised when a closed two-manifold is required but edges are used by one
/// face (boundary) or by more than two faces.
class ManifoldError : public Error {
public:
    ManifoldError(const std::string& what, std::vector<Edge> boundary, std::vector<Edge> nonmanifold);
    const std::vector<Edge>& boundary_edges() const noexcept { return boundary_; }
    const std::vector<Edge>& nonmanifold_edges() const noexcept { return nonmanifold_; }

private:
    std::vector<Edge> boundary_;
    std::vector<Edge> nonmanifold_;
};

struct BoundingBox {
    Vec3 min = Vec3::Constant(std::numeric_limits<double>::infinity());
    Vec3 max = Vec3::Constant(-std::numeric_limits<double>::infinity());

    static BoundingBox of(std::span<const Vec3> points);

    bool empty() const { return (min.array() > max.array()).any(); }
    void extend(const Vec3& p);
    BoundingBox merged(const BoundingBox& other) const;

    /// x_b, y_b, z_b
    Vec3 strokes() const { return max - min; }
    Vec3 center() const { return 0.5 * (min + max); }
    double diagonal() const { return strokes().norm(); }
    double volume() const { return strokes().prod(); }
};

/// Indexed triangle mesh. Immutable after construction: topology (vertex
/// neighbor sets and edge-use classification) is computed once in the
/// constructor.
class Mesh {
public:
    Mesh() = default;
    /// Throws Error if any face index is out of range or repeats a vertex.
    Mesh(std::vector<Vec3> vertices, std::vector<Face> faces);

    const std::vector<Vec3>& vertices() const noexcept { return vertices_; }
    const std::vector<Face>& faces() const noexcept { return faces_; }
    std::size_t vertex_count() const noexcept { return vertices_.size(); }
    std::size_t face_count() const noexcept { return faces_.size(); }

    /// Sorted one-ring N_i of each vertex.
    const std::vector<std::vector<std::uint32_t>>& neighbors() const noexcept { return neighbors_; }
    const std::vector<Edge>& boundary_edges() const noexcept { return boundary_; }
    const std::vector<Edge>& nonmanifold_edges() const noexcept { return nonmanifold_; }
    bool is_closed() const noexcept { return boundary_.empty() && nonmanifold_.empty(); }

    std::array<Vec3, 3> corners(std::size_t face) const;
    /// Unnormalized (a-b)x(c-a) style normal; length is twice the face area.
    Vec3 face_normal_raw(std::size_t face) const;
    Vec3 face_normal(std::size_t face) const;
    double face_area(std::size_t face) const;
    Vec3 face_centroid(std::size_t face) const;

    /// Connected component id per vertex, and the number of components.
    std::pair<std::vector<std::uint32_t>, std::size_t> components() const;

    Mesh with_vertices(std::vector<Vec3> vertices) const;
    Mesh flipped() const;
    Mesh transformed(const Eigen::Affine3d& xf) const;
    static Mesh merge(std::span<const Mesh> parts);

private:
    std::vector<Vec3> vertices_;
    std::vector<Face> faces_;
    std::vector<std::vector<std::uint32_t>> neighbors_;
    std::vector<Edge> boundary_;
    std::vector<Edge> nonmanifold_;
};

enum class MeshFormat { Auto, StlBinary, StlAscii, Obj };

MeshFormat parse_mesh_format(const std::string& name);

struct LoadOptions {
    double weld_tolerance = 1e-6;
    double degenerate_area = 1e-12;
    bool require_closed = true;
    bool repair_orientation = true;
};

struct MeshReport {
    std::size_t input_triangles = 0;
    std::size_t welded_vertices = 0;
    std::size_t dropped_degenerate = 0;
    bool orientation_flipped = false;
    std::vector<std::string> warnings;
};

struct LoadedMesh {
    Mesh mesh;
    MeshReport report;
};

/// Welds a triangle soup (3 points per triangle) into an indexed mesh,
/// drops degenerate faces, validates closure and repairs orientation as
/// configured.
LoadedMesh prepare_mesh(std::span<const Vec3> soup, const LoadOptions& options = {});

/// Same as prepare_mesh for already indexed data (vertices are still welded).
LoadedMesh prepare_mesh(std::span<const Vec3> vertices, std::span<const Face> faces,
                        const LoadOptions& options = {});

LoadedMesh load_mesh(const std::filesystem::path& path, MeshFormat format = MeshFormat::Auto,
                     const LoadOptions& options = {});

void save_mesh(const Mesh& mesh, const std::filesystem::path& path, MeshFormat format = MeshFormat::Auto);

struct MeshMeasures {
    double surface_area = 0.0;
    double volume = 0.0;
    Vec3 centroid = Vec3::Zero();
    BoundingBox aabb;
    /// Strokes divided by the z stroke, e.g. (x_b/z_b, y_b/z_b, 1).
    Vec3 stroke_ratio = Vec3::Zero();
    /// Centroid position relative to the AABB, per axis in [0, 1].
    Vec3 centroid_ratio = Vec3::Zero();
    /// Signed volume was negative (faces wound clockwise seen from outside).
    bool inverted = false;
};

double surface_area(const Mesh& mesh);
BoundingBox bounding_box(const Mesh& mesh);
/// Throws ManifoldError naming the open boundary if the mesh is not closed.
double signed_volume(const Mesh& mesh);
MeshMeasures measure(const Mesh& mesh);

/// Flips all faces when the signed volume is negative.
std::pair<Mesh, bool> orient_outward(const Mesh& mesh);

/// Number of faces using each undirected edge, sorted by edge.
std::vector<std::pair<Edge, std::size_t>> edge_use_counts(std::span<const Face> faces);

} // namespace morphprint
