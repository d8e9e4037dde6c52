#include "morphprint/mesh.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include "morphprint/io.hpp"

namespace morphprint {

namespace {

std::string describe_edges(const std::vector<Edge>& edges, std::size_t limit = 16)
{
    std::string s;
    for (std::size_t i = 0; i < edges.size() && i < limit; ++i) {
        if (i) {
            s += ", ";
        }
        s += "(" + std::to_string(edges[i].a) + "," + std::to_string(edges[i].b) + ")";
    }
    if (edges.size() > limit) {
        s += ", ...";
    }
    return s;
}

Edge make_edge(std::uint32_t a, std::uint32_t b) { return a < b ? Edge{a, b} : Edge{b, a}; }

} // namespace

ManifoldError::ManifoldError(const std::string& what, std::vector<Edge> boundary, std::vector<Edge> nonmanifold)
    : Error(what + (boundary.empty() ? std::string() : "; boundary edges: " + describe_edges(boundary)) +
            (nonmanifold.empty() ? std::string() : "; non-manifold edges: " + describe_edges(nonmanifold))),
      boundary_(std::move(boundary)),
      nonmanifold_(std::move(nonmanifold))
{
}

BoundingBox BoundingBox::of(std::span<const Vec3> points)
{
    BoundingBox box;
    for (const auto& p : points) {
        box.extend(p);
    }
    return box;
}

void BoundingBox::extend(const Vec3& p)
{
    min = min.cwiseMin(p);
    max = max.cwiseMax(p);
}

BoundingBox BoundingBox::merged(const BoundingBox& other) const
{
    BoundingBox box;
    box.min = min.cwiseMin(other.min);
    box.max = max.cwiseMax(other.max);
    return box;
}

std::vector<std::pair<Edge, std::size_t>> edge_use_counts(std::span<const Face> faces)
{
    std::vector<Edge> edges;
    edges.reserve(faces.size() * 3);
    for (const auto& f : faces) {
        for (int k = 0; k < 3; ++k) {
            edges.push_back(make_edge(f[k], f[(k + 1) % 3]));
        }
    }
    std::sort(edges.begin(), edges.end());
    std::vector<std::pair<Edge, std::size_t>> counts;
    for (std::size_t i = 0; i < edges.size();) {
        std::size_t j = i;
        while (j < edges.size() && edges[j] == edges[i]) {
            ++j;
        }
        counts.emplace_back(edges[i], j - i);
        i = j;
    }
    return counts;
}

Mesh::Mesh(std::vector<Vec3> vertices, std::vector<Face> faces)
    : vertices_(std::move(vertices)), faces_(std::move(faces))
{
    const auto n = static_cast<std::uint32_t>(vertices_.size());
    for (std::size_t i = 0; i < faces_.size(); ++i) {
        const auto& f = faces_[i];
        for (auto v : f) {
            if (v >= n) {
                throw Error("face " + std::to_string(i) + " references vertex " + std::to_string(v) +
                            " but the mesh has " + std::to_string(n) + " vertices");
            }
        }
        if (f[0] == f[1] || f[1] == f[2] || f[0] == f[2]) {
            throw Error("face " + std::to_string(i) + " repeats a vertex index");
        }
    }
    neighbors_.assign(vertices_.size(), {});
    for (const auto& [edge, count] : edge_use_counts(faces_)) {
        neighbors_[edge.a].push_back(edge.b);
        neighbors_[edge.b].push_back(edge.a);
        if (count == 1) {
            boundary_.push_back(edge);
        } else if (count > 2) {
            nonmanifold_.push_back(edge);
        }
    }
    for (auto& ring : neighbors_) {
        std::sort(ring.begin(), ring.end());
    }
}

std::array<Vec3, 3> Mesh::corners(std::size_t face) const
{
    const auto& f = faces_.at(face);
    return {vertices_[f[0]], vertices_[f[1]], vertices_[f[2]]};
}

Vec3 Mesh::face_normal_raw(std::size_t face) const
{
    const auto c = corners(face);
    return (c[1] - c[0]).cross(c[2] - c[0]);
}

Vec3 Mesh::face_normal(std::size_t face) const
{
    const Vec3 n = face_normal_raw(face);
    const double len = n.norm();
    return len > 0.0 ? Vec3(n / len) : Vec3::Zero();
}

double Mesh::face_area(std::size_t face) const { return 0.5 * face_normal_raw(face).norm(); }

Vec3 Mesh::face_centroid(std::size_t face) const
{
    const auto c = corners(face);
    return (c[0] + c[1] + c[2]) / 3.0;
}

std::pair<std::vector<std::uint32_t>, std::size_t> Mesh::components() const
{
    constexpr auto unset = std::numeric_limits<std::uint32_t>::max();
    std::vector<std::uint32_t> label(vertices_.size(), unset);
    std::uint32_t next = 0;
    std::vector<std::uint32_t> stack;
    for (std::uint32_t seed = 0; seed < vertices_.size(); ++seed) {
        if (label[seed] != unset) {
            continue;
        }
        label[seed] = next;
        stack.push_back(seed);
        while (!stack.empty()) {
            auto v = stack.back();
            stack.pop_back();
            for (auto w : neighbors_[v]) {
                if (label[w] == unset) {
                    label[w] = next;
                    stack.push_back(w);
                }
            }
        }
        ++next;
    }
    return {std::move(label), next};
}

Mesh Mesh::with_vertices(std::vector<Vec3> vertices) const
{
    if (vertices.size() != vertices_.size()) {
        throw Error("with_vertices: vertex count mismatch");
    }
    Mesh m = *this;
    m.vertices_ = std::move(vertices);
    return m;
}

Mesh Mesh::flipped() const
{
    std::vector<Face> faces = faces_;
    for (auto& f : faces) {
        std::swap(f[1], f[2]);
    }
    return Mesh(vertices_, std::move(faces));
}

Mesh Mesh::transformed(const Eigen::Affine3d& xf) const
{
    std::vector<Vec3> v;
    v.reserve(vertices_.size());
    for (const auto& p : vertices_) {
        v.push_back(xf * p);
    }
    return with_vertices(std::move(v));
}

Mesh Mesh::merge(std::span<const Mesh> parts)
{
    std::vector<Vec3> vertices;
    std::vector<Face> faces;
    for (const auto& part : parts) {
        const auto offset = static_cast<std::uint32_t>(vertices.size());
        vertices.insert(vertices.end(), part.vertices().begin(), part.vertices().end());
        for (auto f : part.faces()) {
            faces.push_back({f[0] + offset, f[1] + offset, f[2] + offset});
        }
    }
    return Mesh(std::move(vertices), std::move(faces));
}

// ---------------------------------------------------------------------------
// welding and validation

namespace {

struct CellKey {
    std::int64_t x, y, z;
    bool operator==(const CellKey&) const = default;
};

struct CellHash {
    std::size_t operator()(const CellKey& k) const noexcept
    {
        std::uint64_t h = static_cast<std::uint64_t>(k.x) * 0x9E3779B97F4A7C15ULL;
        h ^= static_cast<std::uint64_t>(k.y) * 0xC2B2AE3D27D4EB4FULL + (h << 6) + (h >> 2);
        h ^= static_cast<std::uint64_t>(k.z) * 0x165667B19E3779F9ULL + (h << 6) + (h >> 2);
        return static_cast<std::size_t>(h);
    }
};

/// Maps each input point to a welded vertex index; points within `tol`
/// of an earlier point collapse onto it.
std::vector<std::uint32_t> weld(std::span<const Vec3> points, double tol, std::vector<Vec3>& out)
{
    std::unordered_map<CellKey, std::vector<std::uint32_t>, CellHash> grid;
    std::vector<std::uint32_t> remap(points.size());
    const double cell = tol > 0.0 ? tol : 1e-12;
    auto key_of = [cell](const Vec3& p) {
        return CellKey{static_cast<std::int64_t>(std::floor(p.x() / cell)),
                       static_cast<std::int64_t>(std::floor(p.y() / cell)),
                       static_cast<std::int64_t>(std::floor(p.z() / cell))};
    };
    for (std::size_t i = 0; i < points.size(); ++i) {
        const Vec3& p = points[i];
        const CellKey k = key_of(p);
        std::int64_t found = -1;
        for (int dx = -1; dx <= 1 && found < 0; ++dx) {
            for (int dy = -1; dy <= 1 && found < 0; ++dy) {
                for (int dz = -1; dz <= 1 && found < 0; ++dz) {
                    auto it = grid.find({k.x + dx, k.y + dy, k.z + dz});
                    if (it == grid.end()) {
                        continue;
                    }
                    for (auto idx : it->second) {
                        if ((out[idx] - p).norm() <= tol) {
                            found = idx;
                            break;
                        }
                    }
                }
            }
        }
        if (found < 0) {
            found = static_cast<std::int64_t>(out.size());
            out.push_back(p);
            grid[k].push_back(static_cast<std::uint32_t>(found));
        }
        remap[i] = static_cast<std::uint32_t>(found);
    }
    return remap;
}

double raw_signed_volume(const Mesh& mesh)
{
    double v = 0.0;
    for (std::size_t f = 0; f < mesh.face_count(); ++f) {
        const auto c = mesh.corners(f);
        v += c[0].dot(c[1].cross(c[2]));
    }
    return v / 6.0;
}

LoadedMesh finish(std::vector<Vec3> vertices, std::vector<Face> faces, MeshReport report, const LoadOptions& opt)
{
    std::vector<Face> kept;
    kept.reserve(faces.size());
    for (const auto& f : faces) {
        bool degenerate = f[0] == f[1] || f[1] == f[2] || f[0] == f[2];
        if (!degenerate) {
            const Vec3 n = (vertices[f[1]] - vertices[f[0]]).cross(vertices[f[2]] - vertices[f[0]]);
            degenerate = 0.5 * n.norm() < opt.degenerate_area;
        }
        if (degenerate) {
            ++report.dropped_degenerate;
        } else {
            kept.push_back(f);
        }
    }
    if (report.dropped_degenerate > 0) {
        report.warnings.push_back("dropped " + std::to_string(report.dropped_degenerate) + " degenerate face(s)");
    }

    // Compact away vertices no longer referenced.
    std::vector<std::int64_t> index(vertices.size(), -1);
    std::vector<Vec3> used;
    for (auto& f : kept) {
        for (auto& v : f) {
            if (index[v] < 0) {
                index[v] = static_cast<std::int64_t>(used.size());
                used.push_back(vertices[v]);
            }
            v = static_cast<std::uint32_t>(index[v]);
        }
    }

    Mesh mesh(std::move(used), std::move(kept));
    if (opt.require_closed && !mesh.is_closed()) {
        throw ManifoldError("mesh is not a closed two-manifold (" + std::to_string(mesh.boundary_edges().size()) +
                                " boundary, " + std::to_string(mesh.nonmanifold_edges().size()) +
                                " non-manifold edges)",
                            mesh.boundary_edges(), mesh.nonmanifold_edges());
    }
    if (opt.repair_orientation && mesh.is_closed() && raw_signed_volume(mesh) < 0.0) {
        mesh = mesh.flipped();
        report.orientation_flipped = true;
        report.warnings.push_back("negative signed volume: flipped all faces to outward orientation");
    }
    return {std::move(mesh), std::move(report)};
}

} // namespace

LoadedMesh prepare_mesh(std::span<const Vec3> soup, const LoadOptions& options)
{
    if (soup.size() % 3 != 0) {
        throw Error("triangle soup size is not a multiple of 3");
    }
    MeshReport report;
    report.input_triangles = soup.size() / 3;
    std::vector<Vec3> vertices;
    const auto remap = weld(soup, options.weld_tolerance, vertices);
    report.welded_vertices = soup.size() - vertices.size();
    std::vector<Face> faces(soup.size() / 3);
    for (std::size_t i = 0; i < faces.size(); ++i) {
        faces[i] = {remap[3 * i], remap[3 * i + 1], remap[3 * i + 2]};
    }
    return finish(std::move(vertices), std::move(faces), std::move(report), options);
}

LoadedMesh prepare_mesh(std::span<const Vec3> vertices, std::span<const Face> faces, const LoadOptions& options)
{
    MeshReport report;
    report.input_triangles = faces.size();
    std::vector<Vec3> welded;
    const auto remap = weld(vertices, options.weld_tolerance, welded);
    report.welded_vertices = vertices.size() - welded.size();
    std::vector<Face> out(faces.size());
    for (std::size_t i = 0; i < faces.size(); ++i) {
        for (int k = 0; k < 3; ++k) {
            if (faces[i][k] >= vertices.size()) {
                throw Error("face " + std::to_string(i) + " references missing vertex " + std::to_string(faces[i][k]));
            }
            out[i][k] = remap[faces[i][k]];
        }
    }
    return finish(std::move(welded), std::move(out), std::move(report), options);
}

// ---------------------------------------------------------------------------
// file formats

MeshFormat parse_mesh_format(const std::string& name)
{
    if (name == "auto") {
        return MeshFormat::Auto;
    }
    if (name == "stl" || name == "stl-binary") {
        return MeshFormat::StlBinary;
    }
    if (name == "stl-ascii") {
        return MeshFormat::StlAscii;
    }
    if (name == "obj") {
        return MeshFormat::Obj;
    }
    throw Error("unknown mesh format '" + name + "' (expected stl-binary, stl-ascii, obj or auto)");
}

namespace {

static_assert(std::endian::native == std::endian::little, "STL I/O assumes a little-endian host");

std::string lower_ext(const std::filesystem::path& path)
{
    std::string ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    return ext;
}

MeshFormat detect_format(const std::filesystem::path& path, const std::string& bytes)
{
    const std::string ext = lower_ext(path);
    if (ext == ".obj") {
        return MeshFormat::Obj;
    }
    if (bytes.size() >= 84) {
        std::uint32_t n = 0;
        std::memcpy(&n, bytes.data() + 80, 4);
        if (bytes.size() == 84 + 50ULL * n) {
            return MeshFormat::StlBinary;
        }
    }
    auto first = bytes.find_first_not_of(" \t\r\n");
    if (first != std::string::npos && bytes.compare(first, 5, "solid") == 0) {
        return MeshFormat::StlAscii;
    }
    return MeshFormat::StlBinary;
}

std::vector<Vec3> read_stl_binary(const std::string& bytes)
{
    if (bytes.size() < 84) {
        throw ParseError("binary STL: file shorter than the 84-byte header");
    }
    std::uint32_t n = 0;
    std::memcpy(&n, bytes.data() + 80, 4);
    if (bytes.size() < 84 + 50ULL * n) {
        throw ParseError("binary STL: header declares " + std::to_string(n) + " triangles but file holds " +
                         std::to_string((bytes.size() - 84) / 50));
    }
    std::vector<Vec3> soup;
    soup.reserve(3ULL * n);
    for (std::uint32_t t = 0; t < n; ++t) {
        const char* rec = bytes.data() + 84 + 50ULL * t;
        float xyz[12];
        std::memcpy(xyz, rec, sizeof(xyz));
        for (int k = 0; k < 3; ++k) {
            soup.emplace_back(xyz[3 + 3 * k], xyz[4 + 3 * k], xyz[5 + 3 * k]);
        }
    }
    return soup;
}

std::vector<Vec3> read_stl_ascii(const std::string& text)
{
    std::istringstream in(text);
    std::string token;
    std::vector<Vec3> soup;
    std::size_t line_hint = 0;
    while (in >> token) {
        if (token == "vertex") {
            double x, y, z;
            if (!(in >> x >> y >> z)) {
                throw ParseError("ASCII STL: malformed vertex record #" + std::to_string(soup.size() + 1));
            }
            soup.emplace_back(x, y, z);
        } else if (token == "endfacet") {
            ++line_hint;
            if (soup.size() != 3 * line_hint) {
                throw ParseError("ASCII STL: facet " + std::to_string(line_hint) + " does not have 3 vertices");
            }
        }
    }
    if (soup.empty() || soup.size() % 3 != 0) {
        throw ParseError("ASCII STL: no complete facets found");
    }
    return soup;
}

void read_obj(const std::string& text, std::vector<Vec3>& vertices, std::vector<Face>& faces)
{
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::istringstream ls(line);
        std::string tag;
        if (!(ls >> tag)) {
            continue;
        }
        if (tag == "v") {
            double x, y, z;
            if (!(ls >> x >> y >> z)) {
                throw ParseError("OBJ line " + std::to_string(line_no) + ": malformed vertex");
            }
            vertices.emplace_back(x, y, z);
        } else if (tag == "f") {
            std::vector<std::uint32_t> poly;
            std::string ref;
            while (ls >> ref) {
                const long idx = std::stol(ref.substr(0, ref.find('/')));
                const long resolved = idx < 0 ? static_cast<long>(vertices.size()) + idx : idx - 1;
                if (resolved < 0 || resolved >= static_cast<long>(vertices.size())) {
                    throw ParseError("OBJ line " + std::to_string(line_no) + ": vertex index out of range");
                }
                poly.push_back(static_cast<std::uint32_t>(resolved));
            }
            if (poly.size() < 3) {
                throw ParseError("OBJ line " + std::to_string(line_no) + ": face with fewer than 3 vertices");
            }
            for (std::size_t k = 1; k + 1 < poly.size(); ++k) {
                faces.push_back({poly[0], poly[k], poly[k + 1]});
            }
        }
    }
}

} // namespace

LoadedMesh load_mesh(const std::filesystem::path& path, MeshFormat format, const LoadOptions& options)
{
    const std::string bytes = io::read_text(path);
    if (format == MeshFormat::Auto) {
        format = detect_format(path, bytes);
    }
    switch (format) {
    case MeshFormat::StlBinary: {
        const auto soup = read_stl_binary(bytes);
        return prepare_mesh(std::span<const Vec3>(soup), options);
    }
    case MeshFormat::StlAscii: {
        const auto soup = read_stl_ascii(bytes);
        return prepare_mesh(std::span<const Vec3>(soup), options);
    }
    case MeshFormat::Obj: {
        std::vector<Vec3> vertices;
        std::vector<Face> faces;
        read_obj(bytes, vertices, faces);
        return prepare_mesh(vertices, faces, options);
    }
    case MeshFormat::Auto:
        break;
    }
    throw Error("unreachable mesh format");
}

void save_mesh(const Mesh& mesh, const std::filesystem::path& path, MeshFormat format)
{
    if (format == MeshFormat::Auto) {
        format = lower_ext(path) == ".obj" ? MeshFormat::Obj : MeshFormat::StlBinary;
    }
    std::string out;
    if (format == MeshFormat::StlBinary) {
        out.assign(80, '\0');
        const char tag[] = "morphprint binary STL";
        std::memcpy(out.data(), tag, sizeof(tag) - 1);
        const auto n = static_cast<std::uint32_t>(mesh.face_count());
        out.append(reinterpret_cast<const char*>(&n), 4);
        for (std::size_t f = 0; f < mesh.face_count(); ++f) {
            const Vec3 nrm = mesh.face_normal(f);
            const auto c = mesh.corners(f);
            float rec[12] = {float(nrm.x()), float(nrm.y()), float(nrm.z())};
            for (int k = 0; k < 3; ++k) {
                for (int a = 0; a < 3; ++a) {
                    rec[3 + 3 * k + a] = static_cast<float>(c[k][a]);
                }
            }
            out.append(reinterpret_cast<const char*>(rec), sizeof(rec));
            out.append(2, '\0');
        }
    } else if (format == MeshFormat::StlAscii) {
        using io::format_double;
        out = "solid morphprint\n";
        for (std::size_t f = 0; f < mesh.face_count(); ++f) {
            const Vec3 nrm = mesh.face_normal(f);
            out += "  facet normal " + format_double(nrm.x()) + " " + format_double(nrm.y()) + " " +
                   format_double(nrm.z()) + "\n    outer loop\n";
            for (const auto& c : mesh.corners(f)) {
                out += "      vertex " + format_double(c.x()) + " " + format_double(c.y()) + " " +
                       format_double(c.z()) + "\n";
            }
            out += "    endloop\n  endfacet\n";
        }
        out += "endsolid morphprint\n";
    } else {
        using io::format_double;
        for (const auto& v : mesh.vertices()) {
            out += "v " + format_double(v.x()) + " " + format_double(v.y()) + " " + format_double(v.z()) + "\n";
        }
        for (const auto& f : mesh.faces()) {
            out += "f " + std::to_string(f[0] + 1) + " " + std::to_string(f[1] + 1) + " " + std::to_string(f[2] + 1) +
                   "\n";
        }
    }
    io::write_text(path, out);
}

// ---------------------------------------------------------------------------
// measurement

double surface_area(const Mesh& mesh)
{
    double area = 0.0;
    for (std::size_t f = 0; f < mesh.face_count(); ++f) {
        area += mesh.face_area(f);
    }
    return area;
}

BoundingBox bounding_box(const Mesh& mesh) { return BoundingBox::of(mesh.vertices()); }

namespace {

void require_closed(const Mesh& mesh, const char* what)
{
    if (!mesh.is_closed()) {
        throw ManifoldError(std::string(what) + " requires a closed mesh", mesh.boundary_edges(),
                            mesh.nonmanifold_edges());
    }
}

} // namespace

double signed_volume(const Mesh& mesh)
{
    require_closed(mesh, "volume");
    return raw_signed_volume(mesh);
}

MeshMeasures measure(const Mesh& mesh)
{
    require_closed(mesh, "volume/centroid");
    MeshMeasures m;
    m.surface_area = surface_area(mesh);
    m.aabb = bounding_box(mesh);

    // Tetrahedra against a reference point inside the AABB keep the centroid
    // sum well conditioned for meshes far from the origin.
    const Vec3 ref = m.aabb.center();
    double vol6 = 0.0;
    Vec3 moment = Vec3::Zero();
    for (std::size_t f = 0; f < mesh.face_count(); ++f) {
        const auto c = mesh.corners(f);
        const Vec3 a = c[0] - ref, b = c[1] - ref, d = c[2] - ref;
        const double v = a.dot(b.cross(d));
        vol6 += v;
        moment += v * (a + b + d);
    }
    m.volume = vol6 / 6.0;
    m.inverted = m.volume < 0.0;
    m.centroid = vol6 != 0.0 ? Vec3(ref + moment / (4.0 * vol6)) : ref;

    const Vec3 strokes = m.aabb.strokes();
    if (strokes.z() > 0.0) {
        m.stroke_ratio = strokes / strokes.z();
    }
    for (int a = 0; a < 3; ++a) {
        m.centroid_ratio[a] = strokes[a] > 0.0 ? (m.centroid[a] - m.aabb.min[a]) / strokes[a] : 0.0;
    }
    return m;
}

std::pair<Mesh, bool> orient_outward(const Mesh& mesh)
{
    if (signed_volume(mesh) < 0.0) {
        return {mesh.flipped(), true};
    }
    return {mesh, false};
}

} // namespace morphprint
