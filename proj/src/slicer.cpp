#include "morphprint/slicer.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <numeric>
#include <unordered_map>

namespace morphprint {

double shoelace(std::span<const Vec2> polygon)
{
    const std::size_t n = polygon.size();
    double twice = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const Vec2& a = polygon[i];
        const Vec2& b = polygon[(i + 1) % n];
        twice += a.x() * b.y() - b.x() * a.y();
    }
    return 0.5 * twice;
}

namespace {

double orient(const Vec2& a, const Vec2& b, const Vec2& c)
{
    return (b.x() - a.x()) * (c.y() - a.y()) - (b.y() - a.y()) * (c.x() - a.x());
}

int sign(double v) { return (v > 0.0) - (v < 0.0); }

bool on_segment(const Vec2& a, const Vec2& b, const Vec2& p)
{
    return std::min(a.x(), b.x()) <= p.x() && p.x() <= std::max(a.x(), b.x()) && std::min(a.y(), b.y()) <= p.y() &&
           p.y() <= std::max(a.y(), b.y());
}

bool segments_intersect(const Vec2& p1, const Vec2& p2, const Vec2& q1, const Vec2& q2)
{
    const int d1 = sign(orient(q1, q2, p1));
    const int d2 = sign(orient(q1, q2, p2));
    const int d3 = sign(orient(p1, p2, q1));
    const int d4 = sign(orient(p1, p2, q2));
    if (d1 * d2 < 0 && d3 * d4 < 0) {
        return true;
    }
    return (d1 == 0 && on_segment(q1, q2, p1)) || (d2 == 0 && on_segment(q1, q2, p2)) ||
           (d3 == 0 && on_segment(p1, p2, q1)) || (d4 == 0 && on_segment(p1, p2, q2));
}

} // namespace

std::optional<std::pair<std::size_t, std::size_t>> find_self_intersection(std::span<const Vec2> polygon)
{
    const std::size_t n = polygon.size();
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            if (j == i + 1 || (i == 0 && j == n - 1)) {
                continue;
            }
            if (segments_intersect(polygon[i], polygon[(i + 1) % n], polygon[j], polygon[(j + 1) % n])) {
                return std::make_pair(i, j);
            }
        }
    }
    return std::nullopt;
}

double signed_area(std::span<const Vec2> polygon)
{
    if (polygon.size() < 3) {
        throw Error("signed_area: a polygon needs at least 3 vertices");
    }
    if (auto hit = find_self_intersection(polygon)) {
        throw SelfIntersectionError("signed_area: edges " + std::to_string(hit->first) + " and " +
                                        std::to_string(hit->second) + " intersect",
                                    hit->first, hit->second);
    }
    return shoelace(polygon);
}

bool inside(std::span<const Polygon> polygons, const Vec2& p)
{
    bool in = false;
    for (const auto& ring : polygons) {
        const std::size_t n = ring.size();
        for (std::size_t i = 0; i < n; ++i) {
            const Vec2& a = ring[i];
            const Vec2& b = ring[(i + 1) % n];
            if ((a.y() > p.y()) != (b.y() > p.y())) {
                const double x = a.x() + (p.y() - a.y()) / (b.y() - a.y()) * (b.x() - a.x());
                if (x > p.x()) {
                    in = !in;
                }
            }
        }
    }
    return in;
}

// ---------------------------------------------------------------------------
// Slicing

namespace {

std::uint64_t edge_key(std::uint32_t a, std::uint32_t b)
{
    if (a > b) {
        std::swap(a, b);
    }
    return (static_cast<std::uint64_t>(a) << 32) | b;
}

} // namespace

std::vector<Polygon> slice_at(const Mesh& mesh, double z, std::size_t* open_chains)
{
    const auto& v = mesh.vertices();
    struct Segment {
        Vec2 start;
        std::uint64_t from;
        std::uint64_t to;
    };
    std::vector<Segment> segments;
    std::unordered_map<std::uint64_t, std::size_t> by_start;

    auto cut = [&](std::uint32_t a, std::uint32_t b) {
        if (a > b) {
            std::swap(a, b);
        }
        const double t = (z - v[a].z()) / (v[b].z() - v[a].z());
        const Vec3 p = v[a] + t * (v[b] - v[a]);
        return Vec2(p.x(), p.y());
    };

    for (const auto& f : mesh.faces()) {
        std::uint64_t down = 0, up = 0;
        std::uint32_t down_a = 0, down_b = 0;
        int crossings = 0;
        for (int k = 0; k < 3; ++k) {
            const std::uint32_t a = f[k];
            const std::uint32_t b = f[(k + 1) % 3];
            const bool above_a = v[a].z() > z;
            const bool above_b = v[b].z() > z;
            if (above_a == above_b) {
                continue;
            }
            ++crossings;
            if (above_a) {
                down = edge_key(a, b);
                down_a = a;
                down_b = b;
            } else {
                up = edge_key(a, b);
            }
        }
        if (crossings != 2) {
            continue;
        }
        by_start.emplace(down, segments.size());
        segments.push_back({cut(down_a, down_b), down, up});
    }

    std::vector<Polygon> rings;
    std::vector<char> used(segments.size(), 0);
    std::size_t open = 0;
    for (std::size_t s = 0; s < segments.size(); ++s) {
        if (used[s]) {
            continue;
        }
        Polygon ring;
        std::size_t cur = s;
        bool closed = false;
        while (true) {
            used[cur] = 1;
            ring.push_back(segments[cur].start);
            auto it = by_start.find(segments[cur].to);
            if (it == by_start.end()) {
                break;
            }
            if (it->second == s) {
                closed = true;
                break;
            }
            if (used[it->second]) {
                break;
            }
            cur = it->second;
        }
        if (!closed) {
            ++open;
            continue;
        }
        Polygon clean;
        for (const auto& p : ring) {
            if (clean.empty() || (p - clean.back()).norm() > 1e-12) {
                clean.push_back(p);
            }
        }
        while (clean.size() > 1 && (clean.front() - clean.back()).norm() <= 1e-12) {
            clean.pop_back();
        }
        if (clean.size() >= 3 && shoelace(clean) != 0.0) {
            rings.push_back(std::move(clean));
        }
    }
    if (open_chains) {
        *open_chains = open;
    }
    return rings;
}

LayerStack slice(const Mesh& mesh, double thickness)
{
    if (!mesh.is_closed()) {
        throw ManifoldError("slice: mesh is not a closed manifold", mesh.boundary_edges(), mesh.nonmanifold_edges());
    }
    LayerStack stack;
    stack.thickness = thickness;
    stack.aabb = BoundingBox::of(mesh.vertices());
    const double zmin = stack.aabb.min.z();
    const double zb = stack.aabb.strokes().z();
    if (!(zb > 0.0)) {
        throw Error("slice: mesh has zero height");
    }
    if (!(thickness > 0.0 && thickness <= zb)) {
        throw Error("slice: layer thickness must satisfy 0 < d <= z_b");
    }
    const auto count = static_cast<std::size_t>(std::max(1.0, std::ceil(zb / thickness - 0.5 - 1e-9)));
    std::vector<double> zs;
    zs.reserve(mesh.vertex_count());
    for (const auto& p : mesh.vertices()) {
        zs.push_back(p.z());
    }
    std::sort(zs.begin(), zs.end());
    const double eps = 1e-7 * zb;
    auto near_vertex = [&](double z) {
        auto it = std::lower_bound(zs.begin(), zs.end(), z - eps);
        return it != zs.end() && *it <= z + eps;
    };

    for (std::size_t i = 0; i < count; ++i) {
        Layer layer;
        layer.index = i;
        layer.z = zmin + (static_cast<double>(i) + 0.5) * thickness;
        int tries = 0;
        while (near_vertex(layer.z) && tries < 8) {
            layer.z += eps;
            ++tries;
        }
        if (tries > 0) {
            ++stack.nudged_planes;
            stack.warnings.push_back("layer " + std::to_string(i) + ": slice plane touched a vertex; moved up by " +
                                     std::to_string(tries * eps) + " mm");
        }
        layer.h_n = (layer.z - zmin) / zb;
        std::size_t open = 0;
        layer.polygons = slice_at(mesh, layer.z, &open);
        if (open > 0) {
            stack.open_chains += open;
            stack.warnings.push_back("layer " + std::to_string(i) + ": discarded " + std::to_string(open) +
                                     " open chain(s)");
        }
        for (const auto& ring : layer.polygons) {
            layer.section += shoelace(ring);
        }
        stack.layers.push_back(std::move(layer));
    }
    return stack;
}

// ---------------------------------------------------------------------------
// Masks

Frame2 xy_frame(const BoundingBox& box)
{
    if (box.empty()) {
        throw Error("xy_frame: empty bounding box");
    }
    return {box.min.head<2>(), box.max.head<2>()};
}

double Lcm::pixel_area() const
{
    const Vec2 ext = frame.max - frame.min;
    return ext.x() * ext.y() / (static_cast<double>(width) * height);
}

Lcm rasterize_lcm(std::span<const Polygon> polygons, const Frame2& frame, int resolution)
{
    if (resolution < 8) {
        throw Error("rasterize_lcm: resolution must be >= 8");
    }
    const Vec2 ext = frame.max - frame.min;
    if (!(ext.x() > 0.0 && ext.y() > 0.0)) {
        throw Error("rasterize_lcm: frame has zero extent");
    }
    Lcm lcm;
    lcm.width = resolution;
    lcm.height = resolution;
    lcm.frame = frame;
    lcm.mask = Eigen::MatrixXd::Zero(resolution, resolution);
    const double px = ext.x() / resolution;
    const double py = ext.y() / resolution;
    std::vector<double> xs;
    for (int r = 0; r < resolution; ++r) {
        const double y = frame.max.y() - (r + 0.5) * py;
        xs.clear();
        for (const auto& ring : polygons) {
            const std::size_t n = ring.size();
            for (std::size_t i = 0; i < n; ++i) {
                const Vec2& a = ring[i];
                const Vec2& b = ring[(i + 1) % n];
                if ((a.y() > y) != (b.y() > y)) {
                    xs.push_back(a.x() + (y - a.y()) / (b.y() - a.y()) * (b.x() - a.x()));
                }
            }
        }
        std::sort(xs.begin(), xs.end());
        for (std::size_t k = 0; k + 1 < xs.size(); k += 2) {
            // Columns whose centers fall in [xs[k], xs[k+1]).
            const int c0 = std::max(0, static_cast<int>(std::ceil((xs[k] - frame.min.x()) / px - 0.5)));
            const int c1 = std::min(resolution, static_cast<int>(std::ceil((xs[k + 1] - frame.min.x()) / px - 0.5)));
            for (int c = c0; c < c1; ++c) {
                lcm.mask(r, c) = 1.0;
            }
        }
    }
    return lcm;
}

Lcm rasterize_lcm(const Layer& layer, const Frame2& frame, int resolution)
{
    return rasterize_lcm(layer.polygons, frame, resolution);
}

std::vector<Eigen::MatrixXd> conv_features(const Eigen::MatrixXd& image, std::span<const Kernel3> kernels)
{
    const Eigen::Index rows = image.rows(), cols = image.cols();
    Eigen::MatrixXd padded = Eigen::MatrixXd::Zero(rows + 2, cols + 2);
    padded.block(1, 1, rows, cols) = image;
    std::vector<Eigen::MatrixXd> out;
    out.reserve(kernels.size());
    for (const auto& k : kernels) {
        Eigen::MatrixXd resp = Eigen::MatrixXd::Zero(rows, cols);
        for (int dr = 0; dr < 3; ++dr) {
            for (int dc = 0; dc < 3; ++dc) {
                if (k(dr, dc) != 0.0) {
                    resp += k(dr, dc) * padded.block(dr, dc, rows, cols);
                }
            }
        }
        out.push_back(std::move(resp));
    }
    return out;
}

std::vector<Kernel3> default_kernels()
{
    Kernel3 id, sx, sy, lap;
    id << 0, 0, 0, 0, 1, 0, 0, 0, 0;
    sx << -1, 0, 1, -2, 0, 2, -1, 0, 1;
    sy = sx.transpose();
    lap << 0, 1, 0, 1, -4, 1, 0, 1, 0;
    return {id, sx, sy, lap};
}

Eigen::MatrixXd avg_pool2(const Eigen::MatrixXd& image)
{
    const Eigen::Index rows = image.rows() / 2, cols = image.cols() / 2;
    Eigen::MatrixXd out(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        for (Eigen::Index c = 0; c < cols; ++c) {
            out(r, c) = image.block<2, 2>(2 * r, 2 * c).mean();
        }
    }
    return out;
}

std::vector<double> lcm_features(const Lcm& lcm)
{
    const Eigen::MatrixXd& m = lcm.mask;
    std::vector<double> f;
    f.reserve(lcm_feature_size);
    const Eigen::Index rows = m.rows(), cols = m.cols();
    for (int br = 0; br < 4; ++br) {
        for (int bc = 0; bc < 4; ++bc) {
            const Eigen::Index r0 = br * rows / 4, r1 = (br + 1) * rows / 4;
            const Eigen::Index c0 = bc * cols / 4, c1 = (bc + 1) * cols / 4;
            f.push_back(r1 > r0 && c1 > c0 ? m.block(r0, c0, r1 - r0, c1 - c0).mean() : 0.0);
        }
    }
    const auto kernels = default_kernels();
    Eigen::MatrixXd img = m;
    for (int scale = 0; scale < 3; ++scale) {
        for (const auto& resp : conv_features(img, kernels)) {
            f.push_back(resp.size() > 0 ? resp.cwiseAbs().mean() : 0.0);
        }
        img = avg_pool2(img);
    }
    return f;
}

// ---------------------------------------------------------------------------
// Infill

InfillPattern parse_infill_pattern(const std::string& name)
{
    if (name == "line") {
        return InfillPattern::Line;
    }
    if (name == "grid") {
        return InfillPattern::Grid;
    }
    if (name == "triangle") {
        return InfillPattern::Triangle;
    }
    if (name == "tri-hexagon") {
        return InfillPattern::TriHexagon;
    }
    throw Error("unknown infill pattern '" + name + "' (expected line, grid, triangle or tri-hexagon)");
}

std::string to_string(InfillPattern pattern)
{
    switch (pattern) {
    case InfillPattern::Line:
        return "line";
    case InfillPattern::Grid:
        return "grid";
    case InfillPattern::Triangle:
        return "triangle";
    case InfillPattern::TriHexagon:
        return "tri-hexagon";
    }
    return "line";
}

namespace {

struct Family {
    double normal_deg;
    double phase;
};

std::vector<Family> families(InfillPattern pattern)
{
    switch (pattern) {
    case InfillPattern::Line:
        return {{90.0, 0.5}};
    case InfillPattern::Grid:
        return {{90.0, 0.5}, {0.0, 0.5}};
    case InfillPattern::Triangle:
        // Third phase 0 makes all three families concurrent: triangular cells.
        return {{90.0, 0.5}, {210.0, 0.5}, {330.0, 0.0}};
    case InfillPattern::TriHexagon:
        // Third family shifted by half a spacing: triangles around hexagons.
        return {{90.0, 0.5}, {210.0, 0.5}, {330.0, 0.5}};
    }
    return {};
}

struct Hatch {
    Vec2 a;
    Vec2 b;
};

std::vector<Hatch> hatch_family(std::span<const Polygon> polygons, const Family& fam, double spacing)
{
    const double ang = fam.normal_deg * std::numbers::pi / 180.0;
    const Vec2 n(std::cos(ang), std::sin(ang));
    const Vec2 t(-n.y(), n.x());
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const auto& ring : polygons) {
        for (const auto& p : ring) {
            lo = std::min(lo, n.dot(p));
            hi = std::max(hi, n.dot(p));
        }
    }
    std::vector<Hatch> out;
    if (!(hi - lo >= spacing)) {
        return out;
    }
    const auto k0 = static_cast<long long>(std::ceil(lo / spacing - fam.phase));
    const auto k1 = static_cast<long long>(std::floor(hi / spacing - fam.phase));
    std::vector<double> ts;
    for (long long k = k0; k <= k1; ++k) {
        const double c = (static_cast<double>(k) + fam.phase) * spacing;
        ts.clear();
        for (const auto& ring : polygons) {
            const std::size_t m = ring.size();
            for (std::size_t i = 0; i < m; ++i) {
                const Vec2& a = ring[i];
                const Vec2& b = ring[(i + 1) % m];
                const double sa = n.dot(a) - c, sb = n.dot(b) - c;
                if ((sa > 0.0) != (sb > 0.0)) {
                    const Vec2 p = a + sa / (sa - sb) * (b - a);
                    ts.push_back(t.dot(p));
                }
            }
        }
        std::sort(ts.begin(), ts.end());
        for (std::size_t i = 0; i + 1 < ts.size(); i += 2) {
            if (ts[i + 1] - ts[i] > 1e-12) {
                out.push_back({c * n + ts[i] * t, c * n + ts[i + 1] * t});
            }
        }
    }
    return out;
}

std::size_t count_turns(const std::vector<ToolpathSegment>& path)
{
    std::size_t turns = 0;
    Vec2 prev = Vec2::Zero();
    bool have_prev = false;
    for (const auto& s : path) {
        const Vec2 d = s.b - s.a;
        const double len = d.norm();
        if (len <= 1e-12) {
            continue;
        }
        const Vec2 u = d / len;
        if (have_prev) {
            const double cross = prev.x() * u.y() - prev.y() * u.x();
            if (std::abs(cross) > 1e-9 || prev.dot(u) < 0.0) {
                ++turns;
            }
        }
        prev = u;
        have_prev = true;
    }
    return turns;
}

} // namespace

ToolpathMetrics infill(std::span<const Polygon> polygons, InfillPattern pattern, double spacing, double line_width)
{
    if (!(spacing > 0.0)) {
        throw Error("infill: spacing must be positive");
    }
    if (!(line_width > 0.0)) {
        throw Error("infill: line width must be positive");
    }
    ToolpathMetrics out;
    out.pattern = pattern;
    const auto fams = families(pattern);
    out.infill_rate = std::min(1.0, static_cast<double>(fams.size()) * line_width / spacing);

    bool have_pos = false;
    Vec2 pos = Vec2::Zero();
    for (const auto& fam : fams) {
        const auto hatches = hatch_family(polygons, fam, spacing);
        std::vector<char> done(hatches.size(), 0);
        for (std::size_t step = 0; step < hatches.size(); ++step) {
            std::size_t best = 0;
            bool flip = false;
            if (!have_pos) {
                best = 0;
            } else {
                double best_d = std::numeric_limits<double>::infinity();
                for (std::size_t i = 0; i < hatches.size(); ++i) {
                    if (done[i]) {
                        continue;
                    }
                    const double da = (hatches[i].a - pos).squaredNorm();
                    const double db = (hatches[i].b - pos).squaredNorm();
                    if (da < best_d) {
                        best_d = da;
                        best = i;
                        flip = false;
                    }
                    if (db < best_d) {
                        best_d = db;
                        best = i;
                        flip = true;
                    }
                }
            }
            done[best] = 1;
            const Vec2 a = flip ? hatches[best].b : hatches[best].a;
            const Vec2 b = flip ? hatches[best].a : hatches[best].b;
            if (have_pos && (a - pos).norm() > 1e-12) {
                out.path.push_back({pos, a, false});
                out.travel_length += (a - pos).norm();
            }
            out.path.push_back({a, b, true});
            out.length += (b - a).norm();
            pos = b;
            have_pos = true;
        }
    }
    out.turns = count_turns(out.path);
    return out;
}

ToolpathMetrics infill(const Layer& layer, InfillPattern pattern, double spacing, double line_width)
{
    return infill(layer.polygons, pattern, spacing, line_width);
}

// ---------------------------------------------------------------------------
// Supports

void summarize(SupportStats& s)
{
    s.max = s.min = s.mean = s.median = s.sum = 0.0;
    if (s.lengths.empty()) {
        return;
    }
    std::vector<double> sorted = s.lengths;
    std::sort(sorted.begin(), sorted.end());
    s.min = sorted.front();
    s.max = sorted.back();
    s.sum = std::accumulate(sorted.begin(), sorted.end(), 0.0);
    s.mean = s.sum / static_cast<double>(sorted.size());
    const std::size_t n = sorted.size();
    s.median = n % 2 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
}

namespace {

// Uniform XY grid of triangle indices for vertical ray queries.
class ColumnGrid {
public:
    explicit ColumnGrid(const Mesh& mesh) : mesh_(mesh)
    {
        const auto box = BoundingBox::of(mesh.vertices());
        min_ = box.min.head<2>();
        const Vec2 ext = (box.max - box.min).head<2>();
        n_ = std::clamp(static_cast<int>(std::sqrt(static_cast<double>(mesh.face_count()))), 1, 256);
        cell_ = Vec2(std::max(ext.x(), 1e-12) / n_, std::max(ext.y(), 1e-12) / n_);
        cells_.resize(static_cast<std::size_t>(n_) * n_);
        for (std::size_t f = 0; f < mesh.face_count(); ++f) {
            const auto c = mesh.corners(f);
            Vec2 lo = c[0].head<2>(), hi = lo;
            for (int k = 1; k < 3; ++k) {
                lo = lo.cwiseMin(c[k].head<2>());
                hi = hi.cwiseMax(c[k].head<2>());
            }
            const auto [x0, y0] = cell_of(lo);
            const auto [x1, y1] = cell_of(hi);
            for (int x = x0; x <= x1; ++x) {
                for (int y = y0; y <= y1; ++y) {
                    cells_[static_cast<std::size_t>(x) * n_ + y].push_back(static_cast<std::uint32_t>(f));
                }
            }
        }
    }

    /// Highest surface point strictly below `p` (excluding `skip`), if any.
    std::optional<double> first_hit_below(const Vec3& p, std::size_t skip, double tol) const
    {
        const auto [x, y] = cell_of(p.head<2>());
        std::optional<double> best;
        for (auto f : cells_[static_cast<std::size_t>(x) * n_ + y]) {
            if (f == skip) {
                continue;
            }
            const auto c = mesh_.corners(f);
            const Vec2 a = c[0].head<2>(), b = c[1].head<2>(), d = c[2].head<2>();
            const double area = (b - a).x() * (d - a).y() - (b - a).y() * (d - a).x();
            if (std::abs(area) < 1e-18) {
                continue;
            }
            const Vec2 q = p.head<2>();
            const double w1 = ((q - a).x() * (d - a).y() - (q - a).y() * (d - a).x()) / area;
            const double w2 = ((b - a).x() * (q - a).y() - (b - a).y() * (q - a).x()) / area;
            const double w0 = 1.0 - w1 - w2;
            if (w0 < -1e-12 || w1 < -1e-12 || w2 < -1e-12) {
                continue;
            }
            const double z = w0 * c[0].z() + w1 * c[1].z() + w2 * c[2].z();
            if (z < p.z() - tol && (!best || z > *best)) {
                best = z;
            }
        }
        return best;
    }

private:
    std::pair<int, int> cell_of(const Vec2& p) const
    {
        const int x = std::clamp(static_cast<int>((p.x() - min_.x()) / cell_.x()), 0, n_ - 1);
        const int y = std::clamp(static_cast<int>((p.y() - min_.y()) / cell_.y()), 0, n_ - 1);
        return {x, y};
    }

    const Mesh& mesh_;
    Vec2 min_;
    Vec2 cell_;
    int n_ = 1;
    std::vector<std::vector<std::uint32_t>> cells_;
};

} // namespace

SupportStats support_stats(const Mesh& mesh, const SupportOptions& options)
{
    if (!(options.sample_density > 0.0)) {
        throw Error("support_stats: sample density must be positive");
    }
    SupportStats stats;
    if (mesh.face_count() == 0) {
        return stats;
    }
    const auto box = BoundingBox::of(mesh.vertices());
    const double zmin = box.min.z();
    const double tol = 1e-9 * std::max(1.0, box.diagonal());
    const double cos_limit = std::cos(options.overhang_threshold);
    const ColumnGrid grid(mesh);
    // R2 low-discrepancy sequence folded into the triangle.
    const double g = 1.32471795724474602596;
    const double a1 = 1.0 / g, a2 = 1.0 / (g * g);

    for (std::size_t f = 0; f < mesh.face_count(); ++f) {
        const Vec3 n = mesh.face_normal(f);
        if (!(-n.z() > cos_limit)) {
            continue;
        }
        const auto c = mesh.corners(f);
        if (std::max({c[0].z(), c[1].z(), c[2].z()}) - zmin <= tol) {
            continue;
        }
        const double area = mesh.face_area(f);
        stats.sampled_area += area;
        const auto count = static_cast<std::size_t>(std::max(1.0, std::ceil(area * options.sample_density)));
        for (std::size_t k = 1; k <= count; ++k) {
            double u = std::fmod(0.5 + a1 * static_cast<double>(k), 1.0);
            double v = std::fmod(0.5 + a2 * static_cast<double>(k), 1.0);
            if (u + v > 1.0) {
                u = 1.0 - u;
                v = 1.0 - v;
            }
            const Vec3 p = c[0] + u * (c[1] - c[0]) + v * (c[2] - c[0]);
            const auto hit = grid.first_hit_below(p, f, tol);
            stats.origins.push_back(p);
            if (hit) {
                stats.lengths.push_back(p.z() - *hit);
                stats.bottom.push_back(false);
                ++stats.non_bottom_count;
            } else {
                stats.lengths.push_back(std::max(0.0, p.z() - zmin));
                stats.bottom.push_back(true);
                ++stats.bottom_count;
            }
        }
    }
    summarize(stats);
    return stats;
}

} // namespace morphprint
