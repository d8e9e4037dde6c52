#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "morphprint/mesh.hpp"

namespace morphprint {

using Polygon = std::vector<Vec2>;

class SelfIntersectionError : public Error {
public:
    SelfIntersectionError(const std::string& what, std::size_t edge_a, std::size_t edge_b)
        : Error(what), edges_(edge_a, edge_b)
    {
    }
    /// Indices of the two crossing edges; edge i runs from vertex i to i+1.
    std::pair<std::size_t, std::size_t> crossing() const noexcept { return edges_; }

private:
    std::pair<std::size_t, std::size_t> edges_;
};

/// Shoelace area without validation: positive for CCW, negative for CW.
double shoelace(std::span<const Vec2> polygon);
/// First pair of non-adjacent edges that intersect, if any.
std::optional<std::pair<std::size_t, std::size_t>> find_self_intersection(std::span<const Vec2> polygon);
/// Validated shoelace area. Throws Error for fewer than 3 vertices and
/// SelfIntersectionError for a non-simple polygon.
double signed_area(std::span<const Vec2> polygon);
/// Even-odd point test over every ring.
bool inside(std::span<const Polygon> polygons, const Vec2& p);

struct Layer {
    std::size_t index = 0;
    double z = 0.0;
    /// (z - z_min) / z_b
    double h_n = 0.0;
    /// Closed rings without a repeated last point; CCW outer, CW holes.
    std::vector<Polygon> polygons;
    /// Sum of signed ring areas.
    double section = 0.0;
};

struct LayerStack {
    std::vector<Layer> layers;
    double thickness = 0.0;
    BoundingBox aabb;
    std::size_t nudged_planes = 0;
    std::size_t open_chains = 0;
    std::vector<std::string> warnings;
};

/// Planes at z_min + (i + 1/2) d. A plane that passes within 1e-7 z_b of a
/// vertex is moved up by that amount and reported in `warnings`.
LayerStack slice(const Mesh& mesh, double thickness);
/// Single cut at height z (no nudging); chains are linked through mesh edges.
std::vector<Polygon> slice_at(const Mesh& mesh, double z, std::size_t* open_chains = nullptr);

struct Frame2 {
    Vec2 min = Vec2::Zero();
    Vec2 max = Vec2::Ones();
};

Frame2 xy_frame(const BoundingBox& box);

/// Binary raster of a layer over a shared XY frame. Row 0 is the top (max y)
/// and column index grows with x.
struct Lcm {
    int width = 32;
    int height = 32;
    Frame2 frame;
    Eigen::MatrixXd mask;

    double pixel_area() const;
    double filled_area() const { return mask.sum() * pixel_area(); }
};

/// Even-odd fill sampled at pixel centers. Empty polygons give an all-zero mask.
Lcm rasterize_lcm(std::span<const Polygon> polygons, const Frame2& frame, int resolution = 32);
Lcm rasterize_lcm(const Layer& layer, const Frame2& frame, int resolution = 32);

using Kernel3 = Eigen::Matrix3d;

/// 3x3 cross-correlation, unit stride, zero padding; one map per kernel.
std::vector<Eigen::MatrixXd> conv_features(const Eigen::MatrixXd& image, std::span<const Kernel3> kernels);
/// Identity, Sobel x, Sobel y and Laplacian.
std::vector<Kernel3> default_kernels();
/// 2x2 mean pooling (odd trailing row/column dropped).
Eigen::MatrixXd avg_pool2(const Eigen::MatrixXd& image);

inline constexpr std::size_t lcm_feature_size = 28;
/// 4x4 pooled occupancy (16 values) followed by the mean absolute response of
/// the default kernels at three scales (12 values).
std::vector<double> lcm_features(const Lcm& lcm);

enum class InfillPattern { Line, Grid, Triangle, TriHexagon };
InfillPattern parse_infill_pattern(const std::string& name);
std::string to_string(InfillPattern pattern);

struct ToolpathSegment {
    Vec2 a = Vec2::Zero();
    Vec2 b = Vec2::Zero();
    bool extrude = true;
};

struct ToolpathMetrics {
    InfillPattern pattern = InfillPattern::Line;
    /// Sum of extruded segment lengths (L_T).
    double length = 0.0;
    /// Direction changes along the linked path (n_point).
    std::size_t turns = 0;
    /// min(1, families * line_width / spacing)
    double infill_rate = 0.0;
    double travel_length = 0.0;
    std::vector<ToolpathSegment> path;
};

/// Hatch lines at offsets (k + phase) * spacing along each family normal,
/// clipped to the even-odd region and linked by nearest endpoint within a
/// family. A family whose extent is smaller than the spacing is empty.
ToolpathMetrics infill(std::span<const Polygon> polygons, InfillPattern pattern, double spacing,
                       double line_width = 0.4);
ToolpathMetrics infill(const Layer& layer, InfillPattern pattern, double spacing, double line_width = 0.4);

struct SupportOptions {
    /// A facet needs support when its normal is within this angle of -z.
    double overhang_threshold = 0.7853981633974483;
    /// Samples per mm^2 of down-facing area (at least one per facet).
    double sample_density = 1.0;
};

struct SupportStats {
    std::vector<double> lengths;
    std::vector<Vec3> origins;
    std::vector<bool> bottom;
    double max = 0.0;
    double min = 0.0;
    double mean = 0.0;
    double median = 0.0;
    double sum = 0.0;
    std::size_t bottom_count = 0;
    std::size_t non_bottom_count = 0;
    /// Total area of the sampled down-facing facets.
    double sampled_area = 0.0;
};

SupportStats support_stats(const Mesh& mesh, const SupportOptions& options = {});
/// max/min/mean/median/sum of a length list.
void summarize(SupportStats& stats);

} // namespace morphprint
