#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "morphprint/mesh.hpp"

namespace morphprint {

class DegenerateInputError : public Error {
public:
    DegenerateInputError(const std::string& what, int rank) : Error(what), rank_(rank) {}
    int rank() const noexcept { return rank_; }

private:
    int rank_;
};

class ConvergenceError : public Error {
public:
    ConvergenceError(const std::string& what, double residual) : Error(what), residual_(residual) {}
    double residual() const noexcept { return residual_; }

private:
    double residual_;
};

struct EulerAngles {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;
};

Mat3 rotation_x(double angle);
Mat3 rotation_y(double angle);
Mat3 rotation_z(double angle);
/// R = Rz * Ry * Rx.
Mat3 rotation_zyx(const EulerAngles& angles);
/// Inverse of rotation_zyx. In the gimbal case (|R(2,0)| = 1) the z angle is 0.
EulerAngles euler_zyx(const Mat3& rotation);

/// Principal form of a shape matrix: A = R^T diag(r^-2) R, so the rows of R
/// are the principal directions and r the matching semi-axes.
struct EllipsoidAxes {
    Vec3 semi_axes = Vec3::Ones();
    EulerAngles angles;
    Mat3 rotation = Mat3::Identity();
};

/// Factorizes a symmetric positive-definite shape matrix. Principal
/// directions are matched to the world axes they are closest to, so an
/// axis-aligned A yields zero angles; within a repeated eigenvalue the
/// eigenbasis is rotated onto the world axes.
EllipsoidAxes decompose(const Mat3& shape);
Mat3 compose_shape(const Vec3& semi_axes, const EulerAngles& angles);

/// { x : (x - c)^T A (x - c) <= 1 }
class ObliqueEllipsoid {
public:
    ObliqueEllipsoid(const Vec3& center, const Mat3& shape);
    static ObliqueEllipsoid from_axes(const Vec3& center, const Vec3& semi_axes, const EulerAngles& angles);

    const Vec3& center() const noexcept { return center_; }
    const Mat3& shape() const noexcept { return shape_; }
    const Vec3& semi_axes() const noexcept { return axes_.semi_axes; }
    const EulerAngles& angles() const noexcept { return axes_.angles; }
    const Mat3& rotation() const noexcept { return axes_.rotation; }

    double quadratic_form(const Vec3& x) const
    {
        const Vec3 d = x - center_;
        return d.dot(shape_ * d);
    }
    bool contains(const Vec3& x, double slack = 0.0) const { return quadratic_form(x) <= 1.0 + slack; }
    double volume() const;
    BoundingBox bounds() const;
    /// Same center and orientation with every semi-axis multiplied by `factor`.
    ObliqueEllipsoid scaled(double factor) const;

private:
    Vec3 center_;
    Mat3 shape_;
    EllipsoidAxes axes_;
};

struct MveeOptions {
    double eps = 1e-4;
    int max_iterations = 10000;
};

/// Minimum-volume enclosing ellipsoid by barycentric coordinate ascent on the
/// dual of the log-det problem. The returned shape is rescaled so every input
/// point satisfies the quadratic form <= 1 and at least one lies on the
/// surface; its volume is within (1 + eps)^(3/2) of the optimum.
/// Throws DegenerateInputError for affinely dependent input and
/// ConvergenceError when the iteration cap is hit.
ObliqueEllipsoid mvee(std::span<const Vec3> points, const MveeOptions& options = {});

struct GraspSpaceOptions {
    std::size_t max_ellipsoids = 6;
    /// Allowed containment slack: a face counts as covered when all three
    /// vertices satisfy quadratic_form <= 1 + envelope_eps.
    double envelope_eps = 1e-3;
    MveeOptions mvee;
    std::size_t monte_carlo_samples = 200000;
    std::uint64_t seed = 42;
    int max_refinements = 20;
    /// Every fitted semi-axis is multiplied by this factor (>= 1) so the
    /// space leaves room for the hand to move; 1 keeps the tight fit.
    double reach_margin = 1.0;
};

/// Union of oblique ellipsoids covering every facet of a mesh.
struct GraspSpace {
    std::vector<ObliqueEllipsoid> ellipsoids;
    /// Covering ellipsoid per face.
    std::vector<std::uint32_t> facet_cover;
    std::vector<std::uint32_t> uncovered_faces;
    bool complete = false;
    /// Largest containment slack over covered faces (max, not mean).
    double envelope_error = 0.0;
    int refinements = 0;
    Vec3 centroid = Vec3::Zero();
    double surface_area = 0.0;
    double volume = 0.0;

    bool contains(const Vec3& x, double slack = 1e-9) const;
    std::optional<std::size_t> containing(const Vec3& x, double slack = 1e-9) const;
    /// Smallest quadratic form over the ellipsoids minus one, floored at zero.
    double violation(const Vec3& x) const;
};

GraspSpace build_grasp_space(const Mesh& mesh, const GraspSpaceOptions& options = {});

struct UnionStats {
    Vec3 centroid = Vec3::Zero();
    double surface_area = 0.0;
    double volume = 0.0;
};

/// Monte-Carlo volume, centroid and boundary area of a union of ellipsoids.
UnionStats union_statistics(std::span<const ObliqueEllipsoid> ellipsoids, std::size_t samples, std::uint64_t seed);

/// Lloyd's k-means with k-means++ seeding; returns a label per point.
std::vector<std::uint32_t> kmeans(std::span<const Vec3> points, std::size_t k, std::uint64_t seed,
                                  int max_iterations = 100);

} // namespace morphprint
