#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <vector>

#include <Eigen/Sparse>

#include "morphprint/ellipsoid.hpp"
#include "morphprint/mesh.hpp"

namespace morphprint {

class ConstraintViolation : public Error {
public:
    ConstraintViolation(const std::string& what, std::uint32_t vertex) : Error(what), vertex_(vertex) {}
    std::uint32_t vertex() const noexcept { return vertex_; }

private:
    std::uint32_t vertex_;
};

enum class WeightMode {
    /// w_ij = 1 / card(N_i)
    Uniform,
    /// w_ij proportional to exp(-(l_ij / mean_l_i)^2 / sigma^2), normalized per row
    GaussUniform,
};

WeightMode parse_weight_mode(const std::string& name);

struct LaplacianOptions {
    WeightMode mode = WeightMode::Uniform;
    double gauss_sigma = 1.0;
};

enum class VertexRole : std::uint8_t { Free, Anchor, Control };

using PositionMap = std::map<std::uint32_t, Vec3>;

/// Laplacian operator, rest-shape differential coordinates and positional
/// constraints of one deformation problem.
class MorphSystem {
public:
    MorphSystem(Eigen::SparseMatrix<double> laplacian, Eigen::MatrixX3d rest);

    /// Row i encodes delta_i = V_i - sum_j w_ij V_j.
    const Eigen::SparseMatrix<double>& laplacian() const noexcept { return laplacian_; }
    /// Differential coordinates of the rest shape, one row per vertex.
    const Eigen::MatrixX3d& deltas() const noexcept { return deltas_; }
    const Eigen::MatrixX3d& rest() const noexcept { return rest_; }
    std::size_t vertex_count() const noexcept { return static_cast<std::size_t>(rest_.rows()); }
    double weight(std::uint32_t i, std::uint32_t j) const;

    /// Pins a vertex (u_i). Throws if the vertex already has a role.
    void add_anchor(std::uint32_t vertex, const Vec3& position);
    /// Drives a vertex toward a control target (V*). Throws if already constrained.
    void add_control(std::uint32_t vertex, const Vec3& target);
    /// Anchors every still-free vertex at its rest position.
    void anchor_free_vertices();

    VertexRole role(std::uint32_t vertex) const { return roles_.at(vertex); }
    const PositionMap& anchors() const noexcept { return anchors_; }
    const PositionMap& controls() const noexcept { return controls_; }

    double anchor_weight = 1.0;
    double control_weight = 1.0;

private:
    void check_free(std::uint32_t vertex) const;

    Eigen::SparseMatrix<double> laplacian_;
    Eigen::MatrixX3d rest_;
    Eigen::MatrixX3d deltas_;
    std::vector<VertexRole> roles_;
    PositionMap anchors_;
    PositionMap controls_;
};

MorphSystem build_laplacian(const Mesh& mesh, const LaplacianOptions& options = {});

struct MorphResult {
    std::vector<Vec3> vertices;
    /// Least-squares objective at the solution.
    double energy = 0.0;
    /// Relative residual of the normal equations.
    double residual = 0.0;
};

struct SolveOptions {
    double tolerance = 1e-8;
};

/// Direct evaluation of ||L V - Delta||^2 + sum_c w_c ||V_c - u_c||^2.
double morph_energy(const MorphSystem& system, std::span<const Vec3> vertices);

/// Sparse Cholesky factorization of the normal equations for a fixed
/// constraint pattern; targets may change between solves.
class MorphSolver {
public:
    explicit MorphSolver(const MorphSystem& system, SolveOptions options = {});
    ~MorphSolver();
    MorphSolver(MorphSolver&&) noexcept;
    MorphSolver& operator=(MorphSolver&&) noexcept;

    /// Solves with the system's own anchor/control positions.
    MorphResult solve() const;
    /// Solves with replacement targets for some constrained vertices.
    MorphResult solve(const PositionMap& overrides) const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

/// One-shot solve. Throws Error when no constraint exists and
/// ConvergenceError when the residual exceeds the tolerance.
MorphResult solve_morph(const MorphSystem& system, const SolveOptions& options = {});

/// Morphing driven by grasp targets inside a grasp space. Ellipsoids that
/// contain a control vertex are the morphing region; every vertex outside
/// all of them is anchored at rest, as is every connected component that
/// would otherwise carry no constraint.
class GraspMorpher {
public:
    GraspMorpher(const Mesh& mesh, const GraspSpace& space, std::vector<std::uint32_t> control_vertices,
                 const LaplacianOptions& options = {}, SolveOptions solve = {});

    const MorphSystem& system() const noexcept { return system_; }
    const std::vector<std::uint32_t>& control_vertices() const noexcept { return controls_; }
    /// Throws ConstraintViolation for a target outside every ellipsoid or an
    /// unknown vertex.
    MorphResult morph(const PositionMap& targets) const;

private:
    const GraspSpace* space_;
    std::vector<std::uint32_t> controls_;
    MorphSystem system_;
    MorphSolver solver_;
};

MorphResult morph_by_grasp(const Mesh& mesh, const GraspSpace& space, const PositionMap& targets,
                           const LaplacianOptions& options = {});

} // namespace morphprint
