#include "morphprint/laplacian.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/SparseCholesky>

namespace morphprint {

WeightMode parse_weight_mode(const std::string& name)
{
    if (name == "uniform") {
        return WeightMode::Uniform;
    }
    if (name == "gauss-uniform") {
        return WeightMode::GaussUniform;
    }
    throw Error("unknown weight mode '" + name + "' (expected uniform or gauss-uniform)");
}

MorphSystem::MorphSystem(Eigen::SparseMatrix<double> laplacian, Eigen::MatrixX3d rest)
    : laplacian_(std::move(laplacian)), rest_(std::move(rest))
{
    if (laplacian_.rows() != rest_.rows() || laplacian_.cols() != rest_.rows()) {
        throw Error("MorphSystem: Laplacian size does not match vertex count");
    }
    deltas_ = laplacian_ * rest_;
    roles_.assign(static_cast<std::size_t>(rest_.rows()), VertexRole::Free);
}

double MorphSystem::weight(std::uint32_t i, std::uint32_t j) const
{
    return i == j ? 0.0 : -laplacian_.coeff(i, j);
}

void MorphSystem::check_free(std::uint32_t vertex) const
{
    if (vertex >= roles_.size()) {
        throw ConstraintViolation("vertex " + std::to_string(vertex) + " is out of range", vertex);
    }
    if (roles_[vertex] != VertexRole::Free) {
        throw ConstraintViolation("vertex " + std::to_string(vertex) + " is already constrained", vertex);
    }
}

void MorphSystem::add_anchor(std::uint32_t vertex, const Vec3& position)
{
    check_free(vertex);
    roles_[vertex] = VertexRole::Anchor;
    anchors_[vertex] = position;
}

void MorphSystem::add_control(std::uint32_t vertex, const Vec3& target)
{
    check_free(vertex);
    roles_[vertex] = VertexRole::Control;
    controls_[vertex] = target;
}

void MorphSystem::anchor_free_vertices()
{
    for (std::uint32_t v = 0; v < roles_.size(); ++v) {
        if (roles_[v] == VertexRole::Free) {
            add_anchor(v, rest_.row(v).transpose());
        }
    }
}

MorphSystem build_laplacian(const Mesh& mesh, const LaplacianOptions& options)
{
    const auto n = static_cast<Eigen::Index>(mesh.vertex_count());
    const auto& verts = mesh.vertices();
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(mesh.vertex_count() * 7);
    for (std::uint32_t i = 0; i < mesh.vertex_count(); ++i) {
        const auto& ring = mesh.neighbors()[i];
        if (ring.empty()) {
            throw Error("build_laplacian: vertex " + std::to_string(i) + " has no neighbors (card(N_i) = 0)");
        }
        const double card = static_cast<double>(ring.size());
        std::vector<double> w(ring.size(), 1.0 / card);
        if (options.mode == WeightMode::GaussUniform) {
            double mean_len = 0.0;
            for (auto j : ring) {
                mean_len += (verts[i] - verts[j]).norm();
            }
            mean_len /= card;
            double total = 0.0;
            for (std::size_t k = 0; k < ring.size(); ++k) {
                const double rel = mean_len > 0.0 ? (verts[i] - verts[ring[k]]).norm() / mean_len : 1.0;
                w[k] = std::exp(-rel * rel / (options.gauss_sigma * options.gauss_sigma)) / card;
                total += w[k];
            }
            for (auto& x : w) {
                x /= total;
            }
        }
        trip.emplace_back(i, i, 1.0);
        for (std::size_t k = 0; k < ring.size(); ++k) {
            trip.emplace_back(i, ring[k], -w[k]);
        }
    }
    Eigen::SparseMatrix<double> l(n, n);
    l.setFromTriplets(trip.begin(), trip.end());
    Eigen::MatrixX3d rest(n, 3);
    for (Eigen::Index i = 0; i < n; ++i) {
        rest.row(i) = verts[static_cast<std::size_t>(i)].transpose();
    }
    return MorphSystem(std::move(l), std::move(rest));
}

double morph_energy(const MorphSystem& system, std::span<const Vec3> vertices)
{
    const auto n = static_cast<Eigen::Index>(system.vertex_count());
    if (static_cast<Eigen::Index>(vertices.size()) != n) {
        throw Error("morph_energy: vertex count mismatch");
    }
    Eigen::MatrixX3d v(n, 3);
    for (Eigen::Index i = 0; i < n; ++i) {
        v.row(i) = vertices[static_cast<std::size_t>(i)].transpose();
    }
    double e = (system.laplacian() * v - system.deltas()).squaredNorm();
    for (const auto& [idx, u] : system.anchors()) {
        e += system.anchor_weight * (vertices[idx] - u).squaredNorm();
    }
    for (const auto& [idx, u] : system.controls()) {
        e += system.control_weight * (vertices[idx] - u).squaredNorm();
    }
    return e;
}

// ---------------------------------------------------------------------------

struct MorphSolver::Impl {
    const MorphSystem* system = nullptr;
    SolveOptions options;
    Eigen::SparseMatrix<double> normal;
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt;
    Eigen::MatrixX3d base_rhs; // L^T Delta
    double base_b2 = 0.0;      // ||Delta||^2
};

MorphSolver::MorphSolver(const MorphSystem& system, SolveOptions options) : impl_(std::make_unique<Impl>())
{
    if (system.anchors().empty() && system.controls().empty()) {
        throw Error("solve_morph: no anchors or controls; the normal equations are singular");
    }
    impl_->system = &system;
    impl_->options = options;
    const auto& l = system.laplacian();
    Eigen::SparseMatrix<double> normal = Eigen::SparseMatrix<double>(l.transpose()) * l;
    std::vector<Eigen::Triplet<double>> diag;
    for (const auto& [idx, u] : system.anchors()) {
        diag.emplace_back(idx, idx, system.anchor_weight);
    }
    for (const auto& [idx, u] : system.controls()) {
        diag.emplace_back(idx, idx, system.control_weight);
    }
    Eigen::SparseMatrix<double> w(l.rows(), l.cols());
    w.setFromTriplets(diag.begin(), diag.end());
    impl_->normal = normal + w;
    impl_->ldlt.compute(impl_->normal);
    if (impl_->ldlt.info() != Eigen::Success) {
        throw Error("solve_morph: factorization of the normal equations failed");
    }
    const auto d = impl_->ldlt.vectorD();
    if (d.size() > 0 && !(d.minCoeff() > 1e-12 * std::max(1.0, d.maxCoeff()))) {
        throw Error("solve_morph: normal equations are singular (a connected component has no constraint)");
    }
    impl_->base_rhs = l.transpose() * system.deltas();
    impl_->base_b2 = system.deltas().squaredNorm();
}

MorphSolver::~MorphSolver() = default;
MorphSolver::MorphSolver(MorphSolver&&) noexcept = default;
MorphSolver& MorphSolver::operator=(MorphSolver&&) noexcept = default;

MorphResult MorphSolver::solve() const { return solve({}); }

MorphResult MorphSolver::solve(const PositionMap& overrides) const
{
    const MorphSystem& sys = *impl_->system;
    Eigen::MatrixX3d rhs = impl_->base_rhs;
    double b2 = impl_->base_b2;
    auto add_term = [&](std::uint32_t idx, const Vec3& u, double w) {
        rhs.row(idx) += w * u.transpose();
        b2 += w * u.squaredNorm();
    };
    for (const auto& [idx, u] : sys.anchors()) {
        auto it = overrides.find(idx);
        add_term(idx, it == overrides.end() ? u : it->second, sys.anchor_weight);
    }
    for (const auto& [idx, u] : sys.controls()) {
        auto it = overrides.find(idx);
        add_term(idx, it == overrides.end() ? u : it->second, sys.control_weight);
    }
    for (const auto& [idx, u] : overrides) {
        if (idx >= sys.vertex_count() || sys.role(idx) == VertexRole::Free) {
            throw ConstraintViolation("override for unconstrained vertex " + std::to_string(idx), idx);
        }
    }

    Eigen::MatrixX3d x = impl_->ldlt.solve(rhs);
    // One step of iterative refinement against the assembled normal matrix.
    Eigen::MatrixX3d r = rhs - impl_->normal * x;
    x += impl_->ldlt.solve(r);
    r = rhs - impl_->normal * x;

    MorphResult out;
    const double scale = std::max(rhs.norm(), 1e-300);
    out.residual = rhs.norm() > 0.0 ? r.norm() / scale : r.norm();
    if (!(out.residual <= impl_->options.tolerance)) {
        throw ConvergenceError("solve_morph: residual " + std::to_string(out.residual) + " exceeds tolerance", out.residual);
    }
    // min ||Ax - b||^2 = b^T b - x^T A^T b at the normal-equation solution.
    out.energy = std::max(0.0, b2 - (x.array() * rhs.array()).sum());
    out.vertices.resize(sys.vertex_count());
    for (std::size_t i = 0; i < out.vertices.size(); ++i) {
        out.vertices[i] = x.row(static_cast<Eigen::Index>(i)).transpose();
    }
    return out;
}

MorphResult solve_morph(const MorphSystem& system, const SolveOptions& options)
{
    return MorphSolver(system, options).solve();
}

// ---------------------------------------------------------------------------

namespace {

MorphSystem grasp_system(const Mesh& mesh, const GraspSpace& space, const std::vector<std::uint32_t>& controls,
                         const LaplacianOptions& options)
{
    MorphSystem sys = build_laplacian(mesh, options);
    const auto& verts = mesh.vertices();
    std::vector<char> finger(space.ellipsoids.size(), 0);
    for (auto c : controls) {
        if (c >= verts.size()) {
            throw ConstraintViolation("control vertex " + std::to_string(c) + " is out of range", c);
        }
        for (std::size_t e = 0; e < space.ellipsoids.size(); ++e) {
            if (space.ellipsoids[e].contains(verts[c], 1e-9)) {
                finger[e] = 1;
            }
        }
        sys.add_control(c, verts[c]);
    }
    for (std::uint32_t v = 0; v < verts.size(); ++v) {
        if (sys.role(v) != VertexRole::Free) {
            continue;
        }
        bool morphing = false;
        for (std::size_t e = 0; e < space.ellipsoids.size() && !morphing; ++e) {
            morphing = finger[e] && space.ellipsoids[e].contains(verts[v], 1e-9);
        }
        if (!morphing) {
            sys.add_anchor(v, verts[v]);
        }
    }
    const auto [component, count] = mesh.components();
    std::vector<char> constrained(count, 0);
    for (std::uint32_t v = 0; v < verts.size(); ++v) {
        if (sys.role(v) != VertexRole::Free) {
            constrained[component[v]] = 1;
        }
    }
    for (std::uint32_t v = 0; v < verts.size(); ++v) {
        if (!constrained[component[v]] && sys.role(v) == VertexRole::Free) {
            sys.add_anchor(v, verts[v]);
        }
    }
    return sys;
}

} // namespace

GraspMorpher::GraspMorpher(const Mesh& mesh, const GraspSpace& space, std::vector<std::uint32_t> control_vertices,
                           const LaplacianOptions& options, SolveOptions solve)
    : space_(&space),
      controls_(std::move(control_vertices)),
      system_(grasp_system(mesh, space, controls_, options)),
      solver_(system_, solve)
{
}

MorphResult GraspMorpher::morph(const PositionMap& targets) const
{
    for (const auto& [idx, p] : targets) {
        if (idx >= system_.vertex_count() || system_.role(idx) != VertexRole::Control) {
            throw ConstraintViolation("vertex " + std::to_string(idx) + " is not a control vertex", idx);
        }
        if (!space_->contains(p)) {
            throw ConstraintViolation("target for vertex " + std::to_string(idx) +
                                          " lies outside every grasp-space ellipsoid",
                                      idx);
        }
    }
    return solver_.solve(targets);
}

MorphResult morph_by_grasp(const Mesh& mesh, const GraspSpace& space, const PositionMap& targets,
                           const LaplacianOptions& options)
{
    std::vector<std::uint32_t> controls;
    for (const auto& [idx, p] : targets) {
        controls.push_back(idx);
    }
    GraspMorpher morpher(mesh, space, std::move(controls), options);
    return morpher.morph(targets);
}

} // namespace morphprint
