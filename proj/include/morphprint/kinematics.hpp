#pragma once

#include <span>
#include <vector>

#include <Eigen/Dense>

#include "morphprint/mesh.hpp"

namespace morphprint {

using Vec6 = Eigen::Matrix<double, 6, 1>;
using Jacobian = Eigen::Matrix<double, 6, Eigen::Dynamic>;

/// Denavit-Hartenberg link; theta is the revolute joint variable.
struct DhLink {
    double theta = 0.0;
    double d = 0.0;
    double a = 0.0;
    double alpha = 0.0;
};

/// Rot(z, theta) * Trans(z, d) * Trans(x, a) * Rot(x, alpha)
Mat4 link_transform(const DhLink& link);

struct KinematicChain {
    std::vector<DhLink> links;
    Mat4 base = Mat4::Identity();

    std::size_t size() const noexcept { return links.size(); }
    Eigen::VectorXd joints() const;
    /// Copy with the joint angles replaced; throws on a size mismatch.
    KinematicChain with_joints(const Eigen::VectorXd& theta) const;
};

/// Frames {0}..{t}: frame 0 is the base pose, frame t the fingertip.
std::vector<Mat4> link_frames(const KinematicChain& chain);
Mat4 forward_kinematics(const KinematicChain& chain);
/// Chain B mounted on the tip of chain A; B's base must be the identity.
KinematicChain concatenate(const KinematicChain& a, const KinematicChain& b);

/// Geometric Jacobian of the fingertip: rows 0-2 linear velocity, rows 3-5
/// angular velocity, one column per joint.
Jacobian jacobian(const KinematicChain& chain);
/// Same, for an arbitrary point rigidly attached to the last link.
Jacobian jacobian_at(const KinematicChain& chain, const Vec3& point);
/// Central finite differences of the tip position and orientation.
Jacobian jacobian_fd(const KinematicChain& chain, double h = 1e-6);

/// tau = J^T F for a tip wrench (force, moment).
Eigen::VectorXd joint_torques(const KinematicChain& chain, const Vec6& wrench);
Eigen::VectorXd joint_torques(const KinematicChain& chain, const Vec3& force);

/// Soft-finger contact; `normal` points into the object.
struct Contact {
    Vec3 point = Vec3::Zero();
    Vec3 normal = Vec3::UnitZ();
};

/// Columns [t1, t2, n]; tangents by Gram-Schmidt against the world axis
/// least aligned with the normal.
Mat3 contact_frame(const Vec3& normal);

/// Selection of force (3) and normal moment (1) components.
inline constexpr int soft_finger_dofs = 4;

/// 6 x 4 block mapping contact-frame force and normal moment to the object
/// wrench about `reference`.
Eigen::Matrix<double, 6, 4> contact_map(const Contact& contact, const Vec3& reference = Vec3::Zero());
/// G = [G_1 ... G_k], 6 x 4k.
Eigen::MatrixXd grasp_matrix(std::span<const Contact> contacts, const Vec3& reference = Vec3::Zero());

/// diag(S_i J_i) with J_i expressed in contact frame i, evaluated at the
/// contact point. 4k x (sum of joint counts).
Eigen::MatrixXd hand_jacobian(std::span<const KinematicChain> fingers, std::span<const Contact> contacts);

int numeric_rank(const Eigen::MatrixXd& m, double rel_tol = 1e-10);

struct GraspRates {
    Eigen::VectorXd contact_velocity; // x_dot = G^T u
    Eigen::VectorXd joint_rates;      // least-squares, minimum-norm q_dot
    int jacobian_rank = 0;
    int grasp_rank = 0;
    bool rank_deficient = false;
    double residual = 0.0; // ||J q_dot - x_dot||
};

GraspRates solve_grasp_rates(const Eigen::MatrixXd& grasp, const Eigen::MatrixXd& hand_jacobian, const Vec6& u);

} // namespace morphprint
