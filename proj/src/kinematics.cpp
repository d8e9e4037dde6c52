#include "morphprint/kinematics.hpp"

#include <cmath>

namespace morphprint {

Mat4 link_transform(const DhLink& l)
{
    const double ct = std::cos(l.theta), st = std::sin(l.theta);
    const double ca = std::cos(l.alpha), sa = std::sin(l.alpha);
    Mat4 t;
    t << ct, -st * ca, st * sa, l.a * ct,
         st, ct * ca, -ct * sa, l.a * st,
         0.0, sa, ca, l.d,
         0.0, 0.0, 0.0, 1.0;
    return t;
}

Eigen::VectorXd KinematicChain::joints() const
{
    Eigen::VectorXd q(static_cast<Eigen::Index>(links.size()));
    for (std::size_t i = 0; i < links.size(); ++i) {
        q[static_cast<Eigen::Index>(i)] = links[i].theta;
    }
    return q;
}

KinematicChain KinematicChain::with_joints(const Eigen::VectorXd& theta) const
{
    if (static_cast<std::size_t>(theta.size()) != links.size()) {
        throw Error("with_joints: expected " + std::to_string(links.size()) + " joint values, got " +
                    std::to_string(theta.size()));
    }
    KinematicChain out = *this;
    for (std::size_t i = 0; i < links.size(); ++i) {
        out.links[i].theta = theta[static_cast<Eigen::Index>(i)];
    }
    return out;
}

std::vector<Mat4> link_frames(const KinematicChain& chain)
{
    std::vector<Mat4> frames;
    frames.reserve(chain.size() + 1);
    frames.push_back(chain.base);
    for (const auto& link : chain.links) {
        frames.push_back(frames.back() * link_transform(link));
    }
    return frames;
}

Mat4 forward_kinematics(const KinematicChain& chain) { return link_frames(chain).back(); }

KinematicChain concatenate(const KinematicChain& a, const KinematicChain& b)
{
    if (!b.base.isIdentity(1e-12)) {
        throw Error("concatenate: the second chain must be expressed in the first chain's tip frame (identity base)");
    }
    KinematicChain out = a;
    out.links.insert(out.links.end(), b.links.begin(), b.links.end());
    return out;
}

Jacobian jacobian_at(const KinematicChain& chain, const Vec3& point)
{
    const auto frames = link_frames(chain);
    Jacobian j(6, static_cast<Eigen::Index>(chain.size()));
    for (std::size_t i = 0; i < chain.size(); ++i) {
        const Vec3 z = frames[i].block<3, 1>(0, 2);
        const Vec3 p = frames[i].block<3, 1>(0, 3);
        j.block<3, 1>(0, static_cast<Eigen::Index>(i)) = z.cross(point - p);
        j.block<3, 1>(3, static_cast<Eigen::Index>(i)) = z;
    }
    return j;
}

Jacobian jacobian(const KinematicChain& chain)
{
    return jacobian_at(chain, forward_kinematics(chain).block<3, 1>(0, 3));
}

Jacobian jacobian_fd(const KinematicChain& chain, double h)
{
    const Eigen::VectorXd q = chain.joints();
    const Mat3 r0 = forward_kinematics(chain).block<3, 3>(0, 0);
    Jacobian j(6, q.size());
    for (Eigen::Index i = 0; i < q.size(); ++i) {
        Eigen::VectorXd qp = q, qm = q;
        qp[i] += h;
        qm[i] -= h;
        const Mat4 tp = forward_kinematics(chain.with_joints(qp));
        const Mat4 tm = forward_kinematics(chain.with_joints(qm));
        j.block<3, 1>(0, i) = (tp.block<3, 1>(0, 3) - tm.block<3, 1>(0, 3)) / (2.0 * h);
        const Mat3 w = (tp.block<3, 3>(0, 0) - tm.block<3, 3>(0, 0)) / (2.0 * h) * r0.transpose();
        j.block<3, 1>(3, i) = Vec3(w(2, 1) - w(1, 2), w(0, 2) - w(2, 0), w(1, 0) - w(0, 1)) / 2.0;
    }
    return j;
}

Eigen::VectorXd joint_torques(const KinematicChain& chain, const Vec6& wrench)
{
    return jacobian(chain).transpose() * wrench;
}

Eigen::VectorXd joint_torques(const KinematicChain& chain, const Vec3& force)
{
    Vec6 w = Vec6::Zero();
    w.head<3>() = force;
    return joint_torques(chain, w);
}

Mat3 contact_frame(const Vec3& normal)
{
    const double len = normal.norm();
    if (!(len > 0.0) || !std::isfinite(len)) {
        throw Error("contact_frame: normal must be a finite non-zero vector");
    }
    const Vec3 n = normal / len;
    Eigen::Index axis = 0;
    n.cwiseAbs().minCoeff(&axis);
    const Vec3 e = Vec3::Unit(axis);
    const Vec3 t1 = (e - e.dot(n) * n).normalized();
    const Vec3 t2 = n.cross(t1);
    Mat3 c;
    c.col(0) = t1;
    c.col(1) = t2;
    c.col(2) = n;
    return c;
}

namespace {

Mat3 skew(const Vec3& v)
{
    Mat3 s;
    s << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
    return s;
}

} // namespace

Eigen::Matrix<double, 6, 4> contact_map(const Contact& contact, const Vec3& reference)
{
    const Mat3 c = contact_frame(contact.normal);
    Eigen::Matrix<double, 6, 4> g = Eigen::Matrix<double, 6, 4>::Zero();
    g.block<3, 3>(0, 0) = c;
    g.block<3, 3>(3, 0) = skew(contact.point - reference) * c;
    g.block<3, 1>(3, 3) = c.col(2);
    return g;
}

Eigen::MatrixXd grasp_matrix(std::span<const Contact> contacts, const Vec3& reference)
{
    if (contacts.empty()) {
        throw Error("grasp_matrix: need at least one contact");
    }
    Eigen::MatrixXd g(6, soft_finger_dofs * static_cast<Eigen::Index>(contacts.size()));
    for (std::size_t i = 0; i < contacts.size(); ++i) {
        g.block<6, 4>(0, soft_finger_dofs * static_cast<Eigen::Index>(i)) = contact_map(contacts[i], reference);
    }
    return g;
}

Eigen::MatrixXd hand_jacobian(std::span<const KinematicChain> fingers, std::span<const Contact> contacts)
{
    if (fingers.size() != contacts.size()) {
        throw Error("hand_jacobian: one contact per finger is required");
    }
    Eigen::Index cols = 0;
    for (const auto& f : fingers) {
        cols += static_cast<Eigen::Index>(f.size());
    }
    Eigen::MatrixXd j = Eigen::MatrixXd::Zero(soft_finger_dofs * static_cast<Eigen::Index>(fingers.size()), cols);
    Eigen::Index col = 0;
    for (std::size_t i = 0; i < fingers.size(); ++i) {
        const Mat3 c = contact_frame(contacts[i].normal);
        const Jacobian ji = jacobian_at(fingers[i], contacts[i].point);
        const auto n = static_cast<Eigen::Index>(fingers[i].size());
        const auto row = soft_finger_dofs * static_cast<Eigen::Index>(i);
        j.block(row, col, 3, n) = c.transpose() * ji.topRows<3>();
        j.block(row + 3, col, 1, n) = c.col(2).transpose() * ji.bottomRows<3>();
        col += n;
    }
    return j;
}

int numeric_rank(const Eigen::MatrixXd& m, double rel_tol)
{
    if (m.size() == 0) {
        return 0;
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
    const auto& s = svd.singularValues();
    if (s.size() == 0 || s[0] == 0.0) {
        return 0;
    }
    int rank = 0;
    for (Eigen::Index i = 0; i < s.size(); ++i) {
        rank += s[i] > rel_tol * s[0] ? 1 : 0;
    }
    return rank;
}

GraspRates solve_grasp_rates(const Eigen::MatrixXd& grasp, const Eigen::MatrixXd& hand_jacobian, const Vec6& u)
{
    if (grasp.rows() != 6 || hand_jacobian.rows() != grasp.cols()) {
        throw Error("solve_grasp_rates: G must be 6 x m and J must have m rows");
    }
    GraspRates out;
    out.contact_velocity = grasp.transpose() * u;
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(hand_jacobian);
    cod.setThreshold(1e-10);
    out.joint_rates = cod.solve(out.contact_velocity);
    out.jacobian_rank = numeric_rank(hand_jacobian);
    out.grasp_rank = numeric_rank(grasp);
    out.rank_deficient = out.jacobian_rank < std::min(hand_jacobian.rows(), hand_jacobian.cols());
    out.residual = (hand_jacobian * out.joint_rates - out.contact_velocity).norm();
    return out;
}

} // namespace morphprint
