#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "morphprint/kinematics.hpp"
#include "morphprint/laplacian.hpp"
#include "morphprint/mesh.hpp"

namespace morphprint {

struct Finger {
    std::string name;
    KinematicChain chain; // link thetas hold the rest pose
    std::vector<double> lower;
    std::vector<double> upper;
};

/// A mesh vertex carried by link `link` of finger `finger`; link 0 is the
/// finger base and never moves.
struct Binding {
    std::uint32_t vertex = 0;
    std::uint32_t finger = 0;
    std::uint32_t link = 0;
};

struct HandModel {
    std::vector<Finger> fingers;
    std::vector<Binding> bindings;

    std::size_t joint_count() const;
    /// Concatenated rest angles of all fingers.
    Eigen::VectorXd rest_joints() const;
    Eigen::VectorXd lower_bounds() const;
    Eigen::VectorXd upper_bounds() const;
    std::vector<std::string> joint_names() const;
    /// Sorted bound vertex indices.
    std::vector<std::uint32_t> control_vertices() const;

    /// Chains posed with a concatenated joint vector.
    std::vector<KinematicChain> posed(const Eigen::VectorXd& joints) const;
    /// Target of every bound vertex: T_l(joints) T_l(rest)^-1 v_rest.
    PositionMap targets(const Mesh& rest_mesh, const Eigen::VectorXd& joints) const;
    /// Fingertip positions (frame t origins) for a joint vector.
    std::vector<Vec3> fingertips(const Eigen::VectorXd& joints) const;

    /// Throws Error listing every inconsistency against `mesh` (or only the
    /// internal ones when mesh is null).
    void validate(const Mesh* mesh = nullptr) const;
};

HandModel parse_hand_model(const std::string& json_text);
HandModel read_hand_model(const std::filesystem::path& path);
std::string hand_model_json(const HandModel& hand);

/// Joint-angle schedule: one row per time sample, one column per joint.
struct GraspSchedule {
    std::vector<std::string> joint_names;
    std::vector<double> time;
    std::vector<Eigen::VectorXd> poses;
};

GraspSchedule parse_schedule(const std::string& csv_text, const HandModel& hand);
GraspSchedule read_schedule(const std::filesystem::path& path, const HandModel& hand);
std::string schedule_csv(const GraspSchedule& schedule);

struct SyntheticHand {
    Mesh mesh;
    HandModel model;
    GraspSchedule schedule;
};

struct SyntheticHandOptions {
    int fingers = 5;
    int links_per_finger = 3;
    double finger_radius = 3.5;
    double joint_limit = 0.06; // rad
    std::size_t schedule_rows = 8;
    /// Fraction of the joint limits reached by the last schedule row.
    double schedule_amplitude = 0.5;
};

/// Flat palm slab with separate octagonal finger tubes along +y, one DH
/// chain per finger flexing toward -z. Segment-end rings and the tip center
/// of each finger are bound to their links.
SyntheticHand make_synthetic_hand(const SyntheticHandOptions& options = {});

} // namespace morphprint
