#include "morphprint/hand.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include <json.hpp>

#include "morphprint/io.hpp"
#include "morphprint/primitives.hpp"

namespace morphprint {

std::size_t HandModel::joint_count() const
{
    std::size_t n = 0;
    for (const auto& f : fingers) {
        n += f.chain.size();
    }
    return n;
}

Eigen::VectorXd HandModel::rest_joints() const
{
    Eigen::VectorXd q(static_cast<Eigen::Index>(joint_count()));
    Eigen::Index pos = 0;
    for (const auto& f : fingers) {
        const auto j = f.chain.joints();
        q.segment(pos, j.size()) = j;
        pos += j.size();
    }
    return q;
}

Eigen::VectorXd HandModel::lower_bounds() const
{
    Eigen::VectorXd q(static_cast<Eigen::Index>(joint_count()));
    Eigen::Index pos = 0;
    for (const auto& f : fingers) {
        for (double v : f.lower) {
            q[pos++] = v;
        }
    }
    return q;
}

Eigen::VectorXd HandModel::upper_bounds() const
{
    Eigen::VectorXd q(static_cast<Eigen::Index>(joint_count()));
    Eigen::Index pos = 0;
    for (const auto& f : fingers) {
        for (double v : f.upper) {
            q[pos++] = v;
        }
    }
    return q;
}

std::vector<std::string> HandModel::joint_names() const
{
    std::vector<std::string> names;
    for (const auto& f : fingers) {
        for (std::size_t j = 0; j < f.chain.size(); ++j) {
            names.push_back(f.name + "_j" + std::to_string(j));
        }
    }
    return names;
}

std::vector<std::uint32_t> HandModel::control_vertices() const
{
    std::vector<std::uint32_t> v;
    for (const auto& b : bindings) {
        v.push_back(b.vertex);
    }
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    return v;
}

std::vector<KinematicChain> HandModel::posed(const Eigen::VectorXd& joints) const
{
    if (static_cast<std::size_t>(joints.size()) != joint_count()) {
        throw Error("hand: expected " + std::to_string(joint_count()) + " joint values, got " +
                    std::to_string(joints.size()));
    }
    std::vector<KinematicChain> out;
    Eigen::Index pos = 0;
    for (const auto& f : fingers) {
        const auto n = static_cast<Eigen::Index>(f.chain.size());
        out.push_back(f.chain.with_joints(joints.segment(pos, n)));
        pos += n;
    }
    return out;
}

PositionMap HandModel::targets(const Mesh& rest_mesh, const Eigen::VectorXd& joints) const
{
    const auto chains = posed(joints);
    std::vector<std::vector<Mat4>> rest_frames, pose_frames;
    for (std::size_t f = 0; f < fingers.size(); ++f) {
        rest_frames.push_back(link_frames(fingers[f].chain));
        pose_frames.push_back(link_frames(chains[f]));
    }
    PositionMap out;
    for (const auto& b : bindings) {
        if (b.vertex >= rest_mesh.vertex_count()) {
            throw Error("hand: bound vertex " + std::to_string(b.vertex) + " is out of range");
        }
        const Mat4 xf = pose_frames[b.finger][b.link] * rest_frames[b.finger][b.link].inverse();
        const Vec3& v = rest_mesh.vertices()[b.vertex];
        out[b.vertex] = xf.block<3, 3>(0, 0) * v + xf.block<3, 1>(0, 3);
    }
    return out;
}

std::vector<Vec3> HandModel::fingertips(const Eigen::VectorXd& joints) const
{
    std::vector<Vec3> tips;
    for (const auto& c : posed(joints)) {
        tips.push_back(forward_kinematics(c).block<3, 1>(0, 3));
    }
    return tips;
}

void HandModel::validate(const Mesh* mesh) const
{
    std::vector<std::string> problems;
    if (fingers.empty()) {
        problems.push_back("no fingers defined");
    }
    std::set<std::string> names;
    for (std::size_t f = 0; f < fingers.size(); ++f) {
        const auto& fi = fingers[f];
        const std::string tag = "finger " + std::to_string(f) + " (" + fi.name + ")";
        if (fi.name.empty()) {
            problems.push_back(tag + ": empty name");
        } else if (!names.insert(fi.name).second) {
            problems.push_back(tag + ": duplicate name");
        }
        if (fi.chain.links.empty()) {
            problems.push_back(tag + ": needs at least one link");
        }
        if (fi.lower.size() != fi.chain.size() || fi.upper.size() != fi.chain.size()) {
            problems.push_back(tag + ": joint bounds must have one entry per link");
            continue;
        }
        for (std::size_t j = 0; j < fi.chain.size(); ++j) {
            const double t = fi.chain.links[j].theta;
            if (!(fi.lower[j] <= t && t <= fi.upper[j])) {
                problems.push_back(tag + " joint " + std::to_string(j) + ": rest angle outside [min, max]");
            }
        }
    }
    std::set<std::uint32_t> seen;
    for (const auto& b : bindings) {
        const std::string tag = "binding of vertex " + std::to_string(b.vertex);
        if (b.finger >= fingers.size()) {
            problems.push_back(tag + ": finger index out of range");
        } else if (b.link > fingers[b.finger].chain.size()) {
            problems.push_back(tag + ": link index out of range");
        }
        if (!seen.insert(b.vertex).second) {
            problems.push_back(tag + ": vertex bound twice");
        }
        if (mesh && b.vertex >= mesh->vertex_count()) {
            problems.push_back(tag + ": vertex index beyond mesh vertex count " + std::to_string(mesh->vertex_count()));
        }
    }
    if (!problems.empty()) {
        std::string msg = "invalid hand model:";
        for (const auto& p : problems) {
            msg += "\n  - " + p;
        }
        throw Error(msg);
    }
}

HandModel parse_hand_model(const std::string& json_text)
{
    using nlohmann::json;
    try {
        const json j = json::parse(json_text);
        HandModel hand;
        for (const auto& fj : j.at("fingers")) {
            Finger f;
            f.name = fj.at("name").get<std::string>();
            if (fj.contains("base")) {
                const auto b = fj.at("base").get<std::vector<double>>();
                if (b.size() != 16) {
                    throw ParseError("hand: finger '" + f.name + "' base must have 16 entries (row-major 4x4)");
                }
                for (int r = 0; r < 4; ++r) {
                    for (int c = 0; c < 4; ++c) {
                        f.chain.base(r, c) = b[static_cast<std::size_t>(4 * r + c)];
                    }
                }
            }
            for (const auto& lj : fj.at("links")) {
                DhLink l;
                l.theta = lj.value("theta", 0.0);
                l.d = lj.value("d", 0.0);
                l.a = lj.value("a", 0.0);
                l.alpha = lj.value("alpha", 0.0);
                f.chain.links.push_back(l);
                f.lower.push_back(lj.value("min", -3.141592653589793));
                f.upper.push_back(lj.value("max", 3.141592653589793));
            }
            hand.fingers.push_back(std::move(f));
        }
        if (j.contains("bindings")) {
            for (const auto& bj : j.at("bindings")) {
                const auto v = bj.get<std::vector<std::uint32_t>>();
                if (v.size() != 3) {
                    throw ParseError("hand: each binding is [vertex, finger, link]");
                }
                hand.bindings.push_back({v[0], v[1], v[2]});
            }
        }
        hand.validate();
        return hand;
    } catch (const json::exception& e) {
        throw ParseError(std::string("hand: ") + e.what());
    }
}

HandModel read_hand_model(const std::filesystem::path& path) { return parse_hand_model(io::read_text(path)); }

std::string hand_model_json(const HandModel& hand)
{
    using nlohmann::json;
    json j;
    j["fingers"] = json::array();
    for (const auto& f : hand.fingers) {
        json fj;
        fj["name"] = f.name;
        std::vector<double> base;
        for (int r = 0; r < 4; ++r) {
            for (int c = 0; c < 4; ++c) {
                base.push_back(f.chain.base(r, c));
            }
        }
        fj["base"] = base;
        fj["links"] = json::array();
        for (std::size_t i = 0; i < f.chain.size(); ++i) {
            const auto& l = f.chain.links[i];
            fj["links"].push_back(
                {{"theta", l.theta}, {"d", l.d}, {"a", l.a}, {"alpha", l.alpha}, {"min", f.lower[i]}, {"max", f.upper[i]}});
        }
        j["fingers"].push_back(fj);
    }
    j["bindings"] = json::array();
    for (const auto& b : hand.bindings) {
        j["bindings"].push_back({b.vertex, b.finger, b.link});
    }
    return j.dump(1) + "\n";
}

GraspSchedule parse_schedule(const std::string& csv_text, const HandModel& hand)
{
    const auto table = io::parse_csv(csv_text);
    GraspSchedule s;
    s.joint_names = hand.joint_names();
    const auto tcol = table.column("time");
    std::vector<std::size_t> cols;
    for (const auto& name : s.joint_names) {
        cols.push_back(table.column(name));
    }
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        s.time.push_back(table.number(r, tcol));
        Eigen::VectorXd q(static_cast<Eigen::Index>(cols.size()));
        for (std::size_t c = 0; c < cols.size(); ++c) {
            q[static_cast<Eigen::Index>(c)] = table.number(r, cols[c]);
        }
        s.poses.push_back(q);
    }
    if (s.poses.empty()) {
        throw ParseError("schedule: no rows");
    }
    return s;
}

GraspSchedule read_schedule(const std::filesystem::path& path, const HandModel& hand)
{
    return parse_schedule(io::read_text(path), hand);
}

std::string schedule_csv(const GraspSchedule& s)
{
    std::vector<std::string> header{"time"};
    header.insert(header.end(), s.joint_names.begin(), s.joint_names.end());
    io::CsvWriter w(header);
    for (std::size_t r = 0; r < s.poses.size(); ++r) {
        std::vector<double> row{s.time[r]};
        row.insert(row.end(), s.poses[r].data(), s.poses[r].data() + s.poses[r].size());
        w.row(row);
    }
    return w.str();
}

SyntheticHand make_synthetic_hand(const SyntheticHandOptions& opt)
{
    if (opt.fingers < 1 || opt.links_per_finger < 1) {
        throw Error("synthetic hand: need at least one finger and one link");
    }
    static const char* names[] = {"thumb", "index", "middle", "ring", "little"};
    const double pitch = 2.0 * opt.finger_radius + 3.0;
    const double palm_w = pitch * opt.fingers;
    const double palm_l = 40.0;
    const double palm_h = 2.0 * opt.finger_radius + 3.0;
    const int sides = 8;
    const int rings_per_link = 2;

    std::vector<Mesh> parts{primitives::box(Vec3::Zero(), Vec3(palm_w, palm_l, palm_h), 4)};
    struct Pending {
        Vec3 position;
        std::uint32_t finger;
        std::uint32_t link;
    };
    std::vector<Pending> pending;
    HandModel model;
    for (int f = 0; f < opt.fingers; ++f) {
        const double length = (f == 0 ? 30.0 : f == 2 ? 44.0 : 38.0);
        const Vec3 start((f + 0.5) * pitch, palm_l + 0.5, 0.5 * palm_h);
        const int rings = opt.links_per_finger * rings_per_link + 1;
        Mesh tube = primitives::tube_y(start, length, opt.finger_radius, sides, rings);
        for (int r = 0; r < rings; r += rings_per_link) {
            for (int s = 0; s < sides; ++s) {
                pending.push_back({tube.vertices()[static_cast<std::size_t>(r * sides + s)],
                                   static_cast<std::uint32_t>(f), static_cast<std::uint32_t>(r / rings_per_link)});
            }
        }
        // tube_y appends the base center, then the tip center.
        pending.push_back({tube.vertices()[tube.vertex_count() - 2], static_cast<std::uint32_t>(f), 0});
        pending.push_back({tube.vertices().back(), static_cast<std::uint32_t>(f),
                           static_cast<std::uint32_t>(opt.links_per_finger)});
        parts.push_back(std::move(tube));

        Finger finger;
        finger.name = f < 5 ? names[f] : "finger" + std::to_string(f);
        Mat4 base = Mat4::Identity();
        base.block<3, 1>(0, 0) = Vec3(0, 1, 0);
        base.block<3, 1>(0, 1) = Vec3(0, 0, -1);
        base.block<3, 1>(0, 2) = Vec3(-1, 0, 0);
        base.block<3, 1>(0, 3) = start;
        finger.chain.base = base;
        for (int l = 0; l < opt.links_per_finger; ++l) {
            DhLink link;
            link.a = length / opt.links_per_finger;
            finger.chain.links.push_back(link);
            finger.lower.push_back(-opt.joint_limit);
            finger.upper.push_back(opt.joint_limit);
        }
        model.fingers.push_back(std::move(finger));
    }

    // Canonical vertex order (first use by faces) survives OBJ/STL round trips.
    const Mesh merged = Mesh::merge(parts);
    LoadOptions lo;
    lo.weld_tolerance = 1e-9;
    Mesh mesh = prepare_mesh(std::span<const Vec3>(merged.vertices()), std::span<const Face>(merged.faces()), lo).mesh;

    for (const auto& p : pending) {
        const auto& v = mesh.vertices();
        auto it = std::find_if(v.begin(), v.end(), [&](const Vec3& q) { return (q - p.position).norm() < 1e-9; });
        if (it == v.end()) {
            throw Error("synthetic hand: bound vertex lost during canonicalization");
        }
        model.bindings.push_back({static_cast<std::uint32_t>(it - v.begin()), p.finger, p.link});
    }
    std::sort(model.bindings.begin(), model.bindings.end(),
              [](const Binding& a, const Binding& b) { return a.vertex < b.vertex; });
    model.validate(&mesh);

    GraspSchedule sched;
    sched.joint_names = model.joint_names();
    const std::size_t rows = std::max<std::size_t>(1, opt.schedule_rows);
    const auto n = static_cast<Eigen::Index>(model.joint_count());
    for (std::size_t r = 0; r < rows; ++r) {
        const double s = rows > 1 ? static_cast<double>(r) / static_cast<double>(rows - 1) : 0.0;
        Eigen::VectorXd q(n);
        for (Eigen::Index j = 0; j < n; ++j) {
            // Row 0 is the rest pose; later rows flex with a per-joint profile.
            const double profile = 0.4 + 0.6 * std::abs(std::sin(1.7 * static_cast<double>(j) + 0.5));
            q[j] = opt.joint_limit * opt.schedule_amplitude * s * profile;
        }
        sched.time.push_back(static_cast<double>(r));
        sched.poses.push_back(q);
    }
    return {std::move(mesh), std::move(model), std::move(sched)};
}

} // namespace morphprint
