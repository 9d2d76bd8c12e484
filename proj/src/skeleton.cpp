#include "ipose/skeleton.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <nlohmann/json.hpp>

#include "ipose/errors.hpp"
#include "ipose/io.hpp"

namespace ipose {

using nlohmann::json;

void SkeletonModel::validate() const {
    if (segments.empty()) throw ContractError("skeleton: no segments");
    if (segments[0].parent != -1) throw ContractError("skeleton: segment 0 must be the root");
    for (int i = 1; i < n_segments(); ++i) {
        const Segment& s = segments[i];
        if (s.parent < 0 || s.parent >= i)
            throw ContractError("skeleton: parents must precede children (segment " +
                                std::to_string(i) + ")");
        if (!is_finite(s.offset)) throw ContractError("skeleton: non-finite offset");
    }
}

// Proportions of total body height; classic anthropometric segment tables.
namespace {
constexpr double kTrunkHalf = 0.144;
constexpr double kShoulderHalfWidth = 0.129;
constexpr double kUpperArm = 0.186;
constexpr double kForearm = 0.146;
constexpr double kHand = 0.108;
constexpr double kPelvisToStern = 0.190;
constexpr double kSternToHead = 0.158;
constexpr double kShoulderDrop = 0.098;  // stern origin up to the clavicle line
constexpr double kHipHalfWidth = 0.0955;
constexpr double kUpperLeg = 0.245;
constexpr double kLowerLeg = 0.246;
}  // namespace

SkeletonModel SkeletonModel::upper_body_9(double height_m) {
    const double h = height_m;
    SkeletonModel m;
    m.segments = {
        {"pelvis", -1, {0, 0, 0}, Quat::identity()},
        {"t12", 0, {0, 0, kTrunkHalf * h}, Quat::identity()},
        {"neck", 1, {0, 0, kTrunkHalf * h}, Quat::identity()},
        {"right_shoulder", 2, {0, -kShoulderHalfWidth * h, 0}, Quat::identity()},
        {"left_shoulder", 2, {0, kShoulderHalfWidth * h, 0}, Quat::identity()},
        {"right_elbow", 3, {0, 0, -kUpperArm * h}, Quat::identity()},
        {"left_elbow", 4, {0, 0, -kUpperArm * h}, Quat::identity()},
        {"right_wrist", 5, {0, 0, -kForearm * h}, Quat::identity()},
        {"left_wrist", 6, {0, 0, -kForearm * h}, Quat::identity()},
    };
    m.validate();
    return m;
}

SkeletonModel SkeletonModel::full_body_17(double height_m) {
    const double h = height_m;
    SkeletonModel m;
    m.segments = {
        {"pelvis", -1, {0, 0, 0}, Quat::identity()},
        {"stern", 0, {0, 0, kPelvisToStern * h}, Quat::identity()},
        {"head", 1, {0, 0, kSternToHead * h}, Quat::identity()},
        {"right_shoulder", 1, {0, -kShoulderHalfWidth * h, kShoulderDrop * h}, Quat::identity()},
        {"right_upper_arm", 3, {0, -0.030 * h, 0}, Quat::identity()},
        {"right_forearm", 4, {0, 0, -kUpperArm * h}, Quat::identity()},
        {"right_hand", 5, {0, 0, -kForearm * h}, Quat::identity()},
        {"left_shoulder", 1, {0, kShoulderHalfWidth * h, kShoulderDrop * h}, Quat::identity()},
        {"left_upper_arm", 7, {0, 0.030 * h, 0}, Quat::identity()},
        {"left_forearm", 8, {0, 0, -kUpperArm * h}, Quat::identity()},
        {"left_hand", 9, {0, 0, -kForearm * h}, Quat::identity()},
        {"right_upper_leg", 0, {0, -kHipHalfWidth * h, 0}, Quat::identity()},
        {"right_lower_leg", 11, {0, 0, -kUpperLeg * h}, Quat::identity()},
        {"right_foot", 12, {0, 0, -kLowerLeg * h}, Quat::identity()},
        {"left_upper_leg", 0, {0, kHipHalfWidth * h, 0}, Quat::identity()},
        {"left_lower_leg", 14, {0, 0, -kUpperLeg * h}, Quat::identity()},
        {"left_foot", 15, {0, 0, -kLowerLeg * h}, Quat::identity()},
    };
    m.validate();
    return m;
}

PoseFrame forward_kinematics(const SkeletonModel& skel, const std::vector<Quat>& global_orientations,
                             double t) {
    skel.validate();
    if (static_cast<int>(global_orientations.size()) != skel.n_segments())
        throw ContractError("forward_kinematics: orientation list does not match skeleton");
    PoseFrame frame;
    frame.t = t;
    frame.orientation = global_orientations;
    frame.position.resize(skel.n_segments());
    frame.position[0] = {0, 0, 0};  // root pinned at the world origin
    for (int i = 1; i < skel.n_segments(); ++i) {
        const Segment& s = skel.segments[i];
        frame.position[i] =
            frame.position[s.parent] + rotate(global_orientations[s.parent], s.offset);
    }
    return frame;
}

std::vector<Quat> joint_angles(const SkeletonModel& skel,
                               const std::vector<Quat>& global_orientations) {
    skel.validate();
    if (static_cast<int>(global_orientations.size()) != skel.n_segments())
        throw ContractError("joint_angles: orientation list does not match skeleton");
    std::vector<Quat> joints(skel.n_segments());
    joints[0] = global_orientations[0];  // root joint is its world orientation
    for (int i = 1; i < skel.n_segments(); ++i)
        joints[i] = normalized(quat_multiply_raw(conjugate(global_orientations[skel.segments[i].parent]),
                                                 global_orientations[i]));
    return joints;
}

// ---- export -----------------------------------------------------------------------

void write_pose_csv(const std::string& path, const SkeletonModel& skel,
                    const std::vector<PoseFrame>& frames) {
    std::ostringstream out;
    out << "# ipose-pose v1\n";
    out << "# segments=" << skel.n_segments() << "\n";
    out << "t,segment,qw,qx,qy,qz,px,py,pz\n";
    for (const PoseFrame& f : frames) {
        for (int s = 0; s < skel.n_segments(); ++s) {
            const Quat& q = f.orientation[s];
            const Vec3& p = f.position[s];
            out << fmt_double(f.t) << ',' << s << ',' << fmt_double(q.w) << ',' << fmt_double(q.x)
                << ',' << fmt_double(q.y) << ',' << fmt_double(q.z) << ',' << fmt_double(p.x) << ','
                << fmt_double(p.y) << ',' << fmt_double(p.z) << "\n";
        }
    }
    atomic_write(path, out.str());
}

void write_pose_svg(const std::string& path, const SkeletonModel& skel,
                    const std::vector<PoseFrame>& frames, int max_frames) {
    const double w = 480, hpx = 480, margin = 30;
    double lo_y = -0.1, hi_y = 0.1, lo_z = -0.1, hi_z = 0.1;
    for (const PoseFrame& f : frames)
        for (const Vec3& p : f.position) {
            lo_y = std::min(lo_y, p.y);
            hi_y = std::max(hi_y, p.y);
            lo_z = std::min(lo_z, p.z);
            hi_z = std::max(hi_z, p.z);
        }
    double scale = std::min((w - 2 * margin) / (hi_y - lo_y), (hpx - 2 * margin) / (hi_z - lo_z));
    auto px = [&](const Vec3& p) { return margin + (hi_y - p.y) * scale; };  // viewer faces +x
    auto py = [&](const Vec3& p) { return hpx - margin - (p.z - lo_z) * scale; };

    std::ostringstream out;
    out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << w << "' height='" << hpx << "'>\n";
    out << "<rect width='100%' height='100%' fill='white'/>\n";
    int stride = std::max(1, static_cast<int>(frames.size()) / std::max(1, max_frames));
    for (std::size_t fi = 0; fi < frames.size(); fi += stride) {
        const PoseFrame& f = frames[fi];
        double opacity = 0.25 + 0.75 * (frames.size() <= 1 ? 1.0 : double(fi) / (frames.size() - 1));
        for (int i = 1; i < skel.n_segments(); ++i) {
            const Vec3& a = f.position[skel.segments[i].parent];
            const Vec3& b = f.position[i];
            out << "<line x1='" << px(a) << "' y1='" << py(a) << "' x2='" << px(b) << "' y2='"
                << py(b) << "' stroke='steelblue' stroke-width='3' stroke-opacity='" << opacity
                << "'/>\n";
        }
        for (int i = 0; i < skel.n_segments(); ++i) {
            const Vec3& p = f.position[i];
            out << "<circle cx='" << px(p) << "' cy='" << py(p)
                << "' r='4' fill='darkorange' fill-opacity='" << opacity << "'/>\n";
        }
    }
    out << "</svg>\n";
    atomic_write(path, out.str());
}

void write_skeleton_json(const std::string& path, const SkeletonModel& skel) {
    json j;
    j["version"] = 1;
    j["segments"] = json::array();
    for (const Segment& s : skel.segments)
        j["segments"].push_back({{"name", s.name},
                                 {"parent", s.parent},
                                 {"offset", {s.offset.x, s.offset.y, s.offset.z}},
                                 {"npose_ref", {s.npose_ref.w, s.npose_ref.x, s.npose_ref.y, s.npose_ref.z}}});
    atomic_write(path, j.dump(2) + "\n");
}

SkeletonModel read_skeleton_json(const std::string& path) {
    json j;
    try {
        j = json::parse(read_file(path));
    } catch (const json::exception& e) {
        throw ParseError(path + ": " + e.what());
    }
    SkeletonModel m;
    for (const auto& e : j.at("segments")) {
        Segment s;
        s.name = e.at("name").get<std::string>();
        s.parent = e.at("parent").get<int>();
        const auto& o = e.at("offset");
        s.offset = {o.at(0), o.at(1), o.at(2)};
        if (e.contains("npose_ref")) {
            const auto& q = e["npose_ref"];
            s.npose_ref = normalized(Quat{q.at(0), q.at(1), q.at(2), q.at(3)});
        }
        m.segments.push_back(s);
    }
    m.validate();
    return m;
}

}  // namespace ipose
