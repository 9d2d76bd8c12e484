#pragma once

// Skeleton model and global-space forward kinematics: every segment carries a
// world-frame orientation, positions follow the parent chain.

#include <string>
#include <vector>

#include "ipose/quat.hpp"

namespace ipose {

struct Segment {
    std::string name;
    int parent = -1;       // -1 for the root (pelvis)
    Vec3 offset{};         // meters, in the parent frame, at rest pose
    Quat npose_ref = Quat::identity();
};

struct SkeletonModel {
    std::vector<Segment> segments;

    int n_segments() const { return static_cast<int>(segments.size()); }
    void validate() const;  // tree rooted at segment 0, finite offsets

    // Presets scaled from anthropometric height proportions.
    static SkeletonModel upper_body_9(double height_m = 1.71);
    static SkeletonModel full_body_17(double height_m = 1.71);
};

struct PoseFrame {
    double t = 0.0;
    std::vector<Quat> orientation;  // world frame, per segment
    std::vector<Vec3> position;     // meters, root at origin
};

PoseFrame forward_kinematics(const SkeletonModel& skel, const std::vector<Quat>& global_orientations,
                             double t = 0.0);

// Relative rotation per tree edge: parent^-1 (x) child.
std::vector<Quat> joint_angles(const SkeletonModel& skel, const std::vector<Quat>& global_orientations);

// ---- export -------------------------------------------------------------------

void write_pose_csv(const std::string& path, const SkeletonModel& skel,
                    const std::vector<PoseFrame>& frames);

// Orthographic front (x up the page is z; horizontal is y) line rendering,
// one <line> per bone, a few frames overlaid.
void write_pose_svg(const std::string& path, const SkeletonModel& skel,
                    const std::vector<PoseFrame>& frames, int max_frames = 8);

void write_skeleton_json(const std::string& path, const SkeletonModel& skel);
SkeletonModel read_skeleton_json(const std::string& path);

}  // namespace ipose
