#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "ipose/skeleton.hpp"
#include "test_util.hpp"

using namespace ipose;
using test_util::random_quat;

namespace {

std::vector<Quat> identity_pose(const SkeletonModel& skel) {
    return std::vector<Quat>(skel.n_segments(), Quat::identity());
}

Vec3 rest_position(const SkeletonModel& skel, int i) {
    Vec3 p{0, 0, 0};
    while (i > 0) {
        p = p + skel.segments[i].offset;
        i = skel.segments[i].parent;
    }
    return p;
}

}  // namespace

TEST_CASE("presets validate and have the published segment counts") {
    SkeletonModel u9 = SkeletonModel::upper_body_9();
    CHECK(u9.n_segments() == 9);
    CHECK(u9.segments[0].name == "pelvis");
    SkeletonModel f17 = SkeletonModel::full_body_17(1.80);
    CHECK(f17.n_segments() == 17);
    CHECK(f17.segments[0].name == "pelvis");
}

TEST_CASE("forward kinematics") {
    SkeletonModel skel = SkeletonModel::full_body_17();

    SUBCASE("identity orientations give exactly the rest pose") {
        PoseFrame f = forward_kinematics(skel, identity_pose(skel));
        for (int i = 0; i < skel.n_segments(); ++i) {
            Vec3 expect = rest_position(skel, i);
            CHECK(norm(f.position[i] - expect) < 1e-15);
        }
    }
    SUBCASE("whole-body rotation spins all positions about the origin") {
        Quat r = from_axis_angle(Vec3{0, 0, 1}, M_PI / 2);
        std::vector<Quat> pose(skel.n_segments(), r);
        PoseFrame f = forward_kinematics(skel, pose);
        for (int i = 0; i < skel.n_segments(); ++i) {
            Vec3 expect = rotate(r, rest_position(skel, i));
            CHECK(norm(f.position[i] - expect) < 1e-12);
        }
    }
    SUBCASE("two-link chain with the parent pitched 90 degrees") {
        SkeletonModel chain;
        chain.segments = {
            {"root", -1, {0, 0, 0}, Quat::identity()},
            {"a", 0, {0, 0, 1.0}, Quat::identity()},
            {"b", 1, {0, 0, 1.0}, Quat::identity()},
        };
        // pitch the middle link forward 90 deg: its child offset (up) maps to +x
        Quat pitch = from_axis_angle(Vec3{0, 1, 0}, M_PI / 2);
        std::vector<Quat> pose{Quat::identity(), pitch, pitch};
        PoseFrame f = forward_kinematics(chain, pose);
        CHECK(norm(f.position[1] - Vec3{0, 0, 1}) < 1e-12);
        CHECK(norm(f.position[2] - Vec3{1, 0, 1}) < 1e-12);
    }
    SUBCASE("bone lengths are invariant under any pose") {
        std::mt19937_64 rng(101);
        for (int rep = 0; rep < 50; ++rep) {
            std::vector<Quat> pose;
            for (int i = 0; i < skel.n_segments(); ++i) pose.push_back(random_quat(rng));
            PoseFrame f = forward_kinematics(skel, pose);
            for (int i = 1; i < skel.n_segments(); ++i) {
                double bone = norm(f.position[i] - f.position[skel.segments[i].parent]);
                CHECK(bone == doctest::Approx(norm(skel.segments[i].offset)).epsilon(1e-9));
            }
        }
    }
    SUBCASE("global pre-rotation is equivariant") {
        std::mt19937_64 rng(102);
        std::vector<Quat> pose;
        for (int i = 0; i < skel.n_segments(); ++i) pose.push_back(random_quat(rng));
        Quat g = random_quat(rng);
        std::vector<Quat> rotated;
        for (const Quat& q : pose) rotated.push_back(quat_multiply(g, q));
        PoseFrame base = forward_kinematics(skel, pose);
        PoseFrame rot = forward_kinematics(skel, rotated);
        for (int i = 0; i < skel.n_segments(); ++i)
            CHECK(norm(rot.position[i] - rotate(g, base.position[i])) < 1e-12);
    }
    SUBCASE("length mismatch is a contract error") {
        CHECK_THROWS_AS(forward_kinematics(skel, std::vector<Quat>(3, Quat::identity())),
                        ContractError);
    }
}

TEST_CASE("joint angles") {
    SkeletonModel skel = SkeletonModel::upper_body_9();

    SUBCASE("identical parent and child orientations give the identity joint") {
        std::mt19937_64 rng(103);
        Quat q = random_quat(rng);
        std::vector<Quat> pose(skel.n_segments(), q);
        std::vector<Quat> joints = joint_angles(skel, pose);
        for (int i = 1; i < skel.n_segments(); ++i)
            CHECK(qad(joints[i], Quat::identity()) < 1e-12);
    }
    SUBCASE("a 30 degree elbow flexion appears as that relative rotation") {
        std::vector<Quat> pose = identity_pose(skel);
        Quat flex = from_axis_angle(Vec3{0, 1, 0}, 30.0 * M_PI / 180);
        pose[5] = flex;  // right_elbow relative to right_shoulder (identity)
        std::vector<Quat> joints = joint_angles(skel, pose);
        CHECK(qad(joints[5], flex) < 1e-12);
    }
    SUBCASE("child_global == parent_global (x) joint for every edge") {
        std::mt19937_64 rng(104);
        std::vector<Quat> pose;
        for (int i = 0; i < skel.n_segments(); ++i) pose.push_back(random_quat(rng));
        std::vector<Quat> joints = joint_angles(skel, pose);
        for (int i = 1; i < skel.n_segments(); ++i) {
            Quat composed = quat_multiply(pose[skel.segments[i].parent], joints[i]);
            CHECK(qad(composed, pose[i]) < 1e-12);
        }
    }
}

TEST_CASE("pose export and skeleton JSON round trip") {
    namespace fs = std::filesystem;
    fs::path dir = fs::temp_directory_path() / "ipose_kin_tests";
    fs::create_directories(dir);

    SkeletonModel skel = SkeletonModel::upper_body_9(1.65);
    std::mt19937_64 rng(105);
    std::vector<PoseFrame> frames;
    for (int t = 0; t < 5; ++t) {
        std::vector<Quat> pose;
        for (int i = 0; i < skel.n_segments(); ++i)
            pose.push_back(from_axis_angle(Vec3{0, 0, 1}, 0.1 * t));
        frames.push_back(forward_kinematics(skel, pose, t / 60.0));
    }
    write_pose_csv((dir / "pose.csv").string(), skel, frames);
    write_pose_svg((dir / "pose.svg").string(), skel, frames);
    CHECK(fs::file_size(dir / "pose.csv") > 100);
    CHECK(fs::file_size(dir / "pose.svg") > 100);

    write_skeleton_json((dir / "skel.json").string(), skel);
    SkeletonModel loaded = read_skeleton_json((dir / "skel.json").string());
    REQUIRE(loaded.n_segments() == skel.n_segments());
    for (int i = 0; i < skel.n_segments(); ++i) {
        CHECK(loaded.segments[i].name == skel.segments[i].name);
        CHECK(loaded.segments[i].parent == skel.segments[i].parent);
        CHECK(norm(loaded.segments[i].offset - skel.segments[i].offset) < 1e-15);
    }
}
