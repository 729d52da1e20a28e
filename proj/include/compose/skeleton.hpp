#pragma once

#include <array>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace compose {

inline constexpr int kNumJoints = 24;

// SMPL joint ordering. See docs/skeleton.md for the full table.
enum Joint : int {
    kPelvis = 0,
    kLeftHip,
    kRightHip,
    kSpine1,
    kLeftKnee,
    kRightKnee,
    kSpine2,
    kLeftAnkle,
    kRightAnkle,
    kSpine3,
    kLeftFoot,
    kRightFoot,
    kNeck,
    kLeftCollar,
    kRightCollar,
    kHead,
    kLeftShoulder,
    kRightShoulder,
    kLeftElbow,
    kRightElbow,
    kLeftWrist,
    kRightWrist,
    kLeftHand,
    kRightHand,
};

std::string_view joint_name(int joint);

// Parent of each joint in the kinematic tree, -1 for the root.
const std::array<int, kNumJoints>& joint_parents();

// The 23 (parent, child) edges of the kinematic tree.
const std::vector<std::pair<int, int>>& smpl_bones();

// Named, disjoint joint sets covering all 24 joints.
class BodyPartition {
   public:
    struct Part {
        std::string name;
        std::vector<int> joints;
    };

    // Throws ValidationError unless the parts are non-empty, disjoint and
    // cover 0..23.
    explicit BodyPartition(std::vector<Part> parts);

    // torso (with head and collars), left_arm, right_arm, left_leg, right_leg
    static const BodyPartition& standard();

    const std::vector<Part>& parts() const noexcept { return parts_; }
    std::size_t size() const noexcept { return parts_.size(); }
    int part_of(int joint) const { return joint_to_part_.at(static_cast<std::size_t>(joint)); }
    int index_of(std::string_view name) const;

   private:
    std::vector<Part> parts_;
    std::array<int, kNumJoints> joint_to_part_{};
};

}  // namespace compose
