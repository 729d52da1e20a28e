#include "compose/skeleton.hpp"

#include "compose/error.hpp"

#include <algorithm>

namespace compose {

namespace {

constexpr std::array<std::string_view, kNumJoints> kJointNames = {
    "pelvis",        "left_hip",       "right_hip",      "spine1",      "left_knee",
    "right_knee",    "spine2",         "left_ankle",     "right_ankle", "spine3",
    "left_foot",     "right_foot",     "neck",           "left_collar", "right_collar",
    "head",          "left_shoulder",  "right_shoulder", "left_elbow",  "right_elbow",
    "left_wrist",    "right_wrist",    "left_hand",      "right_hand",
};

}  // namespace

std::string_view joint_name(int joint) {
    if (joint < 0 || joint >= kNumJoints) {
        throw InvalidArgument("motion-core", "joint index out of range: " + std::to_string(joint));
    }
    return kJointNames[static_cast<std::size_t>(joint)];
}

const std::array<int, kNumJoints>& joint_parents() {
    static const std::array<int, kNumJoints> parents = {
        -1, 0, 0, 0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 9, 9, 12, 13, 14, 16, 17, 18, 19, 20, 21,
    };
    return parents;
}

const std::vector<std::pair<int, int>>& smpl_bones() {
    static const std::vector<std::pair<int, int>> bones = [] {
        std::vector<std::pair<int, int>> out;
        const auto& parents = joint_parents();
        for (int n = 1; n < kNumJoints; ++n) out.emplace_back(parents[static_cast<std::size_t>(n)], n);
        return out;
    }();
    return bones;
}

BodyPartition::BodyPartition(std::vector<Part> parts) : parts_(std::move(parts)) {
    joint_to_part_.fill(-1);
    for (std::size_t p = 0; p < parts_.size(); ++p) {
        if (parts_[p].joints.empty()) {
            throw ValidationError("motion-core", "body part '" + parts_[p].name + "' is empty");
        }
        for (int n : parts_[p].joints) {
            if (n < 0 || n >= kNumJoints) {
                throw ValidationError("motion-core", "body part '" + parts_[p].name +
                                                         "' has joint out of range: " + std::to_string(n));
            }
            auto& slot = joint_to_part_[static_cast<std::size_t>(n)];
            if (slot != -1) {
                throw ValidationError("motion-core", "joint " + std::to_string(n) +
                                                         " appears in more than one body part");
            }
            slot = static_cast<int>(p);
        }
    }
    for (int n = 0; n < kNumJoints; ++n) {
        if (joint_to_part_[static_cast<std::size_t>(n)] == -1) {
            throw ValidationError("motion-core", "joint " + std::to_string(n) + " is not in any body part");
        }
    }
}

const BodyPartition& BodyPartition::standard() {
    static const BodyPartition partition({
        {"torso", {kPelvis, kSpine1, kSpine2, kSpine3, kNeck, kLeftCollar, kRightCollar, kHead}},
        {"left_arm", {kLeftShoulder, kLeftElbow, kLeftWrist, kLeftHand}},
        {"right_arm", {kRightShoulder, kRightElbow, kRightWrist, kRightHand}},
        {"left_leg", {kLeftHip, kLeftKnee, kLeftAnkle, kLeftFoot}},
        {"right_leg", {kRightHip, kRightKnee, kRightAnkle, kRightFoot}},
    });
    return partition;
}

int BodyPartition::index_of(std::string_view name) const {
    auto it = std::find_if(parts_.begin(), parts_.end(), [&](const Part& p) { return p.name == name; });
    if (it == parts_.end()) throw InvalidArgument("motion-core", "unknown body part: " + std::string(name));
    return static_cast<int>(it - parts_.begin());
}

}  // namespace compose
