#pragma once

#include "compose/skeleton.hpp"

#include <Eigen/Core>

#include <array>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace compose {

using Vec3 = Eigen::Vector3d;
using Vec2 = Eigen::Vector2d;
using Rng = std::mt19937_64;

// One skeleton frame. Coordinates are meters, y up, z toward the camera,
// so a subject facing the camera has its left side at +x.
struct Pose {
    std::array<Vec3, kNumJoints> joints;

    Vec3& operator[](int n) { return joints[static_cast<std::size_t>(n)]; }
    const Vec3& operator[](int n) const { return joints[static_cast<std::size_t>(n)]; }

    bool all_finite() const;
    bool operator==(const Pose& other) const;
};

// Standing T-pose, pelvis at the origin. Coordinates are listed in
// docs/skeleton.md.
const Pose& neutral_pose();

class ActionLabel {
   public:
    ActionLabel(int class_id, int num_classes);

    int class_id() const noexcept { return class_id_; }
    int num_classes() const noexcept { return num_classes_; }
    std::vector<double> one_hot() const;

    bool operator==(const ActionLabel&) const = default;

   private:
    int class_id_;
    int num_classes_;
};

// Convex combination over classes; at most two classes are nonzero.
class MixedLabel {
   public:
    explicit MixedLabel(std::vector<double> weights);
    static MixedLabel from(const ActionLabel& label);

    const std::vector<double>& weights() const noexcept { return weights_; }
    int num_classes() const noexcept { return static_cast<int>(weights_.size()); }

    bool operator==(const MixedLabel&) const = default;

   private:
    std::vector<double> weights_;
};

using SequenceLabel = std::variant<ActionLabel, MixedLabel>;

// Class weights of any label, one-hot for plain labels.
MixedLabel as_mixed(const SequenceLabel& label);

class MotionSequence {
   public:
    // Throws ValidationError on T < 2, non-finite coordinates or fps <= 0.
    MotionSequence(std::string id, std::vector<Pose> frames, SequenceLabel label, double fps);

    const std::string& id() const noexcept { return id_; }
    const std::vector<Pose>& frames() const noexcept { return frames_; }
    const Pose& frame(std::size_t t) const { return frames_.at(t); }
    int length() const noexcept { return static_cast<int>(frames_.size()); }
    const SequenceLabel& label() const noexcept { return label_; }
    double fps() const noexcept { return fps_; }

    // Throws InvalidState when the label is mixed.
    const ActionLabel& action_label() const;

    MotionSequence with_frames(std::vector<Pose> frames) const;
    MotionSequence with_label(SequenceLabel label) const;
    MotionSequence with_id(std::string id) const;

    bool operator==(const MotionSequence&) const = default;

   private:
    std::string id_;
    std::vector<Pose> frames_;
    SequenceLabel label_;
    double fps_;
};

// Uniform temporal resampling with linear interpolation between the
// nearest source frames. First and last frames map onto each other.
MotionSequence resample(const MotionSequence& seq, int frames);

enum class SubActionKind {
    ArmWaveLeft,
    ArmWaveRight,
    ArmRaise,
    LegMarch,
    LegKick,
    TorsoTwist,
};

inline constexpr std::array<SubActionKind, 6> kAllSubActionKinds = {
    SubActionKind::ArmWaveLeft, SubActionKind::ArmWaveRight, SubActionKind::ArmRaise,
    SubActionKind::LegMarch,    SubActionKind::LegKick,      SubActionKind::TorsoTwist,
};

std::string_view to_string(SubActionKind kind);
// Accepts the dashed names ("arm-wave-left", ...). Throws InvalidArgument.
SubActionKind parse_sub_action_kind(std::string_view name);
// Name of the part in BodyPartition::standard() that the kind animates.
std::string_view dominant_part(SubActionKind kind);

struct GeneratorParams {
    double amplitude = 1.0;      // scales every joint angle; 0 gives a static pose
    double frequency_hz = 1.0;
    double fps = 30.0;
    double jitter_sigma = 1e-3;  // meters, i.i.d. on every coordinate
    double amplitude_spread = 0.1;  // per-sample multiplicative variation
    double phase_spread = 0.3;      // radians, per-sample phase offset range
};

// Procedural sub-action: the kind's dominant part follows a parametric
// joint-angle trajectory; every other joint holds the neutral pose. The
// label defaults to (kind index, 6 classes).
MotionSequence generate_sub_action(SubActionKind kind, int frames, Rng& rng,
                                   const GeneratorParams& params = {},
                                   std::optional<ActionLabel> label = std::nullopt,
                                   std::string id = {});

}  // namespace compose
