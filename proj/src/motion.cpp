#include "compose/motion.hpp"

#include "compose/error.hpp"

#include <Eigen/Geometry>

#include <cmath>
#include <numbers>

namespace compose {

bool Pose::all_finite() const {
    for (const auto& j : joints) {
        if (!j.allFinite()) return false;
    }
    return true;
}

bool Pose::operator==(const Pose& other) const {
    for (int n = 0; n < kNumJoints; ++n) {
        if ((*this)[n] != other[n]) return false;
    }
    return true;
}

const Pose& neutral_pose() {
    static const Pose pose = [] {
        Pose p;
        p[kPelvis] = {0.0, 0.0, 0.0};
        p[kLeftHip] = {0.09, -0.08, 0.0};
        p[kRightHip] = {-0.09, -0.08, 0.0};
        p[kSpine1] = {0.0, 0.11, 0.0};
        p[kLeftKnee] = {0.10, -0.45, 0.0};
        p[kRightKnee] = {-0.10, -0.45, 0.0};
        p[kSpine2] = {0.0, 0.24, 0.0};
        p[kLeftAnkle] = {0.10, -0.85, 0.0};
        p[kRightAnkle] = {-0.10, -0.85, 0.0};
        p[kSpine3] = {0.0, 0.30, 0.0};
        p[kLeftFoot] = {0.11, -0.90, 0.10};
        p[kRightFoot] = {-0.11, -0.90, 0.10};
        p[kNeck] = {0.0, 0.50, 0.0};
        p[kLeftCollar] = {0.08, 0.42, 0.0};
        p[kRightCollar] = {-0.08, 0.42, 0.0};
        p[kHead] = {0.0, 0.62, 0.02};
        p[kLeftShoulder] = {0.18, 0.44, 0.0};
        p[kRightShoulder] = {-0.18, 0.44, 0.0};
        p[kLeftElbow] = {0.44, 0.44, 0.0};
        p[kRightElbow] = {-0.44, 0.44, 0.0};
        p[kLeftWrist] = {0.68, 0.44, 0.0};
        p[kRightWrist] = {-0.68, 0.44, 0.0};
        p[kLeftHand] = {0.76, 0.44, 0.0};
        p[kRightHand] = {-0.76, 0.44, 0.0};
        return p;
    }();
    return pose;
}

ActionLabel::ActionLabel(int class_id, int num_classes) : class_id_(class_id), num_classes_(num_classes) {
    if (num_classes <= 0 || class_id < 0 || class_id >= num_classes) {
        throw ValidationError("motion-core", "class_id " + std::to_string(class_id) + " not in [0, " +
                                                 std::to_string(num_classes) + ")");
    }
}

std::vector<double> ActionLabel::one_hot() const {
    std::vector<double> v(static_cast<std::size_t>(num_classes_), 0.0);
    v[static_cast<std::size_t>(class_id_)] = 1.0;
    return v;
}

MixedLabel::MixedLabel(std::vector<double> weights) : weights_(std::move(weights)) {
    if (weights_.empty()) throw ValidationError("motion-core", "mixed label has no classes");
    double sum = 0.0;
    int nonzero = 0;
    for (double w : weights_) {
        if (!std::isfinite(w) || w < 0.0) throw ValidationError("motion-core", "mixed label weight is negative");
        sum += w;
        if (w != 0.0) ++nonzero;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
        throw ValidationError("motion-core", "mixed label weights sum to " + std::to_string(sum));
    }
    if (nonzero > 2) throw ValidationError("motion-core", "mixed label has more than two nonzero weights");
}

MixedLabel MixedLabel::from(const ActionLabel& label) { return MixedLabel(label.one_hot()); }

MixedLabel as_mixed(const SequenceLabel& label) {
    if (const auto* a = std::get_if<ActionLabel>(&label)) return MixedLabel::from(*a);
    return std::get<MixedLabel>(label);
}

MotionSequence::MotionSequence(std::string id, std::vector<Pose> frames, SequenceLabel label, double fps)
    : id_(std::move(id)), frames_(std::move(frames)), label_(std::move(label)), fps_(fps) {
    if (frames_.size() < 2) {
        throw ValidationError("motion-core", "sequence '" + id_ + "' needs at least 2 frames, got " +
                                                 std::to_string(frames_.size()));
    }
    if (!(fps_ > 0.0) || !std::isfinite(fps_)) {
        throw ValidationError("motion-core", "sequence '" + id_ + "' has non-positive fps");
    }
    for (std::size_t t = 0; t < frames_.size(); ++t) {
        if (!frames_[t].all_finite()) {
            throw ValidationError("motion-core",
                                  "sequence '" + id_ + "' frame " + std::to_string(t) + " has non-finite coordinates");
        }
    }
}

const ActionLabel& MotionSequence::action_label() const {
    if (const auto* a = std::get_if<ActionLabel>(&label_)) return *a;
    throw InvalidState("motion-core", "sequence '" + id_ + "' carries a mixed label");
}

MotionSequence MotionSequence::with_frames(std::vector<Pose> frames) const {
    return MotionSequence(id_, std::move(frames), label_, fps_);
}

MotionSequence MotionSequence::with_label(SequenceLabel label) const {
    return MotionSequence(id_, frames_, std::move(label), fps_);
}

MotionSequence MotionSequence::with_id(std::string id) const {
    return MotionSequence(std::move(id), frames_, label_, fps_);
}

MotionSequence resample(const MotionSequence& seq, int frames) {
    if (frames < 2) throw InvalidArgument("motion-core", "resample target must be >= 2 frames");
    const int src = seq.length();
    if (src == frames) return seq;
    std::vector<Pose> out(static_cast<std::size_t>(frames));
    for (int k = 0; k < frames; ++k) {
        const double pos = static_cast<double>(k) * (src - 1) / (frames - 1);
        const int lo = std::min(static_cast<int>(std::floor(pos)), src - 1);
        const int hi = std::min(lo + 1, src - 1);
        const double w = pos - lo;
        const Pose& a = seq.frame(static_cast<std::size_t>(lo));
        const Pose& b = seq.frame(static_cast<std::size_t>(hi));
        for (int n = 0; n < kNumJoints; ++n) out[static_cast<std::size_t>(k)][n] = (1.0 - w) * a[n] + w * b[n];
    }
    return seq.with_frames(std::move(out));
}

namespace {

struct KindInfo {
    SubActionKind kind;
    std::string_view name;
    std::string_view part;
};

constexpr std::array<KindInfo, 6> kKinds = {{
    {SubActionKind::ArmWaveLeft, "arm-wave-left", "left_arm"},
    {SubActionKind::ArmWaveRight, "arm-wave-right", "right_arm"},
    {SubActionKind::ArmRaise, "arm-raise", "right_arm"},
    {SubActionKind::LegMarch, "leg-march", "left_leg"},
    {SubActionKind::LegKick, "leg-kick", "right_leg"},
    {SubActionKind::TorsoTwist, "torso-twist", "torso"},
}};

const KindInfo& info(SubActionKind kind) {
    for (const auto& k : kKinds) {
        if (k.kind == kind) return k;
    }
    throw InvalidArgument("motion-core", "unknown sub-action kind");
}

// Rotate the listed joints about pivot.
void rotate_about(Pose& pose, std::initializer_list<int> joints, const Vec3& pivot, const Eigen::Matrix3d& r) {
    for (int n : joints) pose[n] = pivot + r * (pose[n] - pivot);
}

Eigen::Matrix3d rot(const Vec3& axis, double angle) { return Eigen::AngleAxisd(angle, axis).toRotationMatrix(); }

Pose animate(SubActionKind kind, double amp, double omega_t) {
    const double s = std::sin(omega_t);
    Pose p = neutral_pose();
    const Vec3 ex = Vec3::UnitX(), ey = Vec3::UnitY(), ez = Vec3::UnitZ();
    switch (kind) {
        case SubActionKind::ArmWaveLeft:
        case SubActionKind::ArmWaveRight: {
            const bool left = kind == SubActionKind::ArmWaveLeft;
            const double sign = left ? 1.0 : -1.0;
            const int shoulder = left ? kLeftShoulder : kRightShoulder;
            const int elbow = left ? kLeftElbow : kRightElbow;
            const int wrist = left ? kLeftWrist : kRightWrist;
            const int hand = left ? kLeftHand : kRightHand;
            const double wave = amp * 0.5 * std::sin(2.0 * omega_t);
            const double raise = amp * (0.9 + 0.35 * s);
            rotate_about(p, {wrist, hand}, p[elbow], rot(ez, sign * wave));
            rotate_about(p, {elbow, wrist, hand}, p[shoulder], rot(ez, sign * raise));
            break;
        }
        case SubActionKind::ArmRaise: {
            rotate_about(p, {kRightWrist, kRightHand}, p[kRightElbow], rot(ey, amp * 0.4 * (1.0 + s)));
            rotate_about(p, {kRightElbow, kRightWrist, kRightHand}, p[kRightShoulder], rot(ey, amp * (0.8 + 0.5 * s)));
            break;
        }
        case SubActionKind::LegMarch: {
            const double lift = amp * 0.6 * (1.0 + s);
            rotate_about(p, {kLeftAnkle, kLeftFoot}, p[kLeftKnee], rot(ex, 2.0 * lift));
            rotate_about(p, {kLeftKnee, kLeftAnkle, kLeftFoot}, p[kLeftHip], rot(ex, -lift));
            break;
        }
        case SubActionKind::LegKick: {
            rotate_about(p, {kRightAnkle, kRightFoot}, p[kRightKnee], rot(ex, amp * 0.2 * (1.0 - s)));
            rotate_about(p, {kRightKnee, kRightAnkle, kRightFoot}, p[kRightHip], rot(ex, -amp * 0.55 * (1.0 + s)));
            break;
        }
        case SubActionKind::TorsoTwist: {
            const double yaw = amp * 0.5 * s;
            const double bend = amp * 0.2 * (1.0 + std::cos(omega_t));
            rotate_about(p, {kSpine1, kSpine2, kSpine3, kNeck, kLeftCollar, kRightCollar, kHead}, p[kPelvis],
                         rot(ex, bend) * rot(ey, yaw));
            break;
        }
    }
    return p;
}

}  // namespace

std::string_view to_string(SubActionKind kind) { return info(kind).name; }

SubActionKind parse_sub_action_kind(std::string_view name) {
    for (const auto& k : kKinds) {
        if (k.name == name) return k.kind;
    }
    throw InvalidArgument("motion-core", "unknown sub-action kind: " + std::string(name));
}

std::string_view dominant_part(SubActionKind kind) { return info(kind).part; }

MotionSequence generate_sub_action(SubActionKind kind, int frames, Rng& rng, const GeneratorParams& params,
                                   std::optional<ActionLabel> label, std::string id) {
    if (frames < 2) throw InvalidArgument("motion-core", "sub-action needs T >= 2, got " + std::to_string(frames));
    if (!(params.fps > 0.0)) throw InvalidArgument("motion-core", "fps must be positive");

    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    const double amp = params.amplitude * (1.0 + params.amplitude_spread * unit(rng));
    const double phase = params.phase_spread * unit(rng);
    const double omega = 2.0 * std::numbers::pi * params.frequency_hz;

    std::normal_distribution<double> jitter(0.0, params.jitter_sigma > 0.0 ? params.jitter_sigma : 1.0);
    std::vector<Pose> out;
    out.reserve(static_cast<std::size_t>(frames));
    for (int t = 0; t < frames; ++t) {
        Pose p = animate(kind, amp, omega * t / params.fps + phase);
        if (params.jitter_sigma > 0.0) {
            for (auto& j : p.joints) {
                for (int a = 0; a < 3; ++a) j[a] += jitter(rng);
            }
        }
        out.push_back(p);
    }
    const int kind_index = static_cast<int>(kind);
    ActionLabel lbl = label.value_or(ActionLabel(kind_index, static_cast<int>(kAllSubActionKinds.size())));
    if (id.empty()) id = std::string(to_string(kind));
    return MotionSequence(std::move(id), std::move(out), lbl, params.fps);
}

}  // namespace compose
