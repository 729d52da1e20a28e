#include "compose/energy.hpp"

#include "compose/error.hpp"

#include <algorithm>

namespace compose {

int PartEnergy::dominant_part() const {
    return static_cast<int>(std::max_element(per_part.begin(), per_part.end()) - per_part.begin());
}

PartEnergy compute_part_energy(const std::vector<Pose>& frames, const BodyPartition& partition) {
    const std::size_t T = frames.size();
    if (T < 2) throw InvalidArgument("energy", "motion energy needs T >= 2 frames");

    std::array<double, kNumJoints> joint_sum{};
    for (std::size_t t = 1; t < T; ++t) {
        for (int n = 0; n < kNumJoints; ++n) {
            joint_sum[static_cast<std::size_t>(n)] += (frames[t][n] - frames[t - 1][n]).squaredNorm();
        }
    }

    PartEnergy e;
    e.per_part.resize(partition.size());
    for (std::size_t p = 0; p < partition.size(); ++p) {
        const auto& joints = partition.parts()[p].joints;
        double s = 0.0;
        for (int n : joints) s += joint_sum[static_cast<std::size_t>(n)];
        e.per_part[p] = s / (static_cast<double>(joints.size()) * static_cast<double>(T - 1));
        for (int n : joints) e.per_joint[static_cast<std::size_t>(n)] = e.per_part[p];
    }
    return e;
}

PartEnergy compute_part_energy(const MotionSequence& seq, const BodyPartition& partition) {
    return compute_part_energy(seq.frames(), partition);
}

PartEnergy uniform_energy(double value, const BodyPartition& partition) {
    PartEnergy e;
    e.per_part.assign(partition.size(), value);
    e.per_joint.fill(value);
    return e;
}

std::array<double, kNumJoints> attention_from_energy(const PartEnergy& e) { return e.per_joint; }

}  // namespace compose
