#pragma once

#include "compose/motion.hpp"

#include <array>
#include <vector>

namespace compose {

// Motion energy of each body part: the mean squared frame-to-frame joint
// displacement over the part's joints, in m^2 per frame step. Every joint
// carries the energy of its part.
struct PartEnergy {
    std::vector<double> per_part;               // indexed like BodyPartition::parts()
    std::array<double, kNumJoints> per_joint{};

    // Argmax over parts, lowest index on ties.
    int dominant_part() const;
};

// Throws InvalidArgument when the sequence has fewer than 2 frames.
PartEnergy compute_part_energy(const MotionSequence& seq,
                               const BodyPartition& partition = BodyPartition::standard());
PartEnergy compute_part_energy(const std::vector<Pose>& frames,
                               const BodyPartition& partition = BodyPartition::standard());

// Every part set to the same value (the "no attention mask" ablation).
PartEnergy uniform_energy(double value, const BodyPartition& partition = BodyPartition::standard());

// Attention value per joint. Currently the energy itself.
std::array<double, kNumJoints> attention_from_energy(const PartEnergy& e);

}  // namespace compose
