#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "compose/energy.hpp"
#include "compose/error.hpp"
#include "support.hpp"

using namespace compose;

namespace {

// Direct double loop over parts, joints and frame steps.
std::vector<double> energy_oracle(const std::vector<Pose>& frames, const BodyPartition& part) {
    std::vector<double> out;
    const int T = static_cast<int>(frames.size());
    for (const auto& p : part.parts()) {
        double acc = 0.0;
        for (int n : p.joints) {
            for (int t = 1; t < T; ++t) {
                for (int a = 0; a < 3; ++a) {
                    const double d = frames[static_cast<std::size_t>(t)][n](a) - frames[static_cast<std::size_t>(t - 1)][n](a);
                    acc += d * d;
                }
            }
        }
        out.push_back(acc / (static_cast<double>(p.joints.size()) * (T - 1)));
    }
    return out;
}

BodyPartition random_partition(Rng& rng) {
    std::vector<int> joints(kNumJoints);
    std::iota(joints.begin(), joints.end(), 0);
    std::shuffle(joints.begin(), joints.end(), rng);
    std::uniform_int_distribution<int> parts_dist(1, 8);
    const int k = parts_dist(rng);
    std::vector<int> cuts;
    std::uniform_int_distribution<int> cut(1, kNumJoints - 1);
    while (static_cast<int>(cuts.size()) < k - 1) {
        int c = cut(rng);
        if (std::find(cuts.begin(), cuts.end(), c) == cuts.end()) cuts.push_back(c);
    }
    cuts.push_back(0);
    cuts.push_back(kNumJoints);
    std::sort(cuts.begin(), cuts.end());
    std::vector<BodyPartition::Part> parts;
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
        parts.push_back({"p" + std::to_string(i), std::vector<int>(joints.begin() + cuts[i], joints.begin() + cuts[i + 1])});
    }
    return BodyPartition(parts);
}

}  // namespace

TEST_CASE("static sequence has zero energy") {
    std::vector<Pose> frames(6, neutral_pose());
    auto e = compute_part_energy(frames);
    for (double v : e.per_part) CHECK(v == 0.0);
    for (double v : e.per_joint) CHECK(v == 0.0);
}

TEST_CASE("single joint displaced by (0.3, 0, 0.4) gives 0.25") {
    std::vector<int> rest;
    for (int n = 1; n < kNumJoints; ++n) rest.push_back(n);
    BodyPartition part({{"one", {0}}, {"rest", rest}});
    std::vector<Pose> frames(2, neutral_pose());
    frames[1][0] += Vec3(0.3, 0.0, 0.4);
    auto e = compute_part_energy(frames, part);
    CHECK(e.per_part[0] == doctest::Approx(0.25).epsilon(1e-15));
    CHECK(e.per_part[1] == 0.0);
}

TEST_CASE("two-joint part over three frames matches the oracle") {
    Rng rng(17);
    std::vector<int> rest;
    for (int n = 2; n < kNumJoints; ++n) rest.push_back(n);
    BodyPartition part({{"pair", {0, 1}}, {"rest", rest}});
    for (int trial = 0; trial < 20; ++trial) {
        auto frames = testing::random_frames(rng, 3, 0.05);
        auto e = compute_part_energy(frames, part);
        auto oracle = energy_oracle(frames, part);
        CHECK(std::abs(e.per_part[0] - oracle[0]) <= 1e-12);
        CHECK(std::abs(e.per_part[1] - oracle[1]) <= 1e-12);
    }
}

TEST_CASE("random partitions and lengths match the oracle") {
    Rng rng(5);
    std::uniform_int_distribution<int> len(2, 10);
    for (int trial = 0; trial < 100; ++trial) {
        auto part = random_partition(rng);
        auto frames = testing::random_frames(rng, len(rng));
        auto e = compute_part_energy(frames, part);
        auto oracle = energy_oracle(frames, part);
        for (std::size_t k = 0; k < oracle.size(); ++k) CHECK(std::abs(e.per_part[k] - oracle[k]) <= 1e-12);
    }
}

TEST_CASE("per-joint values equal their part's energy") {
    Rng rng(8);
    auto e = compute_part_energy(testing::random_frames(rng, 5));
    const auto& part = BodyPartition::standard();
    for (int n = 0; n < kNumJoints; ++n) {
        CHECK(e.per_joint[static_cast<std::size_t>(n)] == e.per_part[static_cast<std::size_t>(part.part_of(n))]);
    }
}

TEST_CASE("fewer than two frames is rejected") {
    CHECK_THROWS_AS(compute_part_energy(std::vector<Pose>{neutral_pose()}), InvalidArgument);
}

TEST_CASE("attention is the per-joint energy") {
    PartEnergy zero = uniform_energy(0.0);
    for (double a : attention_from_energy(zero)) CHECK(a == 0.0);
    Rng rng(3);
    auto e = compute_part_energy(testing::random_frames(rng, 4));
    CHECK(attention_from_energy(e) == e.per_joint);
}

TEST_CASE("energies are non-negative") {
    Rng rng(13);
    for (int trial = 0; trial < 50; ++trial) {
        auto e = compute_part_energy(testing::random_frames(rng, 3, 10.0));
        for (double v : e.per_part) CHECK(v >= 0.0);
    }
}

TEST_CASE("constant offsets leave energy unchanged, a last-frame offset raises it") {
    Rng rng(21);
    for (int trial = 0; trial < 20; ++trial) {
        auto frames = testing::random_frames(rng, 6);
        auto base = compute_part_energy(frames);
        auto shifted = frames;
        const Vec3 offset(0.7, -1.3, 2.1);
        for (auto& f : shifted) {
            for (auto& j : f.joints) j += offset;
        }
        auto after = compute_part_energy(shifted);
        for (std::size_t k = 0; k < base.per_part.size(); ++k) {
            CHECK(after.per_part[k] == doctest::Approx(base.per_part[k]).epsilon(1e-12));
        }
        // Moving only the last frame further along its own step direction
        // lengthens every last-step displacement.
        auto tail = frames;
        auto& last = tail.back();
        const auto& prev = frames[frames.size() - 2];
        for (int n = 0; n < kNumJoints; ++n) last[n] += 0.5 * (last[n] - prev[n]);
        auto raised = compute_part_energy(tail);
        for (std::size_t k = 0; k < base.per_part.size(); ++k) CHECK(raised.per_part[k] > base.per_part[k]);
    }
    // On a static sequence any nonzero last-frame offset adds energy to
    // every part.
    std::vector<Pose> still(5, neutral_pose());
    for (auto& j : still.back().joints) j += Vec3(0.01, -0.02, 0.0);
    for (double v : compute_part_energy(still).per_part) CHECK(v > 0.0);
}

TEST_CASE("scaling coordinates by 2 scales energy by 4") {
    Rng rng(2);
    auto frames = testing::random_frames(rng, 7);
    auto scaled = frames;
    for (auto& f : scaled) {
        for (auto& j : f.joints) j *= 2.0;
    }
    auto a = compute_part_energy(frames), b = compute_part_energy(scaled);
    for (std::size_t k = 0; k < a.per_part.size(); ++k) {
        CHECK(std::abs(b.per_part[k] - 4.0 * a.per_part[k]) <= 1e-9 * 4.0 * a.per_part[k]);
    }
}

TEST_CASE("dominant part breaks ties toward the lower index") {
    PartEnergy e = uniform_energy(1.0);
    CHECK(e.dominant_part() == 0);
    e.per_part[3] = 2.0;
    CHECK(e.dominant_part() == 3);
}
