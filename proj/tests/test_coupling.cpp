#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <map>

#include "compose/coupling.hpp"
#include "compose/energy.hpp"
#include "compose/error.hpp"
#include "support.hpp"

using namespace compose;

namespace {

PartEnergy energy_from_parts(std::vector<double> per_part) {
    PartEnergy e;
    const auto& part = BodyPartition::standard();
    for (int n = 0; n < kNumJoints; ++n) {
        e.per_joint[static_cast<std::size_t>(n)] = per_part[static_cast<std::size_t>(part.part_of(n))];
    }
    e.per_part = std::move(per_part);
    return e;
}

PartEnergy random_energy(Rng& rng) {
    std::exponential_distribution<double> ex(1.0);
    std::vector<double> v;
    for (std::size_t k = 0; k < BodyPartition::standard().size(); ++k) v.push_back(ex(rng));
    return energy_from_parts(v);
}

// Distance from p to the segment [a, b].
double segment_distance(const Vec3& p, const Vec3& a, const Vec3& b) {
    const Vec3 d = b - a;
    const double len2 = d.squaredNorm();
    if (len2 == 0.0) return (p - a).norm();
    const double s = std::clamp((p - a).dot(d) / len2, 0.0, 1.0);
    return (p - (a + s * d)).norm();
}

std::vector<MotionSequence> two_class_data(Rng& rng, int per_class, int frames = 8) {
    std::vector<MotionSequence> out;
    for (int k = 0; k < per_class; ++k) {
        out.push_back(generate_sub_action(SubActionKind::ArmWaveLeft, frames, rng, {}, ActionLabel(0, 2), "a" + std::to_string(k)));
        out.push_back(generate_sub_action(SubActionKind::LegMarch, frames, rng, {}, ActionLabel(1, 2), "b" + std::to_string(k)));
    }
    return out;
}

std::vector<MotionSequence> four_class_data(Rng& rng, int per_class) {
    std::vector<MotionSequence> out;
    const SubActionKind kinds[] = {SubActionKind::ArmWaveLeft, SubActionKind::ArmWaveRight, SubActionKind::LegMarch,
                                   SubActionKind::LegKick};
    for (int c = 0; c < 4; ++c) {
        for (int k = 0; k < per_class; ++k) {
            out.push_back(generate_sub_action(kinds[c], 8, rng, {}, ActionLabel(c, 4),
                                              "s" + std::to_string(c) + "-" + std::to_string(k)));
        }
    }
    return out;
}

}  // namespace

TEST_CASE("fixed mixing rate is exact") {
    Rng rng(1);
    auto d = MixingRateDist::fixed(0.3);
    for (int i = 0; i < 100; ++i) CHECK(sample_lambda(d, rng) == 0.3);
}

TEST_CASE("gaussian mixing rate: mean near 0.5 and support in [0, 1]") {
    Rng rng(2);
    auto d = MixingRateDist::gaussian(0.1);
    double sum = 0.0;
    bool inside = true;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
        const double l = d.sample(rng);
        inside = inside && l >= 0.0 && l <= 1.0;
        sum += l;
    }
    CHECK(inside);
    CHECK(sum / n >= 0.49);
    CHECK(sum / n <= 0.51);
}

TEST_CASE("wide gaussian is rejection-sampled, not clipped") {
    Rng rng(3);
    auto d = MixingRateDist::gaussian(1.0);
    int at_bounds = 0;
    for (int i = 0; i < 20000; ++i) {
        const double l = d.sample(rng);
        CHECK((l >= 0.0 && l <= 1.0));
        at_bounds += (l == 0.0 || l == 1.0);
    }
    CHECK(at_bounds == 0);
}

TEST_CASE("vanishing spread concentrates at one half") {
    Rng rng(4);
    auto d = MixingRateDist::gaussian(1e-9);
    for (int i = 0; i < 1000; ++i) CHECK(std::abs(d.sample(rng) - 0.5) <= 1e-6);
}

TEST_CASE("beta and uniform stay in [0, 1]") {
    Rng rng(5);
    for (auto d : {MixingRateDist::beta(0.4), MixingRateDist::beta(3.0), MixingRateDist::uniform()}) {
        double sum = 0.0;
        for (int i = 0; i < 20000; ++i) {
            const double l = d.sample(rng);
            CHECK((l >= 0.0 && l <= 1.0));
            sum += l;
        }
        CHECK(sum / 20000 == doctest::Approx(0.5).epsilon(0.02));
    }
}

TEST_CASE("mixing-rate text parsing") {
    CHECK(MixingRateDist::parse("gaussian:0.1").kind() == MixingRateDist::Kind::Gaussian);
    CHECK(MixingRateDist::parse("gaussian:0.1").parameter() == 0.1);
    CHECK(MixingRateDist::parse("beta:0.4").kind() == MixingRateDist::Kind::Beta);
    CHECK(MixingRateDist::parse("uniform").kind() == MixingRateDist::Kind::Uniform);
    CHECK(MixingRateDist::parse("fixed:0.25").parameter() == 0.25);
    CHECK(MixingRateDist::parse(MixingRateDist::gaussian(0.2).to_string()).parameter() == 0.2);
    CHECK_THROWS_AS(MixingRateDist::parse("gaussian"), InvalidArgument);
    CHECK_THROWS_AS(MixingRateDist::parse("gaussian:abc"), InvalidArgument);
    CHECK_THROWS_AS(MixingRateDist::parse("cauchy:1"), InvalidArgument);
    CHECK_THROWS_AS(MixingRateDist::gaussian(0.0), InvalidArgument);
    CHECK_THROWS_AS(MixingRateDist::beta(-1.0), InvalidArgument);
    CHECK_THROWS_AS(MixingRateDist::fixed(1.5), InvalidArgument);
}

TEST_CASE("label coupling") {
    auto one = couple_labels(ActionLabel(0, 3), ActionLabel(2, 3), 1.0);
    CHECK(one.weights() == std::vector<double>{1.0, 0.0, 0.0});
    auto half = couple_labels(ActionLabel(2, 12), ActionLabel(5, 12), 0.5);
    for (int c = 0; c < 12; ++c) CHECK(half.weights()[static_cast<std::size_t>(c)] == ((c == 2 || c == 5) ? 0.5 : 0.0));
    auto mix = couple_labels(ActionLabel(0, 4), ActionLabel(1, 4), 0.3);
    CHECK(mix.weights()[0] == 0.3);
    CHECK(mix.weights()[1] == doctest::Approx(0.7).epsilon(1e-15));
    CHECK(mix.weights()[2] == 0.0);
    CHECK_THROWS_AS(couple_labels(ActionLabel(1, 4), ActionLabel(1, 4), 0.5), InvalidArgument);
    CHECK_THROWS_AS(couple_labels(ActionLabel(0, 4), ActionLabel(1, 4), 1.2), InvalidArgument);
}

TEST_CASE("mixed labels stay on the simplex") {
    Rng rng(6);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 200; ++i) {
        auto w = couple_labels(ActionLabel(1, 5), ActionLabel(3, 5), u(rng)).weights();
        for (double x : w) CHECK(x >= 0.0);
        CHECK(std::accumulate(w.begin(), w.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-15));
    }
}

TEST_CASE("equal energies at one half give the midpoint") {
    Rng rng(7);
    auto yi = testing::random_frames(rng, 4), yj = testing::random_frames(rng, 4);
    auto e = energy_from_parts({2, 2, 2, 2, 2});
    auto out = couple_sequences(yi, yj, e, e, 0.5);
    for (std::size_t t = 0; t < 4; ++t) {
        for (int n = 0; n < kNumJoints; ++n) CHECK((out[t][n] - 0.5 * (yi[t][n] + yj[t][n])).norm() < 1e-15);
    }
}

TEST_CASE("zero opposing energy collapses to the active source") {
    Rng rng(8);
    auto yi = testing::random_frames(rng, 3), yj = testing::random_frames(rng, 3);
    auto out = couple_sequences(yi, yj, energy_from_parts({1, 2, 3, 4, 5}), uniform_energy(0.0), 0.7);
    CHECK(out == yi);
}

TEST_CASE("worked example: lambda 0.25, energies 2 and 1") {
    std::vector<Pose> yi(2, neutral_pose()), yj(2, neutral_pose());
    for (auto& f : yi) f[0] = Vec3(1, 0, 0);
    for (auto& f : yj) f[0] = Vec3(0, 0, 0);
    auto out = couple_sequences(yi, yj, uniform_energy(2.0), uniform_energy(1.0), 0.25);
    // weights 0.5 and 0.75 normalize to 0.4 and 0.6
    CHECK((out[0][0] - Vec3(0.4, 0, 0)).norm() < 1e-15);
}

TEST_CASE("both static falls back to the plain mix") {
    Rng rng(9);
    auto yi = testing::random_frames(rng, 2), yj = testing::random_frames(rng, 2);
    auto out = couple_sequences(yi, yj, uniform_energy(0.0), uniform_energy(0.0), 0.3);
    for (std::size_t t = 0; t < 2; ++t) {
        for (int n = 0; n < kNumJoints; ++n) CHECK((out[t][n] - (0.3 * yi[t][n] + 0.7 * yj[t][n])).norm() < 1e-15);
    }
}

TEST_CASE("length mismatch and bad lambda are rejected") {
    Rng rng(10);
    auto a = testing::random_frames(rng, 3), b = testing::random_frames(rng, 4);
    auto e = uniform_energy(1.0);
    CHECK_THROWS_AS(couple_sequences(a, b, e, e, 0.5), InvalidArgument);
    CHECK_THROWS_AS(couple_sequences(a, a, e, e, -0.1), InvalidArgument);
}

TEST_CASE("coupled joints lie on the source segment") {
    Rng rng(11);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double worst = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
        auto yi = testing::random_frames(rng, 2), yj = testing::random_frames(rng, 2);
        auto out = couple_sequences(yi, yj, random_energy(rng), random_energy(rng), u(rng));
        for (std::size_t t = 0; t < 2; ++t) {
            for (int n = 0; n < kNumJoints; ++n) worst = std::max(worst, segment_distance(out[t][n], yi[t][n], yj[t][n]));
        }
    }
    CHECK(worst <= 1e-12);
}

TEST_CASE("lambda 1 recovers source i whenever its energy is positive") {
    Rng rng(12);
    for (int trial = 0; trial < 100; ++trial) {
        auto yi = testing::random_frames(rng, 3), yj = testing::random_frames(rng, 3);
        CHECK(couple_sequences(yi, yj, random_energy(rng), random_energy(rng), 1.0) == yi);
    }
}

TEST_CASE("dominant energy keeps the composite near its source") {
    Rng rng(13);
    auto yi = generate_sub_action(SubActionKind::ArmWaveLeft, 16, rng);
    auto yj = generate_sub_action(SubActionKind::LegMarch, 16, rng);
    auto ei = compute_part_energy(yi), ej = compute_part_energy(yj);
    const int arm = BodyPartition::standard().index_of("left_arm");
    REQUIRE(ei.per_part[static_cast<std::size_t>(arm)] >= 10.0 * ej.per_part[static_cast<std::size_t>(arm)]);
    auto out = couple_sequences(yi.frames(), yj.frames(), ei, ej, 0.5);
    double di = 0.0, dj = 0.0;
    for (std::size_t t = 0; t < out.size(); ++t) {
        for (int n : BodyPartition::standard().parts()[static_cast<std::size_t>(arm)].joints) {
            di += (out[t][n] - yi.frame(t)[n]).squaredNorm();
            dj += (out[t][n] - yj.frame(t)[n]).squaredNorm();
        }
    }
    CHECK(di < dj);
}

TEST_CASE("pairing policies") {
    auto full = PairingPolicy::full_class();
    CHECK(full.is_full_class());
    CHECK(full.admits(2, 0));
    CHECK_FALSE(full.admits(1, 1));
    CHECK(full.pairs_among({0, 1, 2}).size() == 3);
    auto allow = PairingPolicy::allow({{3, 1}, {1, 3}, {0, 2}});
    CHECK(allow.admits(1, 3));
    CHECK_FALSE(allow.admits(0, 1));
    CHECK(allow.pairs_among({0, 1, 2, 3}) == std::vector<std::pair<int, int>>{{0, 2}, {1, 3}});
    CHECK_THROWS_AS(PairingPolicy::allow({{2, 2}}), InvalidArgument);
}

TEST_CASE("two classes give one pair and exact provenance") {
    Rng rng(14);
    auto data = two_class_data(rng, 3);
    auto out = build_pseudo_dataset(data, PairingPolicy::full_class(), 10, MixingRateDist::gaussian(0.1),
                                    BodyPartition::standard(), rng);
    REQUIRE(out.size() == 10);
    for (const auto& c : out) {
        auto classes = c.source_classes;
        if (classes.first > classes.second) std::swap(classes.first, classes.second);
        CHECK(classes == std::pair<int, int>{0, 1});
        CHECK((c.lambda >= 0.0 && c.lambda <= 1.0));
        CHECK(c.sequence.length() == 8);
        CHECK(as_mixed(c.sequence.label()) == c.mixed_label);
        CHECK(c.mixed_label.weights()[static_cast<std::size_t>(c.source_classes.first)] ==
              doctest::Approx(c.lambda).epsilon(1e-15));
    }
}

TEST_CASE("a policy admitting nothing is an error") {
    Rng rng(15);
    auto data = two_class_data(rng, 2);
    CHECK_THROWS_AS(build_pseudo_dataset(data, PairingPolicy::allow({{2, 3}}), 5, MixingRateDist::uniform(),
                                         BodyPartition::standard(), rng),
                    InvalidArgument);
    std::vector<MotionSequence> one_class(data.begin(), data.begin() + 1);
    CHECK_THROWS_AS(build_pseudo_dataset(one_class, PairingPolicy::full_class(), 5, MixingRateDist::uniform(),
                                         BodyPartition::standard(), rng),
                    InvalidArgument);
}

TEST_CASE("pair frequencies are uniform") {
    Rng rng(16);
    auto data = four_class_data(rng, 2);
    auto out = build_pseudo_dataset(data, PairingPolicy::full_class(), 1000, MixingRateDist::gaussian(0.1),
                                    BodyPartition::standard(), rng);
    std::map<std::pair<int, int>, int> counts;
    for (const auto& c : out) {
        auto k = c.source_classes;
        if (k.first > k.second) std::swap(k.first, k.second);
        counts[k]++;
    }
    REQUIRE(counts.size() == 6);
    const double p = 1.0 / 6.0, mean = 1000 * p, sd = std::sqrt(1000 * p * (1 - p));
    for (const auto& [k, n] : counts) CHECK(std::abs(n - mean) <= 3 * sd);
}

TEST_CASE("unequal lengths are resampled to the shorter") {
    Rng rng(17);
    std::vector<MotionSequence> data{
        generate_sub_action(SubActionKind::ArmWaveLeft, 12, rng, {}, ActionLabel(0, 2), "long"),
        generate_sub_action(SubActionKind::LegMarch, 7, rng, {}, ActionLabel(1, 2), "short")};
    auto out = build_pseudo_dataset(data, PairingPolicy::full_class(), 3, MixingRateDist::uniform(),
                                    BodyPartition::standard(), rng);
    for (const auto& c : out) CHECK(c.sequence.length() == 7);
}

TEST_CASE("without the energy mask the composite is the plain mix") {
    Rng rng(18);
    auto data = two_class_data(rng, 1);
    CouplingOptions opts;
    opts.energy_mask = false;
    auto out = build_pseudo_dataset(data, PairingPolicy::full_class(), 4, MixingRateDist::uniform(),
                                    BodyPartition::standard(), rng, opts);
    for (const auto& c : out) {
        const auto& yi = c.source_ids.first == data[0].id() ? data[0] : data[1];
        const auto& yj = c.source_ids.second == data[0].id() ? data[0] : data[1];
        for (int t = 0; t < c.sequence.length(); ++t) {
            for (int n = 0; n < kNumJoints; ++n) {
                const Vec3 mix = c.lambda * yi.frame(static_cast<std::size_t>(t))[n] +
                                 (1 - c.lambda) * yj.frame(static_cast<std::size_t>(t))[n];
                CHECK((c.sequence.frame(static_cast<std::size_t>(t))[n] - mix).norm() < 1e-12);
            }
        }
    }
}

TEST_CASE("dataset building is seeded") {
    Rng r1(19), r2(19);
    auto d1 = two_class_data(r1, 2), d2 = two_class_data(r2, 2);
    auto a = build_pseudo_dataset(d1, PairingPolicy::full_class(), 6, MixingRateDist::gaussian(0.1),
                                  BodyPartition::standard(), r1);
    auto b = build_pseudo_dataset(d2, PairingPolicy::full_class(), 6, MixingRateDist::gaussian(0.1),
                                  BodyPartition::standard(), r2);
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].sequence == b[i].sequence);
        CHECK(a[i].lambda == b[i].lambda);
    }
}

TEST_CASE("composites round-trip through JSON lines") {
    testing::TempDir tmp;
    Rng rng(20);
    auto data = two_class_data(rng, 2);
    auto out = build_pseudo_dataset(data, PairingPolicy::full_class(), 5, MixingRateDist::gaussian(0.1),
                                    BodyPartition::standard(), rng);
    save_composites(out, tmp / "c.jsonl");
    auto back = load_composites(tmp / "c.jsonl");
    REQUIRE(back.size() == out.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        CHECK(back[i].sequence == out[i].sequence);
        CHECK(back[i].lambda == out[i].lambda);
        CHECK(back[i].source_ids == out[i].source_ids);
        CHECK(back[i].source_classes == out[i].source_classes);
        CHECK(back[i].mixed_label == out[i].mixed_label);
    }
}
