#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>

#include "compose/decouple.hpp"
#include "compose/energy.hpp"
#include "compose/error.hpp"
#include "compose/render.hpp"
#include "support.hpp"

using namespace compose;

namespace {

std::array<Vec2, kNumJoints> far_joints() {
    std::array<Vec2, kNumJoints> px;
    px.fill(Vec2(1e6, 1e6));
    return px;
}

std::array<double, kNumJoints> part_energy(const std::vector<std::string>& parts, double value) {
    std::array<double, kNumJoints> e{};
    const auto& part = BodyPartition::standard();
    for (const auto& name : parts) {
        for (int n : part.parts()[static_cast<std::size_t>(part.index_of(name))].joints) e[static_cast<std::size_t>(n)] = value;
    }
    return e;
}

RegionGrid grid_of(const Eigen::MatrixXd& v) { return RegionGrid{v, 1}; }

}  // namespace

TEST_CASE("inverse square around a single joint") {
    auto px = far_joints();
    px[0] = Vec2(10, 10);
    std::array<double, kNumJoints> e{};
    e[0] = 1.0;
    auto a = attention_map(px, e, 32, 32);
    // Pixel (row r, col c) sits at (x = c, y = r).
    CHECK(a.values(12, 10) == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(a.values(10, 10) == doctest::Approx(1.0).epsilon(1e-12));
    auto b = attention_map(px, e, 32, 32, 0.5);
    CHECK(b.values(10, 10) == doctest::Approx(4.0).epsilon(1e-12));
}

TEST_CASE("two joints superpose") {
    auto px = far_joints();
    px[0] = Vec2(10, 10);
    px[1] = Vec2(10, 13);
    std::array<double, kNumJoints> e{};
    e[0] = e[1] = 1.0;
    auto a = attention_map(px, e, 32, 32);
    CHECK(a.values(11, 10) == doctest::Approx(1.25).epsilon(1e-9));
}

TEST_CASE("attention decays monotonically beyond the floor") {
    auto px = far_joints();
    px[0] = Vec2(3, 3);
    std::array<double, kNumJoints> e{};
    e[0] = 2.0;
    auto a = attention_map(px, e, 8, 64);
    for (int c = 4; c < 63; ++c) CHECK(a.values(3, c + 1) < a.values(3, c));
}

TEST_CASE("scaling energies scales attention and keeps the mask") {
    Rng rng(1);
    CameraConfig cam;
    auto px = project_pose(neutral_pose(), cam);
    std::uniform_real_distribution<double> u(0.0, 2.0);
    std::array<double, kNumJoints> e;
    for (auto& v : e) v = u(rng);
    auto scaled = e;
    for (auto& v : scaled) v *= 3.5;
    auto a = attention_map(px, e, 64, 64), b = attention_map(px, scaled, 64, 64);
    CHECK(((b.values - 3.5 * a.values).cwiseAbs().array() <= 1e-12 * b.values.array().abs().maxCoeff()).all());
    DecoupleConfig cfg;
    CHECK((decoupling_mask(px, e, 64, 64, cfg).keep == decoupling_mask(px, scaled, 64, 64, cfg).keep).all());
}

TEST_CASE("negative energy and bad floor are rejected") {
    auto px = far_joints();
    std::array<double, kNumJoints> e{};
    e[3] = -1.0;
    CHECK_THROWS_AS(attention_map(px, e, 8, 8), InvalidArgument);
    e[3] = 1.0;
    CHECK_THROWS_AS(attention_map(px, e, 8, 8, 0.0), InvalidArgument);
}

TEST_CASE("region average") {
    AttentionMap c{Image::Constant(16, 24, 0.7)};
    auto g = region_average(c, 8);
    CHECK(g.values.rows() == 2);
    CHECK(g.values.cols() == 3);
    CHECK(((g.values.array() - 0.7).abs() < 1e-15).all());

    AttentionMap hot{Image::Zero(16, 16)};
    hot.values(9, 3) = 6.4;
    auto h = region_average(hot, 8);
    CHECK(h.values(1, 0) == doctest::Approx(0.1).epsilon(1e-15));
    CHECK(h.values(0, 0) == 0.0);

    Rng rng(2);
    std::uniform_real_distribution<double> u(0.0, 5.0);
    AttentionMap r{Image(24, 32)};
    for (Eigen::Index i = 0; i < r.values.size(); ++i) r.values.data()[i] = u(rng);
    auto rg = region_average(r, 4);
    for (int gr = 0; gr < 6; ++gr) {
        for (int gc = 0; gc < 8; ++gc) {
            double acc = 0.0;
            for (int y = 0; y < 4; ++y) {
                for (int x = 0; x < 4; ++x) acc += r.values(gr * 4 + y, gc * 4 + x);
            }
            CHECK(std::abs(rg.values(gr, gc) - acc / 16.0) <= 1e-12);
        }
    }
    CHECK_THROWS_AS(region_average(AttentionMap{Image::Zero(10, 16)}, 8), InvalidArgument);
}

TEST_CASE("top fraction: ties go to the lower row-major index") {
    auto m = top_fraction_mask(grid_of(Eigen::MatrixXd::Constant(3, 3, 2.0)), 1.0 / 3.0);
    CHECK(m.kept() == 3);
    CHECK(m.kept_indices() == std::vector<int>{0, 1, 2});
    CHECK(m.keep(0, 0));
    CHECK(m.keep(0, 2));
    CHECK_FALSE(m.keep(1, 0));
}

TEST_CASE("top fraction of strictly decreasing values keeps the first cells") {
    Eigen::MatrixXd v(3, 3);
    v << 9, 8, 7, 6, 5, 4, 3, 2, 1;
    CHECK(top_fraction_mask(grid_of(v), 1.0 / 3.0).kept_indices() == std::vector<int>{0, 1, 2});
    Rng rng(3);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Eigen::MatrixXd w(5, 7);
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = u(rng);
    for (double rho : {0.1, 0.25, 1.0 / 3.0, 0.5, 0.9}) {
        auto m = top_fraction_mask(grid_of(w), rho);
        const int k = static_cast<int>(std::ceil(rho * 35));
        CHECK(m.kept() == k);
        // sort oracle
        std::vector<std::pair<double, int>> cells;
        for (int r = 0; r < 5; ++r) {
            for (int c = 0; c < 7; ++c) cells.push_back({-w(r, c), r * 7 + c});
        }
        std::sort(cells.begin(), cells.end());
        std::vector<int> expect;
        for (int i = 0; i < k; ++i) expect.push_back(cells[static_cast<std::size_t>(i)].second);
        std::sort(expect.begin(), expect.end());
        CHECK(m.kept_indices() == expect);
    }
}

TEST_CASE("rho bounds") {
    auto g = grid_of(Eigen::MatrixXd::Ones(4, 4));
    CHECK(top_fraction_mask(g, 1.0).kept() == 16);
    CHECK(top_fraction_mask(g, 1e-9).kept() == 1);
    CHECK_THROWS_AS(top_fraction_mask(g, 0.0), InvalidArgument);
    CHECK_THROWS_AS(top_fraction_mask(g, 1.5), InvalidArgument);
}

TEST_CASE("apply mask") {
    Rng rng(4);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Image img(16, 16);
    for (Eigen::Index i = 0; i < img.size(); ++i) img.data()[i] = u(rng);
    RegionMask all;
    all.patch = 4;
    all.keep = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(4, 4, true);
    CHECK(apply_mask(img, all).pixels == img);

    RegionMask none = all;
    none.keep.setConstant(false);
    CHECK((apply_mask(img, none, 0.5).pixels.array() == 0.5).all());

    RegionMask checker = all;
    for (int r = 0; r < 4; ++r) {
        for (int c = 0; c < 4; ++c) checker.keep(r, c) = (r + c) % 2 == 0;
    }
    auto masked = apply_mask(img, checker, 0.3);
    for (int y = 0; y < 16; ++y) {
        for (int x = 0; x < 16; ++x) {
            const bool kept = ((y / 4) + (x / 4)) % 2 == 0;
            CHECK(masked.pixels(y, x) == (kept ? img(y, x) : 0.3));
        }
    }
    CHECK(masked.fill == 0.3);
    CHECK(checker.pixel_mask().sum() == 128.0);
    CHECK_THROWS_AS(apply_mask(Image::Zero(12, 16), checker), InvalidArgument);
}

TEST_CASE("arms and legs decouple into disjoint regions") {
    CameraConfig cam;
    auto frame = render_frame(neutral_pose(), cam);
    auto arms = part_energy({"left_arm", "right_arm"}, 1.0);
    auto legs = part_energy({"left_leg", "right_leg"}, 1.0);
    DecoupleConfig cfg;
    cfg.rho = 0.125;  // at larger fractions both masks reach into the empty corners
    auto [mi, mj] = decouple_composite(frame, arms, legs, cfg);
    const auto ki = mi.mask.kept_indices(), kj = mj.mask.kept_indices();
    std::set<int> si(ki.begin(), ki.end());
    for (int k : kj) CHECK(si.count(k) == 0);
    // Arms sit above the legs: every kept arm cell is in a higher row than
    // every kept leg cell.
    const int grid_cols = cam.width / cfg.patch;
    CHECK(*std::max_element(ki.begin(), ki.end()) / grid_cols < *std::min_element(kj.begin(), kj.end()) / grid_cols);
}

TEST_CASE("equal energies give identical masks") {
    CameraConfig cam;
    Rng rng(5);
    auto seq = generate_sub_action(SubActionKind::ArmWaveLeft, 4, rng);
    auto frame = render_frame(seq.frame(2), cam);
    auto e = compute_part_energy(seq).per_joint;
    auto [mi, mj] = decouple_composite(frame, e, e);
    CHECK((mi.mask.keep == mj.mask.keep).all());
    CHECK(mi.pixels == mj.pixels);
}

TEST_CASE("zero energy keeps the first cells") {
    CameraConfig cam;
    auto frame = render_frame(neutral_pose(), cam);
    DecoupleConfig cfg;
    auto [mi, mj] = decouple_composite(frame, part_energy({"torso"}, 1.0), std::array<double, kNumJoints>{}, cfg);
    const int total = (cam.height / cfg.patch) * (cam.width / cfg.patch);
    const int k = static_cast<int>(std::ceil(cfg.rho * total));
    std::vector<int> first(static_cast<std::size_t>(k));
    std::iota(first.begin(), first.end(), 0);
    CHECK(mj.mask.kept_indices() == first);
    CHECK(mi.mask.kept() == k);
}

TEST_CASE("mask cardinality is always ceil(rho * R)") {
    Rng rng(6);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    CameraConfig cam;
    for (int trial = 0; trial < 30; ++trial) {
        auto px = project_pose(testing::random_pose(rng), cam);
        std::array<double, kNumJoints> e;
        for (auto& v : e) v = u(rng) < 0.3 ? 0.0 : u(rng);
        const double rho = 0.05 + 0.95 * u(rng);
        DecoupleConfig cfg;
        cfg.rho = rho;
        CHECK(decoupling_mask(px, e, 64, 64, cfg).kept() == static_cast<int>(std::ceil(rho * 64)));
    }
}
