#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>

#include "compose/energy.hpp"
#include "compose/coupling.hpp"
#include "compose/error.hpp"
#include "compose/nn/graph.hpp"
#include "compose/refine.hpp"
#include "support.hpp"

using namespace compose;

namespace {

Image random_image(Rng& rng, int h, int w) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Image img(h, w);
    for (Eigen::Index i = 0; i < img.size(); ++i) img.data()[i] = u(rng);
    return img;
}

RegionMask random_mask(Rng& rng, int rows, int cols, int patch) {
    RegionMask m;
    m.patch = patch;
    m.keep.resize(rows, cols);
    std::bernoulli_distribution b(0.4);
    for (Eigen::Index i = 0; i < m.keep.size(); ++i) m.keep.data()[i] = b(rng);
    m.keep(0, 0) = true;
    return m;
}

double dr_oracle(const Image& a, const Image& b, const Image& c, const Image& d) {
    double s = 0.0;
    for (Eigen::Index r = 0; r < a.rows(); ++r) {
        for (Eigen::Index col = 0; col < a.cols(); ++col) {
            s += (a(r, col) - b(r, col)) * (a(r, col) - b(r, col));
            s += (c(r, col) - d(r, col)) * (c(r, col) - d(r, col));
        }
    }
    return s;
}

std::vector<RenderedFrame> corpus(Rng& rng, const CameraConfig& cam) {
    std::vector<RenderedFrame> out;
    for (auto kind : kAllSubActionKinds) {
        auto seq = generate_sub_action(kind, 8, rng);
        for (const auto& f : render_sequence(seq, cam, 4)) out.push_back(f);
    }
    return out;
}

// Central differences of sum(G .* f(x)) against backward() of the graph.
double graph_grad_error(const Inpainter& inp, const Image& x, const RegionMask& mask, const Image& g) {
    Image grad = Image::Zero(x.rows(), x.cols());
    {
        nn::Var in = nn::leaf(x, &grad);
        nn::backward(nn::sum(nn::mul_const(inp.inpaint_graph(in, mask, 0.5), g)));
    }
    auto f = [&](const Image& v) { return nn::scalar(nn::sum(nn::mul_const(inp.inpaint_graph(nn::constant(v), mask, 0.5), g))); };
    double worst = 0.0;
    // Both graph forms are affine in the image, so a wide step costs no
    // truncation error and keeps roundoff in f out of the quotient.
    const double eps = 1e-3;
    for (Eigen::Index i = 0; i < x.size(); i += 7) {
        Image hi = x, lo = x;
        hi.data()[i] += eps;
        lo.data()[i] -= eps;
        const double fd = (f(hi) - f(lo)) / (2 * eps);
        worst = std::max(worst, std::abs(fd - grad.data()[i]) / std::max({std::abs(fd), std::abs(grad.data()[i]), 1e-6}));
    }
    return worst;
}

}  // namespace

TEST_CASE("mean fill leaves an all-keep image alone") {
    Rng rng(1);
    Image img = random_image(rng, 16, 16);
    RegionMask m = random_mask(rng, 2, 2, 8);
    m.keep.setConstant(true);
    MeanFillInpainter mf;
    CHECK(inpaint(mf, apply_mask(img, m)) == img);
    CHECK(mf.preserves_kept_pixels());
}

TEST_CASE("mean fill of a constant kept region") {
    Rng rng(2);
    RegionMask m = random_mask(rng, 4, 4, 4);
    Image img = Image::Constant(16, 16, 0.8);
    auto out = inpaint(MeanFillInpainter{}, apply_mask(img, m, 0.5));
    CHECK(((out.array() - 0.8).abs() < 1e-15).all());
}

TEST_CASE("mean fill with nothing kept uses the fill value") {
    RegionMask m;
    m.patch = 4;
    m.keep = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(2, 2, false);
    auto out = inpaint(MeanFillInpainter{}, apply_mask(Image::Ones(8, 8), m, 0.25));
    CHECK((out.array() == 0.25).all());
}

TEST_CASE("mean fill is idempotent") {
    Rng rng(3);
    for (int trial = 0; trial < 10; ++trial) {
        Image img = random_image(rng, 24, 24);
        RegionMask m = random_mask(rng, 3, 3, 8);
        MeanFillInpainter mf;
        Image once = mf.inpaint(apply_mask(img, m));
        Image twice = mf.inpaint(apply_mask(once, m));
        CHECK((once - twice).cwiseAbs().maxCoeff() < 1e-15);
    }
}

TEST_CASE("inpaint validates shapes") {
    Rng rng(4);
    MaskedImage bad{Image::Zero(12, 16), random_mask(rng, 2, 2, 8), 0.5};
    CHECK_THROWS_AS(inpaint(MeanFillInpainter{}, bad), InvalidArgument);
}

TEST_CASE("factory") {
    CHECK(make_inpainter("mean_fill")->name() == "mean_fill");
    CHECK_THROWS_AS(make_inpainter("mae"), InvalidArgument);
}

TEST_CASE("patch regressor reproduces its corpus within the reported bound") {
    Rng rng(5);
    CameraConfig cam;
    DecoupleConfig cfg;
    auto frames = corpus(rng, cam);
    auto samples = PatchRegressorInpainter::make_samples(frames, cfg, 3, rng);
    CHECK(samples.size() == 3 * frames.size());
    auto model = PatchRegressorInpainter::fit(samples);
    CHECK(model.patch() == cfg.patch);
    CHECK(model.fit_residual_bound() >= 0.0);
    CHECK(model.fit_residual_bound() < 1.0);
    for (const auto& s : samples) {
        const Image out = inpaint(model, apply_mask(s.image, s.mask, cfg.fill));
        CHECK((out - s.image).cwiseAbs().maxCoeff() <= model.fit_residual_bound() + 1e-12);
        CHECK(out.minCoeff() >= 0.0);
        CHECK(out.maxCoeff() <= 1.0);
        // kept pixels are copied through
        const Image keep = s.mask.pixel_mask();
        CHECK((keep.array() * (out - s.image).array()).abs().maxCoeff() == 0.0);
    }
}

TEST_CASE("patch regressor fitting is deterministic and checks its corpus") {
    Rng r1(6), r2(6);
    CameraConfig cam;
    DecoupleConfig cfg;
    auto s1 = PatchRegressorInpainter::make_samples(corpus(r1, cam), cfg, 2, r1);
    auto s2 = PatchRegressorInpainter::make_samples(corpus(r2, cam), cfg, 2, r2);
    auto a = PatchRegressorInpainter::fit(s1), b = PatchRegressorInpainter::fit(s2);
    CHECK(a.fit_residual_bound() == b.fit_residual_bound());
    CHECK(a.inpaint(apply_mask(s1[3].image, s1[0].mask)) == b.inpaint(apply_mask(s2[3].image, s2[0].mask)));
    CHECK_THROWS_AS(PatchRegressorInpainter::fit({}), InvalidArgument);
    auto mixed = s1;
    mixed.push_back({Image::Zero(32, 32), random_mask(r1, 4, 4, 8)});
    CHECK_THROWS_AS(PatchRegressorInpainter::fit(mixed), InvalidArgument);
}

TEST_CASE("graph forms agree with inference and differentiate correctly") {
    Rng rng(7);
    CameraConfig cam;
    DecoupleConfig cfg;
    auto samples = PatchRegressorInpainter::make_samples(corpus(rng, cam), cfg, 2, rng);
    auto pr = PatchRegressorInpainter::fit(samples);
    MeanFillInpainter mf;
    Image g = random_image(rng, 64, 64);
    for (int k = 0; k < 3; ++k) {
        const auto& s = samples[static_cast<std::size_t>(k * 5)];
        CHECK((mf.inpaint_graph(nn::constant(s.image), s.mask, 0.5)->value - mf.inpaint(apply_mask(s.image, s.mask))).cwiseAbs().maxCoeff() < 1e-12);
        // The graph form skips the clamp; clamping it gives inference.
        const Image raw = pr.inpaint_graph(nn::constant(s.image), s.mask, 0.5)->value;
        const Image clamped = pr.inpaint(apply_mask(s.image, s.mask));
        CHECK((raw.cwiseMax(0.0).cwiseMin(1.0) - clamped).cwiseAbs().maxCoeff() < 1e-12);
        CHECK(graph_grad_error(mf, s.image, s.mask, g) < 1e-6);
        CHECK(graph_grad_error(pr, s.image, s.mask, g) < 1e-6);
    }
}

TEST_CASE("base inpainter has no differentiable form") {
    struct Identity final : Inpainter {
        std::string name() const override { return "identity"; }
        Image inpaint(const MaskedImage& m) const override { return m.pixels; }
        bool preserves_kept_pixels() const override { return true; }
    };
    Rng rng(8);
    CHECK_THROWS_AS(Identity{}.inpaint_graph(nn::constant(Image::Zero(8, 8)), random_mask(rng, 1, 1, 8), 0.5), InvalidState);
}

TEST_CASE("decoupling refinement loss") {
    Rng rng(9);
    Image a = random_image(rng, 8, 8), b = random_image(rng, 8, 8);
    CHECK(dr_loss(a, a, b, b) == 0.0);
    Image a1 = a;
    a1(3, 4) += 1.0;
    CHECK(dr_loss(a1, a, b, b) == doctest::Approx(1.0).epsilon(1e-14));
    for (int trial = 0; trial < 10; ++trial) {
        Image p = random_image(rng, 64, 64), q = random_image(rng, 64, 64), r = random_image(rng, 64, 64),
              s = random_image(rng, 64, 64);
        const double got = dr_loss(p, q, r, s);
        CHECK(std::abs(got - dr_oracle(p, q, r, s)) <= 1e-9);
        CHECK(got >= 0.0);
        CHECK(got == dr_loss(r, s, p, q));
    }
    CHECK_THROWS_AS(dr_loss(a, Image::Zero(4, 4), b, b), InvalidArgument);
}

namespace {

struct PassFixture {
    Rng rng{10};
    MotionSequence si = normalize_frontal(generate_sub_action(SubActionKind::ArmWaveLeft, 12, rng)).sequence;
    MotionSequence sj = normalize_frontal(generate_sub_action(SubActionKind::LegMarch, 12, rng)).sequence;
    PartEnergy ei = compute_part_energy(si), ej = compute_part_energy(sj);
    RefineConfig cfg;
};

}  // namespace

TEST_CASE("refinement pass on the source itself stays under the self-reconstruction floor") {
    PassFixture f;
    MeanFillInpainter mf;
    const PartEnergy zero = uniform_energy(0.0);
    // The floor: masking each source render with its own attention and
    // inpainting it back.
    double floor_i = 0.0, j_branch = 0.0;
    int n = 0;
    for (int t = 0; t < f.si.length(); t += f.cfg.stride, ++n) {
        const auto ri = render_frame(f.si.frame(static_cast<std::size_t>(t)), f.cfg.camera, smpl_bones(), f.cfg.thickness);
        const auto rj = render_frame(f.sj.frame(static_cast<std::size_t>(t)), f.cfg.camera, smpl_bones(), f.cfg.thickness);
        auto [mi, mj] = decouple_composite(ri, f.ei.per_joint, zero.per_joint, f.cfg.decouple);
        const Image inp_i = mf.inpaint(mi), inp_j = mf.inpaint(mj);
        floor_i += (inp_i - ri.pixels).squaredNorm();
        j_branch += (inp_j - rj.pixels).squaredNorm();
    }
    floor_i /= n;
    j_branch /= n;
    const double total = refinement_pass(f.si.frames(), f.si, f.sj, f.ei, zero, mf, f.cfg);
    CHECK(total - j_branch <= floor_i + 1e-9);
    CHECK(total >= 0.0);
}

TEST_CASE("refinement pass: errors, determinism and role symmetry") {
    PassFixture f;
    MeanFillInpainter mf;
    auto composite = couple_sequences(f.si.frames(), f.sj.frames(), f.ei, f.ej, 0.5);
    const double a = refinement_pass(composite, f.si, f.sj, f.ei, f.ej, mf, f.cfg);
    const double b = refinement_pass(composite, f.si, f.sj, f.ei, f.ej, mf, f.cfg);
    CHECK(std::memcmp(&a, &b, sizeof a) == 0);
    CHECK(refinement_pass(composite, f.sj, f.si, f.ej, f.ei, mf, f.cfg) == doctest::Approx(a).epsilon(1e-14));
    CHECK(a > 0.0);
    RefineConfig bad = f.cfg;
    bad.stride = 0;
    CHECK_THROWS_AS(refinement_pass(composite, f.si, f.sj, f.ei, f.ej, mf, bad), InvalidArgument);
    CHECK_THROWS_AS(refinement_pass({}, f.si, f.sj, f.ei, f.ej, mf, f.cfg), InvalidArgument);
    std::vector<Pose> shorter(composite.begin(), composite.end() - 1);
    CHECK_THROWS_AS(refinement_pass(shorter, f.si, f.sj, f.ei, f.ej, mf, f.cfg), InvalidArgument);
}
