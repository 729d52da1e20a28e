#include "compose/decouple.hpp"

#include "compose/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace compose {

std::vector<int> RegionMask::kept_indices() const {
    std::vector<int> out;
    for (Eigen::Index r = 0; r < keep.rows(); ++r) {
        for (Eigen::Index c = 0; c < keep.cols(); ++c) {
            if (keep(r, c)) out.push_back(static_cast<int>(r * keep.cols() + c));
        }
    }
    return out;
}

Image RegionMask::pixel_mask() const {
    Image m(keep.rows() * patch, keep.cols() * patch);
    for (Eigen::Index r = 0; r < keep.rows(); ++r) {
        for (Eigen::Index c = 0; c < keep.cols(); ++c) {
            m.block(r * patch, c * patch, patch, patch).setConstant(keep(r, c) ? 1.0 : 0.0);
        }
    }
    return m;
}

AttentionMap attention_map(const std::array<Vec2, kNumJoints>& joint_pixels,
                           const std::array<double, kNumJoints>& per_joint_energy, int height, int width,
                           double eps_pix) {
    if (!(eps_pix > 0.0)) throw InvalidArgument("decouple", "eps_pix must be > 0");
    const double floor2 = eps_pix * eps_pix;
    AttentionMap a{Image::Zero(height, width)};
    for (std::size_t n = 0; n < kNumJoints; ++n) {
        const double e = per_joint_energy[n];
        if (e < 0.0 || !std::isfinite(e)) throw InvalidArgument("decouple", "joint energies must be finite and >= 0");
        if (e == 0.0) continue;
        const Vec2& p = joint_pixels[n];
        for (int r = 0; r < height; ++r) {
            const double dy = r - p.y();
            for (int c = 0; c < width; ++c) {
                const double dx = c - p.x();
                a.values(r, c) += e / std::max(dx * dx + dy * dy, floor2);
            }
        }
    }
    return a;
}

RegionGrid region_average(const AttentionMap& a, int patch) {
    const auto h = a.values.rows(), w = a.values.cols();
    if (patch <= 0 || h % patch != 0 || w % patch != 0) {
        throw InvalidArgument("decouple", "attention map " + std::to_string(h) + "x" + std::to_string(w) +
                                              " is not divisible by patch " + std::to_string(patch));
    }
    RegionGrid g{Eigen::MatrixXd(h / patch, w / patch), patch};
    for (Eigen::Index r = 0; r < g.values.rows(); ++r) {
        for (Eigen::Index c = 0; c < g.values.cols(); ++c) {
            g.values(r, c) = a.values.block(r * patch, c * patch, patch, patch).mean();
        }
    }
    return g;
}

RegionMask top_fraction_mask(const RegionGrid& g, double rho) {
    if (!(rho > 0.0 && rho <= 1.0)) throw InvalidArgument("decouple", "rho must be in (0, 1]");
    const auto rows = g.values.rows(), cols = g.values.cols();
    const int total = static_cast<int>(rows * cols);
    // the small slack keeps e.g. (1/3) * 9 from rounding up to 4
    const int k = std::clamp(static_cast<int>(std::ceil(rho * total - 1e-9)), 0, total);

    std::vector<int> order(static_cast<std::size_t>(total));
    std::iota(order.begin(), order.end(), 0);
    auto value = [&](int idx) { return g.values(idx / cols, idx % cols); };
    std::stable_sort(order.begin(), order.end(), [&](int x, int y) { return value(x) > value(y); });

    RegionMask m;
    m.keep = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(rows, cols, false);
    m.rho = rho;
    m.patch = g.patch;
    for (int i = 0; i < k; ++i) m.keep(order[static_cast<std::size_t>(i)] / cols, order[static_cast<std::size_t>(i)] % cols) = true;
    return m;
}

MaskedImage apply_mask(const Image& image, const RegionMask& m, double fill) {
    if (image.rows() != m.keep.rows() * m.patch || image.cols() != m.keep.cols() * m.patch) {
        throw InvalidArgument("decouple", "mask grid does not match image shape");
    }
    MaskedImage out{image, m, fill};
    for (Eigen::Index r = 0; r < m.keep.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.keep.cols(); ++c) {
            if (!m.keep(r, c)) out.pixels.block(r * m.patch, c * m.patch, m.patch, m.patch).setConstant(fill);
        }
    }
    return out;
}

RegionMask decoupling_mask(const std::array<Vec2, kNumJoints>& joint_pixels,
                           const std::array<double, kNumJoints>& energy, int height, int width,
                           const DecoupleConfig& cfg) {
    const AttentionMap a = attention_map(joint_pixels, energy, height, width, cfg.eps_pix);
    return top_fraction_mask(region_average(a, cfg.patch), cfg.rho);
}

std::pair<MaskedImage, MaskedImage> decouple_composite(const RenderedFrame& composite,
                                                       const std::array<double, kNumJoints>& e_i,
                                                       const std::array<double, kNumJoints>& e_j,
                                                       const DecoupleConfig& cfg) {
    const int h = static_cast<int>(composite.pixels.rows()), w = static_cast<int>(composite.pixels.cols());
    const RegionMask mi = decoupling_mask(composite.joint_pixels, e_i, h, w, cfg);
    const RegionMask mj = decoupling_mask(composite.joint_pixels, e_j, h, w, cfg);
    return {apply_mask(composite.pixels, mi, cfg.fill), apply_mask(composite.pixels, mj, cfg.fill)};
}

}  // namespace compose
