#pragma once

#include "compose/render.hpp"

#include <Eigen/Core>

#include <array>
#include <utility>
#include <vector>

namespace compose {

struct AttentionMap {
    Image values;  // H x W, finite, >= 0
};

struct RegionGrid {
    Eigen::MatrixXd values;  // (H/p) x (W/p) block means
    int patch = 0;
};

struct RegionMask {
    Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> keep;  // (H/p) x (W/p)
    double rho = 1.0;
    int patch = 0;

    int kept() const { return static_cast<int>(keep.count()); }
    // Row-major indices of kept regions.
    std::vector<int> kept_indices() const;
    // H x W 0/1 image, 1 on kept pixels.
    Image pixel_mask() const;
};

struct MaskedImage {
    Image pixels;
    RegionMask mask;
    double fill = 0.5;
};

struct DecoupleConfig {
    double rho = 1.0 / 3.0;
    int patch = 8;
    double eps_pix = 1.0;
    double fill = 0.5;
};

// A(pix) = sum_n E_n / max(|pix - pix_n|^2, eps_pix^2) over every pixel.
AttentionMap attention_map(const std::array<Vec2, kNumJoints>& joint_pixels,
                           const std::array<double, kNumJoints>& per_joint_energy, int height, int width,
                           double eps_pix = 1.0);

// Throws InvalidArgument when H or W is not divisible by p.
RegionGrid region_average(const AttentionMap& a, int patch);

// Keeps the ceil(rho * R) highest cells; ties go to the lower row-major
// index. Throws InvalidArgument unless 0 < rho <= 1.
RegionMask top_fraction_mask(const RegionGrid& g, double rho);

// Kept regions copy the image, dropped regions take the fill value.
MaskedImage apply_mask(const Image& image, const RegionMask& m, double fill = 0.5);

// Builds A^i and A^j from the composite's joint pixels with each source's
// energies, then pools, masks and applies both.
std::pair<MaskedImage, MaskedImage> decouple_composite(const RenderedFrame& composite,
                                                       const std::array<double, kNumJoints>& e_i,
                                                       const std::array<double, kNumJoints>& e_j,
                                                       const DecoupleConfig& cfg = {});

// The mask alone, for callers that apply it themselves.
RegionMask decoupling_mask(const std::array<Vec2, kNumJoints>& joint_pixels,
                           const std::array<double, kNumJoints>& energy, int height, int width,
                           const DecoupleConfig& cfg);

}  // namespace compose
