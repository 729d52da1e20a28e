#pragma once

#include "compose/motion.hpp"

#include <Eigen/Core>

#include <array>
#include <filesystem>
#include <utility>
#include <vector>

namespace compose {

// Grayscale image, rows = height (y down), cols = width. Pixel (row r,
// col c) sits at continuous coordinate (c, r).
using Image = Eigen::MatrixXd;

// Orthographic camera looking down -z: u = cx + scale * x, v = cy - scale * y.
struct CameraConfig {
    int height = 64;
    int width = 64;
    double scale = 28.0;  // pixels per meter
    Vec2 principal{32.0, 28.0};

    // 224x224 preset matching 16-pixel patches.
    static CameraConfig mae_standard();

    // Throws InvalidArgument unless H, W are positive multiples of patch and
    // scale > 0.
    void validate(int patch = 1) const;
};

struct RenderedFrame {
    Image pixels;                             // intensities in [0, 1]
    std::array<Vec2, kNumJoints> joint_pixels;  // may lie outside the image
};

struct FrontalResult {
    MotionSequence sequence;
    bool degenerate_hip_axis = false;  // identity rotation was used
};

// Translate so the frame-0 pelvis is at the origin and yaw-rotate so the
// frame-0 hip axis (right hip -> left hip) points along +x. One rigid
// transform is applied to every frame.
FrontalResult normalize_frontal(const MotionSequence& seq);

Vec2 project_joint(const Vec3& point, const CameraConfig& cam);
std::array<Vec2, kNumJoints> project_pose(const Pose& pose, const CameraConfig& cam);

// Anti-aliased stick figure: each bone is a capsule of the given thickness,
// intensity clamp(thickness/2 + 0.5 - distance, 0, 1), max over bones.
RenderedFrame render_frame(const Pose& pose, const CameraConfig& cam,
                           const std::vector<std::pair<int, int>>& bones = smpl_bones(),
                           double thickness = 2.0);

// Frames 0, stride, 2*stride, ... Throws InvalidArgument on stride <= 0.
std::vector<RenderedFrame> render_sequence(const MotionSequence& seq, const CameraConfig& cam, int stride,
                                           double thickness = 2.0);

// Differentiable stand-in used on the training path: Gaussian splats at
// samples_per_bone evenly spaced points along every bone, composited as
// 1 - exp(-sum of splats).
struct SplatConfig {
    double sigma = 1.0;  // pixels
    int samples_per_bone = 5;
};

Image render_smooth(const Pose& pose, const CameraConfig& cam, const SplatConfig& splat = {});

// Gradient of sum(grad_image .* render_smooth(pose)) with respect to every
// joint coordinate (the z component is always 0).
std::array<Vec3, kNumJoints> render_smooth_vjp(const Pose& pose, const CameraConfig& cam, const Image& grad_image,
                                               const SplatConfig& splat = {});

// Binary PGM (P5, maxval 255). Intensities are clamped to [0, 1].
void write_pgm(const Image& image, const std::filesystem::path& path);
// Tiles images row-major with a 1-pixel gap; columns <= 0 picks ceil(sqrt(n)).
Image contact_sheet(const std::vector<Image>& images, int columns = 0);

}  // namespace compose
