#include "compose/render.hpp"

#include "compose/error.hpp"
#include "compose/parallel.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <fstream>

namespace compose {

CameraConfig CameraConfig::mae_standard() {
    CameraConfig cam;
    cam.height = 224;
    cam.width = 224;
    cam.scale = 98.0;
    cam.principal = {112.0, 98.0};
    return cam;
}

void CameraConfig::validate(int patch) const {
    if (patch <= 0) throw InvalidArgument("render", "patch size must be positive");
    if (height <= 0 || width <= 0 || height % patch != 0 || width % patch != 0) {
        throw InvalidArgument("render", "image " + std::to_string(height) + "x" + std::to_string(width) +
                                            " is not a positive multiple of patch size " + std::to_string(patch));
    }
    if (!(scale > 0.0)) throw InvalidArgument("render", "camera scale must be > 0");
}

FrontalResult normalize_frontal(const MotionSequence& seq) {
    const Pose& first = seq.frame(0);
    const Vec3 offset = -first[kPelvis];
    const Vec3 axis = first[kLeftHip] - first[kRightHip];
    const double len = std::hypot(axis.x(), axis.z());

    FrontalResult result{seq, false};
    Eigen::Matrix3d r = Eigen::Matrix3d::Identity();
    if (len < 1e-9) {
        result.degenerate_hip_axis = true;
    } else {
        r = Eigen::AngleAxisd(std::atan2(axis.z(), axis.x()), Vec3::UnitY()).toRotationMatrix();
    }
    std::vector<Pose> frames = seq.frames();
    for (auto& pose : frames) {
        for (auto& j : pose.joints) j = r * (j + offset);
    }
    result.sequence = seq.with_frames(std::move(frames));
    return result;
}

Vec2 project_joint(const Vec3& point, const CameraConfig& cam) {
    return {cam.principal.x() + cam.scale * point.x(), cam.principal.y() - cam.scale * point.y()};
}

std::array<Vec2, kNumJoints> project_pose(const Pose& pose, const CameraConfig& cam) {
    std::array<Vec2, kNumJoints> out;
    for (int n = 0; n < kNumJoints; ++n) out[static_cast<std::size_t>(n)] = project_joint(pose[n], cam);
    return out;
}

namespace {

double distance_to_segment(const Vec2& p, const Vec2& a, const Vec2& b) {
    const Vec2 ab = b - a;
    const double len2 = ab.squaredNorm();
    double t = len2 > 0.0 ? (p - a).dot(ab) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    return (p - (a + t * ab)).norm();
}

}  // namespace

RenderedFrame render_frame(const Pose& pose, const CameraConfig& cam, const std::vector<std::pair<int, int>>& bones,
                           double thickness) {
    RenderedFrame out;
    out.pixels = Image::Zero(cam.height, cam.width);
    out.joint_pixels = project_pose(pose, cam);
    const double reach = thickness / 2.0 + 0.5;
    for (const auto& [ja, jb] : bones) {
        const Vec2& a = out.joint_pixels[static_cast<std::size_t>(ja)];
        const Vec2& b = out.joint_pixels[static_cast<std::size_t>(jb)];
        const int c0 = std::max(0, static_cast<int>(std::floor(std::min(a.x(), b.x()) - reach)));
        const int c1 = std::min(cam.width - 1, static_cast<int>(std::ceil(std::max(a.x(), b.x()) + reach)));
        const int r0 = std::max(0, static_cast<int>(std::floor(std::min(a.y(), b.y()) - reach)));
        const int r1 = std::min(cam.height - 1, static_cast<int>(std::ceil(std::max(a.y(), b.y()) + reach)));
        for (int r = r0; r <= r1; ++r) {
            for (int c = c0; c <= c1; ++c) {
                const double v = std::clamp(reach - distance_to_segment({c, r}, a, b), 0.0, 1.0);
                if (v > out.pixels(r, c)) out.pixels(r, c) = v;
            }
        }
    }
    return out;
}

std::vector<RenderedFrame> render_sequence(const MotionSequence& seq, const CameraConfig& cam, int stride,
                                           double thickness) {
    if (stride <= 0) throw InvalidArgument("render", "stride must be positive, got " + std::to_string(stride));
    std::vector<std::size_t> times;
    for (int t = 0; t < seq.length(); t += stride) times.push_back(static_cast<std::size_t>(t));
    std::vector<RenderedFrame> out(times.size());
    parallel_for(times.size(), [&](std::size_t k) {
        out[k] = render_frame(seq.frame(times[k]), cam, smpl_bones(), thickness);
    });
    return out;
}

namespace {

// Splat centers in pixel space with their (joint a, joint b, weight on b).
struct Splat {
    Vec2 center;
    int a, b;
    double s;
};

std::vector<Splat> splats_for(const std::array<Vec2, kNumJoints>& pix, int samples) {
    const int k = std::max(samples, 2);
    std::vector<Splat> out;
    out.reserve(smpl_bones().size() * static_cast<std::size_t>(k));
    for (const auto& [ja, jb] : smpl_bones()) {
        for (int i = 0; i < k; ++i) {
            const double s = static_cast<double>(i) / (k - 1);
            out.push_back({(1.0 - s) * pix[static_cast<std::size_t>(ja)] + s * pix[static_cast<std::size_t>(jb)], ja, jb, s});
        }
    }
    return out;
}

// Splat tails beyond this radius are below 1e-12 and skipped.
int splat_radius(double sigma) { return static_cast<int>(std::ceil(sigma * std::sqrt(2.0 * std::log(1e12)))); }

template <class Fn>
void for_each_splat_pixel(const Splat& sp, const CameraConfig& cam, int radius, Fn&& fn) {
    const int cc = static_cast<int>(std::lround(sp.center.x()));
    const int rc = static_cast<int>(std::lround(sp.center.y()));
    const int r0 = std::max(0, rc - radius), r1 = std::min(cam.height - 1, rc + radius);
    const int c0 = std::max(0, cc - radius), c1 = std::min(cam.width - 1, cc + radius);
    for (int r = r0; r <= r1; ++r) {
        for (int c = c0; c <= c1; ++c) fn(r, c);
    }
}

Image splat_density(const std::vector<Splat>& splats, const CameraConfig& cam, const SplatConfig& cfg) {
    Image density = Image::Zero(cam.height, cam.width);
    const double inv2s2 = 1.0 / (2.0 * cfg.sigma * cfg.sigma);
    const int radius = splat_radius(cfg.sigma);
    for (const auto& sp : splats) {
        for_each_splat_pixel(sp, cam, radius, [&](int r, int c) {
            const double dx = c - sp.center.x(), dy = r - sp.center.y();
            density(r, c) += std::exp(-(dx * dx + dy * dy) * inv2s2);
        });
    }
    return density;
}

}  // namespace

Image render_smooth(const Pose& pose, const CameraConfig& cam, const SplatConfig& splat) {
    const auto density = splat_density(splats_for(project_pose(pose, cam), splat.samples_per_bone), cam, splat);
    return (1.0 - (-density.array()).exp()).matrix();
}

std::array<Vec3, kNumJoints> render_smooth_vjp(const Pose& pose, const CameraConfig& cam, const Image& grad_image,
                                               const SplatConfig& splat) {
    if (grad_image.rows() != cam.height || grad_image.cols() != cam.width) {
        throw InvalidArgument("render", "gradient image shape does not match camera");
    }
    const auto splats = splats_for(project_pose(pose, cam), splat.samples_per_bone);
    const Image density = splat_density(splats, cam, splat);
    // d image / d density = exp(-density)
    const Image upstream = (grad_image.array() * (-density.array()).exp()).matrix();

    const double inv2s2 = 1.0 / (2.0 * splat.sigma * splat.sigma);
    const double inv_s2 = 1.0 / (splat.sigma * splat.sigma);
    const int radius = splat_radius(splat.sigma);
    std::array<Vec2, kNumJoints> grad_pix;
    grad_pix.fill(Vec2::Zero());
    for (const auto& sp : splats) {
        Vec2 g = Vec2::Zero();
        for_each_splat_pixel(sp, cam, radius, [&](int r, int c) {
            const double dx = c - sp.center.x(), dy = r - sp.center.y();
            const double w = upstream(r, c) * std::exp(-(dx * dx + dy * dy) * inv2s2) * inv_s2;
            g.x() += w * dx;
            g.y() += w * dy;
        });
        grad_pix[static_cast<std::size_t>(sp.a)] += (1.0 - sp.s) * g;
        grad_pix[static_cast<std::size_t>(sp.b)] += sp.s * g;
    }
    std::array<Vec3, kNumJoints> out;
    for (std::size_t n = 0; n < kNumJoints; ++n) {
        out[n] = {cam.scale * grad_pix[n].x(), -cam.scale * grad_pix[n].y(), 0.0};
    }
    return out;
}

void write_pgm(const Image& image, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("render", "cannot write " + path.string());
    out << "P5\n" << image.cols() << ' ' << image.rows() << "\n255\n";
    std::vector<unsigned char> bytes;
    bytes.reserve(static_cast<std::size_t>(image.size()));
    for (Eigen::Index r = 0; r < image.rows(); ++r) {
        for (Eigen::Index c = 0; c < image.cols(); ++c) {
            bytes.push_back(static_cast<unsigned char>(std::lround(std::clamp(image(r, c), 0.0, 1.0) * 255.0)));
        }
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("render", "write failed for " + path.string());
}

Image contact_sheet(const std::vector<Image>& images, int columns) {
    if (images.empty()) return Image::Zero(0, 0);
    const int n = static_cast<int>(images.size());
    if (columns <= 0) columns = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(n))));
    const int rows = (n + columns - 1) / columns;
    const auto h = images.front().rows(), w = images.front().cols();
    Image sheet = Image::Zero(rows * (h + 1) - 1, columns * (w + 1) - 1);
    for (int k = 0; k < n; ++k) {
        if (images[static_cast<std::size_t>(k)].rows() != h || images[static_cast<std::size_t>(k)].cols() != w) {
            throw InvalidArgument("render", "contact sheet images must share one shape");
        }
        sheet.block((k / columns) * (h + 1), (k % columns) * (w + 1), h, w) = images[static_cast<std::size_t>(k)];
    }
    return sheet;
}

}  // namespace compose
