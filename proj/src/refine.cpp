#include "compose/refine.hpp"

#include "compose/error.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <random>

namespace compose {

nn::Var Inpainter::inpaint_graph(const nn::Var&, const RegionMask&, double) const {
    throw InvalidState("refine", "inpainter '" + name() + "' has no differentiable form");
}

Image inpaint(const Inpainter& model, const MaskedImage& masked) {
    if (masked.pixels.rows() != masked.mask.keep.rows() * masked.mask.patch ||
        masked.pixels.cols() != masked.mask.keep.cols() * masked.mask.patch) {
        throw InvalidArgument("refine", "masked image and region mask disagree on shape");
    }
    Image out = model.inpaint(masked);
    if (out.rows() != masked.pixels.rows() || out.cols() != masked.pixels.cols()) {
        throw InvalidState("refine", "inpainter '" + model.name() + "' changed the image shape");
    }
    return out;
}

Image MeanFillInpainter::inpaint(const MaskedImage& masked) const {
    const Image keep = masked.mask.pixel_mask();
    const double kept = keep.sum();
    const double mean = kept > 0.0 ? masked.pixels.cwiseProduct(keep).sum() / kept : masked.fill;
    return (keep.array() * masked.pixels.array() + (1.0 - keep.array()) * mean).matrix();
}

nn::Var MeanFillInpainter::inpaint_graph(const nn::Var& image, const RegionMask& mask, double fill) const {
    const Image keep = mask.pixel_mask();
    const double kept = keep.sum();
    if (kept == 0.0) return nn::constant(Image::Constant(keep.rows(), keep.cols(), fill));
    const nn::Var kept_pixels = nn::mul_const(image, keep);
    const nn::Var mean = nn::scale(nn::sum(kept_pixels), 1.0 / kept);
    return nn::add(kept_pixels, nn::scalar_times(mean, (1.0 - keep.array()).matrix()));
}

namespace {

int feature_dim(int regions) { return 2 + 2 * regions; }

}  // namespace

Eigen::VectorXd PatchRegressorInpainter::features(const Image& image, const RegionMask& mask) const {
    const int regions = grid_rows_ * grid_cols_;
    Eigen::VectorXd f = Eigen::VectorXd::Zero(feature_dim(regions));
    f(0) = 1.0;
    double kept_sum = 0.0;
    int kept_cells = 0;
    for (int r = 0; r < grid_rows_; ++r) {
        for (int c = 0; c < grid_cols_; ++c) {
            if (!mask.keep(r, c)) continue;
            const double m = image.block(r * patch_, c * patch_, patch_, patch_).mean();
            const int idx = r * grid_cols_ + c;
            f(2 + idx) = m;
            f(2 + regions + idx) = 1.0;
            kept_sum += m;
            ++kept_cells;
        }
    }
    f(1) = kept_cells > 0 ? kept_sum / kept_cells : 0.0;
    return f;
}

PatchRegressorInpainter PatchRegressorInpainter::fit(const std::vector<Sample>& samples, double ridge) {
    if (samples.empty()) throw InvalidArgument("refine", "patch regressor needs a non-empty corpus");
    PatchRegressorInpainter model;
    const auto& first = samples.front();
    model.patch_ = first.mask.patch;
    model.grid_rows_ = static_cast<int>(first.mask.keep.rows());
    model.grid_cols_ = static_cast<int>(first.mask.keep.cols());
    const int regions = model.grid_rows_ * model.grid_cols_;
    const int p2 = model.patch_ * model.patch_;
    const int fdim = feature_dim(regions);
    for (const auto& s : samples) {
        if (s.mask.patch != model.patch_ || s.mask.keep.rows() != model.grid_rows_ ||
            s.mask.keep.cols() != model.grid_cols_ || s.image.rows() != model.grid_rows_ * model.patch_ ||
            s.image.cols() != model.grid_cols_ * model.patch_) {
            throw InvalidArgument("refine", "patch regressor corpus mixes shapes");
        }
    }

    std::vector<Eigen::VectorXd> feats;
    feats.reserve(samples.size());
    for (const auto& s : samples) feats.push_back(model.features(s.image, s.mask));

    model.weights_.resize(static_cast<std::size_t>(regions));
    for (int idx = 0; idx < regions; ++idx) {
        const int r = idx / model.grid_cols_, c = idx % model.grid_cols_;
        Eigen::MatrixXd gram = ridge * Eigen::MatrixXd::Identity(fdim, fdim);
        Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(fdim, p2);
        int used = 0;
        for (std::size_t k = 0; k < samples.size(); ++k) {
            if (samples[k].mask.keep(r, c)) continue;
            const Image block = samples[k].image.block(r * model.patch_, c * model.patch_, model.patch_, model.patch_);
            gram.noalias() += feats[k] * feats[k].transpose();
            rhs.noalias() += feats[k] * block.reshaped().transpose();
            ++used;
        }
        Eigen::MatrixXd w = Eigen::MatrixXd::Zero(fdim, p2);
        if (used == 0) {
            w.row(1).setOnes();  // never dropped in training: predict the kept mean
        } else {
            w = gram.ldlt().solve(rhs);
        }
        model.weights_[static_cast<std::size_t>(idx)] = std::move(w);
    }

    double bound = 0.0;
    for (const auto& s : samples) {
        const Image pred = model.inpaint(MaskedImage{s.image, s.mask, 0.5});
        bound = std::max(bound, (pred - s.image).cwiseAbs().maxCoeff());
    }
    model.residual_bound_ = bound;
    return model;
}

std::vector<PatchRegressorInpainter::Sample> PatchRegressorInpainter::make_samples(
    const std::vector<RenderedFrame>& corpus, const DecoupleConfig& cfg, int masks_per_image, Rng& rng) {
    std::vector<Sample> out;
    std::exponential_distribution<double> energy(1.0);
    const auto& partition = BodyPartition::standard();
    for (const auto& frame : corpus) {
        for (int k = 0; k < masks_per_image; ++k) {
            std::array<double, kNumJoints> e{};
            std::vector<double> per_part(partition.size());
            for (auto& v : per_part) v = energy(rng);
            for (int n = 0; n < kNumJoints; ++n) e[static_cast<std::size_t>(n)] = per_part[static_cast<std::size_t>(partition.part_of(n))];
            const int h = static_cast<int>(frame.pixels.rows()), w = static_cast<int>(frame.pixels.cols());
            out.push_back({frame.pixels, decoupling_mask(frame.joint_pixels, e, h, w, cfg)});
        }
    }
    return out;
}

Image PatchRegressorInpainter::predict_raw(const Image& image, const RegionMask& mask) const {
    if (mask.patch != patch_ || mask.keep.rows() != grid_rows_ || mask.keep.cols() != grid_cols_) {
        throw InvalidArgument("refine", "mask layout differs from the one the patch regressor was fit on");
    }
    const Eigen::VectorXd f = features(image, mask);
    Image out = image;
    for (int r = 0; r < grid_rows_; ++r) {
        for (int c = 0; c < grid_cols_; ++c) {
            if (mask.keep(r, c)) continue;
            const Eigen::VectorXd pix = weights_[static_cast<std::size_t>(r * grid_cols_ + c)].transpose() * f;
            out.block(r * patch_, c * patch_, patch_, patch_) = pix.reshaped(patch_, patch_);
        }
    }
    return out;
}

Image PatchRegressorInpainter::inpaint(const MaskedImage& masked) const {
    return predict_raw(masked.pixels, masked.mask).cwiseMax(0.0).cwiseMin(1.0);
}

nn::Var PatchRegressorInpainter::inpaint_graph(const nn::Var& image, const RegionMask& mask, double) const {
    Image value = predict_raw(image->value, mask);
    const int regions = grid_rows_ * grid_cols_;
    return nn::custom({image}, std::move(value), [this, mask, regions](nn::Node& n) {
        const Image& g = n.grad;
        Image dimg = Image::Zero(g.rows(), g.cols());
        Eigen::VectorXd dfeat = Eigen::VectorXd::Zero(feature_dim(regions));
        for (int r = 0; r < grid_rows_; ++r) {
            for (int c = 0; c < grid_cols_; ++c) {
                const auto block = g.block(r * patch_, c * patch_, patch_, patch_);
                if (mask.keep(r, c)) {
                    dimg.block(r * patch_, c * patch_, patch_, patch_) += block;
                } else {
                    const Image gb = block;
                    dfeat += weights_[static_cast<std::size_t>(r * grid_cols_ + c)] * gb.reshaped();
                }
            }
        }
        const int kept = mask.kept();
        const double p2 = static_cast<double>(patch_ * patch_);
        for (int r = 0; r < grid_rows_; ++r) {
            for (int c = 0; c < grid_cols_; ++c) {
                if (!mask.keep(r, c)) continue;
                const double per_pixel = (dfeat(2 + r * grid_cols_ + c) + (kept > 0 ? dfeat(1) / kept : 0.0)) / p2;
                dimg.block(r * patch_, c * patch_, patch_, patch_).array() += per_pixel;
            }
        }
        nn::accumulate(*n.inputs[0], dimg);
    });
}

std::unique_ptr<Inpainter> make_inpainter(const std::string& name) {
    if (name == "mean_fill") return std::make_unique<MeanFillInpainter>();
    throw InvalidArgument("refine", "unknown training-free inpainter '" + name + "'");
}

double dr_loss(const Image& inp_i, const Image& v_i, const Image& inp_j, const Image& v_j) {
    if (inp_i.rows() != v_i.rows() || inp_i.cols() != v_i.cols() || inp_j.rows() != v_j.rows() ||
        inp_j.cols() != v_j.cols()) {
        throw InvalidArgument("refine", "dr_loss: image shapes differ");
    }
    return (inp_i - v_i).squaredNorm() + (inp_j - v_j).squaredNorm();
}

double refinement_pass(const std::vector<Pose>& composite, const MotionSequence& source_i,
                       const MotionSequence& source_j, const PartEnergy& e_i, const PartEnergy& e_j,
                       const Inpainter& inpainter, const RefineConfig& cfg) {
    if (cfg.stride <= 0) throw InvalidArgument("refine", "refinement stride must be positive");
    if (composite.empty()) throw InvalidArgument("refine", "refinement needs at least one composite frame");
    const auto T = composite.size();
    if (static_cast<std::size_t>(source_i.length()) != T || static_cast<std::size_t>(source_j.length()) != T) {
        throw InvalidArgument("refine", "composite and sources differ in length");
    }
    cfg.camera.validate(cfg.decouple.patch);

    double total = 0.0;
    int count = 0;
    for (std::size_t t = 0; t < T; t += static_cast<std::size_t>(cfg.stride)) {
        const RenderedFrame frame = render_frame(composite[t], cfg.camera, smpl_bones(), cfg.thickness);
        const auto [masked_i, masked_j] = decouple_composite(frame, e_i.per_joint, e_j.per_joint, cfg.decouple);
        const Image v_i = render_frame(source_i.frame(t), cfg.camera, smpl_bones(), cfg.thickness).pixels;
        const Image v_j = render_frame(source_j.frame(t), cfg.camera, smpl_bones(), cfg.thickness).pixels;
        total += dr_loss(inpaint(inpainter, masked_i), v_i, inpaint(inpainter, masked_j), v_j);
        ++count;
    }
    return total / count;
}

}  // namespace compose
