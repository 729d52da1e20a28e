#pragma once

#include "compose/decouple.hpp"
#include "compose/energy.hpp"
#include "compose/nn/graph.hpp"
#include "compose/render.hpp"

#include <memory>
#include <string>
#include <utility>
#include <vector>

namespace compose {

// Fills the dropped regions of a masked image. Implementations must be
// deterministic and safe for concurrent inference once built.
class Inpainter {
   public:
    virtual ~Inpainter() = default;

    virtual std::string name() const = 0;
    // Full H x W image with values in [0, 1].
    virtual Image inpaint(const MaskedImage& masked) const = 0;
    virtual bool preserves_kept_pixels() const = 0;

    // Differentiable form on the training path: kept pixels come from
    // image, dropped regions are predicted from them. No clamping. The
    // default throws InvalidState.
    virtual nn::Var inpaint_graph(const nn::Var& image, const RegionMask& mask, double fill) const;
};

// Validates the mask/image shapes, then delegates.
Image inpaint(const Inpainter& model, const MaskedImage& masked);

// Every dropped region takes the mean of the kept pixels (the fill value
// when nothing is kept).
class MeanFillInpainter final : public Inpainter {
   public:
    std::string name() const override { return "mean_fill"; }
    Image inpaint(const MaskedImage& masked) const override;
    bool preserves_kept_pixels() const override { return true; }
    nn::Var inpaint_graph(const nn::Var& image, const RegionMask& mask, double fill) const override;
};

// Per-region linear predictor. Each dropped region's p*p pixels are a
// linear function of [1, mean of kept pixels, kept-region means (0 where
// dropped), keep indicators], fit by ridge-regularized least squares per
// region position.
class PatchRegressorInpainter final : public Inpainter {
   public:
    struct Sample {
        Image image;
        RegionMask mask;
    };

    // Throws InvalidArgument on an empty or inconsistent corpus.
    static PatchRegressorInpainter fit(const std::vector<Sample>& samples, double ridge = 1e-6);

    // Masks drawn the way decoupling draws them: attention from the frame's
    // own joint pixels with random per-part energies.
    static std::vector<Sample> make_samples(const std::vector<RenderedFrame>& corpus, const DecoupleConfig& cfg,
                                            int masks_per_image, Rng& rng);

    std::string name() const override { return "patch_regressor"; }
    Image inpaint(const MaskedImage& masked) const override;
    bool preserves_kept_pixels() const override { return true; }
    nn::Var inpaint_graph(const nn::Var& image, const RegionMask& mask, double fill) const override;

    // Largest per-pixel absolute error over the training samples.
    double fit_residual_bound() const noexcept { return residual_bound_; }
    int patch() const noexcept { return patch_; }

   private:
    Eigen::VectorXd features(const Image& image, const RegionMask& mask) const;
    Image predict_raw(const Image& image, const RegionMask& mask) const;

    int patch_ = 0;
    int grid_rows_ = 0, grid_cols_ = 0;
    std::vector<Eigen::MatrixXd> weights_;  // per region: feature_dim x p*p
    double residual_bound_ = 0.0;
};

std::unique_ptr<Inpainter> make_inpainter(const std::string& name);

// sum (inp_i - v_i)^2 + sum (inp_j - v_j)^2 for one pair.
double dr_loss(const Image& inp_i, const Image& v_i, const Image& inp_j, const Image& v_j);

struct RefineConfig {
    DecoupleConfig decouple;
    CameraConfig camera;
    int stride = 4;
    double thickness = 2.0;
};

// Renders the composite every `stride` frames, decouples each render into
// two masked images with the sources' energies, inpaints them and scores
// them against the source renders at the same frame. Returns the mean of
// dr_loss over the sampled frames.
double refinement_pass(const std::vector<Pose>& composite, const MotionSequence& source_i,
                       const MotionSequence& source_j, const PartEnergy& e_i, const PartEnergy& e_j,
                       const Inpainter& inpainter, const RefineConfig& cfg);

}  // namespace compose
