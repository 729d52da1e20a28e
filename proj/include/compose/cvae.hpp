#pragma once

#include "compose/coupling.hpp"
#include "compose/decouple.hpp"
#include "compose/nn/graph.hpp"
#include "compose/nn/layers.hpp"
#include "compose/nn/optim.hpp"
#include "compose/refine.hpp"
#include "compose/render.hpp"

#include <Eigen/Core>

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace compose {

struct DiagonalGaussian {
    Eigen::VectorXd mean;
    Eigen::VectorXd log_std;

    int dim() const noexcept { return static_cast<int>(mean.size()); }
    // Throws InvalidArgument on a size mismatch or non-finite entry.
    void validate() const;
};

// Closed form, summed over dimensions. Throws InvalidArgument on a
// dimension mismatch.
double kl_divergence(const DiagonalGaussian& q, const DiagonalGaussian& p);

// z = mean + exp(log_std) * eps, eps ~ N(0, I).
Eigen::VectorXd reparameterize(const DiagonalGaussian& g, Rng& rng);

// Mean squared coordinate error over all entries. Throws InvalidArgument
// on a shape mismatch.
double recon_loss(const Eigen::MatrixXd& y_hat, const Eigen::MatrixXd& y);

// T x 72 layout: row t holds joints 0..23 as x, y, z.
Eigen::MatrixXd to_matrix(const std::vector<Pose>& frames);
std::vector<Pose> from_matrix(const Eigen::MatrixXd& m);

struct LossWeights {
    double recon = 1.0;
    double kl = 1e-5;
    double dr = 1e-2;
};

struct ModelConfig {
    int num_classes = 4;
    int frames = 16;
    int latent_dim = 8;
    int embed_dim = 16;
    int width = 32;
    int heads = 2;
    int ffn_hidden = 64;
    int encoder_layers = 2;
    int decoder_layers = 2;
    int prior_hidden = 32;
    LossWeights weights;
    double lr = 1e-4;
    double weight_decay = 0.01;
    int batch_size = 16;
    int epochs = 100;
    int dr_every = 4;
    int checkpoint_every = 0;  // 0: never
    double std_floor = 0.05;   // meters, per-coordinate normalizer floor

    // Eight encoder and eight decoder blocks.
    static ModelConfig full_scale();
    // Throws InvalidArgument naming the offending field.
    void validate() const;
};

// Per-coordinate standardization of the T x 72 layout (one mean and std
// per joint axis, shared across frames).
struct Normalizer {
    Eigen::RowVectorXd mean = Eigen::RowVectorXd::Zero(3 * kNumJoints);
    Eigen::RowVectorXd stddev = Eigen::RowVectorXd::Ones(3 * kNumJoints);

    static Normalizer fit(const std::vector<Eigen::MatrixXd>& sequences, double floor);
    Eigen::MatrixXd normalize(const Eigen::MatrixXd& m) const;
    Eigen::MatrixXd denormalize(const Eigen::MatrixXd& m) const;
};

class CvaeModel {
   public:
    struct GaussianVars {
        nn::Var mean;     // 1 x d_z
        nn::Var log_std;  // 1 x d_z
    };

    static CvaeModel create(const ModelConfig& config, Rng& rng);

    const ModelConfig& config() const noexcept { return config_; }
    nn::ParameterSet& params() noexcept { return params_; }
    const nn::ParameterSet& params() const noexcept { return params_; }
    const Normalizer& normalizer() const noexcept { return normalizer_; }
    void set_normalizer(Normalizer n) { normalizer_ = std::move(n); }

    // Graph forms. Frames enter and leave in normalized units.
    nn::Var embed(nn::Binder& b, const MixedLabel& label) const;
    GaussianVars encode(nn::Binder& b, const nn::Var& embedding, const nn::Var& frames) const;
    GaussianVars prior(nn::Binder& b, const nn::Var& embedding) const;
    nn::Var decode(nn::Binder& b, const nn::Var& embedding, const nn::Var& z, int frames) const;

    // Value forms on raw coordinates.
    Eigen::RowVectorXd embed_mixed_label(const MixedLabel& label) const;
    DiagonalGaussian encode(const MixedLabel& label, const Eigen::MatrixXd& frames) const;
    DiagonalGaussian prior(const MixedLabel& label) const;
    Eigen::MatrixXd decode(const MixedLabel& label, const Eigen::VectorXd& z, int frames) const;

   private:
    struct EncoderBlock {
        nn::LayerNorm ln1, ln2;
        nn::MultiHeadAttention attn;
        nn::FeedForward ffn;
    };
    struct DecoderBlock {
        nn::LayerNorm ln1, ln2, ln3;
        nn::MultiHeadAttention self_attn, cross_attn;
        nn::FeedForward ffn;
    };

    void check_label(const MixedLabel& label) const;

    ModelConfig config_;
    nn::ParameterSet params_;
    Normalizer normalizer_;

    int embedding_ = -1;  // C x embed_dim
    nn::Linear enc_label, enc_frames, enc_mu_head, enc_sigma_head;
    int mu_token_ = -1, sigma_token_ = -1;
    std::vector<EncoderBlock> encoder_;
    nn::LayerNorm enc_final;
    nn::Linear prior_hidden, prior_out;
    nn::Linear dec_latent, dec_label, dec_out;
    std::vector<DecoderBlock> decoder_;
    nn::LayerNorm dec_final;
};

// One training target: the composite plus what the refinement term needs.
struct TrainingItem {
    std::string id;
    Eigen::MatrixXd frames;  // T x 72 raw coordinates
    MixedLabel label;
    std::optional<std::pair<Eigen::MatrixXd, Eigen::MatrixXd>> sources;  // T x 72 each
    std::array<double, kNumJoints> energy_i{};
    std::array<double, kNumJoints> energy_j{};
};

// Pairs every composite with its sources (looked up by id) and their
// per-joint energies. All sequences are resampled to `frames`. Throws
// InvalidArgument when a source id is missing.
std::vector<TrainingItem> make_training_set(const std::vector<PseudoComposite>& composites,
                                            const std::vector<MotionSequence>& sources, int frames,
                                            const BodyPartition& partition = BodyPartition::standard(),
                                            bool energy_mask = true);

struct DrSettings {
    CameraConfig camera;
    SplatConfig splat;
    DecoupleConfig decouple;
};

// Differentiable smoothed render of one 1 x 72 pose row (raw coordinates).
nn::Var render_smooth_op(const nn::Var& pose_row, const CameraConfig& cam, const SplatConfig& splat);

struct LossBreakdown {
    double recon = 0.0;
    double kl = 0.0;
    double dr = 0.0;
    double total = 0.0;
};

struct LossContext {
    const Inpainter* inpainter = nullptr;  // required when the DR term is on
    DrSettings dr;
    // When set, decoupling masks are computed once per item id and reused.
    // Finite-difference checks need the masks frozen.
    std::map<std::string, std::pair<RegionMask, RegionMask>>* mask_cache = nullptr;
};

struct BatchLoss {
    nn::Var total;
    LossBreakdown terms;
};

// Batch means of recon, KL and (when with_dr) the per-item L_DR on one
// random frame, combined with the model's weights. Draws per item, in
// order: d_z normals, then the DR frame index.
BatchLoss total_loss(const CvaeModel& model, nn::Binder& binder, const std::vector<const TrainingItem*>& batch,
                     const LossContext& ctx, bool with_dr, Rng& rng);

struct EpochStats {
    int epoch = 0;
    LossBreakdown loss;
    bool operator==(const EpochStats&) const = default;
};

inline bool operator==(const LossBreakdown& a, const LossBreakdown& b) {
    return a.recon == b.recon && a.kl == b.kl && a.dr == b.dr && a.total == b.total;
}

struct TrainState {
    CvaeModel model;
    nn::AdamW optimizer;
    int epoch = 0;
    Rng rng;
    std::vector<EpochStats> history;

    bool trained() const noexcept { return epoch > 0; }
};

struct TrainOptions {
    std::function<void(const TrainState&)> on_checkpoint;  // every checkpoint_every epochs
    std::function<void(const EpochStats&)> on_epoch;
    std::string dump_path;  // NaN diagnostics are also written here when set
};

// Mean recon over the last `window` epochs.
double smoothed_recon(const std::vector<EpochStats>& history, int window = 5);

// Builds the model from `rng`, fits the normalizer on the items, then runs
// config.epochs epochs of AdamW. The DR term is active on every dr_every-th
// step when weights.dr > 0 and an inpainter is given. Throws
// InvalidArgument on an empty dataset and NumericalError on a non-finite
// loss.
TrainState train(const std::vector<TrainingItem>& items, const ModelConfig& config, const LossContext& ctx, Rng rng,
                 const TrainOptions& options = {});

// Continues a restored state for `epochs` more epochs.
void train_more(TrainState& state, const std::vector<TrainingItem>& items, const LossContext& ctx, int epochs,
                const TrainOptions& options = {});

// z from the conditional prior of couple_labels(x_i, x_j, lambda), decoded
// to config.frames frames. Throws InvalidState on an untrained state.
MotionSequence generate(const ActionLabel& x_i, const ActionLabel& x_j, double lambda, const TrainState& state,
                        Rng& rng, const std::string& id = "generated", double fps = 30.0);

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::size_t worst_index = 0;
    std::string worst_tensor;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
    std::size_t checked = 0;

    bool passed(double tolerance) const { return max_rel_error < tolerance; }
};

// Central differences against backward() for every scalar parameter:
// max |g_a - g_fd| / max(|g_a|, |g_fd|, 1e-8). The loss builder must be
// deterministic (capture fixed noise).
GradCheckResult grad_check(nn::ParameterSet& params, const std::function<nn::Var(nn::Binder&)>& loss, double eps);

}  // namespace compose
