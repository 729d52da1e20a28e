#pragma once

#include "compose/energy.hpp"
#include "compose/motion.hpp"
#include "compose/nn/layers.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <memory>
#include <nlohmann/json_fwd.hpp>
#include <string>
#include <utility>
#include <vector>

namespace compose {

// Per joint axis: mean and std of positions, mean and std of frame
// differences (4 * 72), then one energy per body part.
int handcrafted_dim(const BodyPartition& partition = BodyPartition::standard());
Eigen::VectorXd handcrafted_features(const MotionSequence& seq,
                                     const BodyPartition& partition = BodyPartition::standard());

struct ClassifierConfig {
    int hidden = 32;
    int epochs = 300;
    double lr = 1e-2;
    double weight_decay = 1e-4;
    double std_floor = 1e-3;  // feature standardization floor
};

// Standardized handcrafted features -> GELU hidden layer -> class logits.
// The hidden activations double as learned features.
class ActionClassifier {
   public:
    ActionClassifier() = default;

    // Full-batch AdamW on cross entropy. Throws InvalidArgument on empty or
    // inconsistent input.
    static ActionClassifier train(const std::vector<MotionSequence>& sequences, const std::vector<int>& labels,
                                  int num_classes, const ClassifierConfig& config, Rng& rng);

    bool trained() const noexcept { return trained_; }
    int num_classes() const noexcept { return num_classes_; }
    int hidden_dim() const noexcept { return config_.hidden; }

    // Throws InvalidState when untrained.
    int predict(const MotionSequence& seq) const;
    Eigen::VectorXd penultimate(const MotionSequence& seq) const;

   private:
    Eigen::RowVectorXd standardize(const MotionSequence& seq) const;

    bool trained_ = false;
    int num_classes_ = 0;
    ClassifierConfig config_;
    Eigen::RowVectorXd mean_, scale_;
    nn::ParameterSet params_;
    nn::Linear hidden_, out_;
};

class FeatureExtractor {
   public:
    static FeatureExtractor handcrafted(const BodyPartition& partition = BodyPartition::standard());
    static FeatureExtractor classifier(std::shared_ptr<const ActionClassifier> model);

    std::string name() const;
    int dim() const;
    Eigen::VectorXd extract(const MotionSequence& seq) const;

   private:
    BodyPartition partition_ = BodyPartition::standard();
    std::shared_ptr<const ActionClassifier> classifier_;
};

inline Eigen::VectorXd extract_features(const MotionSequence& seq, const FeatureExtractor& fx) { return fx.extract(seq); }
// One row per sequence; extraction runs in parallel.
Eigen::MatrixXd extract_all(const std::vector<MotionSequence>& seqs, const FeatureExtractor& fx);

struct GaussianStats {
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;
};

// Rows are samples. Unbiased covariance, symmetrized. Throws
// InvalidArgument on fewer than two rows.
GaussianStats gaussian_stats(const Eigen::MatrixXd& features);

// Symmetric eigendecomposition with eigenvalues clamped at 0. Throws
// InvalidArgument when M is asymmetric beyond 1e-8 (relative). The largest
// clamped magnitude is reported through `clamped` when given.
Eigen::MatrixXd matrix_sqrt_psd(const Eigen::MatrixXd& m, double* clamped = nullptr);

// |mu_t - mu_g|^2 + tr(S_t) + tr(S_g) - 2 tr((S_t^1/2 S_g S_t^1/2)^1/2),
// the cross term averaged over both orders so the result is exactly
// symmetric, clamped at 0.
double fid(const GaussianStats& t, const GaussianStats& g);

// Fraction of sequences the classifier assigns to the intended class.
double accuracy(const ActionClassifier& model, const std::vector<std::pair<MotionSequence, int>>& labeled);

// Mean Euclidean distance between n_pairs random row pairs (i != j).
double diversity(const Eigen::MatrixXd& features, int n_pairs, Rng& rng);
// diversity within each group, averaged over groups.
double multimodality(const std::vector<Eigen::MatrixXd>& groups, int n_pairs, Rng& rng);
// Exhaustive mean over all unordered pairs, for reference.
double mean_pairwise_distance(const Eigen::MatrixXd& features);

struct MetricsReport {
    double fid = 0.0;
    double accuracy = 0.0;
    double diversity = 0.0;
    double multimodality = 0.0;
    double fid_pm = 0.0;
    double accuracy_pm = 0.0;
    double diversity_pm = 0.0;
    double multimodality_pm = 0.0;
    std::string fingerprint;
    std::vector<std::uint64_t> seeds;

    // Throws ValidationError unless every value is finite and every half
    // width is >= 0.
    void validate() const;
};

void to_json(nlohmann::json& j, const MetricsReport& r);

struct EvalSettings {
    std::string extractor = "handcrafted";  // or "classifier"
    int n_pairs = 200;
    int bootstrap = 20;
    ClassifierConfig classifier;
};

// Compares generations against real test composites. Both lists carry the
// composite class (pair index) of each sequence. The classifier must be
// trained on the real list. Bootstrap half-widths are 1.96 standard
// deviations over resamples of both sets.
MetricsReport evaluate_generations(const std::vector<std::pair<MotionSequence, int>>& real,
                                   const std::vector<std::pair<MotionSequence, int>>& generated,
                                   const ActionClassifier& classifier, const EvalSettings& settings, Rng& rng);

}  // namespace compose
