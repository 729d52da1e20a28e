#pragma once

#include "compose/energy.hpp"
#include "compose/motion.hpp"

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace compose {

// Distribution of the mixing rate lambda.
class MixingRateDist {
   public:
    enum class Kind { Gaussian, Beta, Uniform, Fixed };

    static MixingRateDist gaussian(double stddev);  // mean 0.5, rejection-truncated to [0, 1]
    static MixingRateDist beta(double alpha);       // Beta(alpha, alpha)
    static MixingRateDist uniform();
    static MixingRateDist fixed(double lambda);

    // "gaussian:0.1", "beta:0.4", "uniform", "fixed:0.5". Throws InvalidArgument.
    static MixingRateDist parse(const std::string& text);
    std::string to_string() const;

    Kind kind() const noexcept { return kind_; }
    double parameter() const noexcept { return param_; }

    double sample(Rng& rng) const;

   private:
    MixingRateDist(Kind kind, double param) : kind_(kind), param_(param) {}

    Kind kind_;
    double param_;
};

inline double sample_lambda(const MixingRateDist& dist, Rng& rng) { return dist.sample(rng); }

// weights[class_i] = lambda, weights[class_j] = 1 - lambda.
MixedLabel couple_labels(const ActionLabel& x_i, const ActionLabel& x_j, double lambda);

// Energy-weighted per-joint blend of two equal-length sequences. Where the
// weighted energy denominator falls below eps_den the plain convex mix
// lambda * y_i + (1 - lambda) * y_j is used.
std::vector<Pose> couple_sequences(const std::vector<Pose>& y_i, const std::vector<Pose>& y_j,
                                   const PartEnergy& e_i, const PartEnergy& e_j, double lambda,
                                   double eps_den = 1e-12);

struct PseudoComposite {
    MotionSequence sequence;  // carries the mixed label
    MixedLabel mixed_label;
    double lambda;
    std::pair<std::string, std::string> source_ids;
    std::pair<int, int> source_classes;
};

// Unordered class pairs eligible for coupling.
class PairingPolicy {
   public:
    static PairingPolicy full_class();
    // Throws InvalidArgument on a pair with equal classes.
    static PairingPolicy allow(std::vector<std::pair<int, int>> pairs);

    bool is_full_class() const noexcept { return full_class_; }
    bool admits(int a, int b) const;
    // Admitted pairs (a < b) among the given classes, sorted.
    std::vector<std::pair<int, int>> pairs_among(const std::vector<int>& classes) const;

   private:
    bool full_class_ = false;
    std::vector<std::pair<int, int>> pairs_;  // normalized a < b, sorted, unique
};

struct CouplingOptions {
    bool energy_mask = true;  // false: every joint weighted 1 (plain lambda mix)
    double eps_den = 1e-12;
};

// count composites; pair chosen uniformly over admitted class pairs, then a
// sequence uniformly within each class. Unequal lengths are resampled to the
// shorter one. Throws InvalidArgument when fewer than two classes are present
// or the policy admits no pair.
std::vector<PseudoComposite> build_pseudo_dataset(const std::vector<MotionSequence>& data,
                                                  const PairingPolicy& policy, int count,
                                                  const MixingRateDist& dist, const BodyPartition& partition,
                                                  Rng& rng, const CouplingOptions& options = {});

// JSON Lines: the dataset schema plus "lambda", "sources", "source_classes"
// and "mixed_label".
void save_composites(const std::vector<PseudoComposite>& composites, const std::filesystem::path& path);
std::vector<PseudoComposite> load_composites(const std::filesystem::path& path);

}  // namespace compose
