#pragma once

#include "compose/config.hpp"
#include "compose/cvae.hpp"
#include "compose/eval.hpp"
#include "compose/refine.hpp"

#include <nlohmann/json_fwd.hpp>

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace compose {

// Independent generator per (seed, stream name); the same pair always
// yields the same sequence of draws.
Rng stream_rng(std::uint64_t seed, std::string_view stream);

// per_kind sequences of every kind, class id = position in kinds, ids
// "<prefix>-<kind>-<k>".
std::vector<MotionSequence> generate_subaction_set(const DataConfig& data, int per_kind, const std::string& prefix,
                                                   Rng& rng);

// Composites with a fixed mixing rate and energy masks over the given
// pairs, each tagged with its pair index.
std::vector<std::pair<MotionSequence, int>> build_test_composites(const std::vector<MotionSequence>& sub_actions,
                                                                   const std::vector<std::pair<int, int>>& pairs,
                                                                   int count, double lambda, Rng& rng);

// samples_per_pair generations per pair, tagged with the pair index.
std::vector<std::pair<MotionSequence, int>> generate_for_pairs(const TrainState& state,
                                                                const std::vector<std::pair<int, int>>& pairs,
                                                                int samples_per_pair, double lambda, double fps,
                                                                Rng& rng);

// mean_fill, or patch_regressor fit on crisp renders of the sub-actions.
std::unique_ptr<Inpainter> build_inpainter(const RunConfig& cfg, const std::vector<MotionSequence>& sub_actions,
                                           Rng& rng);

struct AblationArm {
    std::string name;
    bool full_class = false;  // couple every class pair
    bool gaussian = true;     // false: uniform mixing rate
    bool energy_mask = true;  // false: E = 1 in coupling and decoupling
    bool dr = false;
};

// full_class, wo_gaussian, wo_mask, ours_wo_dr, ours_w_dr. Throws
// InvalidArgument on anything else.
AblationArm ablation_arm(const std::string& name);

struct ArmRun {
    std::vector<PseudoComposite> composites;
    TrainState state;
};

// Couples the training sub-actions the way the arm prescribes and trains a
// model on them. The seed fixes every random stream.
ArmRun train_arm(const RunConfig& cfg, const AblationArm& arm, const std::vector<MotionSequence>& train_set,
                 std::uint64_t seed, const Inpainter* inpainter);

struct ArmResult {
    std::string arm;
    std::uint64_t seed = 0;
    MetricsReport report;
    std::vector<EpochStats> history;
};

// For every seed: fresh train/test sub-actions, held-out test composites
// over the configured pairs, one classifier, then one trained model and
// report per arm. Arms share data and seeds.
std::vector<ArmResult> run_ablation(const RunConfig& cfg, const std::vector<std::string>& arms,
                                    const std::vector<std::uint64_t>& seeds,
                                    const std::function<void(const ArmResult&)>& on_result = {});

void to_json(nlohmann::json& j, const ArmResult& r);

struct ConditioningPair {
    std::pair<int, int> classes;
    int argmax_part = -1;
    std::vector<int> allowed_parts;
    bool hit = false;
};

struct ConditioningResult {
    std::vector<ConditioningPair> pairs;
    double rate = 0.0;
};

// Averages per-part energy over samples generations per pair; a pair hits
// when the argmax part is a dominant part of one of its two kinds.
ConditioningResult conditioning_check(const TrainState& state, const RunConfig& cfg,
                                      const std::vector<std::pair<int, int>>& pairs, int samples, Rng& rng);

}  // namespace compose
