#pragma once

#include "compose/coupling.hpp"
#include "compose/cvae.hpp"
#include "compose/decouple.hpp"
#include "compose/eval.hpp"
#include "compose/motion.hpp"
#include "compose/render.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace compose {

struct DataConfig {
    std::vector<SubActionKind> kinds{SubActionKind::ArmWaveLeft, SubActionKind::ArmWaveRight, SubActionKind::LegMarch,
                                     SubActionKind::LegKick};
    int frames = 16;
    int train_per_kind = 10;
    int test_per_kind = 10;
    std::uint64_t seed = 7;
    double fps = 30.0;
    GeneratorParams generator;
};

struct CouplingConfig {
    std::string dist = "gaussian:0.1";
    // Empty means every class pair; otherwise pairs of kind names.
    std::vector<std::pair<std::string, std::string>> pairs;
    int count = 200;
    bool energy_mask = true;
    double eps_den = 1e-12;
    int test_count = 200;
    double test_lambda = 0.5;
};

struct RenderSection {
    int height = 64;
    int width = 64;
    double scale = 28.0;
    double principal_x = 32.0;
    double principal_y = 28.0;
    int patch = 8;
    double rho = 1.0 / 3.0;
    double eps_pix = 1.0;
    double fill = 0.5;
    double thickness = 2.0;
    double splat_sigma = 1.0;
    int splat_samples = 5;
    int stride = 4;
};

struct RefineSection {
    std::string inpainter = "mean_fill";  // or "patch_regressor"
    int stride = 4;                       // frame stride of the refinement pass
    int dr_every = 4;                     // training steps between DR terms
    int masks_per_image = 4;              // patch regressor corpus
};

struct EvalSection {
    std::string extractor = "handcrafted";
    int n_pairs = 200;
    int bootstrap = 20;
    int samples_per_pair = 32;
    double gen_lambda = 0.5;
    ClassifierConfig classifier;
    std::vector<std::uint64_t> ablation_seeds{1, 2, 3, 4, 5};
    std::vector<std::string> arms{"full_class", "wo_gaussian", "wo_mask", "ours_wo_dr", "ours_w_dr"};
};

struct RunConfig {
    DataConfig data;
    CouplingConfig coupling;
    RenderSection render;
    ModelConfig model;
    RefineSection refine;
    EvalSection eval;
    std::string output_dir = "runs";

    CameraConfig camera() const;
    DecoupleConfig decouple() const;
    SplatConfig splat() const;
    DrSettings dr_settings() const;
    MixingRateDist mixing_dist() const;
    PairingPolicy pairing_policy() const;
    // Class ids are positions in data.kinds.
    int class_of(SubActionKind kind) const;
    // Admitted class pairs (a < b), sorted; index = composite class.
    std::vector<std::pair<int, int>> admitted_pairs() const;
    // Model config with num_classes, frames and dr_every filled in.
    ModelConfig model_config() const;
};

// Strict: unknown keys and wrong types raise ConfigError with the dotted
// path of the offending field. Missing keys keep their defaults.
RunConfig parse_run_config(const nlohmann::json& j);
nlohmann::json to_json(const RunConfig& c);

ModelConfig parse_model_config(const nlohmann::json& j, const std::string& path = "model");
nlohmann::json to_json(const ModelConfig& c);

// "a.b.c=value": value is parsed as JSON when possible, else taken as a
// string. Intermediate objects are created as needed.
void apply_override(nlohmann::json& j, const std::string& assignment);

// Reads the file (IoError / ConfigError on bad JSON), applies overrides,
// then parses.
RunConfig load_run_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});

}  // namespace compose
