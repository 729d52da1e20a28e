#include "compose/ablation.hpp"

#include "compose/error.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <map>
#include <sstream>

namespace compose {

Rng stream_rng(std::uint64_t seed, std::string_view stream) {
    std::uint64_t h = 1469598103934665603ULL;  // FNV-1a
    for (unsigned char c : stream) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(h >> 32)};
    return Rng(seq);
}

std::vector<MotionSequence> generate_subaction_set(const DataConfig& data, int per_kind, const std::string& prefix,
                                                   Rng& rng) {
    std::vector<MotionSequence> out;
    const int classes = static_cast<int>(data.kinds.size());
    GeneratorParams params = data.generator;
    params.fps = data.fps;
    for (int c = 0; c < classes; ++c) {
        const auto kind = data.kinds[static_cast<std::size_t>(c)];
        for (int k = 0; k < per_kind; ++k) {
            std::ostringstream id;
            id << prefix << '-' << to_string(kind) << '-' << k;
            out.push_back(generate_sub_action(kind, data.frames, rng, params, ActionLabel(c, classes), id.str()));
        }
    }
    return out;
}

std::vector<std::pair<MotionSequence, int>> build_test_composites(const std::vector<MotionSequence>& sub_actions,
                                                                   const std::vector<std::pair<int, int>>& pairs,
                                                                   int count, double lambda, Rng& rng) {
    if (pairs.empty()) throw InvalidArgument("eval", "no composite pairs to evaluate");
    const auto composites = build_pseudo_dataset(sub_actions, PairingPolicy::allow(pairs), count,
                                                 MixingRateDist::fixed(lambda), BodyPartition::standard(), rng);
    std::vector<std::pair<MotionSequence, int>> out;
    out.reserve(composites.size());
    for (const auto& c : composites) {
        auto key = c.source_classes;
        if (key.first > key.second) std::swap(key.first, key.second);
        const auto it = std::find(pairs.begin(), pairs.end(), key);
        out.emplace_back(c.sequence, static_cast<int>(it - pairs.begin()));
    }
    return out;
}

std::vector<std::pair<MotionSequence, int>> generate_for_pairs(const TrainState& state,
                                                                const std::vector<std::pair<int, int>>& pairs,
                                                                int samples_per_pair, double lambda, double fps,
                                                                Rng& rng) {
    const int classes = state.model.config().num_classes;
    std::vector<std::pair<MotionSequence, int>> out;
    for (std::size_t p = 0; p < pairs.size(); ++p) {
        const ActionLabel a(pairs[p].first, classes), b(pairs[p].second, classes);
        for (int k = 0; k < samples_per_pair; ++k) {
            const std::string id = "gen-" + std::to_string(pairs[p].first) + "-" + std::to_string(pairs[p].second) + "-" +
                                   std::to_string(k);
            out.emplace_back(generate(a, b, lambda, state, rng, id, fps), static_cast<int>(p));
        }
    }
    return out;
}

std::unique_ptr<Inpainter> build_inpainter(const RunConfig& cfg, const std::vector<MotionSequence>& sub_actions,
                                           Rng& rng) {
    if (cfg.refine.inpainter == "mean_fill") return std::make_unique<MeanFillInpainter>();
    if (cfg.refine.inpainter != "patch_regressor") {
        throw InvalidArgument("refine", "unknown inpainter '" + cfg.refine.inpainter + "'");
    }
    std::vector<RenderedFrame> corpus;
    for (const auto& s : sub_actions) {
        auto frames = render_sequence(s, cfg.camera(), cfg.render.stride, cfg.render.thickness);
        corpus.insert(corpus.end(), frames.begin(), frames.end());
    }
    const auto samples = PatchRegressorInpainter::make_samples(corpus, cfg.decouple(), cfg.refine.masks_per_image, rng);
    return std::make_unique<PatchRegressorInpainter>(PatchRegressorInpainter::fit(samples));
}

AblationArm ablation_arm(const std::string& name) {
    AblationArm a;
    a.name = name;
    if (name == "full_class") {
        a.full_class = true;
    } else if (name == "wo_gaussian") {
        a.gaussian = false;
    } else if (name == "wo_mask") {
        a.energy_mask = false;
    } else if (name == "ours_w_dr") {
        a.dr = true;
    } else if (name != "ours_wo_dr") {
        throw InvalidArgument("eval", "unknown ablation arm '" + name + "'");
    }
    return a;
}

ArmRun train_arm(const RunConfig& cfg, const AblationArm& arm, const std::vector<MotionSequence>& train_set,
                 std::uint64_t seed, const Inpainter* inpainter) {
    const PairingPolicy policy = arm.full_class ? PairingPolicy::full_class() : cfg.pairing_policy();
    const MixingRateDist dist = arm.gaussian ? cfg.mixing_dist() : MixingRateDist::uniform();
    CouplingOptions opts;
    opts.energy_mask = arm.energy_mask;
    opts.eps_den = cfg.coupling.eps_den;
    Rng couple_rng = stream_rng(seed, "couple");
    auto composites = build_pseudo_dataset(train_set, policy, cfg.coupling.count, dist, BodyPartition::standard(),
                                           couple_rng, opts);

    ModelConfig mc = cfg.model_config();
    if (!arm.dr) mc.weights.dr = 0.0;
    const auto items = make_training_set(composites, train_set, mc.frames, BodyPartition::standard(), arm.energy_mask);
    LossContext ctx;
    ctx.inpainter = arm.dr ? inpainter : nullptr;
    ctx.dr = cfg.dr_settings();
    TrainState state = train(items, mc, ctx, stream_rng(seed, "train"));
    return {std::move(composites), std::move(state)};
}

std::vector<ArmResult> run_ablation(const RunConfig& cfg, const std::vector<std::string>& arms,
                                    const std::vector<std::uint64_t>& seeds,
                                    const std::function<void(const ArmResult&)>& on_result) {
    if (arms.empty() || seeds.empty()) throw InvalidArgument("eval", "ablation needs at least one arm and one seed");
    std::vector<AblationArm> specs;
    for (const auto& name : arms) specs.push_back(ablation_arm(name));
    const auto pairs = cfg.admitted_pairs();
    std::vector<ArmResult> results;
    for (const auto seed : seeds) {
        Rng data_rng = stream_rng(seed, "data");
        const auto train_set = generate_subaction_set(cfg.data, cfg.data.train_per_kind, "train", data_rng);
        const auto test_set = generate_subaction_set(cfg.data, cfg.data.test_per_kind, "test", data_rng);
        Rng test_rng = stream_rng(seed, "test-composites");
        const auto real = build_test_composites(test_set, pairs, cfg.coupling.test_count, cfg.coupling.test_lambda, test_rng);
        std::vector<MotionSequence> real_seqs;
        std::vector<int> real_labels;
        for (const auto& [s, c] : real) {
            real_seqs.push_back(s);
            real_labels.push_back(c);
        }
        Rng cls_rng = stream_rng(seed, "classifier");
        const auto classifier = ActionClassifier::train(real_seqs, real_labels, std::max<int>(2, static_cast<int>(pairs.size())),
                                                        cfg.eval.classifier, cls_rng);
        Rng inp_rng = stream_rng(seed, "inpainter");
        const auto inpainter = build_inpainter(cfg, train_set, inp_rng);

        for (const auto& arm : specs) {
            ArmRun run = train_arm(cfg, arm, train_set, seed, inpainter.get());
            Rng gen_rng = stream_rng(seed, "generate");
            const auto generated = generate_for_pairs(run.state, pairs, cfg.eval.samples_per_pair, cfg.eval.gen_lambda,
                                                      cfg.data.fps, gen_rng);
            Rng eval_rng = stream_rng(seed, "evaluate");
            EvalSettings settings{cfg.eval.extractor, cfg.eval.n_pairs, cfg.eval.bootstrap, cfg.eval.classifier};
            ArmResult r{arm.name, seed, evaluate_generations(real, generated, classifier, settings, eval_rng),
                        run.state.history};
            r.report.seeds = {seed};
            results.push_back(std::move(r));
            if (on_result) on_result(results.back());
        }
    }
    return results;
}

void to_json(nlohmann::json& j, const ArmResult& r) {
    nlohmann::json history = nlohmann::json::array();
    for (const auto& h : r.history) {
        history.push_back({{"epoch", h.epoch}, {"recon", h.loss.recon}, {"kl", h.loss.kl}, {"dr", h.loss.dr}, {"total", h.loss.total}});
    }
    j = nlohmann::json{{"arm", r.arm}, {"seed", r.seed}, {"metrics", r.report}, {"history", history}};
}

ConditioningResult conditioning_check(const TrainState& state, const RunConfig& cfg,
                                      const std::vector<std::pair<int, int>>& pairs, int samples, Rng& rng) {
    if (pairs.empty() || samples < 1) throw InvalidArgument("eval", "conditioning check needs pairs and samples");
    const auto& partition = BodyPartition::standard();
    const auto generated = generate_for_pairs(state, pairs, samples, cfg.eval.gen_lambda, cfg.data.fps, rng);
    ConditioningResult out;
    int hits = 0;
    for (std::size_t p = 0; p < pairs.size(); ++p) {
        std::vector<double> mean(partition.size(), 0.0);
        for (const auto& [seq, idx] : generated) {
            if (idx != static_cast<int>(p)) continue;
            const auto e = compute_part_energy(seq, partition);
            for (std::size_t k = 0; k < mean.size(); ++k) mean[k] += e.per_part[k] / samples;
        }
        ConditioningPair cp;
        cp.classes = pairs[p];
        cp.argmax_part = static_cast<int>(std::max_element(mean.begin(), mean.end()) - mean.begin());
        for (int c : {pairs[p].first, pairs[p].second}) {
            cp.allowed_parts.push_back(
                partition.index_of(dominant_part(cfg.data.kinds.at(static_cast<std::size_t>(c)))));
        }
        cp.hit = std::find(cp.allowed_parts.begin(), cp.allowed_parts.end(), cp.argmax_part) != cp.allowed_parts.end();
        hits += cp.hit;
        out.pairs.push_back(std::move(cp));
    }
    out.rate = static_cast<double>(hits) / static_cast<double>(pairs.size());
    return out;
}

}  // namespace compose
