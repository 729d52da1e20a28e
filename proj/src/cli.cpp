#include "compose/cli.hpp"

#include "compose/ablation.hpp"
#include "compose/checkpoint.hpp"
#include "compose/config.hpp"
#include "compose/dataset.hpp"
#include "compose/error.hpp"
#include "compose/hash.hpp"
#include "compose/refine.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <chrono>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>

namespace compose {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Options {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    bool force = false;
    std::vector<std::string> sets;
    std::string input;
    std::string policy;
    int count = -1;
    std::string dist;
};

// One command invocation inside a run directory.
class Run {
   public:
    Run(RunConfig cfg, fs::path dir) : cfg_(std::move(cfg)), dir_(std::move(dir)) {}

    const RunConfig& cfg() const { return cfg_; }
    const fs::path& dir() const { return dir_; }
    std::uint64_t seed() const { return cfg_.data.seed; }
    fs::path path(const std::string& rel) const { return dir_ / rel; }

    void record(const std::string& rel) { artifacts_.push_back(rel); }
    const std::vector<std::string>& artifacts() const { return artifacts_; }

    // Fails with a module-tagged error when a prerequisite is missing.
    fs::path need(const std::string& rel, const std::string& producer) const {
        const fs::path p = path(rel);
        if (!fs::exists(p)) throw InvalidState("cli", rel + " not found in " + dir_.string() + "; run '" + producer + "' first");
        return p;
    }

   private:
    RunConfig cfg_;
    fs::path dir_;
    std::vector<std::string> artifacts_;
};

json read_json(const fs::path& p) {
    std::ifstream in(p);
    if (!in) throw IoError("cli", "cannot read " + p.string());
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ParseError("cli", p.string() + ": " + e.what(), 0);
    }
}

void write_json(const json& j, const fs::path& p) {
    fs::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary);
    if (!out) throw IoError("cli", "cannot write " + p.string());
    out << j.dump(2) << '\n';
}

std::vector<std::string> kind_names(const RunConfig& cfg) {
    std::vector<std::string> names;
    for (auto k : cfg.data.kinds) names.emplace_back(to_string(k));
    return names;
}

PairingPolicy parse_policy_flag(const RunConfig& cfg, const std::string& text) {
    if (text == "full_class") return PairingPolicy::full_class();
    std::vector<std::pair<int, int>> pairs;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const auto colon = item.find(':');
        if (colon == std::string::npos) throw InvalidArgument("cli", "policy pairs look like kind-a:kind-b, got '" + item + "'");
        pairs.emplace_back(cfg.class_of(parse_sub_action_kind(item.substr(0, colon))),
                           cfg.class_of(parse_sub_action_kind(item.substr(colon + 1))));
    }
    if (pairs.empty()) throw InvalidArgument("cli", "empty --policy");
    return PairingPolicy::allow(std::move(pairs));
}

std::vector<MotionSequence> load_train_set(const Run& run) {
    return load_dataset(run.need("data/train.jsonl", "gen-data"), static_cast<int>(run.cfg().data.kinds.size()));
}

// ---- commands ----

void cmd_gen_data(Run& run, const Options&, std::ostream& out) {
    const auto& cfg = run.cfg();
    Rng rng = stream_rng(run.seed(), "data");
    const auto train = generate_subaction_set(cfg.data, cfg.data.train_per_kind, "train", rng);
    const auto test = generate_subaction_set(cfg.data, cfg.data.test_per_kind, "test", rng);
    fs::create_directories(run.path("data"));
    save_dataset(train, run.path("data/train.jsonl"));
    save_dataset(test, run.path("data/test.jsonl"));
    save_labels(kind_names(cfg), run.path("data/labels.json"));
    run.record("data/train.jsonl");
    run.record("data/test.jsonl");
    run.record("data/labels.json");
    out << "generated " << train.size() << " training and " << test.size() << " test sub-actions\n";
}

void cmd_couple(Run& run, const Options& o, std::ostream& out) {
    const auto& cfg = run.cfg();
    const auto data = o.input.empty() ? load_train_set(run)
                                      : load_dataset(o.input, static_cast<int>(cfg.data.kinds.size()));
    const PairingPolicy policy = o.policy.empty() ? cfg.pairing_policy() : parse_policy_flag(cfg, o.policy);
    const MixingRateDist dist = o.dist.empty() ? cfg.mixing_dist() : MixingRateDist::parse(o.dist);
    const int count = o.count > 0 ? o.count : cfg.coupling.count;
    CouplingOptions opts;
    opts.energy_mask = cfg.coupling.energy_mask;
    opts.eps_den = cfg.coupling.eps_den;
    Rng rng = stream_rng(run.seed(), "couple");
    const auto composites = build_pseudo_dataset(data, policy, count, dist, BodyPartition::standard(), rng, opts);
    save_composites(composites, run.path("composites.jsonl"));
    run.record("composites.jsonl");
    out << "coupled " << composites.size() << " pseudo-composites (" << dist.to_string() << ")\n";
}

void cmd_energy(Run& run, const Options& o, std::ostream& out) {
    const auto& cfg = run.cfg();
    const auto data = o.input.empty() ? load_train_set(run) : load_dataset(o.input);
    const auto& partition = BodyPartition::standard();
    json rows = json::array();
    for (const auto& s : data) {
        const auto e = compute_part_energy(s, partition);
        json parts = json::object();
        for (std::size_t k = 0; k < partition.size(); ++k) parts[partition.parts()[k].name] = e.per_part[k];
        rows.push_back({{"id", s.id()}, {"per_part", parts}, {"dominant_part", partition.parts()[static_cast<std::size_t>(e.dominant_part())].name}});
    }
    (void)cfg;
    write_json(rows, run.path("energy.json"));
    run.record("energy.json");
    out << "wrote part energies for " << data.size() << " sequences\n";
}

std::vector<MotionSequence> load_any(const Run& run, const Options& o) {
    if (!o.input.empty()) {
        // Composite files carry extra fields; fall back to the plain schema.
        try {
            std::vector<MotionSequence> seqs;
            for (auto& c : load_composites(o.input)) seqs.push_back(std::move(c.sequence));
            return seqs;
        } catch (const ParseError&) {
            return load_dataset(o.input);
        }
    }
    std::vector<MotionSequence> seqs;
    for (auto& c : load_composites(run.need("composites.jsonl", "couple"))) seqs.push_back(std::move(c.sequence));
    return seqs;
}

void cmd_render(Run& run, const Options& o, std::ostream& out) {
    const auto& cfg = run.cfg();
    const auto seqs = load_any(run, o);
    const std::size_t n = std::min<std::size_t>(seqs.size(), o.count > 0 ? static_cast<std::size_t>(o.count) : 4);
    fs::create_directories(run.path("render"));
    for (std::size_t k = 0; k < n; ++k) {
        const auto frontal = normalize_frontal(seqs[k]);
        const auto frames = render_sequence(frontal.sequence, cfg.camera(), cfg.render.stride, cfg.render.thickness);
        std::vector<Image> images;
        for (const auto& f : frames) images.push_back(f.pixels);
        const std::string rel = "render/" + seqs[k].id() + ".pgm";
        write_pgm(contact_sheet(images), run.path(rel));
        run.record(rel);
    }
    out << "rendered " << n << " sequences\n";
}

void cmd_decouple(Run& run, const Options& o, std::ostream& out) {
    const auto& cfg = run.cfg();
    const auto composites = load_composites(o.input.empty() ? run.need("composites.jsonl", "couple") : fs::path(o.input));
    const auto train = load_train_set(run);
    std::map<std::string, const MotionSequence*> by_id;
    for (const auto& s : train) by_id[s.id()] = &s;
    const std::size_t n = std::min<std::size_t>(composites.size(), o.count > 0 ? static_cast<std::size_t>(o.count) : 4);
    fs::create_directories(run.path("decouple"));
    json masks = json::array();
    for (std::size_t k = 0; k < n; ++k) {
        const auto& c = composites[k];
        const auto* si = by_id.count(c.source_ids.first) ? by_id.at(c.source_ids.first) : nullptr;
        const auto* sj = by_id.count(c.source_ids.second) ? by_id.at(c.source_ids.second) : nullptr;
        if (!si || !sj) throw InvalidArgument("cli", "sources of " + c.sequence.id() + " are not in the training set");
        const auto ei = compute_part_energy(resample(*si, c.sequence.length()));
        const auto ej = compute_part_energy(resample(*sj, c.sequence.length()));
        const auto frames = render_sequence(c.sequence, cfg.camera(), cfg.render.stride, cfg.render.thickness);
        std::vector<Image> sheet;
        json entry{{"id", c.sequence.id()}, {"frames", json::array()}};
        for (std::size_t f = 0; f < frames.size(); ++f) {
            const auto [mi, mj] = decouple_composite(frames[f], ei.per_joint, ej.per_joint, cfg.decouple());
            sheet.push_back(frames[f].pixels);
            sheet.push_back(mi.pixels);
            sheet.push_back(mj.pixels);
            entry["frames"].push_back({{"t", f * static_cast<std::size_t>(cfg.render.stride)},
                                       {"kept_i", mi.mask.kept_indices()},
                                       {"kept_j", mj.mask.kept_indices()}});
        }
        const std::string rel = "decouple/" + c.sequence.id() + ".pgm";
        write_pgm(contact_sheet(sheet, 3), run.path(rel));
        run.record(rel);
        masks.push_back(entry);
    }
    write_json(masks, run.path("decouple/masks.json"));
    run.record("decouple/masks.json");
    out << "decoupled " << n << " composites\n";
}

void cmd_train(Run& run, const Options&, std::ostream& out) {
    const auto& cfg = run.cfg();
    const auto composites = load_composites(run.need("composites.jsonl", "couple"));
    const auto train_set = load_train_set(run);
    const ModelConfig mc = cfg.model_config();
    const auto items = make_training_set(composites, train_set, mc.frames, BodyPartition::standard(), cfg.coupling.energy_mask);
    Rng inp_rng = stream_rng(run.seed(), "inpainter");
    const auto inpainter = build_inpainter(cfg, train_set, inp_rng);
    LossContext ctx;
    ctx.inpainter = mc.weights.dr > 0.0 ? inpainter.get() : nullptr;
    ctx.dr = cfg.dr_settings();

    std::vector<json> log;
    TrainOptions opts;
    opts.dump_path = run.path("nan_dump.json").string();
    opts.on_epoch = [&](const EpochStats& s) {
        log.push_back({{"epoch", s.epoch}, {"recon", s.loss.recon}, {"kl", s.loss.kl}, {"dr", s.loss.dr}, {"total", s.loss.total}});
    };
    std::vector<std::string> checkpoints;
    opts.on_checkpoint = [&](const TrainState& s) {
        std::ostringstream rel;
        rel << "checkpoints/epoch-" << std::setw(4) << std::setfill('0') << s.epoch << ".json";
        save_checkpoint(s, run.path(rel.str()));
        checkpoints.push_back(rel.str());
    };
    const auto start = std::chrono::steady_clock::now();
    const TrainState state = train(items, mc, ctx, stream_rng(run.seed(), "train"), opts);
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    save_checkpoint(state, run.path("checkpoint.json"));
    write_json_lines(log, run.path("train_log.jsonl"));
    run.record("checkpoint.json");
    run.record("train_log.jsonl");
    for (const auto& c : checkpoints) run.record(c);
    out << "trained " << state.epoch << " epochs in " << std::fixed << std::setprecision(1) << seconds
        << " s; recon " << std::setprecision(4) << state.history.front().loss.recon << " -> "
        << smoothed_recon(state.history) << '\n';
}

void cmd_sample(Run& run, const Options& o, std::ostream& out) {
    const auto& cfg = run.cfg();
    const TrainState state = load_checkpoint(run.need("checkpoint.json", "train"));
    Rng rng = stream_rng(run.seed(), "sample");
    const int per_pair = o.count > 0 ? o.count : cfg.eval.samples_per_pair;
    const auto generated = generate_for_pairs(state, cfg.admitted_pairs(), per_pair, cfg.eval.gen_lambda, cfg.data.fps, rng);
    std::vector<MotionSequence> seqs;
    for (const auto& [s, c] : generated) seqs.push_back(s);
    save_dataset(seqs, run.path("generated.jsonl"));
    run.record("generated.jsonl");
    out << "sampled " << seqs.size() << " sequences\n";
}

void cmd_refine_eval(Run& run, const Options& o, std::ostream& out) {
    const auto& cfg = run.cfg();
    const TrainState state = load_checkpoint(run.need("checkpoint.json", "train"));
    const auto composites = load_composites(o.input.empty() ? run.need("composites.jsonl", "couple") : fs::path(o.input));
    const auto train_set = load_train_set(run);
    std::map<std::string, const MotionSequence*> by_id;
    for (const auto& s : train_set) by_id[s.id()] = &s;
    Rng inp_rng = stream_rng(run.seed(), "inpainter");
    const auto inpainter = build_inpainter(cfg, train_set, inp_rng);
    RefineConfig rc{cfg.decouple(), cfg.camera(), cfg.refine.stride, cfg.render.thickness};
    const std::size_t n = std::min<std::size_t>(composites.size(), o.count > 0 ? static_cast<std::size_t>(o.count) : composites.size());
    const int T = state.model.config().frames;
    double generated_total = 0.0, composite_total = 0.0;
    json rows = json::array();
    for (std::size_t k = 0; k < n; ++k) {
        const auto& c = composites[k];
        if (!by_id.count(c.source_ids.first) || !by_id.count(c.source_ids.second)) {
            throw InvalidArgument("cli", "sources of " + c.sequence.id() + " are not in the training set");
        }
        const MotionSequence si = resample(*by_id.at(c.source_ids.first), T);
        const MotionSequence sj = resample(*by_id.at(c.source_ids.second), T);
        const auto ei = compute_part_energy(si), ej = compute_part_energy(sj);
        const MotionSequence target = resample(c.sequence, T);
        // Posterior-mean reconstruction of the composite.
        const DiagonalGaussian q = state.model.encode(c.mixed_label, to_matrix(target.frames()));
        const auto recon = from_matrix(state.model.decode(c.mixed_label, q.mean, T));
        const double lg = refinement_pass(recon, si, sj, ei, ej, *inpainter, rc);
        const double lc = refinement_pass(target.frames(), si, sj, ei, ej, *inpainter, rc);
        generated_total += lg;
        composite_total += lc;
        rows.push_back({{"id", c.sequence.id()}, {"l_dr_generated", lg}, {"l_dr_composite", lc}});
    }
    const json report{{"inpainter", inpainter->name()},
                      {"count", n},
                      {"mean_l_dr_generated", n ? generated_total / static_cast<double>(n) : 0.0},
                      {"mean_l_dr_composite", n ? composite_total / static_cast<double>(n) : 0.0},
                      {"per_sequence", rows}};
    write_json(report, run.path("refine_eval.json"));
    run.record("refine_eval.json");
    out << report["mean_l_dr_generated"].get<double>() << '\n';
}

json fingerprinted(const Run& run, const MetricsReport& r) {
    json j = r;
    j["config_fingerprint"] = sha1_hex(to_json(run.cfg()).dump());
    return j;
}

void cmd_evaluate(Run& run, const Options&, std::ostream& out) {
    const auto& cfg = run.cfg();
    const TrainState state = load_checkpoint(run.need("checkpoint.json", "train"));
    const auto test_set = load_dataset(run.need("data/test.jsonl", "gen-data"), static_cast<int>(cfg.data.kinds.size()));
    const auto pairs = cfg.admitted_pairs();
    Rng test_rng = stream_rng(run.seed(), "test-composites");
    const auto real = build_test_composites(test_set, pairs, cfg.coupling.test_count, cfg.coupling.test_lambda, test_rng);
    std::vector<MotionSequence> real_seqs;
    std::vector<int> labels;
    for (const auto& [s, c] : real) {
        real_seqs.push_back(s);
        labels.push_back(c);
    }
    Rng cls_rng = stream_rng(run.seed(), "classifier");
    const auto classifier = ActionClassifier::train(real_seqs, labels, std::max<int>(2, static_cast<int>(pairs.size())),
                                                    cfg.eval.classifier, cls_rng);
    Rng gen_rng = stream_rng(run.seed(), "generate");
    const auto generated = generate_for_pairs(state, pairs, cfg.eval.samples_per_pair, cfg.eval.gen_lambda, cfg.data.fps, gen_rng);
    Rng eval_rng = stream_rng(run.seed(), "evaluate");
    EvalSettings settings{cfg.eval.extractor, cfg.eval.n_pairs, cfg.eval.bootstrap, cfg.eval.classifier};
    MetricsReport report = evaluate_generations(real, generated, classifier, settings, eval_rng);
    report.seeds = {run.seed()};
    const json j = fingerprinted(run, report);
    write_json(j, run.path("metrics.json"));
    run.record("metrics.json");
    out << j.dump(2) << '\n';
}

void cmd_ablate(Run& run, const Options&, std::ostream& out) {
    const auto& cfg = run.cfg();
    json rows = json::array();
    run_ablation(cfg, cfg.eval.arms, cfg.eval.ablation_seeds, [&](const ArmResult& r) {
        json row = r;
        row["metrics"] = fingerprinted(run, r.report);
        rows.push_back(row);
        out << r.arm << " seed " << r.seed << ": FID " << r.report.fid << ", acc " << r.report.accuracy << '\n';
    });
    write_json(json{{"arms", cfg.eval.arms}, {"seeds", cfg.eval.ablation_seeds}, {"results", rows}}, run.path("ablation.json"));
    run.record("ablation.json");
}

using Command = void (*)(Run&, const Options&, std::ostream&);

const std::map<std::string, std::pair<Command, std::string>>& commands() {
    static const std::map<std::string, std::pair<Command, std::string>> table{
        {"gen-data", {cmd_gen_data, "Generate training and held-out test sub-actions"}},
        {"couple", {cmd_couple, "Couple sub-actions into pseudo-composites"}},
        {"energy", {cmd_energy, "Report per-part motion energies of a dataset"}},
        {"render", {cmd_render, "Render sequences to PGM contact sheets"}},
        {"decouple", {cmd_decouple, "Render composites and write both decoupled masked images"}},
        {"train", {cmd_train, "Train the CVAE on the pseudo-composites"}},
        {"sample", {cmd_sample, "Generate compositional sequences from a checkpoint"}},
        {"refine-eval", {cmd_refine_eval, "Report the decoupling-refinement loss of reconstructions"}},
        {"evaluate", {cmd_evaluate, "FID, accuracy, diversity and multimodality of generations"}},
        {"ablate", {cmd_ablate, "Run the ablation arms over the configured seeds"}},
    };
    return table;
}

json command_args(const Options& o) {
    return json{{"input", o.input}, {"policy", o.policy}, {"count", o.count}, {"dist", o.dist}};
}

// True when the manifest shows this exact invocation finished and its
// artifacts are unchanged on disk.
bool already_done(const json& manifest, const std::string& name, const json& args, const fs::path& dir) {
    if (!manifest.contains("commands") || !manifest["commands"].contains(name)) return false;
    const auto& entry = manifest["commands"][name];
    if (entry.value("args", json()) != args) return false;
    for (const auto& [rel, hash] : entry.at("artifacts").items()) {
        const fs::path p = dir / rel;
        if (!fs::exists(p) || git_blob_sha1_file(p) != hash.get<std::string>()) return false;
    }
    return true;
}

int dispatch(const std::string& name, const Options& o, std::ostream& out) {
    std::vector<std::string> overrides = o.sets;
    RunConfig cfg = load_run_config(o.config, overrides);
    if (o.seed) cfg.data.seed = *o.seed;
    if (!o.out.empty()) cfg.output_dir = o.out;

    const json canonical = to_json(cfg);
    json identity = canonical;
    identity.erase("output_dir");
    const std::string run_id = sha1_hex(identity.dump() + "\nseed=" + std::to_string(cfg.data.seed)).substr(0, 12);
    const fs::path dir = fs::path(cfg.output_dir) / run_id;
    fs::create_directories(dir);

    const fs::path manifest_path = dir / "manifest.json";
    json manifest = fs::exists(manifest_path) ? read_json(manifest_path)
                                              : json{{"run_id", run_id}, {"seed", cfg.data.seed}, {"config", canonical},
                                                     {"commands", json::object()}};
    const json args = command_args(o);
    if (!o.force && already_done(manifest, name, args, dir)) {
        out << name << ": up to date in " << dir.string() << " (use --force to rerun)\n";
        return 0;
    }
    write_json(canonical, dir / "config.json");

    Run run(cfg, dir);
    commands().at(name).first(run, o, out);

    json artifacts = json::object();
    for (const auto& rel : run.artifacts()) artifacts[rel] = git_blob_sha1_file(dir / rel);
    manifest["config"] = canonical;
    manifest["commands"][name] = {{"args", args}, {"artifacts", artifacts}, {"stream_seed", cfg.data.seed}};
    write_json(manifest, manifest_path);
    out << name << ": " << run.artifacts().size() << " artifact(s) in " << dir.string() << '\n';
    return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Compositional 3D action generation from sub-action pairs", "compose_motion"};
    app.require_subcommand(1, 1);
    Options o;
    std::map<std::string, CLI::App*> subs;
    for (const auto& [name, entry] : commands()) {
        CLI::App* sub = app.add_subcommand(name, entry.second);
        sub->add_option("--config", o.config, "Run config (JSON)")->required()->check(CLI::ExistingFile);
        sub->add_option("--seed", o.seed, "Override data.seed");
        sub->add_option("--out", o.out, "Override output_dir");
        sub->add_flag("--force", o.force, "Rerun even if the manifest says this step is done");
        sub->add_option("--set", o.sets, "Dotted config override key=value (repeatable)");
        if (name == "couple" || name == "energy" || name == "render" || name == "decouple" || name == "refine-eval") {
            sub->add_option("--input", o.input, "Input dataset instead of the run's default");
        }
        if (name == "couple") {
            sub->add_option("--policy", o.policy, "full_class or kind-a:kind-b,...");
            sub->add_option("--dist", o.dist, "Mixing-rate distribution, e.g. gaussian:0.1");
        }
        if (name == "couple" || name == "render" || name == "decouple" || name == "sample" || name == "refine-eval") {
            sub->add_option("--count", o.count, "Number of outputs");
        }
        subs[name] = sub;
    }

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "[cli] " << e.what() << '\n';
        return 2;
    }
    std::string name;
    for (const auto& [n, sub] : subs) {
        if (sub->parsed()) name = n;
    }
    try {
        return dispatch(name, o, out);
    } catch (const ConfigError& e) {
        err << "[config] " << e.what() << '\n';
        return 2;
    } catch (const Error& e) {
        err << '[' << e.module() << "] " << e.what() << '\n';
        return 1;
    } catch (const fs::filesystem_error& e) {
        err << "[io] " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        err << "[internal] " << e.what() << '\n';
        return 1;
    }
}

}  // namespace compose
