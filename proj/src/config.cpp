#include "compose/config.hpp"

#include "compose/error.hpp"

#include <algorithm>
#include <fstream>
#include <set>

namespace compose {

using nlohmann::json;

namespace {

// Tracks which keys of one object were read; finish() rejects the rest.
class ObjectReader {
   public:
    ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError(path_.empty() ? "<root>" : path_, "expected an object");
    }

    std::string child(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    const json* find(const std::string& key) {
        seen_.insert(key);
        auto it = j_.find(key);
        return it == j_.end() ? nullptr : &*it;
    }

    void get(const std::string& key, int& out) {
        if (const json* v = find(key)) {
            if (!v->is_number_integer()) throw ConfigError(child(key), "expected an integer");
            const auto x = v->get<long long>();
            if (x < INT32_MIN || x > INT32_MAX) throw ConfigError(child(key), "integer out of range");
            out = static_cast<int>(x);
        }
    }
    void get(const std::string& key, std::uint64_t& out) {
        if (const json* v = find(key)) out = as_u64(*v, child(key));
    }
    void get(const std::string& key, double& out) {
        if (const json* v = find(key)) {
            if (!v->is_number()) throw ConfigError(child(key), "expected a number");
            out = v->get<double>();
        }
    }
    void get(const std::string& key, bool& out) {
        if (const json* v = find(key)) {
            if (!v->is_boolean()) throw ConfigError(child(key), "expected a boolean");
            out = v->get<bool>();
        }
    }
    void get(const std::string& key, std::string& out) {
        if (const json* v = find(key)) {
            if (!v->is_string()) throw ConfigError(child(key), "expected a string");
            out = v->get<std::string>();
        }
    }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it) {
            if (!seen_.count(it.key())) throw ConfigError(child(it.key()), "unknown key");
        }
    }

    static std::uint64_t as_u64(const json& v, const std::string& path) {
        if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<long long>() < 0)) {
            throw ConfigError(path, "expected a non-negative integer");
        }
        return v.get<std::uint64_t>();
    }

   private:
    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

void require(bool ok, const std::string& path, const std::string& message) {
    if (!ok) throw ConfigError(path, message);
}

}  // namespace

ModelConfig parse_model_config(const json& j, const std::string& path) {
    ModelConfig c;
    ObjectReader r(j, path);
    r.get("num_classes", c.num_classes);
    r.get("frames", c.frames);
    r.get("latent_dim", c.latent_dim);
    r.get("embed_dim", c.embed_dim);
    r.get("width", c.width);
    r.get("heads", c.heads);
    r.get("ffn_hidden", c.ffn_hidden);
    r.get("encoder_layers", c.encoder_layers);
    r.get("decoder_layers", c.decoder_layers);
    r.get("prior_hidden", c.prior_hidden);
    if (const json* w = r.find("weights")) {
        ObjectReader wr(*w, r.child("weights"));
        wr.get("recon", c.weights.recon);
        wr.get("kl", c.weights.kl);
        wr.get("dr", c.weights.dr);
        wr.finish();
    }
    r.get("lr", c.lr);
    r.get("weight_decay", c.weight_decay);
    r.get("batch_size", c.batch_size);
    r.get("epochs", c.epochs);
    r.get("dr_every", c.dr_every);
    r.get("checkpoint_every", c.checkpoint_every);
    r.get("std_floor", c.std_floor);
    r.finish();
    try {
        c.validate();
    } catch (const InvalidArgument& e) {
        throw ConfigError(path, e.what());
    }
    return c;
}

json to_json(const ModelConfig& c) {
    return json{{"num_classes", c.num_classes},
                {"frames", c.frames},
                {"latent_dim", c.latent_dim},
                {"embed_dim", c.embed_dim},
                {"width", c.width},
                {"heads", c.heads},
                {"ffn_hidden", c.ffn_hidden},
                {"encoder_layers", c.encoder_layers},
                {"decoder_layers", c.decoder_layers},
                {"prior_hidden", c.prior_hidden},
                {"weights", {{"recon", c.weights.recon}, {"kl", c.weights.kl}, {"dr", c.weights.dr}}},
                {"lr", c.lr},
                {"weight_decay", c.weight_decay},
                {"batch_size", c.batch_size},
                {"epochs", c.epochs},
                {"dr_every", c.dr_every},
                {"checkpoint_every", c.checkpoint_every},
                {"std_floor", c.std_floor}};
}

RunConfig parse_run_config(const json& j) {
    RunConfig c;
    ObjectReader root(j, "");

    if (const json* d = root.find("data")) {
        ObjectReader r(*d, "data");
        if (const json* kinds = r.find("kinds")) {
            require(kinds->is_array() && kinds->size() >= 2, "data.kinds", "expected an array of at least two kind names");
            c.data.kinds.clear();
            for (std::size_t i = 0; i < kinds->size(); ++i) {
                const std::string p = "data.kinds[" + std::to_string(i) + "]";
                require((*kinds)[i].is_string(), p, "expected a kind name");
                try {
                    c.data.kinds.push_back(parse_sub_action_kind((*kinds)[i].get<std::string>()));
                } catch (const InvalidArgument& e) {
                    throw ConfigError(p, e.what());
                }
            }
            std::set<SubActionKind> unique(c.data.kinds.begin(), c.data.kinds.end());
            require(unique.size() == c.data.kinds.size(), "data.kinds", "kinds must be distinct");
        }
        r.get("frames", c.data.frames);
        r.get("train_per_kind", c.data.train_per_kind);
        r.get("test_per_kind", c.data.test_per_kind);
        r.get("seed", c.data.seed);
        r.get("fps", c.data.fps);
        if (const json* g = r.find("generator")) {
            ObjectReader gr(*g, "data.generator");
            gr.get("amplitude", c.data.generator.amplitude);
            gr.get("frequency_hz", c.data.generator.frequency_hz);
            gr.get("jitter_sigma", c.data.generator.jitter_sigma);
            gr.get("amplitude_spread", c.data.generator.amplitude_spread);
            gr.get("phase_spread", c.data.generator.phase_spread);
            gr.finish();
        }
        r.finish();
        require(c.data.frames >= 2, "data.frames", "must be at least 2");
        require(c.data.train_per_kind >= 1, "data.train_per_kind", "must be positive");
        require(c.data.test_per_kind >= 1, "data.test_per_kind", "must be positive");
        require(c.data.fps > 0.0, "data.fps", "must be positive");
        require(c.data.generator.jitter_sigma >= 0.0, "data.generator.jitter_sigma", "must be >= 0");
    }

    if (const json* d = root.find("coupling")) {
        ObjectReader r(*d, "coupling");
        r.get("dist", c.coupling.dist);
        if (const json* p = r.find("policy")) {
            if (p->is_string()) {
                require(p->get<std::string>() == "full_class", "coupling.policy", "expected \"full_class\" or a list of kind pairs");
                c.coupling.pairs.clear();
            } else {
                require(p->is_array() && !p->empty(), "coupling.policy", "expected \"full_class\" or a list of kind pairs");
                for (std::size_t i = 0; i < p->size(); ++i) {
                    const auto& pair = (*p)[i];
                    const std::string path = "coupling.policy[" + std::to_string(i) + "]";
                    require(pair.is_array() && pair.size() == 2 && pair[0].is_string() && pair[1].is_string(), path,
                            "expected a pair of kind names");
                    c.coupling.pairs.emplace_back(pair[0].get<std::string>(), pair[1].get<std::string>());
                }
            }
        }
        r.get("count", c.coupling.count);
        r.get("energy_mask", c.coupling.energy_mask);
        r.get("eps_den", c.coupling.eps_den);
        r.get("test_count", c.coupling.test_count);
        r.get("test_lambda", c.coupling.test_lambda);
        r.finish();
        require(c.coupling.count >= 1, "coupling.count", "must be positive");
        require(c.coupling.test_count >= 2, "coupling.test_count", "must be at least 2");
        require(c.coupling.test_lambda >= 0.0 && c.coupling.test_lambda <= 1.0, "coupling.test_lambda", "must lie in [0, 1]");
        require(c.coupling.eps_den > 0.0, "coupling.eps_den", "must be positive");
    }

    if (const json* d = root.find("render")) {
        ObjectReader r(*d, "render");
        r.get("height", c.render.height);
        r.get("width", c.render.width);
        r.get("scale", c.render.scale);
        r.get("principal_x", c.render.principal_x);
        r.get("principal_y", c.render.principal_y);
        r.get("patch", c.render.patch);
        r.get("rho", c.render.rho);
        r.get("eps_pix", c.render.eps_pix);
        r.get("fill", c.render.fill);
        r.get("thickness", c.render.thickness);
        r.get("splat_sigma", c.render.splat_sigma);
        r.get("splat_samples", c.render.splat_samples);
        r.get("stride", c.render.stride);
        r.finish();
        require(c.render.patch >= 1, "render.patch", "must be positive");
        require(c.render.rho > 0.0 && c.render.rho <= 1.0, "render.rho", "must lie in (0, 1]");
        require(c.render.eps_pix > 0.0, "render.eps_pix", "must be positive");
        require(c.render.thickness > 0.0, "render.thickness", "must be positive");
        require(c.render.splat_sigma > 0.0, "render.splat_sigma", "must be positive");
        require(c.render.splat_samples >= 2, "render.splat_samples", "must be at least 2");
        require(c.render.stride >= 1, "render.stride", "must be positive");
    }

    if (const json* d = root.find("model")) c.model = parse_model_config(*d, "model");

    if (const json* d = root.find("refine")) {
        ObjectReader r(*d, "refine");
        r.get("inpainter", c.refine.inpainter);
        r.get("stride", c.refine.stride);
        r.get("dr_every", c.refine.dr_every);
        r.get("masks_per_image", c.refine.masks_per_image);
        r.finish();
        require(c.refine.inpainter == "mean_fill" || c.refine.inpainter == "patch_regressor", "refine.inpainter",
                "expected \"mean_fill\" or \"patch_regressor\"");
        require(c.refine.stride >= 1, "refine.stride", "must be positive");
        require(c.refine.dr_every >= 1, "refine.dr_every", "must be positive");
        require(c.refine.masks_per_image >= 1, "refine.masks_per_image", "must be positive");
    }

    if (const json* d = root.find("eval")) {
        ObjectReader r(*d, "eval");
        r.get("extractor", c.eval.extractor);
        r.get("n_pairs", c.eval.n_pairs);
        r.get("bootstrap", c.eval.bootstrap);
        r.get("samples_per_pair", c.eval.samples_per_pair);
        r.get("gen_lambda", c.eval.gen_lambda);
        if (const json* k = r.find("classifier")) {
            ObjectReader kr(*k, "eval.classifier");
            kr.get("hidden", c.eval.classifier.hidden);
            kr.get("epochs", c.eval.classifier.epochs);
            kr.get("lr", c.eval.classifier.lr);
            kr.get("weight_decay", c.eval.classifier.weight_decay);
            kr.get("std_floor", c.eval.classifier.std_floor);
            kr.finish();
            require(c.eval.classifier.hidden >= 1, "eval.classifier.hidden", "must be positive");
            require(c.eval.classifier.epochs >= 0, "eval.classifier.epochs", "must be >= 0");
            require(c.eval.classifier.std_floor > 0.0, "eval.classifier.std_floor", "must be positive");
        }
        if (const json* s = r.find("ablation_seeds")) {
            require(s->is_array() && !s->empty(), "eval.ablation_seeds", "expected a non-empty array of seeds");
            c.eval.ablation_seeds.clear();
            for (std::size_t i = 0; i < s->size(); ++i) {
                c.eval.ablation_seeds.push_back(
                    ObjectReader::as_u64((*s)[i], "eval.ablation_seeds[" + std::to_string(i) + "]"));
            }
        }
        if (const json* a = r.find("arms")) {
            require(a->is_array() && !a->empty(), "eval.arms", "expected a non-empty array of arm names");
            static const std::set<std::string> known{"full_class", "wo_gaussian", "wo_mask", "ours_wo_dr", "ours_w_dr"};
            c.eval.arms.clear();
            for (std::size_t i = 0; i < a->size(); ++i) {
                const std::string p = "eval.arms[" + std::to_string(i) + "]";
                require((*a)[i].is_string() && known.count((*a)[i].get<std::string>()), p, "unknown ablation arm");
                c.eval.arms.push_back((*a)[i].get<std::string>());
            }
        }
        r.finish();
        require(c.eval.extractor == "handcrafted" || c.eval.extractor == "classifier", "eval.extractor",
                "expected \"handcrafted\" or \"classifier\"");
        require(c.eval.n_pairs >= 1, "eval.n_pairs", "must be positive");
        require(c.eval.bootstrap >= 0, "eval.bootstrap", "must be >= 0");
        require(c.eval.samples_per_pair >= 2, "eval.samples_per_pair", "must be at least 2");
        require(c.eval.gen_lambda >= 0.0 && c.eval.gen_lambda <= 1.0, "eval.gen_lambda", "must lie in [0, 1]");
    }

    root.get("output_dir", c.output_dir);
    root.finish();

    try {
        (void)MixingRateDist::parse(c.coupling.dist);
    } catch (const InvalidArgument& e) {
        throw ConfigError("coupling.dist", e.what());
    }
    try {
        c.camera().validate(c.render.patch);
    } catch (const InvalidArgument& e) {
        throw ConfigError("render", e.what());
    }
    for (std::size_t i = 0; i < c.coupling.pairs.size(); ++i) {
        const std::string p = "coupling.policy[" + std::to_string(i) + "]";
        try {
            const int a = c.class_of(parse_sub_action_kind(c.coupling.pairs[i].first));
            const int b = c.class_of(parse_sub_action_kind(c.coupling.pairs[i].second));
            require(a != b, p, "a pair needs two different kinds");
        } catch (const InvalidArgument& e) {
            throw ConfigError(p, e.what());
        }
    }
    return c;
}

json to_json(const RunConfig& c) {
    json kinds = json::array();
    for (auto k : c.data.kinds) kinds.push_back(std::string(to_string(k)));
    json policy;
    if (c.coupling.pairs.empty()) {
        policy = "full_class";
    } else {
        policy = json::array();
        for (const auto& [a, b] : c.coupling.pairs) policy.push_back({a, b});
    }
    const auto& g = c.data.generator;
    const auto& k = c.eval.classifier;
    return json{
        {"data",
         {{"kinds", kinds},
          {"frames", c.data.frames},
          {"train_per_kind", c.data.train_per_kind},
          {"test_per_kind", c.data.test_per_kind},
          {"seed", c.data.seed},
          {"fps", c.data.fps},
          {"generator",
           {{"amplitude", g.amplitude},
            {"frequency_hz", g.frequency_hz},
            {"jitter_sigma", g.jitter_sigma},
            {"amplitude_spread", g.amplitude_spread},
            {"phase_spread", g.phase_spread}}}}},
        {"coupling",
         {{"dist", c.coupling.dist},
          {"policy", policy},
          {"count", c.coupling.count},
          {"energy_mask", c.coupling.energy_mask},
          {"eps_den", c.coupling.eps_den},
          {"test_count", c.coupling.test_count},
          {"test_lambda", c.coupling.test_lambda}}},
        {"render",
         {{"height", c.render.height},
          {"width", c.render.width},
          {"scale", c.render.scale},
          {"principal_x", c.render.principal_x},
          {"principal_y", c.render.principal_y},
          {"patch", c.render.patch},
          {"rho", c.render.rho},
          {"eps_pix", c.render.eps_pix},
          {"fill", c.render.fill},
          {"thickness", c.render.thickness},
          {"splat_sigma", c.render.splat_sigma},
          {"splat_samples", c.render.splat_samples},
          {"stride", c.render.stride}}},
        {"model", to_json(c.model)},
        {"refine",
         {{"inpainter", c.refine.inpainter},
          {"stride", c.refine.stride},
          {"dr_every", c.refine.dr_every},
          {"masks_per_image", c.refine.masks_per_image}}},
        {"eval",
         {{"extractor", c.eval.extractor},
          {"n_pairs", c.eval.n_pairs},
          {"bootstrap", c.eval.bootstrap},
          {"samples_per_pair", c.eval.samples_per_pair},
          {"gen_lambda", c.eval.gen_lambda},
          {"classifier",
           {{"hidden", k.hidden}, {"epochs", k.epochs}, {"lr", k.lr}, {"weight_decay", k.weight_decay}, {"std_floor", k.std_floor}}},
          {"ablation_seeds", c.eval.ablation_seeds},
          {"arms", c.eval.arms}}},
        {"output_dir", c.output_dir}};
}

CameraConfig RunConfig::camera() const {
    CameraConfig cam;
    cam.height = render.height;
    cam.width = render.width;
    cam.scale = render.scale;
    cam.principal = Vec2(render.principal_x, render.principal_y);
    return cam;
}

DecoupleConfig RunConfig::decouple() const { return {render.rho, render.patch, render.eps_pix, render.fill}; }

SplatConfig RunConfig::splat() const { return {render.splat_sigma, render.splat_samples}; }

DrSettings RunConfig::dr_settings() const { return {camera(), splat(), decouple()}; }

MixingRateDist RunConfig::mixing_dist() const { return MixingRateDist::parse(coupling.dist); }

int RunConfig::class_of(SubActionKind kind) const {
    auto it = std::find(data.kinds.begin(), data.kinds.end(), kind);
    if (it == data.kinds.end()) {
        throw InvalidArgument("config", "kind '" + std::string(to_string(kind)) + "' is not listed in data.kinds");
    }
    return static_cast<int>(it - data.kinds.begin());
}

PairingPolicy RunConfig::pairing_policy() const {
    if (coupling.pairs.empty()) return PairingPolicy::full_class();
    std::vector<std::pair<int, int>> ids;
    for (const auto& [a, b] : coupling.pairs) {
        ids.emplace_back(class_of(parse_sub_action_kind(a)), class_of(parse_sub_action_kind(b)));
    }
    return PairingPolicy::allow(std::move(ids));
}

std::vector<std::pair<int, int>> RunConfig::admitted_pairs() const {
    std::vector<int> classes(data.kinds.size());
    for (std::size_t k = 0; k < classes.size(); ++k) classes[k] = static_cast<int>(k);
    return pairing_policy().pairs_among(classes);
}

ModelConfig RunConfig::model_config() const {
    ModelConfig m = model;
    m.num_classes = static_cast<int>(data.kinds.size());
    m.frames = data.frames;
    m.dr_every = refine.dr_every;
    return m;
}

void apply_override(json& j, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError(assignment, "override must look like key=value");
    const std::string key = assignment.substr(0, eq);
    const std::string text = assignment.substr(eq + 1);
    json value;
    try {
        value = json::parse(text);
    } catch (const json::parse_error&) {
        value = text;
    }
    json* node = &j;
    std::size_t start = 0;
    while (true) {
        const auto dot = key.find('.', start);
        const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (part.empty()) throw ConfigError(key, "empty path component in override");
        if (!node->is_object()) throw ConfigError(key, "override descends into a non-object");
        if (dot == std::string::npos) {
            (*node)[part] = value;
            return;
        }
        node = &(*node)[part];
        if (node->is_null()) *node = json::object();
        start = dot + 1;
    }
}

RunConfig load_run_config(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
    std::ifstream in(path);
    if (!in) throw IoError("config", "cannot read config " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("<root>", std::string("invalid JSON: ") + e.what());
    }
    for (const auto& o : overrides) apply_override(j, o);
    return parse_run_config(j);
}

}  // namespace compose
