#include "compose/coupling.hpp"

#include "compose/dataset.hpp"
#include "compose/error.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

namespace compose {

using nlohmann::json;

MixingRateDist MixingRateDist::gaussian(double stddev) {
    if (!(stddev > 0.0)) throw InvalidArgument("coupling", "gaussian stddev must be > 0");
    return {Kind::Gaussian, stddev};
}

MixingRateDist MixingRateDist::beta(double alpha) {
    if (!(alpha > 0.0)) throw InvalidArgument("coupling", "beta alpha must be > 0");
    return {Kind::Beta, alpha};
}

MixingRateDist MixingRateDist::uniform() { return {Kind::Uniform, 0.0}; }

MixingRateDist MixingRateDist::fixed(double lambda) {
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw InvalidArgument("coupling", "fixed lambda must be in [0, 1]");
    return {Kind::Fixed, lambda};
}

MixingRateDist MixingRateDist::parse(const std::string& text) {
    const auto colon = text.find(':');
    const std::string name = text.substr(0, colon);
    if (name == "uniform" && colon == std::string::npos) return uniform();
    if (colon == std::string::npos) throw InvalidArgument("coupling", "mixing-rate spec '" + text + "' needs a parameter");
    double value = 0.0;
    try {
        std::size_t used = 0;
        value = std::stod(text.substr(colon + 1), &used);
        if (used != text.size() - colon - 1) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
        throw InvalidArgument("coupling", "bad mixing-rate parameter in '" + text + "'");
    }
    if (name == "gaussian") return gaussian(value);
    if (name == "beta") return beta(value);
    if (name == "fixed") return fixed(value);
    throw InvalidArgument("coupling", "unknown mixing-rate distribution '" + name + "'");
}

std::string MixingRateDist::to_string() const {
    std::ostringstream os;
    os.precision(17);
    switch (kind_) {
        case Kind::Gaussian: os << "gaussian:" << param_; break;
        case Kind::Beta: os << "beta:" << param_; break;
        case Kind::Uniform: os << "uniform"; break;
        case Kind::Fixed: os << "fixed:" << param_; break;
    }
    return os.str();
}

double MixingRateDist::sample(Rng& rng) const {
    switch (kind_) {
        case Kind::Fixed: return param_;
        case Kind::Uniform: return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
        case Kind::Beta: {
            std::gamma_distribution<double> g(param_, 1.0);
            const double a = g(rng);
            const double b = g(rng);
            return a + b > 0.0 ? a / (a + b) : 0.5;
        }
        case Kind::Gaussian: {
            std::normal_distribution<double> n(0.5, param_);
            for (;;) {
                const double v = n(rng);
                if (v >= 0.0 && v <= 1.0) return v;
            }
        }
    }
    return 0.5;
}

MixedLabel couple_labels(const ActionLabel& x_i, const ActionLabel& x_j, double lambda) {
    if (x_i.class_id() == x_j.class_id()) {
        throw InvalidArgument("coupling", "cannot couple two labels of class " + std::to_string(x_i.class_id()));
    }
    if (x_i.num_classes() != x_j.num_classes()) throw InvalidArgument("coupling", "labels disagree on class count");
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw InvalidArgument("coupling", "lambda must be in [0, 1]");
    std::vector<double> w(static_cast<std::size_t>(x_i.num_classes()), 0.0);
    w[static_cast<std::size_t>(x_i.class_id())] = lambda;
    w[static_cast<std::size_t>(x_j.class_id())] = 1.0 - lambda;
    return MixedLabel(std::move(w));
}

std::vector<Pose> couple_sequences(const std::vector<Pose>& y_i, const std::vector<Pose>& y_j,
                                   const PartEnergy& e_i, const PartEnergy& e_j, double lambda, double eps_den) {
    if (y_i.size() != y_j.size()) {
        throw InvalidArgument("coupling", "sequence lengths differ: " + std::to_string(y_i.size()) + " vs " +
                                              std::to_string(y_j.size()));
    }
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw InvalidArgument("coupling", "lambda must be in [0, 1]");

    std::array<double, kNumJoints> w_i{}, w_j{};
    for (std::size_t n = 0; n < kNumJoints; ++n) {
        const double a = lambda * e_i.per_joint[n];
        const double b = (1.0 - lambda) * e_j.per_joint[n];
        const double den = a + b;
        if (den < eps_den) {
            w_i[n] = lambda;
            w_j[n] = 1.0 - lambda;
        } else {
            w_i[n] = a / den;
            w_j[n] = b / den;
        }
    }

    std::vector<Pose> out(y_i.size());
    for (std::size_t t = 0; t < y_i.size(); ++t) {
        for (int n = 0; n < kNumJoints; ++n) {
            const auto k = static_cast<std::size_t>(n);
            out[t][n] = w_i[k] * y_i[t][n] + w_j[k] * y_j[t][n];
        }
    }
    return out;
}

PairingPolicy PairingPolicy::full_class() {
    PairingPolicy p;
    p.full_class_ = true;
    return p;
}

PairingPolicy PairingPolicy::allow(std::vector<std::pair<int, int>> pairs) {
    PairingPolicy p;
    for (auto [a, b] : pairs) {
        if (a == b) throw InvalidArgument("coupling", "pairing policy lists class " + std::to_string(a) + " with itself");
        p.pairs_.emplace_back(std::min(a, b), std::max(a, b));
    }
    std::sort(p.pairs_.begin(), p.pairs_.end());
    p.pairs_.erase(std::unique(p.pairs_.begin(), p.pairs_.end()), p.pairs_.end());
    return p;
}

bool PairingPolicy::admits(int a, int b) const {
    if (a == b) return false;
    if (full_class_) return true;
    return std::binary_search(pairs_.begin(), pairs_.end(), std::pair{std::min(a, b), std::max(a, b)});
}

std::vector<std::pair<int, int>> PairingPolicy::pairs_among(const std::vector<int>& classes) const {
    std::vector<int> c = classes;
    std::sort(c.begin(), c.end());
    c.erase(std::unique(c.begin(), c.end()), c.end());
    std::vector<std::pair<int, int>> out;
    for (std::size_t i = 0; i < c.size(); ++i) {
        for (std::size_t j = i + 1; j < c.size(); ++j) {
            if (admits(c[i], c[j])) out.emplace_back(c[i], c[j]);
        }
    }
    return out;
}

std::vector<PseudoComposite> build_pseudo_dataset(const std::vector<MotionSequence>& data,
                                                  const PairingPolicy& policy, int count,
                                                  const MixingRateDist& dist, const BodyPartition& partition,
                                                  Rng& rng, const CouplingOptions& options) {
    if (count < 0) throw InvalidArgument("coupling", "composite count must be >= 0");
    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t k = 0; k < data.size(); ++k) by_class[data[k].action_label().class_id()].push_back(k);
    if (by_class.size() < 2) throw InvalidArgument("coupling", "need at least two classes to couple");

    std::vector<int> classes;
    for (const auto& [c, _] : by_class) classes.push_back(c);
    const auto pairs = policy.pairs_among(classes);
    if (pairs.empty()) throw InvalidArgument("coupling", "pairing policy admits no class pair in this dataset");

    std::vector<PseudoComposite> out;
    out.reserve(static_cast<std::size_t>(count));
    std::uniform_int_distribution<std::size_t> pick_pair(0, pairs.size() - 1);
    for (int k = 0; k < count; ++k) {
        const auto [ca, cb] = pairs[pick_pair(rng)];
        const auto& ia = by_class[ca];
        const auto& ib = by_class[cb];
        const MotionSequence& src_i = data[ia[std::uniform_int_distribution<std::size_t>(0, ia.size() - 1)(rng)]];
        const MotionSequence& src_j = data[ib[std::uniform_int_distribution<std::size_t>(0, ib.size() - 1)(rng)]];
        const double lambda = dist.sample(rng);

        const int T = std::min(src_i.length(), src_j.length());
        const MotionSequence yi = resample(src_i, T);
        const MotionSequence yj = resample(src_j, T);
        const PartEnergy ei = options.energy_mask ? compute_part_energy(yi, partition) : uniform_energy(1.0, partition);
        const PartEnergy ej = options.energy_mask ? compute_part_energy(yj, partition) : uniform_energy(1.0, partition);

        MixedLabel label = couple_labels(src_i.action_label(), src_j.action_label(), lambda);
        char id[32];
        std::snprintf(id, sizeof(id), "composite-%05d", k);
        MotionSequence seq(id, couple_sequences(yi.frames(), yj.frames(), ei, ej, lambda, options.eps_den), label,
                           src_i.fps());
        out.push_back(PseudoComposite{std::move(seq), std::move(label), lambda, {src_i.id(), src_j.id()}, {ca, cb}});
    }
    return out;
}

void save_composites(const std::vector<PseudoComposite>& composites, const std::filesystem::path& path) {
    std::vector<json> rows;
    rows.reserve(composites.size());
    for (const auto& c : composites) {
        json j = sequence_to_json(c.sequence);
        j["lambda"] = c.lambda;
        j["sources"] = {c.source_ids.first, c.source_ids.second};
        j["source_classes"] = {c.source_classes.first, c.source_classes.second};
        rows.push_back(std::move(j));
    }
    write_json_lines(rows, path);
}

std::vector<PseudoComposite> load_composites(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("coupling", "cannot open composites " + path.string());
    std::vector<PseudoComposite> out;
    std::string text;
    std::size_t line = 0;
    while (std::getline(in, text)) {
        ++line;
        if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
        json j;
        try {
            j = json::parse(text);
        } catch (const json::parse_error& e) {
            throw ParseError("coupling", "line " + std::to_string(line) + ": invalid JSON: " + e.what(), line);
        }
        if (!j.is_object() || !j.contains("lambda") || !j.contains("sources") || !j.contains("source_classes") ||
            !j.contains("mixed_label")) {
            throw ParseError("coupling",
                             "line " + std::to_string(line) +
                                 ": composite needs 'lambda', 'sources', 'source_classes' and 'mixed_label'",
                             line);
        }
        MotionSequence seq = sequence_from_json(j, 1, line);
        try {
            const auto sources = j["sources"].get<std::vector<std::string>>();
            const auto classes = j["source_classes"].get<std::vector<int>>();
            if (sources.size() != 2 || classes.size() != 2) throw std::invalid_argument("pair");
            MixedLabel label = std::get<MixedLabel>(seq.label());
            out.push_back(PseudoComposite{std::move(seq), std::move(label), j["lambda"].get<double>(),
                                          {sources[0], sources[1]}, {classes[0], classes[1]}});
        } catch (const std::exception&) {
            throw ParseError("coupling", "line " + std::to_string(line) + ": malformed composite provenance", line);
        }
    }
    return out;
}

}  // namespace compose
