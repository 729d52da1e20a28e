#include "compose/checkpoint.hpp"

#include "compose/config.hpp"
#include "compose/error.hpp"

#include <nlohmann/json.hpp>

#include <fstream>
#include <sstream>

namespace compose {

using nlohmann::json;

namespace {

json matrix_json(const Eigen::MatrixXd& m) {
    std::vector<double> data(m.data(), m.data() + m.size());
    return json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", data}};  // column-major
}

Eigen::MatrixXd matrix_from(const json& j, const std::string& what) {
    const auto rows = j.at("rows").get<Eigen::Index>();
    const auto cols = j.at("cols").get<Eigen::Index>();
    const auto data = j.at("data").get<std::vector<double>>();
    if (rows < 0 || cols < 0 || static_cast<Eigen::Index>(data.size()) != rows * cols) {
        throw ValidationError("checkpoint", what + ": tensor size does not match its shape");
    }
    Eigen::MatrixXd m(rows, cols);
    std::copy(data.begin(), data.end(), m.data());
    return m;
}

json loss_json(const LossBreakdown& l) {
    return json{{"recon", l.recon}, {"kl", l.kl}, {"dr", l.dr}, {"total", l.total}};
}

}  // namespace

void save_checkpoint(const TrainState& state, const std::filesystem::path& path) {
    json j;
    j["format_version"] = kCheckpointFormat;
    j["model_config"] = to_json(state.model.config());
    j["normalizer"] = {{"mean", matrix_json(state.model.normalizer().mean)},
                       {"stddev", matrix_json(state.model.normalizer().stddev)}};
    json params = json::array();
    for (const auto& p : state.model.params().tensors()) params.push_back({{"name", p.name}, {"value", matrix_json(p.value)}});
    j["params"] = params;
    json m = json::array(), v = json::array();
    for (const auto& x : state.optimizer.first_moments()) m.push_back(matrix_json(x));
    for (const auto& x : state.optimizer.second_moments()) v.push_back(matrix_json(x));
    const auto& oc = state.optimizer.config();
    j["optimizer"] = {{"steps", state.optimizer.steps()},
                      {"config", {{"lr", oc.lr}, {"beta1", oc.beta1}, {"beta2", oc.beta2}, {"eps", oc.eps}, {"weight_decay", oc.weight_decay}}},
                      {"m", m},
                      {"v", v}};
    j["epoch"] = state.epoch;
    std::ostringstream rng;
    rng << state.rng;
    j["rng_state"] = rng.str();
    json history = json::array();
    for (const auto& h : state.history) history.push_back({{"epoch", h.epoch}, {"loss", loss_json(h.loss)}});
    j["history"] = history;

    std::filesystem::create_directories(path.parent_path().empty() ? "." : path.parent_path());
    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw IoError("checkpoint", "cannot write " + tmp);
        out << j.dump() << '\n';
        if (!out) throw IoError("checkpoint", "write failed for " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

TrainState load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("checkpoint", "cannot read " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ParseError("checkpoint", std::string("malformed checkpoint: ") + e.what(), 0);
    }
    try {
        if (j.at("format_version").get<int>() != kCheckpointFormat) {
            throw ValidationError("checkpoint", "unsupported checkpoint format " + j.at("format_version").dump());
        }
        const ModelConfig cfg = parse_model_config(j.at("model_config"), "model_config");
        Rng scratch(0);
        CvaeModel model = CvaeModel::create(cfg, scratch);
        Normalizer norm;
        norm.mean = matrix_from(j.at("normalizer").at("mean"), "normalizer.mean");
        norm.stddev = matrix_from(j.at("normalizer").at("stddev"), "normalizer.stddev");
        if (norm.mean.size() != 3 * kNumJoints || norm.stddev.size() != 3 * kNumJoints) {
            throw ValidationError("checkpoint", "normalizer must have 72 entries");
        }
        model.set_normalizer(norm);

        auto& ps = model.params();
        const auto& params = j.at("params");
        if (params.size() != ps.tensor_count()) throw ValidationError("checkpoint", "parameter count does not match the config");
        for (const auto& p : params) {
            const std::string name = p.at("name").get<std::string>();
            const int idx = ps.index_of(name);
            Eigen::MatrixXd value = matrix_from(p.at("value"), name);
            if (value.rows() != ps[idx].value.rows() || value.cols() != ps[idx].value.cols()) {
                throw ValidationError("checkpoint", "tensor " + name + " has the wrong shape");
            }
            ps[idx].value = std::move(value);
        }

        const auto& o = j.at("optimizer");
        const auto& oc = o.at("config");
        nn::AdamW opt(ps, {oc.at("lr").get<double>(), oc.at("beta1").get<double>(), oc.at("beta2").get<double>(),
                           oc.at("eps").get<double>(), oc.at("weight_decay").get<double>()});
        std::vector<Eigen::MatrixXd> m, v;
        for (const auto& x : o.at("m")) m.push_back(matrix_from(x, "optimizer.m"));
        for (const auto& x : o.at("v")) v.push_back(matrix_from(x, "optimizer.v"));
        if (m.size() != ps.tensor_count() || v.size() != ps.tensor_count()) {
            throw ValidationError("checkpoint", "optimizer moments do not match the parameters");
        }
        opt.restore(o.at("steps").get<long>(), std::move(m), std::move(v));

        Rng rng;
        std::istringstream rs(j.at("rng_state").get<std::string>());
        rs >> rng;
        if (!rs) throw ValidationError("checkpoint", "malformed RNG state");

        std::vector<EpochStats> history;
        for (const auto& h : j.at("history")) {
            const auto& l = h.at("loss");
            history.push_back({h.at("epoch").get<int>(),
                               {l.at("recon").get<double>(), l.at("kl").get<double>(), l.at("dr").get<double>(),
                                l.at("total").get<double>()}});
        }
        return TrainState{std::move(model), std::move(opt), j.at("epoch").get<int>(), rng, std::move(history)};
    } catch (const json::exception& e) {
        throw ValidationError("checkpoint", std::string("malformed checkpoint field: ") + e.what());
    } catch (const ConfigError& e) {
        throw ValidationError("checkpoint", e.what());
    }
}

}  // namespace compose
