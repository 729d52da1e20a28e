#include "compose/dataset.hpp"

#include "compose/error.hpp"

#include <fstream>
#include <sstream>

namespace compose {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string at_line(std::size_t line) { return "line " + std::to_string(line) + ": "; }

const json& require(const json& j, const char* field, std::size_t line) {
    if (!j.is_object()) throw ParseError("motion-core", at_line(line) + "expected a JSON object", line);
    auto it = j.find(field);
    if (it == j.end()) throw ParseError("motion-core", at_line(line) + "missing field '" + field + "'", line);
    return *it;
}

double as_number(const json& v, const std::string& what, std::size_t line) {
    if (!v.is_number()) throw ParseError("motion-core", at_line(line) + what + " must be a number", line);
    return v.get<double>();
}

}  // namespace

json sequence_to_json(const MotionSequence& seq) {
    json joints = json::array();
    for (const auto& pose : seq.frames()) {
        json frame = json::array();
        for (int n = 0; n < kNumJoints; ++n) frame.push_back({pose[n].x(), pose[n].y(), pose[n].z()});
        joints.push_back(std::move(frame));
    }
    json j;
    j["id"] = seq.id();
    j["fps"] = seq.fps();
    j["joints"] = std::move(joints);
    if (const auto* a = std::get_if<ActionLabel>(&seq.label())) {
        j["class_id"] = a->class_id();
    } else {
        j["class_id"] = -1;
        j["mixed_label"] = std::get<MixedLabel>(seq.label()).weights();
    }
    return j;
}

MotionSequence sequence_from_json(const json& j, int num_classes, std::size_t line) {
    const json& id = require(j, "id", line);
    if (!id.is_string()) throw ParseError("motion-core", at_line(line) + "field 'id' must be a string", line);
    const json& cls = require(j, "class_id", line);
    if (!cls.is_number_integer()) {
        throw ParseError("motion-core", at_line(line) + "field 'class_id' must be an integer", line);
    }
    const double fps = as_number(require(j, "fps", line), "field 'fps'", line);
    const json& joints = require(j, "joints", line);
    if (!joints.is_array()) throw ParseError("motion-core", at_line(line) + "field 'joints' must be an array", line);

    std::vector<Pose> frames;
    frames.reserve(joints.size());
    for (std::size_t t = 0; t < joints.size(); ++t) {
        const json& frame = joints[t];
        if (!frame.is_array()) {
            throw ParseError("motion-core", at_line(line) + "joints[" + std::to_string(t) + "] must be an array", line);
        }
        if (frame.size() != kNumJoints) {
            throw ValidationError("motion-core", at_line(line) + "frame " + std::to_string(t) + " has " +
                                                     std::to_string(frame.size()) + " joints, expected 24");
        }
        Pose pose;
        for (int n = 0; n < kNumJoints; ++n) {
            const json& pt = frame[static_cast<std::size_t>(n)];
            if (!pt.is_array() || pt.size() != 3) {
                throw ParseError("motion-core",
                                 at_line(line) + "joints[" + std::to_string(t) + "][" + std::to_string(n) +
                                     "] must be [x, y, z]",
                                 line);
            }
            for (std::size_t a = 0; a < 3; ++a) {
                pose[n][static_cast<int>(a)] = as_number(pt[a], "joint coordinate", line);
            }
        }
        frames.push_back(pose);
    }

    SequenceLabel label = ActionLabel(0, 1);
    const int class_id = cls.get<int>();
    if (auto ml = j.find("mixed_label"); ml != j.end()) {
        if (!ml->is_array()) throw ParseError("motion-core", at_line(line) + "'mixed_label' must be an array", line);
        std::vector<double> w;
        for (const auto& v : *ml) w.push_back(as_number(v, "mixed_label entry", line));
        try {
            label = MixedLabel(std::move(w));
        } catch (const ValidationError& e) {
            throw ValidationError("motion-core", at_line(line) + e.what());
        }
    } else {
        try {
            label = ActionLabel(class_id, num_classes);
        } catch (const ValidationError& e) {
            throw ValidationError("motion-core", at_line(line) + e.what());
        }
    }
    try {
        return MotionSequence(id.get<std::string>(), std::move(frames), std::move(label), fps);
    } catch (const ValidationError& e) {
        throw ValidationError("motion-core", at_line(line) + e.what());
    }
}

std::vector<MotionSequence> load_dataset(const fs::path& path, std::optional<int> num_classes) {
    std::ifstream in(path);
    if (!in) throw IoError("motion-core", "cannot open dataset " + path.string());

    std::vector<std::pair<std::size_t, json>> rows;
    std::string text;
    std::size_t line = 0;
    int max_class = -1;
    while (std::getline(in, text)) {
        ++line;
        if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
        json j;
        try {
            j = json::parse(text);
        } catch (const json::parse_error& e) {
            throw ParseError("motion-core", at_line(line) + "invalid JSON: " + e.what(), line);
        }
        if (auto c = j.find("class_id"); j.is_object() && c != j.end() && c->is_number_integer()) {
            max_class = std::max(max_class, c->get<int>());
        }
        rows.emplace_back(line, std::move(j));
    }

    if (!num_classes) {
        const fs::path sidecar = path.parent_path() / "labels.json";
        if (fs::exists(sidecar)) {
            num_classes = static_cast<int>(load_labels(sidecar).size());
        } else {
            num_classes = std::max(max_class + 1, 1);
        }
    }

    std::vector<MotionSequence> out;
    out.reserve(rows.size());
    for (const auto& [ln, j] : rows) out.push_back(sequence_from_json(j, *num_classes, ln));
    return out;
}

void write_json_lines(const std::vector<json>& rows, const fs::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("motion-core", "cannot write " + path.string());
    for (const auto& r : rows) out << r.dump() << '\n';
    if (!out) throw IoError("motion-core", "write failed for " + path.string());
}

void save_dataset(const std::vector<MotionSequence>& sequences, const fs::path& path) {
    std::vector<json> rows;
    rows.reserve(sequences.size());
    for (const auto& s : sequences) rows.push_back(sequence_to_json(s));
    write_json_lines(rows, path);
}

void save_labels(const std::vector<std::string>& names, const fs::path& path) {
    json j = json::object();
    for (std::size_t i = 0; i < names.size(); ++i) j[std::to_string(i)] = names[i];
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("motion-core", "cannot write " + path.string());
    out << j.dump(2) << '\n';
}

std::vector<std::string> load_labels(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("motion-core", "cannot open " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ParseError("motion-core", path.string() + ": invalid JSON: " + e.what(), 0);
    }
    if (!j.is_object()) throw ParseError("motion-core", path.string() + ": expected an object", 0);
    std::vector<std::string> names(j.size());
    for (auto it = j.begin(); it != j.end(); ++it) {
        std::size_t idx = 0;
        try {
            idx = std::stoul(it.key());
        } catch (const std::exception&) {
            throw ParseError("motion-core", path.string() + ": key '" + it.key() + "' is not a class id", 0);
        }
        if (idx >= names.size() || !it.value().is_string()) {
            throw ParseError("motion-core", path.string() + ": class ids must be 0..C-1 mapped to names", 0);
        }
        names[idx] = it.value().get<std::string>();
    }
    return names;
}

}  // namespace compose
