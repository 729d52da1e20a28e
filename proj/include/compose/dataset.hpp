#pragma once

#include "compose/motion.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace compose {

// JSON Lines dataset, one sequence per line:
//   {"class_id": int, "fps": number, "id": string, "joints": [[[x,y,z] x24] xT]}
// Sequences with a mixed label write class_id -1 and a "mixed_label" array.
// A sidecar labels.json next to the file maps class_id -> name.

nlohmann::json sequence_to_json(const MotionSequence& seq);
// line is only used for error messages.
MotionSequence sequence_from_json(const nlohmann::json& j, int num_classes, std::size_t line);

// num_classes defaults to the sidecar labels.json size, else max class_id + 1.
std::vector<MotionSequence> load_dataset(const std::filesystem::path& path,
                                         std::optional<int> num_classes = std::nullopt);
void save_dataset(const std::vector<MotionSequence>& sequences, const std::filesystem::path& path);

void save_labels(const std::vector<std::string>& names, const std::filesystem::path& path);
std::vector<std::string> load_labels(const std::filesystem::path& path);

// Shared line writer: deterministic compact JSON, '\n' terminated.
void write_json_lines(const std::vector<nlohmann::json>& rows, const std::filesystem::path& path);

}  // namespace compose
