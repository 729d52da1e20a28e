#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "compose/motion.hpp"

namespace testing {

// Scratch directory removed on scope exit.
class TempDir {
   public:
    TempDir() {
        static std::atomic<int> counter{0};
        const auto stamp = std::chrono::steady_clock::now().time_since_epoch().count();
        path_ = std::filesystem::temp_directory_path() /
                ("compose-test-" + std::to_string(stamp) + "-" + std::to_string(counter++));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

   private:
    std::filesystem::path path_;
};

inline std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline compose::Pose random_pose(compose::Rng& rng, double spread = 1.0) {
    std::uniform_real_distribution<double> u(-spread, spread);
    compose::Pose p;
    for (auto& j : p.joints) j = compose::Vec3(u(rng), u(rng), u(rng));
    return p;
}

inline std::vector<compose::Pose> random_frames(compose::Rng& rng, int frames, double spread = 1.0) {
    std::vector<compose::Pose> out;
    for (int t = 0; t < frames; ++t) out.push_back(random_pose(rng, spread));
    return out;
}

inline compose::MotionSequence random_sequence(compose::Rng& rng, int frames, int class_id = 0, int num_classes = 4,
                                               const std::string& id = "rand") {
    return compose::MotionSequence(id, random_frames(rng, frames), compose::ActionLabel(class_id, num_classes), 30.0);
}

}  // namespace testing
