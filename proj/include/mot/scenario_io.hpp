#pragma once

#include <string>
#include <vector>

#include "mot/synth.hpp"

namespace mot {

/// File names inside a scenario directory.
namespace scenario_files {
inline constexpr const char* kGroundTruth = "gt.txt";
inline constexpr const char* kDetections = "dets.txt";
inline constexpr const char* kSignatures = "signatures.json";
inline constexpr const char* kScenario = "scenario.json";
}  // namespace scenario_files

/// Writes gt.txt (MOT format), dets.txt (id -1, detector scores),
/// signatures.json and scenario.json (config + occlusion events).
void write_scenario(const std::string& dir, const GroundTruth& gt);

/// Rebuilds the ground truth from a scenario directory; the stored detection
/// file is returned per frame via load_detections.
GroundTruth load_scenario(const std::string& dir);

std::vector<std::vector<Detection>> load_detections(const std::string& dir, int64_t frames);

/// Optional binary pyramid dump so a tracker run does not need to re-render.
void write_pyramids(const std::string& path, const GroundTruth& gt);
std::vector<FeaturePyramid> read_pyramids(const std::string& path);

}  // namespace mot
