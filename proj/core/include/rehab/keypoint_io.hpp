#pragma once

#include "rehab/pose_features.hpp"

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace rehab::pose {

// Keypoint stream: one JSON object per line,
//
//   {"frame_index": 12, "image_size": [720, 1280],
//    "keypoints": [[x, y, z, c], ...]}
//
// or with named entries: "keypoints": [{"name": "Nose", "x": .., "y": ..,
// "z": .., "c": ..}, ...]. Array entries are addressed by position.

RawPoseFrame parse_pose_record(const std::string& line);
std::string format_pose_record(const RawPoseFrame& frame);

std::vector<RawPoseFrame> read_pose_stream(std::istream& in);
std::vector<RawPoseFrame> read_pose_stream(const std::filesystem::path& path);
void write_pose_stream(std::ostream& out, const std::vector<RawPoseFrame>& frames);
void write_pose_stream(const std::filesystem::path& path, const std::vector<RawPoseFrame>& frames);

// Layout config:
//
//   {"name": "openpose_body25",
//    "points": {"nose": 0, "neck": 1, ..., "left_ear": 18}}
//
// Values are either a positional index or a keypoint name. All 13 canonical
// names must be present.
KeypointLayout parse_layout(const std::string& json_text);
KeypointLayout load_layout(const std::filesystem::path& path);
std::string format_layout(const KeypointLayout& layout);

}  // namespace rehab::pose
