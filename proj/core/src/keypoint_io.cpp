#include "rehab/keypoint_io.hpp"

#include "rehab/error.hpp"

#include <json.hpp>

#include <fstream>
#include <sstream>

namespace rehab::pose {

using nlohmann::json;

namespace {

double number_field(const json& obj, const char* primary, const char* alt = nullptr) {
  if (obj.contains(primary)) return obj.at(primary).get<double>();
  if (alt != nullptr && obj.contains(alt)) return obj.at(alt).get<double>();
  throw ValidationError(std::string("keypoint missing field '") + primary + "'");
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFoundError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

RawPoseFrame parse_pose_record(const std::string& line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    throw ValidationError("pose record", e.what());
  }
  RawPoseFrame frame;
  try {
    frame.frame_index = j.at("frame_index").get<std::int64_t>();
    if (j.contains("image_size")) {
      const auto& sz = j.at("image_size");
      frame.image_size = {sz.at(0).get<int>(), sz.at(1).get<int>()};
    }
    for (const auto& k : j.at("keypoints")) {
      RawKeypoint kp;
      if (k.is_array()) {
        if (k.size() < 3) throw ValidationError("keypoint array needs at least [x, y, c]");
        kp.x = k.at(0).get<double>();
        kp.y = k.at(1).get<double>();
        if (k.size() >= 4) {
          kp.z = k.at(2).get<double>();
          kp.confidence = k.at(3).get<double>();
        } else {
          kp.confidence = k.at(2).get<double>();
        }
      } else {
        if (k.contains("name")) kp.name = k.at("name").get<std::string>();
        kp.x = number_field(k, "x");
        kp.y = number_field(k, "y");
        kp.z = k.contains("z") ? k.at("z").get<double>() : 0.0;
        kp.confidence = number_field(k, "c", "confidence");
      }
      frame.keypoints.push_back(std::move(kp));
    }
  } catch (const json::exception& e) {
    throw ValidationError("pose record", e.what());
  }
  if (frame.frame_index < 0) throw ValidationError("frame_index", "must be >= 0");
  return frame;
}

std::string format_pose_record(const RawPoseFrame& frame) {
  json j;
  j["frame_index"] = frame.frame_index;
  j["image_size"] = {frame.image_size.width, frame.image_size.height};
  json kps = json::array();
  for (const auto& k : frame.keypoints) {
    if (k.name) {
      kps.push_back({{"name", *k.name}, {"x", k.x}, {"y", k.y}, {"z", k.z}, {"c", k.confidence}});
    } else {
      kps.push_back({k.x, k.y, k.z, k.confidence});
    }
  }
  j["keypoints"] = std::move(kps);
  return j.dump();
}

std::vector<RawPoseFrame> read_pose_stream(std::istream& in) {
  std::vector<RawPoseFrame> frames;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      frames.push_back(parse_pose_record(line));
    } catch (const ValidationError& e) {
      throw ValidationError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return frames;
}

std::vector<RawPoseFrame> read_pose_stream(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw NotFoundError("cannot open pose stream " + path.string());
  return read_pose_stream(in);
}

void write_pose_stream(std::ostream& out, const std::vector<RawPoseFrame>& frames) {
  for (const auto& f : frames) out << format_pose_record(f) << '\n';
}

void write_pose_stream(const std::filesystem::path& path, const std::vector<RawPoseFrame>& frames) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::internal, "cannot write " + path.string());
  write_pose_stream(out, frames);
}

KeypointLayout parse_layout(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("keypoint layout: ") + e.what());
  }
  KeypointLayout layout;
  layout.name = j.value("name", "custom");
  if (!j.contains("points") || !j["points"].is_object()) {
    throw ConfigError("keypoint layout: missing 'points' object");
  }
  const auto& pts = j["points"];
  const auto& names = keypoint_names();
  for (std::size_t i = 0; i < kUpperBodyPoints; ++i) {
    const std::string key(names[i]);
    if (!pts.contains(key)) throw ConfigError("keypoint layout: missing point '" + key + "'");
    const auto& v = pts[key];
    if (v.is_number_unsigned()) {
      layout.sources[i] = v.get<std::size_t>();
    } else if (v.is_string()) {
      layout.sources[i] = v.get<std::string>();
    } else {
      throw ConfigError("keypoint layout: point '" + key + "' must be an index or a name");
    }
  }
  return layout;
}

KeypointLayout load_layout(const std::filesystem::path& path) { return parse_layout(read_file(path)); }

std::string format_layout(const KeypointLayout& layout) {
  json pts = json::object();
  const auto& names = keypoint_names();
  for (std::size_t i = 0; i < kUpperBodyPoints; ++i) {
    std::visit([&](const auto& v) { pts[std::string(names[i])] = v; }, layout.sources[i]);
  }
  json j;
  j["name"] = layout.name;
  j["order"] = json(std::vector<std::string>(names.begin(), names.end()));
  j["points"] = std::move(pts);
  return j.dump(2);
}

}  // namespace rehab::pose
