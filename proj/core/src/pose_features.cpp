#include "rehab/pose_features.hpp"

#include "rehab/error.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace rehab::pose {

namespace {

constexpr std::array<std::string_view, kUpperBodyPoints> kNames = {
    "nose",      "neck",      "left_shoulder", "right_shoulder", "left_elbow",
    "right_elbow", "left_wrist", "right_wrist", "mid_hip",       "left_eye",
    "right_eye", "left_ear",  "right_ear",
};

constexpr std::array<std::string_view, kJointAngles> kAngleNames = {
    "left_elbow_angle", "right_elbow_angle", "left_shoulder_angle", "right_shoulder_angle"};

// (a, b, c) triples; the angle is measured at b.
struct AngleJoints {
  UpperBody a, b, c;
};
constexpr std::array<AngleJoints, kJointAngles> kAngleJoints = {{
    {UpperBody::left_shoulder, UpperBody::left_elbow, UpperBody::left_wrist},
    {UpperBody::right_shoulder, UpperBody::right_elbow, UpperBody::right_wrist},
    {UpperBody::mid_hip, UpperBody::left_shoulder, UpperBody::left_elbow},
    {UpperBody::mid_hip, UpperBody::right_shoulder, UpperBody::right_elbow},
}};

bool finite(const Vec3& v) { return v.allFinite(); }

const RawKeypoint* find_source(const RawPoseFrame& frame, const KeypointLayout::Source& src) {
  if (const auto* idx = std::get_if<std::size_t>(&src)) {
    return *idx < frame.keypoints.size() ? &frame.keypoints[*idx] : nullptr;
  }
  const auto& wanted = std::get<std::string>(src);
  for (const auto& kp : frame.keypoints) {
    if (kp.name && *kp.name == wanted) return &kp;
  }
  return nullptr;
}

}  // namespace

std::string_view keypoint_name(UpperBody point) noexcept { return kNames[index_of(point)]; }

const std::array<std::string_view, kUpperBodyPoints>& keypoint_names() noexcept { return kNames; }

std::string_view joint_angle_name(JointAngleId angle) noexcept { return kAngleNames[index_of(angle)]; }

KeypointLayout KeypointLayout::openpose_body25() {
  KeypointLayout layout;
  layout.name = "openpose_body25";
  // BODY_25: 0 nose, 1 neck, 2 RShoulder, 3 RElbow, 4 RWrist, 5 LShoulder,
  // 6 LElbow, 7 LWrist, 8 MidHip, 15 REye, 16 LEye, 17 REar, 18 LEar.
  layout.sources = {std::size_t{0}, std::size_t{1}, std::size_t{5}, std::size_t{2}, std::size_t{6},
                    std::size_t{3}, std::size_t{7}, std::size_t{4}, std::size_t{8}, std::size_t{16},
                    std::size_t{15}, std::size_t{18}, std::size_t{17}};
  return layout;
}

KeypointLayout KeypointLayout::by_canonical_name() {
  KeypointLayout layout;
  layout.name = "canonical_names";
  for (std::size_t i = 0; i < kUpperBodyPoints; ++i) layout.sources[i] = std::string(kNames[i]);
  return layout;
}

UpperBodyKeypoints select_keypoints(const RawPoseFrame& frame, const KeypointLayout& layout,
                                    double confidence_floor) {
  if (frame.frame_index < 0) {
    throw ValidationError("frame_index", "must be >= 0, got " + std::to_string(frame.frame_index));
  }
  UpperBodyKeypoints out;
  for (std::size_t i = 0; i < kUpperBodyPoints; ++i) {
    const RawKeypoint* kp = find_source(frame, layout.sources[i]);
    if (kp == nullptr) {
      throw StructuralError("keypoint layout '" + layout.name + "' has no source for '" +
                            std::string(kNames[i]) + "' in frame " + std::to_string(frame.frame_index));
    }
    if (!(kp->confidence >= 0.0 && kp->confidence <= 1.0)) {
      throw ValidationError("confidence", "keypoint '" + std::string(kNames[i]) + "' confidence " +
                                              std::to_string(kp->confidence) + " outside [0,1]");
    }
    out.points[i] = Vec3(kp->x, kp->y, kp->z);
    out.valid_mask[i] = kp->confidence >= confidence_floor && finite(out.points[i]);
  }
  return out;
}

double joint_angle(const Vec3& p_a, const Vec3& p_b, const Vec3& p_c, double eps) {
  const Vec3 u = p_a - p_b;
  const Vec3 v = p_c - p_b;
  const double cosine = u.dot(v) / std::max(u.norm() * v.norm(), eps);
  return std::acos(std::clamp(cosine, -1.0, 1.0));
}

JointAngleGradient joint_angle_gradient(const Vec3& p_a, const Vec3& p_b, const Vec3& p_c, double eps) {
  const Vec3 u = p_a - p_b;
  const Vec3 v = p_c - p_b;
  const double nu = u.norm();
  const double nv = v.norm();
  const double denom = std::max(nu * nv, eps);
  const double dot = u.dot(v);
  const double cosine = dot / denom;
  JointAngleGradient g;
  if (std::abs(cosine) >= 1.0 || nu == 0.0 || nv == 0.0) return g;

  // d(cos)/du = v / denom - dot * nv * u / (nu * denom^2) while the product
  // of norms is the denominator; below eps the denominator is constant.
  const bool guarded = nu * nv < eps;
  const Vec3 dcos_du = guarded ? Vec3(v / denom) : Vec3(v / denom - (dot * nv / (nu * denom * denom)) * u);
  const Vec3 dcos_dv = guarded ? Vec3(u / denom) : Vec3(u / denom - (dot * nu / (nv * denom * denom)) * v);
  const double dtheta_dcos = -1.0 / std::sqrt(1.0 - cosine * cosine);
  g.d_a = dtheta_dcos * dcos_du;
  g.d_c = dtheta_dcos * dcos_dv;
  g.d_b = -(g.d_a + g.d_c);
  return g;
}

FrameFeature frame_features(const UpperBodyKeypoints& kp) {
  for (std::size_t i = 0; i < kUpperBodyPoints; ++i) {
    if (kp.valid_mask[i] && !finite(kp.points[i])) {
      throw ValidationError("keypoints", "non-finite coordinate for '" + std::string(kNames[i]) + "'");
    }
  }

  FrameFeature f{};
  if (kp.valid(UpperBody::left_shoulder) && kp.valid(UpperBody::right_shoulder)) {
    const Vec3& ls = kp[UpperBody::left_shoulder];
    const Vec3& rs = kp[UpperBody::right_shoulder];
    const Vec3 mid = 0.5 * (ls + rs);
    const double width = (ls - rs).norm() + kAngleEps;
    for (std::size_t i = 0; i < kUpperBodyPoints; ++i) {
      f[i] = kp.valid_mask[i] ? (kp.points[i] - mid).norm() / width : 0.0;
    }
  }

  for (std::size_t j = 0; j < kJointAngles; ++j) {
    const auto& t = kAngleJoints[j];
    if (kp.valid(t.a) && kp.valid(t.b) && kp.valid(t.c)) {
      f[kUpperBodyPoints + j] = joint_angle(kp[t.a], kp[t.b], kp[t.c]);
    }
  }
  return f;
}

std::vector<RawPoseFrame> densify(std::span<const RawPoseFrame> frames, std::int64_t frame_count) {
  if (frame_count < 0) throw ValidationError("frame_count", "must be >= 0");
  std::vector<RawPoseFrame> out;
  out.reserve(static_cast<std::size_t>(frame_count));
  std::size_t next = 0;
  const RawPoseFrame* templ = frames.empty() ? nullptr : &frames.front();
  for (std::int64_t idx = 0; idx < frame_count; ++idx) {
    while (next < frames.size() && frames[next].frame_index < idx) ++next;
    if (next < frames.size() && frames[next].frame_index == idx) {
      out.push_back(frames[next]);
      continue;
    }
    RawPoseFrame blank;
    blank.frame_index = idx;
    if (templ != nullptr) {
      blank.image_size = templ->image_size;
      blank.keypoints = templ->keypoints;
      for (auto& k : blank.keypoints) {
        k.x = k.y = k.z = 0.0;
        k.confidence = 0.0;
      }
    }
    out.push_back(std::move(blank));
  }
  return out;
}

SequenceFeatures sequence_features(std::span<const RawPoseFrame> frames, const KeypointLayout& layout,
                                   double confidence_floor) {
  if (frames.empty()) throw ValidationError("frames", "pose sequence is empty");
  for (std::size_t t = 1; t < frames.size(); ++t) {
    if (frames[t].frame_index <= frames[t - 1].frame_index) {
      throw ValidationError("frames", "frame_index must be strictly ascending (at position " +
                                          std::to_string(t) + ")");
    }
  }

  const std::size_t n = frames.size();
  std::vector<UpperBodyKeypoints> kps;
  kps.reserve(n);
  for (const auto& fr : frames) kps.push_back(select_keypoints(fr, layout, confidence_floor));

  for (std::size_t p = 0; p < kUpperBodyPoints; ++p) {
    std::vector<std::size_t> valid_rows;
    for (std::size_t t = 0; t < n; ++t) {
      if (kps[t].valid_mask[p]) valid_rows.push_back(t);
    }
    if (valid_rows.empty()) {
      for (auto& k : kps) {
        k.points[p] = Vec3::Zero();
        k.valid_mask[p] = false;
      }
      continue;
    }
    std::size_t cursor = 0;  // first valid row with index >= t
    for (std::size_t t = 0; t < n; ++t) {
      while (cursor < valid_rows.size() && valid_rows[cursor] < t) ++cursor;
      if (cursor < valid_rows.size() && valid_rows[cursor] == t) continue;
      const bool has_next = cursor < valid_rows.size();
      const bool has_prev = cursor > 0;
      if (has_prev && has_next) {
        const std::size_t lo = valid_rows[cursor - 1];
        const std::size_t hi = valid_rows[cursor];
        const double f0 = static_cast<double>(frames[lo].frame_index);
        const double f1 = static_cast<double>(frames[hi].frame_index);
        const double w = (static_cast<double>(frames[t].frame_index) - f0) / (f1 - f0);
        kps[t].points[p] = (1.0 - w) * kps[lo].points[p] + w * kps[hi].points[p];
      } else {
        kps[t].points[p] = kps[has_prev ? valid_rows[cursor - 1] : valid_rows[cursor]].points[p];
      }
      kps[t].valid_mask[p] = true;
    }
  }

  SequenceFeatures out;
  out.values.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(kFeatureDim));
  out.valid_mask.reserve(n);
  for (std::size_t t = 0; t < n; ++t) {
    const FrameFeature f = frame_features(kps[t]);
    for (std::size_t j = 0; j < kFeatureDim; ++j) {
      out.values(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(j)) = f[j];
    }
    out.valid_mask.push_back(kps[t].valid_mask);
  }
  return out;
}

}  // namespace rehab::pose
