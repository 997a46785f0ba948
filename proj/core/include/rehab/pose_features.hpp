#pragma once

#include <Eigen/Core>

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace rehab::pose {

using Vec3 = Eigen::Vector3d;

inline constexpr std::size_t kUpperBodyPoints = 13;
inline constexpr std::size_t kJointAngles = 4;
inline constexpr std::size_t kFeatureDim = kUpperBodyPoints + kJointAngles;  // 17
inline constexpr double kAngleEps = 1e-8;
inline constexpr double kDefaultConfidenceFloor = 0.3;

/// Canonical upper-body keypoint order. Feature columns 0..12 follow this
/// order; columns 13..16 are the joint angles in `JointAngleId` order.
enum class UpperBody : std::size_t {
  nose = 0,
  neck,
  left_shoulder,
  right_shoulder,
  left_elbow,
  right_elbow,
  left_wrist,
  right_wrist,
  mid_hip,
  left_eye,
  right_eye,
  left_ear,
  right_ear,
};

enum class JointAngleId : std::size_t {
  left_elbow = 0,
  right_elbow,
  left_shoulder,
  right_shoulder,
};

std::string_view keypoint_name(UpperBody point) noexcept;
const std::array<std::string_view, kUpperBodyPoints>& keypoint_names() noexcept;
std::string_view joint_angle_name(JointAngleId angle) noexcept;

constexpr std::size_t index_of(UpperBody p) noexcept { return static_cast<std::size_t>(p); }
constexpr std::size_t index_of(JointAngleId a) noexcept { return static_cast<std::size_t>(a); }

struct RawKeypoint {
  std::optional<std::string> name;
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  double confidence = 0.0;
};

struct ImageSize {
  int width = 0;
  int height = 0;
};

/// One pose-estimator record for one video frame, in the estimator's own
/// keypoint layout.
struct RawPoseFrame {
  std::int64_t frame_index = 0;
  ImageSize image_size;
  std::vector<RawKeypoint> keypoints;
};

/// Maps each canonical upper-body point to a keypoint of the estimator
/// layout, either by position or by the keypoint's name.
struct KeypointLayout {
  using Source = std::variant<std::size_t, std::string>;

  std::string name;
  std::array<Source, kUpperBodyPoints> sources;

  /// OpenPose BODY_25 indices.
  static KeypointLayout openpose_body25();
  /// Every point looked up by its canonical name ("left_wrist", ...).
  static KeypointLayout by_canonical_name();
};

struct UpperBodyKeypoints {
  std::array<Vec3, kUpperBodyPoints> points{};
  std::array<bool, kUpperBodyPoints> valid_mask{};

  const Vec3& operator[](UpperBody p) const { return points[index_of(p)]; }
  bool valid(UpperBody p) const { return valid_mask[index_of(p)]; }
};

using FrameFeature = std::array<double, kFeatureDim>;

/// Row-major N_f x 17 feature matrix.
using FeatureMatrix = Eigen::Matrix<double, Eigen::Dynamic, static_cast<int>(kFeatureDim), Eigen::RowMajor>;

struct SequenceFeatures {
  FeatureMatrix values;
  /// Per frame, whether each canonical point was observed or imputed (true)
  /// versus zero-filled because it was never observed (false).
  std::vector<std::array<bool, kUpperBodyPoints>> valid_mask;
};

/// Selects the 13 canonical points from a full-body frame. Points whose
/// confidence is below `confidence_floor` are kept but marked invalid.
UpperBodyKeypoints select_keypoints(const RawPoseFrame& frame, const KeypointLayout& layout,
                                    double confidence_floor = kDefaultConfidenceFloor);

/// Angle at `p_b` between the limbs towards `p_a` and `p_c`, in [0, pi].
/// The product of limb lengths is floored at eps so zero-length limbs stay
/// defined.
double joint_angle(const Vec3& p_a, const Vec3& p_b, const Vec3& p_c, double eps = kAngleEps);

struct JointAngleGradient {
  Vec3 d_a = Vec3::Zero();
  Vec3 d_b = Vec3::Zero();
  Vec3 d_c = Vec3::Zero();
};

/// Analytic gradient of `joint_angle`. Undefined at exactly collinear
/// configurations where the arccos derivative diverges; returns zeros there.
JointAngleGradient joint_angle_gradient(const Vec3& p_a, const Vec3& p_b, const Vec3& p_c,
                                        double eps = kAngleEps);

/// 13 per-keypoint scalars followed by the four joint angles.
///
/// Each scalar is the point's distance from the mid-shoulder point divided by
/// the shoulder width. Invalid points contribute 0, and any angle that depends
/// on an invalid point is 0. If either shoulder is invalid no reference frame
/// exists and all 13 scalars are 0.
FrameFeature frame_features(const UpperBodyKeypoints& kp);

/// Per-frame features for a whole clip after imputing missing keypoints:
/// gaps are linearly interpolated between the nearest valid frames, held at
/// the nearest valid value at the sequence edges, and zero-filled when a point
/// is never valid.
SequenceFeatures sequence_features(std::span<const RawPoseFrame> frames, const KeypointLayout& layout,
                                   double confidence_floor = kDefaultConfidenceFloor);

/// Fills missing frame indices in [0, frame_count) with zero-confidence
/// records so that every frame has a row. Input must be sorted by index.
std::vector<RawPoseFrame> densify(std::span<const RawPoseFrame> frames, std::int64_t frame_count);

}  // namespace rehab::pose
