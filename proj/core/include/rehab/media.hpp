#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace rehab::media {

/// Interleaved 8-bit RGB image.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;

  bool empty() const noexcept { return rgb.empty(); }
  static Image solid(int width, int height, std::uint8_t r, std::uint8_t g, std::uint8_t b);
};

struct VideoInfo {
  std::int64_t frame_count = 0;
  double fps = 0.0;
  int width = 0;
  int height = 0;

  double duration_seconds() const noexcept { return fps > 0.0 ? static_cast<double>(frame_count) / fps : 0.0; }
};

struct ResizeTo {
  int width = 0;
  int height = 0;
};

/// Random-access frame source. Implementations decode lazily.
class VideoSource {
 public:
  virtual ~VideoSource() = default;
  virtual VideoInfo info() const = 0;
  /// Frames at the requested indices (any order, duplicates allowed), optionally
  /// resized. Throws MediaError for indices outside the video.
  virtual std::map<std::int64_t, Image> read_frames(std::span<const std::int64_t> indices,
                                                    std::optional<ResizeTo> resize = std::nullopt) = 0;

  using FrameVisitor = std::function<void(std::int64_t, const Image&)>;
  /// Visits frames [first, last] in order.
  virtual void scan(std::int64_t first, std::int64_t last, const FrameVisitor& visit);
};

/// Video file decoded with OpenCV.
class VideoFile final : public VideoSource {
 public:
  explicit VideoFile(std::filesystem::path path);
  VideoInfo info() const override { return info_; }
  std::map<std::int64_t, Image> read_frames(std::span<const std::int64_t> indices,
                                            std::optional<ResizeTo> resize = std::nullopt) override;
  void scan(std::int64_t first, std::int64_t last, const FrameVisitor& visit) override;
  const std::filesystem::path& path() const noexcept { return path_; }

 private:
  std::filesystem::path path_;
  VideoInfo info_;
};

/// In-memory video whose frames come from a generator function.
class GeneratedVideo final : public VideoSource {
 public:
  using Generator = std::function<Image(std::int64_t)>;
  GeneratedVideo(VideoInfo info, Generator generator);
  VideoInfo info() const override { return info_; }
  std::map<std::int64_t, Image> read_frames(std::span<const std::int64_t> indices,
                                            std::optional<ResizeTo> resize = std::nullopt) override;

 private:
  VideoInfo info_;
  Generator generator_;
};

Image resize(const Image& image, ResizeTo size);

/// Writes frames [0, info.frame_count) from `source` to a Motion-JPEG AVI.
void write_video(const std::filesystem::path& path, VideoSource& source);

/// Copies frames [start, end] (inclusive) of `source` into a new file.
/// Returns the number of frames written.
std::int64_t write_clip(const std::filesystem::path& path, VideoSource& source, std::int64_t start_frame,
                        std::int64_t end_frame);

/// JPEG bytes, used when shipping frames to remote model providers.
std::vector<std::uint8_t> encode_jpeg(const Image& image, int quality = 85);

std::string base64_encode(std::span<const std::uint8_t> bytes);

}  // namespace rehab::media
