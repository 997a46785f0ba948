#include "rehab/media.hpp"

#include "rehab/error.hpp"

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>
#include <opencv2/videoio.hpp>

#include <algorithm>
#include <cmath>
#include <set>

namespace rehab::media {

namespace {

Image from_bgr(const cv::Mat& bgr) {
  cv::Mat rgb;
  cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
  Image img;
  img.width = rgb.cols;
  img.height = rgb.rows;
  img.rgb.resize(static_cast<std::size_t>(rgb.cols) * rgb.rows * 3);
  for (int r = 0; r < rgb.rows; ++r) {
    std::copy_n(rgb.ptr<std::uint8_t>(r), static_cast<std::size_t>(rgb.cols) * 3,
                img.rgb.data() + static_cast<std::size_t>(r) * rgb.cols * 3);
  }
  return img;
}

cv::Mat to_bgr(const Image& img) {
  cv::Mat rgb(img.height, img.width, CV_8UC3, const_cast<std::uint8_t*>(img.rgb.data()));
  cv::Mat bgr;
  cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
  return bgr;
}

void check_indices(std::span<const std::int64_t> indices, std::int64_t frame_count) {
  for (auto i : indices) {
    if (i < 0 || i >= frame_count) {
      throw MediaError("frame " + std::to_string(i) + " outside video of " + std::to_string(frame_count) + " frames");
    }
  }
}

cv::VideoWriter open_writer(const std::filesystem::path& path, double fps, int width, int height) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  cv::VideoWriter writer(path.string(), cv::VideoWriter::fourcc('M', 'J', 'P', 'G'), fps > 0 ? fps : 30.0,
                         cv::Size(width, height));
  if (!writer.isOpened()) throw MediaError("cannot open video writer for " + path.string());
  return writer;
}

}  // namespace

Image Image::solid(int width, int height, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  Image img;
  img.width = width;
  img.height = height;
  img.rgb.resize(static_cast<std::size_t>(width) * height * 3);
  for (std::size_t i = 0; i < img.rgb.size(); i += 3) {
    img.rgb[i] = r;
    img.rgb[i + 1] = g;
    img.rgb[i + 2] = b;
  }
  return img;
}

Image resize(const Image& image, ResizeTo size) {
  if (image.width == size.width && image.height == size.height) return image;
  cv::Mat src(image.height, image.width, CV_8UC3, const_cast<std::uint8_t*>(image.rgb.data()));
  cv::Mat dst;
  cv::resize(src, dst, cv::Size(size.width, size.height), 0, 0, cv::INTER_AREA);
  Image out;
  out.width = dst.cols;
  out.height = dst.rows;
  out.rgb.assign(dst.data, dst.data + static_cast<std::size_t>(dst.cols) * dst.rows * 3);
  return out;
}

VideoFile::VideoFile(std::filesystem::path path) : path_(std::move(path)) {
  cv::VideoCapture cap(path_.string(), cv::CAP_FFMPEG);
  if (!cap.isOpened()) throw MediaError("cannot decode video " + path_.string());
  info_.fps = cap.get(cv::CAP_PROP_FPS);
  info_.width = static_cast<int>(cap.get(cv::CAP_PROP_FRAME_WIDTH));
  info_.height = static_cast<int>(cap.get(cv::CAP_PROP_FRAME_HEIGHT));
  // Container frame counts are estimates for some codecs; count by decoding.
  std::int64_t n = 0;
  while (cap.grab()) ++n;
  info_.frame_count = n;
  if (n == 0) throw MediaError("video " + path_.string() + " has no decodable frames");
}

std::map<std::int64_t, Image> VideoFile::read_frames(std::span<const std::int64_t> indices,
                                                     std::optional<ResizeTo> size) {
  check_indices(indices, info_.frame_count);
  std::map<std::int64_t, Image> out;
  if (indices.empty()) return out;
  const std::set<std::int64_t> wanted(indices.begin(), indices.end());
  cv::VideoCapture cap(path_.string(), cv::CAP_FFMPEG);
  if (!cap.isOpened()) throw MediaError("cannot decode video " + path_.string());
  const std::int64_t last = *wanted.rbegin();
  cv::Mat frame;
  for (std::int64_t i = 0; i <= last; ++i) {
    if (!cap.grab()) throw MediaError("decode failed at frame " + std::to_string(i) + " of " + path_.string());
    if (!wanted.contains(i)) continue;
    cap.retrieve(frame);
    Image img = from_bgr(frame);
    out.emplace(i, size ? resize(img, *size) : std::move(img));
  }
  return out;
}

void VideoSource::scan(std::int64_t first, std::int64_t last, const FrameVisitor& visit) {
  constexpr std::int64_t kBatch = 256;
  for (std::int64_t b = first; b <= last; b += kBatch) {
    std::vector<std::int64_t> idx;
    for (std::int64_t i = b; i <= std::min(last, b + kBatch - 1); ++i) idx.push_back(i);
    for (const auto& [i, img] : read_frames(idx)) visit(i, img);
  }
}

void VideoFile::scan(std::int64_t first, std::int64_t last, const FrameVisitor& visit) {
  const std::int64_t bounds[] = {first, last};
  check_indices(bounds, info_.frame_count);
  cv::VideoCapture cap(path_.string(), cv::CAP_FFMPEG);
  if (!cap.isOpened()) throw MediaError("cannot decode video " + path_.string());
  cv::Mat frame;
  for (std::int64_t i = 0; i <= last; ++i) {
    if (!cap.grab()) throw MediaError("decode failed at frame " + std::to_string(i) + " of " + path_.string());
    if (i < first) continue;
    cap.retrieve(frame);
    visit(i, from_bgr(frame));
  }
}

GeneratedVideo::GeneratedVideo(VideoInfo info, Generator generator)
    : info_(info), generator_(std::move(generator)) {}

std::map<std::int64_t, Image> GeneratedVideo::read_frames(std::span<const std::int64_t> indices,
                                                          std::optional<ResizeTo> size) {
  check_indices(indices, info_.frame_count);
  std::map<std::int64_t, Image> out;
  for (auto i : indices) {
    if (out.contains(i)) continue;
    Image img = generator_(i);
    out.emplace(i, size ? resize(img, *size) : std::move(img));
  }
  return out;
}

void write_video(const std::filesystem::path& path, VideoSource& source) {
  const VideoInfo info = source.info();
  write_clip(path, source, 0, info.frame_count - 1);
}

std::int64_t write_clip(const std::filesystem::path& path, VideoSource& source, std::int64_t start_frame,
                        std::int64_t end_frame) {
  const VideoInfo info = source.info();
  if (start_frame < 0 || end_frame < start_frame || end_frame >= info.frame_count) {
    throw MediaError("clip range [" + std::to_string(start_frame) + "," + std::to_string(end_frame) +
                     "] invalid for video of " + std::to_string(info.frame_count) + " frames");
  }
  cv::VideoWriter writer;
  std::int64_t written = 0;
  source.scan(start_frame, end_frame, [&](std::int64_t, const Image& img) {
    if (!writer.isOpened()) writer = open_writer(path, info.fps, img.width, img.height);
    writer.write(to_bgr(img));
    ++written;
  });
  writer.release();
  return written;
}

std::vector<std::uint8_t> encode_jpeg(const Image& image, int quality) {
  std::vector<std::uint8_t> buf;
  if (!cv::imencode(".jpg", to_bgr(image), buf, {cv::IMWRITE_JPEG_QUALITY, quality})) {
    throw MediaError("jpeg encoding failed");
  }
  return buf;
}

std::string base64_encode(std::span<const std::uint8_t> bytes) {
  static constexpr char kAlphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < bytes.size(); i += 3) {
    const std::uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8) | bytes[i + 2];
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += kAlphabet[(v >> 6) & 63];
    out += kAlphabet[v & 63];
  }
  if (i < bytes.size()) {
    std::uint32_t v = bytes[i] << 16;
    if (i + 1 < bytes.size()) v |= bytes[i + 1] << 8;
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += i + 1 < bytes.size() ? kAlphabet[(v >> 6) & 63] : '=';
    out += '=';
  }
  return out;
}

}  // namespace rehab::media
