#include "rehab/model/clip_provider.hpp"

#include "rehab/error.hpp"
#include "rehab/keypoint_io.hpp"

#include <cmath>
#include <random>
#include <set>

namespace rehab::model {

namespace {

constexpr std::array<float, 3> kMean = {0.48145466f, 0.4578275f, 0.40821073f};
constexpr std::array<float, 3> kStd = {0.26862954f, 0.26130258f, 0.27577711f};

torch::Tensor features_to_tensor(const pose::FeatureMatrix& m) {
  auto t = torch::empty({m.rows(), m.cols()}, torch::kFloat);
  auto acc = t.accessor<float, 2>();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) acc[r][c] = static_cast<float>(m(r, c));
  }
  return t;
}

std::filesystem::path find_video(const std::filesystem::path& dir, const std::string& video_id) {
  for (const char* ext : {".mp4", ".avi", ".mov", ".mkv", ".webm"}) {
    auto p = dir / (video_id + ext);
    if (std::filesystem::exists(p)) return p;
  }
  throw NotFoundError("no video file for '" + video_id + "' under " + dir.string());
}

}  // namespace

void ClipBatch::validate(const ModelConfig& config) const {
  if (!frames.defined() || frames.dim() != 5 || frames.size(2) != 3 || frames.size(3) != config.image_size ||
      frames.size(4) != config.image_size) {
    throw ValidationError("frames", "expected B x N_f x 3 x " + std::to_string(config.image_size) + " x " +
                                        std::to_string(config.image_size));
  }
  if (!skeleton.defined() || skeleton.dim() != 3 || skeleton.size(0) != frames.size(0) ||
      skeleton.size(1) != frames.size(1) || skeleton.size(2) != config.skeleton_dim) {
    throw ValidationError("skeleton", "expected B x N_f x " + std::to_string(config.skeleton_dim));
  }
  if (!torch::isfinite(frames).all().item<bool>()) throw ValidationError("frames", "non-finite values");
  if (!torch::isfinite(skeleton).all().item<bool>()) throw ValidationError("skeleton", "non-finite values");
}

torch::Tensor image_to_tensor(const media::Image& image, std::int64_t size) {
  if (image.empty()) throw MediaError("empty frame");
  const auto s = static_cast<int>(size);
  const media::Image img = (image.width == s && image.height == s) ? image : media::resize(image, {s, s});
  auto t = torch::from_blob(const_cast<std::uint8_t*>(img.rgb.data()), {size, size, 3}, torch::kUInt8)
               .permute({2, 0, 1})
               .to(torch::kFloat)
               .div(255.0);
  const auto mean = torch::tensor(std::vector<float>(kMean.begin(), kMean.end())).view({3, 1, 1});
  const auto std = torch::tensor(std::vector<float>(kStd.begin(), kStd.end())).view({3, 1, 1});
  return ((t - mean) / std).contiguous();
}

ClipBatch collate(std::span<const ClipExample> examples) {
  std::vector<std::size_t> order(examples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  return collate(examples, order);
}

ClipBatch collate(std::span<const ClipExample> examples, std::span<const std::size_t> order) {
  if (order.empty()) throw ValidationError("batch", "empty batch");
  std::vector<torch::Tensor> frames, skeleton;
  std::vector<std::int64_t> labels;
  for (auto i : order) {
    frames.push_back(examples[i].frames);
    skeleton.push_back(examples[i].skeleton);
    labels.push_back(examples[i].label);
  }
  return {torch::stack(frames), torch::stack(skeleton), torch::tensor(labels, torch::kLong)};
}

ClipBatch batch_from_windows(std::span<const segment::WindowInput> windows, std::int64_t image_size) {
  std::vector<ClipExample> examples;
  examples.reserve(windows.size());
  for (const auto& w : windows) {
    ClipExample ex;
    std::vector<torch::Tensor> frames;
    for (const auto& f : w.frames) frames.push_back(image_to_tensor(f, image_size));
    ex.frames = torch::stack(frames);
    ex.skeleton = features_to_tensor(w.skeleton);
    ex.start_frame = w.start_frame;
    examples.push_back(std::move(ex));
  }
  return collate(examples);
}

MemoryClipProvider load_split(const dataset::Dataset& ds, dataset::Split split, const MediaLayout& media,
                              std::int64_t image_size) {
  MemoryClipProvider out;
  std::size_t i = 0;
  while (i < ds.samples.size()) {
    const std::string& vid = ds.samples[i].video_id;
    std::size_t j = i;
    while (j < ds.samples.size() && ds.samples[j].video_id == vid) ++j;
    std::vector<const dataset::WindowSample*> picked;
    for (std::size_t k = i; k < j; ++k) {
      if (ds.samples[k].split == split) picked.push_back(&ds.samples[k]);
    }
    i = j;
    if (picked.empty()) continue;

    media::VideoFile video(find_video(media.video_dir, vid));
    const auto pose_path = media.pose_dir / (vid + ".jsonl");
    if (!std::filesystem::exists(pose_path)) {
      throw DependencyError("no pose stream for '" + vid + "' at " + pose_path.string());
    }
    const auto raw = pose::read_pose_stream(pose_path);
    if (raw.empty()) throw DependencyError("pose stream for '" + vid + "' is empty");
    const auto features = pose::sequence_features(pose::densify(raw, video.info().frame_count), media.keypoints);

    std::set<std::int64_t> needed;
    for (const auto* s : picked) needed.insert(s->sampled_frame_indices.begin(), s->sampled_frame_indices.end());
    const std::vector<std::int64_t> indices(needed.begin(), needed.end());
    const auto s_int = static_cast<int>(image_size);
    const auto frames = video.read_frames(indices, media::ResizeTo{s_int, s_int});

    for (const auto* s : picked) {
      ClipExample ex;
      std::vector<torch::Tensor> f;
      pose::FeatureMatrix skel(static_cast<Eigen::Index>(s->sampled_frame_indices.size()),
                               static_cast<Eigen::Index>(pose::kFeatureDim));
      for (std::size_t k = 0; k < s->sampled_frame_indices.size(); ++k) {
        const auto idx = s->sampled_frame_indices[k];
        f.push_back(image_to_tensor(frames.at(idx), image_size));
        skel.row(static_cast<Eigen::Index>(k)) = features.values.row(idx);
      }
      ex.frames = torch::stack(f);
      ex.skeleton = features_to_tensor(skel);
      ex.label = s->window_label;
      ex.video_id = vid;
      ex.start_frame = s->start_frame;
      out.add(std::move(ex));
    }
  }
  return out;
}

MemoryClipProvider synthetic_clips(std::int64_t classes, std::int64_t per_class, const ModelConfig& config,
                                   std::uint64_t seed) {
  if (classes <= 0 || per_class <= 0) throw ValidationError("synthetic", "classes and per_class must be positive");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 0.02);
  MemoryClipProvider out;
  const auto n = config.num_frames;
  const auto size = config.image_size;
  const auto dim = config.skeleton_dim;
  for (std::int64_t c = 0; c < classes; ++c) {
    const auto r = static_cast<std::uint8_t>((c * 97 + 40) % 256);
    const auto g = static_cast<std::uint8_t>((c * 53 + 160) % 256);
    const auto b = static_cast<std::uint8_t>((c * 181 + 90) % 256);
    const double freq = 0.3 + 0.25 * static_cast<double>(c);
    for (std::int64_t k = 0; k < per_class; ++k) {
      ClipExample ex;
      const auto frame = image_to_tensor(media::Image::solid(static_cast<int>(size), static_cast<int>(size), r, g, b),
                                         size);
      std::vector<torch::Tensor> frames;
      auto skel = torch::empty({n, dim}, torch::kFloat);
      auto acc = skel.accessor<float, 2>();
      const double phase = static_cast<double>(k) * 0.37;
      for (std::int64_t t = 0; t < n; ++t) {
        frames.push_back(frame + static_cast<float>(noise(rng)));
        for (std::int64_t j = 0; j < dim; ++j) {
          const double base = std::sin(freq * static_cast<double>(t) + phase + 0.5 * static_cast<double>(j));
          acc[t][j] = static_cast<float>((j % (c + 2) == 0 ? 1.0 : 0.3) * base + noise(rng));
        }
      }
      ex.frames = torch::stack(frames);
      ex.skeleton = skel;
      ex.label = c;
      ex.video_id = "synthetic-" + std::to_string(c);
      ex.start_frame = k;
      out.add(std::move(ex));
    }
  }
  return out;
}

}  // namespace rehab::model
