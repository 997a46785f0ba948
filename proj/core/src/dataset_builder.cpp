#include "rehab/dataset_builder.hpp"

#include "rehab/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

namespace rehab::dataset {

using nlohmann::json;
using ordered_json = nlohmann::ordered_json;

namespace {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFoundError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Fisher-Yates over mt19937_64 draws; std::shuffle's algorithm is
// implementation-defined so it would not reproduce across standard libraries.
template <typename T>
void seeded_shuffle(std::vector<T>& v, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (std::size_t i = v.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(v[i - 1], v[j]);
  }
}

}  // namespace

LabelId TimelineAnnotation::label_at(std::int64_t frame) const {
  auto it = std::upper_bound(spans.begin(), spans.end(), frame,
                             [](std::int64_t f, const LabelSpan& s) { return f < s.start_frame; });
  if (it == spans.begin()) return kNoAction;
  --it;
  return frame <= it->end_frame ? it->label : kNoAction;
}

void validate(const TimelineAnnotation& annotation) {
  std::ostringstream problems;
  bool bad = false;
  for (std::size_t i = 0; i < annotation.spans.size(); ++i) {
    const auto& s = annotation.spans[i];
    if (s.start_frame < 0 || s.end_frame < s.start_frame) {
      problems << " span " << i << " [" << s.start_frame << "," << s.end_frame << "] is malformed;";
      bad = true;
    }
    if (!is_valid_label(s.label)) {
      problems << " span " << i << " has label " << s.label << " outside 0.." << kNumClasses - 1 << ";";
      bad = true;
    }
    if (i > 0) {
      const auto& p = annotation.spans[i - 1];
      if (s.start_frame <= p.end_frame) {
        problems << " spans " << i - 1 << " [" << p.start_frame << "," << p.end_frame << "] and " << i << " ["
                 << s.start_frame << "," << s.end_frame << "] overlap or are unsorted;";
        bad = true;
      }
    }
  }
  if (bad) throw ValidationError("annotation '" + annotation.video_id + "':" + problems.str());
}

std::string to_string(Split split) {
  switch (split) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "train";
}

Split split_from_string(const std::string& name) {
  if (name == "train") return Split::train;
  if (name == "val" || name == "validation") return Split::val;
  if (name == "test") return Split::test;
  throw ValidationError("split", "unknown split '" + name + "'");
}

std::vector<std::int64_t> extract_windows(std::int64_t frame_count) {
  if (frame_count < 0) throw ValidationError("frame_count", "must be >= 0, got " + std::to_string(frame_count));
  std::vector<std::int64_t> starts;
  for (std::int64_t s = 0; s + kWindowFrames <= frame_count; s += kWindowStride) starts.push_back(s);
  return starts;
}

std::array<std::int64_t, kFramesPerSample> sample_indices(std::int64_t start_frame) {
  std::array<std::int64_t, kFramesPerSample> idx{};
  for (std::size_t i = 0; i < kFramesPerSample; ++i) {
    idx[i] = start_frame + static_cast<std::int64_t>(i) * kSampleStep;
  }
  return idx;
}

LabelId resolve_window_label(std::span<const LabelId> labels) {
  if (labels.size() != kFramesPerSample) {
    throw ValidationError("per_frame_labels", "expected " + std::to_string(kFramesPerSample) + " labels, got " +
                                                  std::to_string(labels.size()));
  }
  std::map<LabelId, int> counts;
  std::map<LabelId, std::size_t> first_seen;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (!is_valid_label(labels[i])) {
      throw ValidationError("per_frame_labels", "label " + std::to_string(labels[i]) + " out of range");
    }
    ++counts[labels[i]];
    first_seen.try_emplace(labels[i], i);
  }
  int best = 0;
  for (const auto& [label, n] : counts) best = std::max(best, n);

  std::optional<LabelId> winner;
  for (const auto& [label, n] : counts) {
    if (n != best) continue;
    if (!winner) {
      winner = label;
      continue;
    }
    const bool cur_action = is_action(*winner);
    const bool cand_action = is_action(label);
    if (cand_action != cur_action) {
      if (cand_action) winner = label;
    } else if (first_seen[label] < first_seen[*winner]) {
      winner = label;
    }
  }
  return *winner;
}

SplitConfig parse_split_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("split config: ") + e.what());
  }
  SplitConfig cfg;
  cfg.seed = j.value("seed", std::uint64_t{0});
  if (j.contains("train_count")) cfg.train_count = j["train_count"].get<std::size_t>();
  for (const char* key : {"train", "val", "test"}) {
    if (j.contains(key)) cfg.explicit_assignment[split_from_string(key)] = j[key].get<std::vector<std::string>>();
  }
  if (cfg.train_count && !cfg.explicit_assignment.empty()) {
    throw ConfigError("split config: use either train_count or explicit train/val/test lists, not both");
  }
  return cfg;
}

Dataset build_dataset(std::span<const VideoEntry> videos, const SplitConfig& split) {
  Dataset ds;
  ds.manifest.seed = split.seed;

  std::set<std::string> ids;
  for (const auto& v : videos) {
    if (!ids.insert(v.video_id).second) throw ValidationError("videos", "duplicate video id '" + v.video_id + "'");
    if (v.frame_count < 0) throw ValidationError("frame_count", "negative for '" + v.video_id + "'");
    validate(v.annotation);
  }

  std::map<std::string, Split> assignment;
  if (split.train_count) {
    if (*split.train_count > videos.size()) {
      throw ConfigError("split config: train_count exceeds number of videos");
    }
    std::vector<std::string> rest;
    for (std::size_t i = 0; i < videos.size(); ++i) {
      if (i < *split.train_count) {
        assignment[videos[i].video_id] = Split::train;
      } else {
        rest.push_back(videos[i].video_id);
      }
    }
    seeded_shuffle(rest, split.seed);
    const std::size_t n_val = (rest.size() + 1) / 2;
    for (std::size_t i = 0; i < rest.size(); ++i) assignment[rest[i]] = i < n_val ? Split::val : Split::test;
  } else {
    std::ostringstream clashes;
    bool clash = false;
    for (const auto& [which, list] : split.explicit_assignment) {
      for (const auto& id : list) {
        auto [it, inserted] = assignment.emplace(id, which);
        if (!inserted && it->second != which) {
          clashes << " '" << id << "' in " << to_string(it->second) << " and " << to_string(which) << ";";
          clash = true;
        }
      }
    }
    if (clash) throw ValidationError("split", "videos assigned to more than one split:" + clashes.str());
    for (const auto& v : videos) {
      if (!assignment.contains(v.video_id)) {
        throw ValidationError("split", "video '" + v.video_id + "' has no split assignment");
      }
    }
  }

  for (Split s : {Split::train, Split::val, Split::test}) ds.manifest.splits[s] = SplitStats{};
  for (const auto& v : videos) {
    const Split which = assignment.at(v.video_id);
    ds.manifest.video_splits[v.video_id] = which;
    auto& stats = ds.manifest.splits[which];
    for (std::int64_t start : extract_windows(v.frame_count)) {
      WindowSample s;
      s.video_id = v.video_id;
      s.start_frame = start;
      s.sampled_frame_indices = sample_indices(start);
      for (std::size_t i = 0; i < kFramesPerSample; ++i) {
        s.per_frame_labels[i] = v.annotation.label_at(s.sampled_frame_indices[i]);
      }
      s.window_label = resolve_window_label(s.per_frame_labels);
      s.split = which;
      ++stats.sample_count;
      ++stats.label_histogram[static_cast<std::size_t>(s.window_label)];
      ds.samples.push_back(s);
    }
  }
  return ds;
}

std::string manifest_to_json(const DatasetManifest& m) {
  ordered_json j;
  j["version"] = m.version;
  j["seed"] = m.seed;
  ordered_json vids = ordered_json::object();
  for (const auto& [id, s] : m.video_splits) vids[id] = to_string(s);
  j["video_splits"] = std::move(vids);
  ordered_json splits = ordered_json::object();
  for (const auto& [s, stats] : m.splits) {
    ordered_json e;
    e["sample_count"] = stats.sample_count;
    e["label_histogram"] = stats.label_histogram;
    splits[to_string(s)] = std::move(e);
  }
  j["splits"] = std::move(splits);
  return j.dump(2) + "\n";
}

DatasetManifest manifest_from_json(const std::string& text) {
  DatasetManifest m;
  try {
    const json j = json::parse(text);
    m.version = j.at("version").get<int>();
    if (m.version != kManifestVersion) {
      throw ConfigError("manifest version " + std::to_string(m.version) + " is not supported");
    }
    m.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& [id, s] : j.at("video_splits").items()) m.video_splits[id] = split_from_string(s.get<std::string>());
    for (const auto& [name, e] : j.at("splits").items()) {
      SplitStats stats;
      stats.sample_count = e.at("sample_count").get<std::size_t>();
      stats.label_histogram = e.at("label_histogram").get<std::array<std::size_t, kNumClasses>>();
      m.splits[split_from_string(name)] = stats;
    }
  } catch (const json::exception& e) {
    throw ValidationError("manifest", e.what());
  }
  return m;
}

std::string sample_to_json(const WindowSample& s) {
  ordered_json j;
  j["video_id"] = s.video_id;
  j["split"] = to_string(s.split);
  j["start_frame"] = s.start_frame;
  j["sampled_frame_indices"] = s.sampled_frame_indices;
  j["per_frame_labels"] = s.per_frame_labels;
  j["window_label"] = s.window_label;
  return j.dump();
}

WindowSample sample_from_json(const std::string& line) {
  WindowSample s;
  try {
    const json j = json::parse(line);
    s.video_id = j.at("video_id").get<std::string>();
    s.split = split_from_string(j.at("split").get<std::string>());
    s.start_frame = j.at("start_frame").get<std::int64_t>();
    s.sampled_frame_indices = j.at("sampled_frame_indices").get<std::array<std::int64_t, kFramesPerSample>>();
    s.per_frame_labels = j.at("per_frame_labels").get<std::array<LabelId, kFramesPerSample>>();
    s.window_label = j.at("window_label").get<LabelId>();
  } catch (const json::exception& e) {
    throw ValidationError("sample record", e.what());
  }
  return s;
}

void write_dataset(const Dataset& ds, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "samples");
  {
    std::ofstream out(dir / "manifest.json", std::ios::binary);
    out << manifest_to_json(ds.manifest);
  }
  std::map<std::string, std::ofstream> files;
  for (const auto& [id, _] : ds.manifest.video_splits) {
    files.emplace(id, std::ofstream(dir / "samples" / (id + ".jsonl"), std::ios::binary));
  }
  for (const auto& s : ds.samples) files.at(s.video_id) << sample_to_json(s) << '\n';
}

Dataset read_dataset(const std::filesystem::path& dir) {
  Dataset ds;
  ds.manifest = manifest_from_json(read_file(dir / "manifest.json"));
  for (const auto& [id, _] : ds.manifest.video_splits) {
    std::ifstream in(dir / "samples" / (id + ".jsonl"));
    if (!in) throw NotFoundError("missing sample file for video '" + id + "'");
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty()) ds.samples.push_back(sample_from_json(line));
    }
  }
  return ds;
}

VideoEntry parse_annotation(const std::string& json_text) {
  VideoEntry v;
  try {
    const json j = json::parse(json_text);
    v.video_id = j.at("video_id").get<std::string>();
    v.frame_count = j.at("frame_count").get<std::int64_t>();
    v.annotation.video_id = v.video_id;
    v.annotation.fps = j.value("fps", 30.0);
    for (const auto& s : j.at("spans")) {
      LabelSpan span;
      span.label = s.at("label").get<LabelId>();
      if (s.contains("start_frame")) {
        span.start_frame = s.at("start_frame").get<std::int64_t>();
        span.end_frame = s.at("end_frame").get<std::int64_t>();
      } else {
        const double fps = v.annotation.fps;
        span.start_frame = std::llround(s.at("start").get<double>() * fps);
        span.end_frame = std::llround(s.at("end").get<double>() * fps) - 1;
      }
      v.annotation.spans.push_back(span);
    }
  } catch (const json::exception& e) {
    throw ValidationError("annotation", e.what());
  }
  validate(v.annotation);
  return v;
}

VideoEntry load_annotation(const std::filesystem::path& path) { return parse_annotation(read_file(path)); }

}  // namespace rehab::dataset
