#include "rehab/catalog.hpp"
#include "rehab/dataset_builder.hpp"
#include "rehab/error.hpp"
#include "rehab/keypoint_io.hpp"
#include "rehab/knowledge_retrieval.hpp"
#include "rehab/llm_baseline.hpp"
#include "rehab/llm_client.hpp"
#include "rehab/log.hpp"
#include "rehab/media.hpp"
#include "rehab/metrics.hpp"
#include "rehab/model/ablation.hpp"
#include "rehab/model/classifier_adapter.hpp"
#include "rehab/model/clip_provider.hpp"
#include "rehab/model/trainer.hpp"
#include "rehab/rehab_service.hpp"
#include "rehab/report_generator.hpp"
#include "rehab/segmenter.hpp"
#include "rehab/statistics.hpp"
#include "rehab/store.hpp"
#include "rehab/tokenizer.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <atomic>
#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw rehab::NotFoundError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw rehab::Error(rehab::ErrorCode::internal, "cannot write '" + path.string() + "'");
  out << text;
}

/// Writes to a file, or to stdout when the path is empty or "-".
void emit(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    if (!text.empty() && text.back() != '\n') std::cout << '\n';
  } else {
    write_file(path, text);
  }
}

int exit_code(rehab::ErrorCode code) {
  switch (code) {
    case rehab::ErrorCode::validation:
    case rehab::ErrorCode::structural: return 2;
    case rehab::ErrorCode::configuration: return 3;
    case rehab::ErrorCode::not_found: return 4;
    case rehab::ErrorCode::media:
    case rehab::ErrorCode::dependency: return 5;
    case rehab::ErrorCode::provider: return 6;
    default: return 1;
  }
}

rehab::pose::KeypointLayout layout_from(const std::string& path) {
  return path.empty() ? rehab::pose::KeypointLayout::openpose_body25() : rehab::pose::load_layout(path);
}

rehab::model::ModelConfig model_config_from(const std::string& path) {
  return path.empty() ? rehab::model::ModelConfig{} : rehab::model::config_from_json(read_file(path));
}

rehab::model::TrainConfig train_config_from(const std::string& path) {
  return path.empty() ? rehab::model::TrainConfig{} : rehab::model::train_config_from_json(read_file(path));
}

rehab::llm::ProviderConfig provider_from(const std::string& path) {
  if (!path.empty()) return rehab::llm::parse_provider_config(read_file(path));
  if (const char* env = std::getenv("REHAB_LLM_CONFIG")) return rehab::llm::parse_provider_config(read_file(env));
  rehab::log::warn("no LLM provider configured; using the deterministic mock provider");
  return {};
}

std::unique_ptr<rehab::knowledge::Embedder> embedder_from(const std::string& kind, const std::string& url,
                                                          const std::string& model, std::size_t dim) {
  if (kind == "hash") return std::make_unique<rehab::knowledge::HashEmbedder>(dim);
  if (kind == "http") {
    rehab::knowledge::HttpEmbedder::Options o;
    o.base_url = url;
    o.model = model;
    o.dim = dim;
    if (const char* key = std::getenv("REHAB_EMBEDDING_API_KEY")) o.api_key = key;
    return std::make_unique<rehab::knowledge::HttpEmbedder>(o);
  }
  throw rehab::ConfigError("unknown embedder '" + kind + "' (expected hash or http)");
}

struct DataArgs {
  std::string dataset_dir;
  std::string video_dir;
  std::string pose_dir;
  std::string layout;
  std::string classes = "config/classes.json";
};

void add_data_args(CLI::App* cmd, DataArgs& a) {
  cmd->add_option("--dataset", a.dataset_dir, "Dataset directory written by 'dataset build'")->required();
  cmd->add_option("--videos", a.video_dir, "Directory of <video_id>.<ext> files")->required();
  cmd->add_option("--poses", a.pose_dir, "Directory of <video_id>.jsonl keypoint streams")->required();
  cmd->add_option("--layout", a.layout, "Keypoint layout file (default OpenPose BODY_25)");
  cmd->add_option("--classes", a.classes, "Class description file");
}

rehab::model::MemoryClipProvider clips_for(const DataArgs& a, const rehab::dataset::Dataset& ds,
                                           rehab::dataset::Split split, std::int64_t image_size) {
  rehab::model::MediaLayout m{a.video_dir, a.pose_dir, layout_from(a.layout)};
  return rehab::model::load_split(ds, split, m, image_size);
}

std::vector<rehab::eval::BaselineSample> baseline_samples(const DataArgs& a, const rehab::dataset::Dataset& ds,
                                                          rehab::dataset::Split split, int frame_size) {
  std::vector<rehab::eval::BaselineSample> out;
  std::map<std::string, std::unique_ptr<rehab::media::VideoFile>> videos;
  for (const auto& s : ds.samples) {
    if (s.split != split) continue;
    auto& v = videos[s.video_id];
    if (!v) {
      fs::path found;
      for (const char* ext : {".mp4", ".avi", ".mov", ".mkv", ".webm"}) {
        if (fs::exists(fs::path(a.video_dir) / (s.video_id + ext))) found = fs::path(a.video_dir) / (s.video_id + ext);
      }
      if (found.empty()) throw rehab::NotFoundError("no video file for '" + s.video_id + "'");
      v = std::make_unique<rehab::media::VideoFile>(found);
    }
    const std::vector<std::int64_t> idx(s.sampled_frame_indices.begin(), s.sampled_frame_indices.end());
    auto frames = v->read_frames(idx, rehab::media::ResizeTo{frame_size, frame_size});
    rehab::eval::BaselineSample b;
    b.sample_id = s.video_id + "@" + std::to_string(s.start_frame);
    b.label = s.window_label;
    for (auto i : idx) b.frames.push_back(frames.at(i));
    out.push_back(std::move(b));
  }
  return out;
}

std::atomic<bool> g_interrupted{false};

void on_signal(int) { g_interrupted = true; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Upper-limb rehabilitation exercise recognition, segmentation and reporting"};
  app.require_subcommand(1);
  std::string log_level = "info";
  app.add_option("--log-level", log_level, "trace, debug, info, warn, error or off")
      ->each([](const std::string& v) { rehab::log::set_level(v); });

  // pose ---------------------------------------------------------------------
  auto* pose_cmd = app.add_subcommand("pose", "Compute per-frame skeleton features from a keypoint stream");
  std::string pose_in, pose_layout, pose_out;
  std::int64_t pose_frames = 0;
  pose_cmd->add_option("--keypoints", pose_in, "Keypoint stream (JSON lines)")->required();
  pose_cmd->add_option("--layout", pose_layout, "Keypoint layout file (default OpenPose BODY_25)");
  pose_cmd->add_option("--frame-count", pose_frames, "Densify to this many frames");
  pose_cmd->add_option("-o,--out", pose_out, "CSV output (default stdout)");
  pose_cmd->callback([&] {
    auto raw = rehab::pose::read_pose_stream(pose_in);
    if (pose_frames > 0) raw = rehab::pose::densify(raw, pose_frames);
    const auto feats = rehab::pose::sequence_features(raw, layout_from(pose_layout));
    std::ostringstream out;
    out << "frame";
    for (auto name : rehab::pose::keypoint_names()) out << ',' << name;
    for (std::size_t a = 0; a < 4; ++a) {
      out << ',' << rehab::pose::joint_angle_name(static_cast<rehab::pose::JointAngleId>(a)) << "_angle";
    }
    out << '\n';
    out.precision(9);
    for (Eigen::Index r = 0; r < feats.values.rows(); ++r) {
      out << raw[static_cast<std::size_t>(r)].frame_index;
      for (Eigen::Index c = 0; c < feats.values.cols(); ++c) out << ',' << feats.values(r, c);
      out << '\n';
    }
    emit(pose_out, out.str());
  });

  // dataset build --------------------------------------------------------------
  auto* dataset_cmd = app.add_subcommand("dataset", "Window datasets");
  dataset_cmd->require_subcommand(1);
  auto* build_cmd = dataset_cmd->add_subcommand("build", "Cut annotated videos into window samples and split");
  std::vector<std::string> ann_paths;
  std::string split_path, ds_out;
  build_cmd->add_option("--annotations", ann_paths, "Annotation files or directories of *.json")->required();
  build_cmd->add_option("--split", split_path, "Split config (explicit assignment or train_count + seed)")->required();
  build_cmd->add_option("-o,--out", ds_out, "Output directory")->required();
  build_cmd->callback([&] {
    std::vector<rehab::dataset::VideoEntry> videos;
    for (const auto& p : ann_paths) {
      if (fs::is_directory(p)) {
        std::vector<fs::path> files;
        for (const auto& e : fs::directory_iterator(p)) {
          if (e.path().extension() == ".json") files.push_back(e.path());
        }
        std::sort(files.begin(), files.end());
        for (const auto& f : files) videos.push_back(rehab::dataset::load_annotation(f));
      } else {
        videos.push_back(rehab::dataset::load_annotation(p));
      }
    }
    const auto ds = rehab::dataset::build_dataset(videos, rehab::dataset::parse_split_config(read_file(split_path)));
    rehab::dataset::write_dataset(ds, ds_out);
    std::cout << rehab::dataset::manifest_to_json(ds.manifest) << '\n';
  });

  // train ------------------------------------------------------------------------
  auto* train_cmd = app.add_subcommand("train", "Train the recognizer on a window dataset");
  DataArgs train_data;
  std::string model_cfg_path, train_cfg_path, ckpt_out, history_out;
  add_data_args(train_cmd, train_data);
  train_cmd->add_option("--model-config", model_cfg_path, "Model config JSON");
  train_cmd->add_option("--train-config", train_cfg_path, "Training config JSON");
  train_cmd->add_option("-o,--out", ckpt_out, "Checkpoint path")->required();
  train_cmd->add_option("--history", history_out, "Per-epoch metrics JSON");
  train_cmd->callback([&] {
    const auto catalog = rehab::ClassCatalog::load(train_data.classes);
    const auto mcfg = model_config_from(model_cfg_path);
    const auto tcfg = train_config_from(train_cfg_path);
    const auto ds = rehab::dataset::read_dataset(train_data.dataset_dir);
    const auto train_set = clips_for(train_data, ds, rehab::dataset::Split::train, mcfg.image_size);
    const auto val_set = clips_for(train_data, ds, rehab::dataset::Split::val, mcfg.image_size);
    rehab::log::info("training on " + std::to_string(train_set.size()) + " windows, validating on " +
                     std::to_string(val_set.size()));
    auto model = rehab::model::make_recognizer(mcfg, catalog, tcfg.seed);
    const auto result = rehab::model::train(model, train_set, &val_set, {tcfg, fs::path(ckpt_out), nullptr});
    emit(history_out, rehab::model::history_to_json(result));
  });

  // evaluate / eval-model -------------------------------------------------------------
  DataArgs eval_data;
  std::string eval_ckpt, eval_split = "test", eval_out_dir;
  auto setup_eval = [&](CLI::App* cmd) {
    add_data_args(cmd, eval_data);
    cmd->add_option("--checkpoint", eval_ckpt, "Trained checkpoint")->required();
    cmd->add_option("--split", eval_split, "train, val or test");
    cmd->add_option("--out-dir", eval_out_dir, "Writes metrics.json and confusion.csv");
    cmd->callback([&] {
      const auto catalog = rehab::ClassCatalog::load(eval_data.classes);
      auto model = rehab::model::load_checkpoint(eval_ckpt, catalog);
      const auto ds = rehab::dataset::read_dataset(eval_data.dataset_dir);
      const auto clips = clips_for(eval_data, ds, rehab::dataset::split_from_string(eval_split),
                                   model->config().image_size);
      const auto report = rehab::model::evaluate(model, clips);
      if (eval_out_dir.empty()) {
        std::cout << rehab::eval::metrics_to_json(report) << '\n';
      } else {
        write_file(fs::path(eval_out_dir) / "metrics.json", rehab::eval::metrics_to_json(report));
        write_file(fs::path(eval_out_dir) / "confusion.csv", rehab::eval::confusion_to_csv(report));
      }
    });
  };
  setup_eval(app.add_subcommand("evaluate", "Evaluate a checkpoint on a dataset split"));
  setup_eval(app.add_subcommand("eval-model", "Metrics and confusion matrix for a checkpoint"));

  // ablate / eval-ablation -------------------------------------------------------------
  DataArgs abl_data;
  std::vector<std::string> abl_variants = {"full", "no_skeleton", "mlp_skeleton_encoder", "mlp_guided_fuse"};
  std::string abl_model_cfg, abl_train_cfg, abl_out_dir;
  bool abl_synthetic = false;
  std::int64_t abl_syn_classes = 3, abl_syn_per_class = 10;
  auto setup_ablation = [&](CLI::App* cmd) {
    cmd->add_option("--dataset", abl_data.dataset_dir, "Dataset directory");
    cmd->add_option("--videos", abl_data.video_dir, "Directory of videos");
    cmd->add_option("--poses", abl_data.pose_dir, "Directory of keypoint streams");
    cmd->add_option("--layout", abl_data.layout, "Keypoint layout file");
    cmd->add_option("--classes", abl_data.classes, "Class description file");
    cmd->add_option("--variants", abl_variants, "Variants to compare");
    cmd->add_option("--model-config", abl_model_cfg, "Base model config JSON");
    cmd->add_option("--train-config", abl_train_cfg, "Training config JSON");
    cmd->add_flag("--synthetic", abl_synthetic, "Use generated clips instead of a dataset");
    cmd->add_option("--synthetic-classes", abl_syn_classes, "Classes in the generated set");
    cmd->add_option("--synthetic-per-class", abl_syn_per_class, "Clips per class in the generated set");
    cmd->add_option("--out-dir", abl_out_dir, "Writes ablation.json and ablation.csv");
    cmd->callback([&] {
      const auto catalog = rehab::ClassCatalog::load(abl_data.classes);
      rehab::model::AblationOptions opts;
      opts.base = model_config_from(abl_model_cfg);
      opts.train = train_config_from(abl_train_cfg);
      opts.init_seed = opts.train.seed;
      const auto variants = rehab::model::parse_variants(abl_variants);
      rehab::model::MemoryClipProvider train_set, val_set, test_set;
      if (abl_synthetic) {
        train_set = rehab::model::synthetic_clips(abl_syn_classes, abl_syn_per_class, opts.base, opts.train.seed);
        test_set = rehab::model::synthetic_clips(abl_syn_classes, abl_syn_per_class, opts.base, opts.train.seed + 1);
      } else {
        if (abl_data.dataset_dir.empty() || abl_data.video_dir.empty() || abl_data.pose_dir.empty()) {
          throw rehab::ValidationError("dataset", "--dataset, --videos and --poses are required without --synthetic");
        }
        const auto ds = rehab::dataset::read_dataset(abl_data.dataset_dir);
        train_set = clips_for(abl_data, ds, rehab::dataset::Split::train, opts.base.image_size);
        val_set = clips_for(abl_data, ds, rehab::dataset::Split::val, opts.base.image_size);
        test_set = clips_for(abl_data, ds, rehab::dataset::Split::test, opts.base.image_size);
      }
      const auto rows = rehab::model::run_ablation(variants, catalog, train_set,
                                                   val_set.size() ? &val_set : nullptr, test_set, opts);
      if (abl_out_dir.empty()) {
        std::cout << rehab::model::ablation_to_csv(rows);
      } else {
        write_file(fs::path(abl_out_dir) / "ablation.json", rehab::model::ablation_to_json(rows));
        write_file(fs::path(abl_out_dir) / "ablation.csv", rehab::model::ablation_to_csv(rows));
      }
    });
  };
  setup_ablation(app.add_subcommand("ablate", "Train and test the model variants"));
  setup_ablation(app.add_subcommand("eval-ablation", "Ablation comparison table"));

  // segment ---------------------------------------------------------------------
  auto* seg_cmd = app.add_subcommand("segment", "Recognize and cut a session video into action segments");
  std::string seg_video, seg_keypoints, seg_layout, seg_ckpt, seg_classes = "config/classes.json", seg_out_dir,
                                                              seg_id;
  std::int64_t seg_min_frames = rehab::segment::kDefaultMinSegmentFrames;
  seg_cmd->add_option("--video", seg_video, "Session video")->required();
  seg_cmd->add_option("--keypoints", seg_keypoints, "Keypoint stream for the video")->required();
  seg_cmd->add_option("--layout", seg_layout, "Keypoint layout file");
  seg_cmd->add_option("--checkpoint", seg_ckpt, "Trained checkpoint")->required();
  seg_cmd->add_option("--classes", seg_classes, "Class description file");
  seg_cmd->add_option("--id", seg_id, "Video id (default: file stem)");
  seg_cmd->add_option("--min-frames", seg_min_frames, "Shortest kept action run in frames");
  seg_cmd->add_option("--out-dir", seg_out_dir, "Writes segments.json and sub-clips")->required();
  seg_cmd->callback([&] {
    const auto catalog = rehab::ClassCatalog::load(seg_classes);
    rehab::model::RecognizerClassifier classifier(rehab::model::load_checkpoint(seg_ckpt, catalog));
    rehab::media::VideoFile video(seg_video);
    const auto pose = rehab::pose::read_pose_stream(seg_keypoints);
    const auto preds = rehab::segment::predict_windows(video, pose, layout_from(seg_layout), classifier);
    rehab::segment::SegmentOptions opts;
    opts.min_segment_frames = seg_min_frames;
    const std::string vid = seg_id.empty() ? fs::path(seg_video).stem().string() : seg_id;
    auto segs = rehab::segment::segment_video(vid, preds, video.info().frame_count, opts);
    rehab::segment::extract_subclips(video, segs, fs::path(seg_out_dir) / "clips");
    write_file(fs::path(seg_out_dir) / "segments.json", rehab::segment::segments_to_json(segs));
    std::cout << segs.size() << " segment(s) from " << preds.size() << " window(s)\n";
  });

  // kb build / kb consolidate ----------------------------------------------------------
  auto* kb_cmd = app.add_subcommand("kb", "Knowledge corpus");
  kb_cmd->require_subcommand(1);
  std::string embedder_kind = "hash", embedder_url, embedder_model;
  std::size_t embedder_dim = 256;
  auto add_embedder = [&](CLI::App* cmd) {
    cmd->add_option("--embedder", embedder_kind, "hash or http");
    cmd->add_option("--embedder-url", embedder_url, "Embedding service base URL");
    cmd->add_option("--embedder-model", embedder_model, "Embedding model id");
    cmd->add_option("--embedder-dim", embedder_dim, "Embedding width");
  };
  auto* kb_build = kb_cmd->add_subcommand("build", "Chunk and index a corpus directory");
  std::string corpus_dir, index_out;
  std::size_t chunk_tokens = rehab::knowledge::kDefaultChunkTokens;
  kb_build->add_option("--corpus", corpus_dir, "Directory of *.txt documents")->required();
  kb_build->add_option("--chunk-tokens", chunk_tokens, "Tokens per chunk");
  kb_build->add_option("-o,--out", index_out, "Index file")->required();
  add_embedder(kb_build);
  kb_build->callback([&] {
    const auto docs = rehab::knowledge::load_corpus_dir(corpus_dir);
    auto chunks = rehab::knowledge::chunk_corpus(docs, rehab::text::WordTokenizer{}, chunk_tokens);
    for (const auto& w : chunks.warnings) rehab::log::warn(w);
    auto embedder = embedder_from(embedder_kind, embedder_url, embedder_model, embedder_dim);
    const auto index = rehab::knowledge::VectorIndex::build(std::move(chunks.chunks), *embedder);
    index.save(index_out);
    std::cout << index.size() << " chunk(s) from " << docs.size() << " document(s); fingerprint "
              << index.content_fingerprint() << '\n';
  });
  auto* kb_cons = kb_cmd->add_subcommand("consolidate", "Precompute per-class retrieval into the cache");
  std::string cons_index, cons_classes = "config/classes.json", cons_cache, cons_db;
  rehab::knowledge::ConsolidateOptions cons_opts;
  kb_cons->add_option("--index", cons_index, "Index file from 'kb build'")->required();
  kb_cons->add_option("--classes", cons_classes, "Class description file");
  kb_cons->add_option("--cache", cons_cache, "JSON cache file");
  kb_cons->add_option("--data-dir", cons_db, "Service data directory (cache stored in its database)");
  kb_cons->add_option("-k", cons_opts.k, "Chunks per class");
  kb_cons->add_option("--token-budget", cons_opts.token_budget, "Knowledge tokens per class");
  add_embedder(kb_cons);
  kb_cons->callback([&] {
    if (cons_cache.empty() == cons_db.empty()) {
      throw rehab::ValidationError("cache", "give exactly one of --cache or --data-dir");
    }
    const auto catalog = rehab::ClassCatalog::load(cons_classes);
    auto embedder = embedder_from(embedder_kind, embedder_url, embedder_model, embedder_dim);
    const auto index = rehab::knowledge::VectorIndex::load(cons_index, *embedder);
    rehab::knowledge::ConsolidateResult result;
    if (!cons_cache.empty()) {
      rehab::knowledge::JsonFileCacheStore store(cons_cache);
      result = rehab::knowledge::consolidate(catalog, *embedder, index, store, cons_opts);
    } else {
      fs::create_directories(cons_db);
      rehab::service::Store db(fs::path(cons_db) / "rehab.db");
      db.migrate();
      rehab::service::SqliteCacheStore store(db);
      result = rehab::knowledge::consolidate(catalog, *embedder, index, store, cons_opts);
    }
    for (const auto& w : result.warnings) rehab::log::warn(w);
    std::cout << (result.recomputed ? "recomputed" : "unchanged") << ": version " << result.cache.version << ", "
              << result.cache.entries.size() << " class(es)\n";
  });

  // report ---------------------------------------------------------------------
  auto* report_cmd = app.add_subcommand("report", "Generate an assessment report for segmented clips");
  std::string rep_segments, rep_session, rep_classes = "config/classes.json", rep_knowledge, rep_provider, rep_out,
                                                     rep_transcript;
  std::size_t rep_parallel = 1;
  report_cmd->add_option("--segments", rep_segments, "segments.json from 'segment'")->required();
  report_cmd->add_option("--session-id", rep_session, "Session id (default: segments file stem)");
  report_cmd->add_option("--classes", rep_classes, "Class description file");
  report_cmd->add_option("--knowledge", rep_knowledge, "Consolidated knowledge cache JSON");
  report_cmd->add_option("--provider", rep_provider, "LLM provider config JSON");
  report_cmd->add_option("--parallel", rep_parallel, "Actions evaluated concurrently");
  report_cmd->add_option("--transcript", rep_transcript, "Writes every LLM exchange as JSON lines");
  report_cmd->add_option("-o,--out", rep_out, "Report JSON (default stdout)");
  report_cmd->callback([&] {
    const auto catalog = rehab::ClassCatalog::load(rep_classes);
    std::optional<rehab::knowledge::KnowledgeBase> kb;
    if (!rep_knowledge.empty()) {
      rehab::knowledge::JsonFileCacheStore store(rep_knowledge);
      auto cache = store.load();
      if (!cache) throw rehab::NotFoundError("knowledge cache '" + rep_knowledge + "' not found");
      kb.emplace(std::move(*cache));
    }
    auto client = rehab::llm::make_client(provider_from(rep_provider));
    rehab::llm::Transcript transcript;
    rehab::report::SessionInput input;
    input.session_id = rep_session.empty() ? fs::path(rep_segments).parent_path().filename().string() : rep_session;
    input.segments = rehab::segment::segments_from_json(read_file(rep_segments));
    const auto base = fs::path(rep_segments).parent_path();
    input.open_clip = [base](const rehab::segment::ActionSegment& s) -> std::unique_ptr<rehab::media::VideoSource> {
      fs::path p = s.subclip_uri;
      if (p.is_relative() && !fs::exists(p)) p = base / p;
      return std::make_unique<rehab::media::VideoFile>(p);
    };
    rehab::report::ReportContext ctx;
    ctx.catalog = &catalog;
    ctx.knowledge = kb ? &*kb : nullptr;
    ctx.client = client.get();
    ctx.transcript = &transcript;
    const auto report = rehab::report::generate_report(input, ctx, {rep_parallel});
    if (!rep_transcript.empty()) write_file(rep_transcript, transcript.to_jsonl());
    emit(rep_out, rehab::report::report_to_json(report));
  });

  // eval-baseline --------------------------------------------------------------------
  auto* base_cmd = app.add_subcommand("eval-baseline", "Zero- or few-shot multimodal LLM recognition baseline");
  DataArgs base_data;
  std::string base_mode = "zero_shot", base_split = "test", base_provider, base_out, base_transcript;
  std::uint64_t base_seed = 0;
  int base_frame_size = 224;
  base_cmd->add_option("--dataset", base_data.dataset_dir, "Dataset directory")->required();
  base_cmd->add_option("--videos", base_data.video_dir, "Directory of videos")->required();
  base_cmd->add_option("--classes", base_data.classes, "Class description file");
  base_cmd->add_option("--mode", base_mode, "zero_shot or few_shot");
  base_cmd->add_option("--split", base_split, "Split to evaluate");
  base_cmd->add_option("--seed", base_seed, "Exemplar selection seed");
  base_cmd->add_option("--frame-size", base_frame_size, "Frames are resized to this square size");
  base_cmd->add_option("--provider", base_provider, "LLM provider config JSON");
  base_cmd->add_option("--transcript", base_transcript, "Writes every LLM exchange as JSON lines");
  base_cmd->add_option("-o,--out", base_out, "Result JSON (default stdout)");
  base_cmd->callback([&] {
    const auto catalog = rehab::ClassCatalog::load(base_data.classes);
    const auto mode = rehab::eval::baseline_mode_from_string(base_mode);
    const auto ds = rehab::dataset::read_dataset(base_data.dataset_dir);
    const auto samples =
        baseline_samples(base_data, ds, rehab::dataset::split_from_string(base_split), base_frame_size);
    std::vector<rehab::eval::FewShotExemplar> exemplars;
    if (mode == rehab::eval::BaselineMode::few_shot) {
      exemplars = rehab::eval::select_exemplars(
          baseline_samples(base_data, ds, rehab::dataset::Split::train, base_frame_size), base_seed);
    }
    auto client = rehab::llm::make_client(provider_from(base_provider));
    rehab::llm::Transcript transcript;
    rehab::eval::BaselineOptions opts;
    opts.transcript = &transcript;
    const auto result = rehab::eval::run_llm_baseline(mode, samples, catalog, *client, exemplars, opts);
    if (!base_transcript.empty()) write_file(base_transcript, transcript.to_jsonl());
    emit(base_out, rehab::eval::baseline_to_json(result));
  });

  // eval-reports ------------------------------------------------------------------
  auto* rep_eval = app.add_subcommand("eval-reports", "Likert score tables, normality and Mann-Whitney tests");
  std::string scores_path, rep_eval_out;
  std::vector<std::string> pair_specs;
  double alpha = 0.05;
  rep_eval->add_option("--scores", scores_path, "CSV with model,dimension,score rows")->required();
  rep_eval->add_option("--pair", pair_specs, "enhanced:plain model pair to compare")->required();
  rep_eval->add_option("--alpha", alpha, "Significance level");
  rep_eval->add_option("--out-dir", rep_eval_out, "Writes likert.json, likert.csv and normality.csv");
  rep_eval->callback([&] {
    std::map<std::pair<std::string, std::string>, std::size_t> slot;
    std::vector<rehab::eval::LikertDataset> datasets;
    std::istringstream in(read_file(scores_path));
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty() || (lineno == 1 && line.rfind("model,", 0) == 0)) continue;
      std::istringstream row(line);
      std::string model, dim, score;
      if (!std::getline(row, model, ',') || !std::getline(row, dim, ',') || !std::getline(row, score)) {
        throw rehab::ValidationError("scores", "line " + std::to_string(lineno) + ": expected model,dimension,score");
      }
      int value = 0;
      try {
        value = std::stoi(score);
      } catch (const std::exception&) {
        throw rehab::ValidationError("scores", "line " + std::to_string(lineno) + ": score is not an integer");
      }
      auto [it, fresh] = slot.try_emplace({model, dim}, datasets.size());
      if (fresh) datasets.push_back({model, dim, {}});
      datasets[it->second].scores.push_back(value);
    }
    std::vector<std::pair<std::string, std::string>> pairs;
    for (const auto& p : pair_specs) {
      const auto colon = p.find(':');
      if (colon == std::string::npos) throw rehab::ValidationError("pair", "expected enhanced:plain, got " + p);
      pairs.emplace_back(p.substr(0, colon), p.substr(colon + 1));
    }
    const auto summary = rehab::eval::likert_summary(datasets, pairs, alpha);
    std::ostringstream normality;
    normality << "model,dimension,n,w,p_value,degenerate,rejects_normality\n";
    for (const auto& d : datasets) {
      normality << d.model_id << ',' << d.dimension << ',' << d.scores.size() << ',';
      if (d.scores.size() < 3) {
        normality << ",,,\n";
        continue;
      }
      const std::vector<double> xs(d.scores.begin(), d.scores.end());
      const auto sw = rehab::stats::shapiro_wilk(xs);
      normality << sw.w << ',' << sw.p_value << ',' << (sw.degenerate ? 1 : 0) << ','
                << (sw.rejects_normality(alpha) ? 1 : 0) << '\n';
    }
    if (rep_eval_out.empty()) {
      std::cout << rehab::eval::likert_to_csv(summary) << '\n' << normality.str();
    } else {
      write_file(fs::path(rep_eval_out) / "likert.json", rehab::eval::likert_to_json(summary));
      write_file(fs::path(rep_eval_out) / "likert.csv", rehab::eval::likert_to_csv(summary));
      write_file(fs::path(rep_eval_out) / "normality.csv", normality.str());
    }
  });

  // service: serve / migrate / enqueue-reprocess -------------------------------------------------
  std::string data_dir;
  auto service_config = [&] {
    auto cfg = rehab::service::ServiceConfig::from_env();
    if (!data_dir.empty()) cfg.data_dir = data_dir;
    return cfg;
  };
  auto* serve_cmd = app.add_subcommand("serve", "Run the HTTP service and processing workers");
  std::string host = "0.0.0.0", srv_ckpt, srv_classes = "config/classes.json", srv_layout, srv_provider,
              srv_index, nurse_token;
  int port = 8080;
  std::size_t workers = 0;
  serve_cmd->add_option("--data-dir", data_dir, "Data directory (env REHAB_DATA_DIR)");
  serve_cmd->add_option("--host", host, "Bind address");
  serve_cmd->add_option("--port", port, "Port; 0 picks a free one");
  serve_cmd->add_option("--workers", workers, "Processing workers (env REHAB_WORKERS)");
  serve_cmd->add_option("--checkpoint", srv_ckpt, "Recognizer checkpoint (env REHAB_CHECKPOINT)");
  serve_cmd->add_option("--classes", srv_classes, "Class description file");
  serve_cmd->add_option("--layout", srv_layout, "Keypoint layout file");
  serve_cmd->add_option("--provider", srv_provider, "LLM provider config JSON (env REHAB_LLM_CONFIG)");
  serve_cmd->add_option("--index", srv_index, "Knowledge index; consolidated into the database at start");
  serve_cmd->add_option("--nurse-token", nurse_token, "Bootstrap nurse token (env REHAB_NURSE_TOKEN)");
  add_embedder(serve_cmd);
  serve_cmd->callback([&] {
    auto cfg = service_config();
    if (workers > 0) cfg.worker_threads = workers;
    if (!nurse_token.empty()) cfg.nurse_token = nurse_token;
    if (srv_ckpt.empty()) {
      if (const char* env = std::getenv("REHAB_CHECKPOINT")) srv_ckpt = env;
    }
    const auto catalog = rehab::ClassCatalog::load(srv_classes);

    std::unique_ptr<rehab::model::RecognizerClassifier> classifier;
    if (!srv_ckpt.empty()) {
      classifier = std::make_unique<rehab::model::RecognizerClassifier>(rehab::model::load_checkpoint(srv_ckpt, catalog));
    } else {
      rehab::log::warn("no checkpoint given; uploaded sessions will fail segmentation");
    }

    std::optional<rehab::knowledge::KnowledgeBase> kb;
    {
      fs::create_directories(cfg.data_dir);
      rehab::service::Store db(cfg.data_dir / "rehab.db");
      db.migrate();
      rehab::service::SqliteCacheStore store(db);
      if (!srv_index.empty()) {
        auto embedder = embedder_from(embedder_kind, embedder_url, embedder_model, embedder_dim);
        const auto index = rehab::knowledge::VectorIndex::load(srv_index, *embedder);
        const auto result = rehab::knowledge::consolidate(catalog, *embedder, index, store);
        for (const auto& w : result.warnings) rehab::log::warn(w);
      }
      if (auto cache = store.load()) {
        kb.emplace(std::move(*cache));
      } else {
        rehab::log::warn("no consolidated knowledge in the database; reports are generated without it");
      }
    }

    auto client = rehab::llm::make_client(provider_from(srv_provider));
    rehab::service::Pipeline pipeline;
    pipeline.classifier = classifier.get();
    pipeline.layout = layout_from(srv_layout);
    pipeline.catalog = &catalog;
    pipeline.knowledge = kb ? &*kb : nullptr;
    pipeline.llm = client.get();

    rehab::service::RehabService service(cfg, pipeline, rehab::service::system_now,
                                         std::make_shared<rehab::service::LoggingReminderSender>());
    if (cfg.nurse_token.empty()) {
      const auto token = service.issue_token({rehab::service::Role::nurse, "nurse"});
      std::cout << "nurse token: " << token << std::endl;
    }
    const int bound = service.bind(host, port);
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    service.start_workers();
    service.serve_in_background();
    rehab::log::info("listening on " + host + ":" + std::to_string(bound));
    while (!g_interrupted) std::this_thread::sleep_for(std::chrono::milliseconds(200));
    rehab::log::info("shutting down");
    service.stop();
  });

  auto* migrate_cmd = app.add_subcommand("migrate", "Create or upgrade the service database");
  migrate_cmd->add_option("--data-dir", data_dir, "Data directory (env REHAB_DATA_DIR)");
  migrate_cmd->callback([&] {
    const auto cfg = service_config();
    fs::create_directories(cfg.data_dir);
    rehab::service::Store db(cfg.data_dir / "rehab.db");
    db.migrate();
    std::cout << "database ready at " << (cfg.data_dir / "rehab.db").string() << '\n';
  });

  auto* reprocess_cmd = app.add_subcommand("enqueue-reprocess", "Queue a new report version for a session");
  std::string reprocess_session;
  reprocess_cmd->add_option("--data-dir", data_dir, "Data directory (env REHAB_DATA_DIR)");
  reprocess_cmd->add_option("session_id", reprocess_session, "Session id")->required();
  reprocess_cmd->callback([&] {
    auto cfg = service_config();
    cfg.reminder_interval = std::chrono::seconds{0};
    rehab::service::RehabService service(cfg, {}, rehab::service::system_now,
                                         std::make_shared<rehab::service::LoggingReminderSender>());
    const auto job = service.enqueue_reprocess(reprocess_session);
    std::cout << "queued job " << job << " for session " << reprocess_session << '\n';
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const rehab::Error& e) {
    std::cerr << "error [" << rehab::to_string(e.code()) << "]: " << e.what() << '\n';
    return exit_code(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
