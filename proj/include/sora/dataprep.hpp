#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "sora/video.hpp"

// Desk-scale data pipeline: scene cutting, filter scoring behind pluggable
// interfaces (with deterministic heuristic reference implementations),
// camera-motion detection and manifest emission.

namespace sora {

// Per-block (u, v) displacement in pixels/frame on an 8x8-block grid.
// Positive u = content moving right, positive v = content moving down.
struct FlowField {
    int grid_h = 0;
    int grid_w = 0;
    std::vector<float> u, v;

    float& at_u(int y, int x) { return u[static_cast<std::size_t>(y) * grid_w + x]; }
    float& at_v(int y, int x) { return v[static_cast<std::size_t>(y) * grid_w + x]; }
    float at_u(int y, int x) const { return u[static_cast<std::size_t>(y) * grid_w + x]; }
    float at_v(int y, int x) const { return v[static_cast<std::size_t>(y) * grid_w + x]; }

    double mean_magnitude() const;
};

// Frame indices where a new scene starts. A cut lands where the inter-frame
// difference leaps above threshold x (rolling median difference).
std::vector<int> detect_scenes(const VideoTensor& v, double threshold);

// Pluggable per-frame scorer in [0, 10].
using FrameScorer = std::function<double(const VideoTensor& frame)>;

// Contrast + sharpness heuristic mapped to [0, 10].
double reference_aesthetic_scorer(const VideoTensor& frame);

// Average of the scorer over frames {0, T/2, T-1}.
double aesthetic_score(const VideoTensor& v, const FrameScorer& scorer);

// Exhaustive block matching (8x8 blocks, +-4 px search) per consecutive pair.
std::vector<FlowField> optical_flow(const VideoTensor& v);

// Mean displacement magnitude over all pairs and blocks.
double flow_score(const VideoTensor& v);

// Pluggable text-area estimator: fraction of the frame covered by text-like
// content in [0, 1].
using TextAreaDetector = std::function<double(const VideoTensor& frame)>;

// Flags high-contrast blocks dense in horizontal gradients.
double reference_text_detector(const VideoTensor& frame);

// Detector output averaged over frames {0, T/2, T-1}.
double ocr_area_ratio(const VideoTensor& v, const TextAreaDetector& detector);

struct CameraThresholds {
    double translation = 0.5;  // px/frame on the mean flow vector
    double divergence = 0.015; // 1/frame on the mean flow divergence
};

// "static" unless the mean flow or its divergence crosses a threshold.
// Camera direction is opposite the content motion: content moving right
// means the camera pans left; an outward field means the camera zooms in.
std::string camera_motion(const std::vector<FlowField>& flows, const CameraThresholds& th);

// ----------------------------------------------------------------- pipeline

struct ClipRecord {
    std::string clip_id;
    std::string source_id;
    std::string path;  // clip VTEN written by the pipeline; empty if dropped
    int frame_start = 0;
    int frames = 0;
    int width = 0;
    int height = 0;
    double fps = 4.0;
    std::string caption;  // score-augmented
    double aesthetic = 0.0;
    double flow = 0.0;
    double ocr_ratio = 0.0;
    std::string camera = "static";
    bool keep = true;
};

struct PrepInput {
    std::string source_id;
    std::filesystem::path path;  // rank-4 VTEN video
    std::string caption;
    double fps = 4.0;
};

struct PrepConfig {
    double scene_threshold = 8.0;
    double aes_min = 2.0;
    double flow_min = 0.05;
    double ocr_max = 0.3;
    CameraThresholds camera;
    int min_clip_frames = 2;
    int max_clip_frames = 64;
    int workers = 4;
    std::filesystem::path output_dir;  // kept clips land here when non-empty
    FrameScorer aesthetic_scorer;      // defaults to the reference heuristic
    TextAreaDetector text_detector;    // defaults to the reference heuristic
};

struct PrepResult {
    std::vector<ClipRecord> records;   // sorted by clip_id
    std::vector<std::string> errors;   // unreadable inputs, one note each
};

// Scene-cut, score, filter and caption every input video. Workers process
// clips independently; the merged output is ordered by clip id so results
// never depend on scheduling.
PrepResult run_pipeline(const std::vector<PrepInput>& videos, const PrepConfig& cfg);

std::string manifest_csv(const std::vector<ClipRecord>& records);
std::vector<ClipRecord> parse_manifest_csv(const std::string& text);

std::string stats_csv(const std::vector<ClipRecord>& records);

}  // namespace sora
