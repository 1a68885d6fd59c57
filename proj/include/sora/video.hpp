#pragma once

#include <filesystem>
#include <vector>

#include "sora/tensor.hpp"

namespace sora {

// Dense pixel video: frames x height x width x channels, f32 in [0,1].
struct VideoTensor {
    int frames = 0;
    int height = 0;
    int width = 0;
    int channels = 0;
    std::vector<float> data;

    VideoTensor() = default;
    VideoTensor(int t, int h, int w, int c, float fill = 0.0f);

    std::size_t numel() const { return data.size(); }

    float& at(int t, int y, int x, int c) {
        return data[((static_cast<std::size_t>(t) * height + y) * width + x) * channels + c];
    }
    float at(int t, int y, int x, int c) const {
        return data[((static_cast<std::size_t>(t) * height + y) * width + x) * channels + c];
    }

    Tensor to_tensor() const;
    static VideoTensor from_tensor(const Tensor& t);

    VideoTensor frame(int t) const;                 // single frame as T=1 video
    VideoTensor frame_range(int start, int count) const;
};

void vten_save_video(const std::filesystem::path& path, const VideoTensor& v);
VideoTensor vten_load_video(const std::filesystem::path& path);

// Loads a rank-4 VTEN video, a rank-3 single frame, or a frame-folder: a
// directory whose *.vten files (sorted by name) are the frames of one clip.
VideoTensor load_video_any(const std::filesystem::path& path);

// Bilinear resize of every frame to (out_h, out_w).
VideoTensor resize_bilinear(const VideoTensor& v, int out_h, int out_w);

// Center crop to (out_h, out_w); throws GeometryError if larger than input.
VideoTensor center_crop(const VideoTensor& v, int out_h, int out_w);

// Resize preserving aspect so the target rectangle is covered, then center
// crop to exactly (out_h, out_w).
VideoTensor fit_to(const VideoTensor& v, int out_h, int out_w);

// Keep the first `count` frames.
VideoTensor trim_frames(const VideoTensor& v, int count);

// Per-frame luminance plane (averaged channels), row-major H*W.
std::vector<float> luma_frame(const VideoTensor& v, int t);

}  // namespace sora
