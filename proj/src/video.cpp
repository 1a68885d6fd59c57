#include "sora/video.hpp"

#include <algorithm>
#include <cmath>

#include "sora/vten.hpp"

namespace sora {

VideoTensor::VideoTensor(int t, int h, int w, int c, float fill)
    : frames(t), height(h), width(w), channels(c) {
    if (t < 1 || h < 1 || w < 1 || c < 1)
        throw GeometryError("VideoTensor: all dims must be positive");
    data.assign(static_cast<std::size_t>(t) * h * w * c, fill);
}

Tensor VideoTensor::to_tensor() const {
    return Tensor::from_data({frames, height, width, channels}, data);
}

VideoTensor VideoTensor::from_tensor(const Tensor& t) {
    if (t.ndim() != 4) throw DimensionError("video tensor must be rank 4");
    VideoTensor v(t.shape()[0], t.shape()[1], t.shape()[2], t.shape()[3]);
    std::copy(t.data().begin(), t.data().end(), v.data.begin());
    return v;
}

VideoTensor VideoTensor::frame(int t) const { return frame_range(t, 1); }

VideoTensor VideoTensor::frame_range(int start, int count) const {
    if (start < 0 || count < 1 || start + count > frames)
        throw GeometryError("frame_range out of bounds");
    VideoTensor out(count, height, width, channels);
    std::size_t frame_len = static_cast<std::size_t>(height) * width * channels;
    std::copy_n(data.begin() + static_cast<std::size_t>(start) * frame_len,
                static_cast<std::size_t>(count) * frame_len, out.data.begin());
    return out;
}

void vten_save_video(const std::filesystem::path& path, const VideoTensor& v) {
    vten_save(path, {v.frames, v.height, v.width, v.channels},
              std::span<const float>(v.data.data(), v.data.size()));
}

VideoTensor vten_load_video(const std::filesystem::path& path) {
    auto [shape, data] = vten_load(path);
    if (shape.size() != 4) throw IoError("video VTEN must be rank 4: " + path.string());
    VideoTensor v(shape[0], shape[1], shape[2], shape[3]);
    v.data = std::move(data);
    return v;
}

VideoTensor load_video_any(const std::filesystem::path& path) {
    if (!std::filesystem::is_directory(path)) {
        auto [shape, data] = vten_load(path);
        if (shape.size() == 3) {
            VideoTensor v(1, shape[0], shape[1], shape[2]);
            v.data = std::move(data);
            return v;
        }
        if (shape.size() != 4) throw IoError("video VTEN must be rank 3 or 4: " + path.string());
        VideoTensor v(shape[0], shape[1], shape[2], shape[3]);
        v.data = std::move(data);
        return v;
    }
    std::vector<std::filesystem::path> frames;
    for (const auto& entry : std::filesystem::directory_iterator(path))
        if (entry.is_regular_file() && entry.path().extension() == ".vten")
            frames.push_back(entry.path());
    if (frames.empty()) throw IoError("frame folder has no .vten frames: " + path.string());
    std::sort(frames.begin(), frames.end());
    VideoTensor out;
    for (std::size_t i = 0; i < frames.size(); ++i) {
        VideoTensor frame = load_video_any(frames[i]);
        if (frame.frames != 1)
            throw IoError("frame folder entries must be single frames: " + frames[i].string());
        if (i == 0) {
            out = VideoTensor(static_cast<int>(frames.size()), frame.height, frame.width,
                              frame.channels);
        } else if (frame.height != out.height || frame.width != out.width ||
                   frame.channels != out.channels) {
            throw IoError("inconsistent frame geometry in " + path.string());
        }
        std::size_t frame_len = static_cast<std::size_t>(out.height) * out.width * out.channels;
        std::copy_n(frame.data.begin(), frame_len, out.data.begin() + i * frame_len);
    }
    return out;
}

VideoTensor resize_bilinear(const VideoTensor& v, int out_h, int out_w) {
    if (out_h < 1 || out_w < 1) throw GeometryError("resize target must be positive");
    if (out_h == v.height && out_w == v.width) return v;
    VideoTensor out(v.frames, out_h, out_w, v.channels);
    double sy = static_cast<double>(v.height) / out_h;
    double sx = static_cast<double>(v.width) / out_w;
    for (int t = 0; t < v.frames; ++t)
        for (int y = 0; y < out_h; ++y) {
            double fy = (y + 0.5) * sy - 0.5;
            int y0 = static_cast<int>(std::floor(fy));
            double wy = fy - y0;
            int y0c = std::clamp(y0, 0, v.height - 1);
            int y1c = std::clamp(y0 + 1, 0, v.height - 1);
            for (int x = 0; x < out_w; ++x) {
                double fx = (x + 0.5) * sx - 0.5;
                int x0 = static_cast<int>(std::floor(fx));
                double wx = fx - x0;
                int x0c = std::clamp(x0, 0, v.width - 1);
                int x1c = std::clamp(x0 + 1, 0, v.width - 1);
                for (int c = 0; c < v.channels; ++c) {
                    double top = v.at(t, y0c, x0c, c) * (1.0 - wx) + v.at(t, y0c, x1c, c) * wx;
                    double bot = v.at(t, y1c, x0c, c) * (1.0 - wx) + v.at(t, y1c, x1c, c) * wx;
                    out.at(t, y, x, c) = static_cast<float>(top * (1.0 - wy) + bot * wy);
                }
            }
        }
    return out;
}

VideoTensor center_crop(const VideoTensor& v, int out_h, int out_w) {
    if (out_h > v.height || out_w > v.width)
        throw GeometryError("center_crop: target exceeds input");
    if (out_h == v.height && out_w == v.width) return v;
    int oy = (v.height - out_h) / 2;
    int ox = (v.width - out_w) / 2;
    VideoTensor out(v.frames, out_h, out_w, v.channels);
    for (int t = 0; t < v.frames; ++t)
        for (int y = 0; y < out_h; ++y)
            for (int x = 0; x < out_w; ++x)
                for (int c = 0; c < v.channels; ++c)
                    out.at(t, y, x, c) = v.at(t, oy + y, ox + x, c);
    return out;
}

VideoTensor fit_to(const VideoTensor& v, int out_h, int out_w) {
    double scale = std::max(static_cast<double>(out_h) / v.height,
                            static_cast<double>(out_w) / v.width);
    int rh = std::max(out_h, static_cast<int>(std::lround(v.height * scale)));
    int rw = std::max(out_w, static_cast<int>(std::lround(v.width * scale)));
    return center_crop(resize_bilinear(v, rh, rw), out_h, out_w);
}

VideoTensor trim_frames(const VideoTensor& v, int count) {
    if (count > v.frames) throw GeometryError("trim_frames: not enough frames");
    return v.frame_range(0, count);
}

std::vector<float> luma_frame(const VideoTensor& v, int t) {
    std::vector<float> out(static_cast<std::size_t>(v.height) * v.width);
    for (int y = 0; y < v.height; ++y)
        for (int x = 0; x < v.width; ++x) {
            double s = 0.0;
            for (int c = 0; c < v.channels; ++c) s += v.at(t, y, x, c);
            out[static_cast<std::size_t>(y) * v.width + x] =
                static_cast<float>(s / v.channels);
        }
    return out;
}

}  // namespace sora
