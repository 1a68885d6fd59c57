#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sora/tensor.hpp"

namespace sora {

// "VTEN" binary tensor file: magic "VTEN", u32 version=1, u32 ndim,
// ndim x u32 dims, then f32 data. All integers and floats little-endian.

void vten_save(const std::filesystem::path& path, const Shape& shape,
               std::span<const float> data);

std::pair<Shape, std::vector<float>> vten_load(const std::filesystem::path& path);

// Header-only read: the stored shape without the payload.
Shape vten_read_shape(const std::filesystem::path& path);

inline void vten_save(const std::filesystem::path& path, const Tensor& t) {
    vten_save(path, t.shape(), t.data());
}

inline Tensor vten_load_tensor(const std::filesystem::path& path) {
    auto [shape, data] = vten_load(path);
    return Tensor::from_data(std::move(shape), std::move(data));
}

}  // namespace sora
