#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "sora/video.hpp"

namespace sora {

// Synthetic moving-shape clips with programmatic captions and exact motion
// labels: the desk-scale stand-in for a real video corpus.

struct SynthSpec {
    std::vector<int> sides = {16, 32, 48};      // pixel short sides (multiples of 16)
    std::vector<int> frame_counts = {8, 16, 32, 64};
    double fps = 4.0;
    bool include_images = true;  // emit some single-frame clips
};

struct SynthRecord {
    std::string clip_id;
    std::string path;
    int width = 0;
    int height = 0;
    int frames = 0;
    double fps = 4.0;
    std::string caption;  // e.g. "red square moving right"
    std::string motion;   // {right,left,up,down,static}
};

struct SynthResult {
    std::vector<SynthRecord> records;
    std::filesystem::path catalog;  // catalog.csv inside out_dir
};

// Deterministic in (n, spec, seed); writes one VTEN per clip plus catalog.csv.
SynthResult make_synthetic(int n, const SynthSpec& spec, std::uint64_t seed,
                           const std::filesystem::path& out_dir);

std::vector<SynthRecord> load_catalog(const std::filesystem::path& catalog_csv);

}  // namespace sora
