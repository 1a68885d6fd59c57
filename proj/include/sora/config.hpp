#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "sora/bucketizer.hpp"
#include "sora/codec.hpp"
#include "sora/flow.hpp"
#include "sora/stdit.hpp"

namespace sora {

// Parsed INI-style config: [section] headers, key = value pairs, and bare
// item lines (used by the bucket table). '#' and ';' start comment lines.
struct IniFile {
    std::map<std::string, std::map<std::string, std::string>> values;
    std::map<std::string, std::vector<std::string>> items;
    std::vector<std::string> section_order;

    bool has(const std::string& section, const std::string& key) const;
    std::string get(const std::string& section, const std::string& key,
                    const std::string& fallback) const;
    double get_num(const std::string& section, const std::string& key, double fallback) const;
};

IniFile parse_ini(const std::string& text);

struct StageConfig {
    int id = 1;
    int steps = 100;
    double mask_prob = 0.0;
    double lr = 1e-3;
    std::vector<std::string> resolutions;  // allowed bucket labels
    std::vector<int> frames;               // allowed bucket frame counts

    void validate() const {
        if (steps < 1) throw ValueError("stage: steps must be positive");
        if (mask_prob < 0.0 || mask_prob > 1.0) throw ValueError("stage: mask_prob in [0,1]");
        if (!(lr > 0.0)) throw ValueError("stage: lr must be positive");
    }
};

// Validation grid axes: clip lengths by label and resolutions by label.
struct GridSpec {
    std::vector<std::string> length_labels = {"image", "2s", "4s", "8s", "16s"};
    std::vector<std::string> resolution_labels = {"144p", "240p", "360p", "480p", "720p"};
    int clips_per_cell = 2;
};

struct KitConfig {
    std::uint64_t seed = 1234;
    double fps = 4.0;
    std::map<std::string, int> resolutions;  // label -> desk-scale short side px
    int max_text_tokens = 16;

    StditConfig model;
    FlowConfig flow;
    std::string flow_reference_resolution = "240p";
    int flow_reference_frames = 16;

    CodecConfig codec;
    CodecTrainConfig codec_train;

    std::vector<StageConfig> stages;
    std::vector<Bucket> buckets;
    GridSpec grid;

    int resolve_px(const std::string& label) const;
    int seconds_to_frames(const std::string& length_label) const;
    double reference_token_count() const;
    void finalize();  // fills derived fields, validates
};

KitConfig default_config();

// Loads the INI file over the defaults. The OPEN_SORA_KIT_SEED environment
// variable, when set, overrides the configured seed.
KitConfig load_config(const std::filesystem::path& path);
KitConfig config_from_text(const std::string& text);

// The documented default config, suitable for `sorakit init-config`.
std::string default_config_text();

}  // namespace sora
