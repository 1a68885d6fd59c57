#include "sora/config.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace sora {

namespace {

std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream is(s);
    while (std::getline(is, cur, sep)) out.push_back(trim(cur));
    return out;
}

}  // namespace

bool IniFile::has(const std::string& section, const std::string& key) const {
    auto it = values.find(section);
    return it != values.end() && it->second.count(key) > 0;
}

std::string IniFile::get(const std::string& section, const std::string& key,
                         const std::string& fallback) const {
    auto it = values.find(section);
    if (it == values.end()) return fallback;
    auto kv = it->second.find(key);
    return kv == it->second.end() ? fallback : kv->second;
}

double IniFile::get_num(const std::string& section, const std::string& key,
                        double fallback) const {
    if (!has(section, key)) return fallback;
    const std::string v = get(section, key, "");
    try {
        std::size_t used = 0;
        double parsed = std::stod(v, &used);
        if (trim(v.substr(used)).empty()) return parsed;
    } catch (const std::exception&) {
    }
    throw ValueError("config: bad numeric value '" + v + "' for [" + section + "] " + key);
}

IniFile parse_ini(const std::string& text) {
    IniFile ini;
    std::istringstream is(text);
    std::string line;
    std::string section;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#' || t[0] == ';') continue;
        if (t.front() == '[') {
            if (t.back() != ']')
                throw ValueError("config: bad section header at line " + std::to_string(lineno));
            section = trim(t.substr(1, t.size() - 2));
            if (!ini.values.count(section)) {
                ini.values[section] = {};
                ini.section_order.push_back(section);
            }
            continue;
        }
        auto eq = t.find('=');
        if (eq != std::string::npos) {
            std::string key = trim(t.substr(0, eq));
            std::string value = trim(t.substr(eq + 1));
            if (key.empty())
                throw ValueError("config: empty key at line " + std::to_string(lineno));
            ini.values[section][key] = value;
        } else {
            ini.items[section].push_back(t);
        }
    }
    return ini;
}

int KitConfig::resolve_px(const std::string& label) const {
    auto it = resolutions.find(label);
    if (it == resolutions.end()) throw ValueError("unknown resolution label '" + label + "'");
    return it->second;
}

int KitConfig::seconds_to_frames(const std::string& length_label) const {
    if (length_label == "image") return 1;
    if (length_label.size() < 2 || length_label.back() != 's')
        throw ValueError("bad length label '" + length_label + "'");
    double seconds = std::stod(length_label.substr(0, length_label.size() - 1));
    int frames = static_cast<int>(std::lround(seconds * fps));
    if (frames < 1) throw ValueError("length label maps to zero frames");
    return frames;
}

double KitConfig::reference_token_count() const {
    int px = resolve_px(flow_reference_resolution);
    int grid = px / kSpatialFactor / model.patch;
    return static_cast<double>(latent_frames_for(flow_reference_frames)) * grid * grid;
}

void KitConfig::finalize() {
    model.validate();
    codec.validate();
    if (model.latent_channels != codec.latent_channels)
        throw ValueError("config: model and codec latent channel counts differ");
    flow.reference_tokens = reference_token_count();
    flow.validate();
    for (auto& b : buckets) {
        auto it = resolutions.find(b.label);
        if (it == resolutions.end())
            throw ValueError("config: bucket uses unknown resolution '" + b.label + "'");
        b.resolution = it->second;
        b.validate();
        if (b.pixel_height() % (kSpatialFactor * model.patch) != 0 ||
            b.pixel_width() % (kSpatialFactor * model.patch) != 0)
            throw ValueError("config: bucket " + b.label + " geometry not patchable");
    }
    if (stages.empty()) throw ValueError("config: at least one training stage required");
    for (auto& s : stages) s.validate();
}

KitConfig default_config() { return config_from_text(default_config_text()); }

KitConfig load_config(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot read config: " + path.string());
    std::stringstream buf;
    buf << is.rdbuf();
    return config_from_text(buf.str());
}

KitConfig config_from_text(const std::string& text) {
    IniFile ini = parse_ini(text);
    KitConfig cfg;

    cfg.seed = static_cast<std::uint64_t>(ini.get_num("", "seed", 1234));
    cfg.fps = ini.get_num("data", "fps", 4.0);
    cfg.max_text_tokens = static_cast<int>(ini.get_num("model", "max_text_tokens", 16));

    // resolution label map
    cfg.resolutions = {{"144p", 16}, {"240p", 32}, {"360p", 48}, {"480p", 64}, {"720p", 96}};
    if (ini.values.count("resolutions"))
        for (const auto& [label, px] : ini.values.at("resolutions"))
            cfg.resolutions[label] = static_cast<int>(std::stod(px));

    cfg.model.dim = static_cast<int>(ini.get_num("model", "dim", 16));
    cfg.model.heads = static_cast<int>(ini.get_num("model", "heads", 2));
    cfg.model.blocks = static_cast<int>(ini.get_num("model", "blocks", 2));
    cfg.model.mlp_ratio = static_cast<int>(ini.get_num("model", "mlp_ratio", 4));
    cfg.model.patch = static_cast<int>(ini.get_num("model", "patch", 2));
    cfg.model.latent_channels = static_cast<int>(ini.get_num("model", "latent_channels", 4));
    cfg.model.text_dim = static_cast<int>(ini.get_num("model", "text_dim", 32));
    cfg.model.time_basis = static_cast<int>(ini.get_num("model", "time_basis", 32));
    cfg.model.pos_max_h = static_cast<int>(ini.get_num("model", "pos_max", 16));
    cfg.model.pos_max_w = cfg.model.pos_max_h;
    cfg.model.rope_base = ini.get_num("model", "rope_base", 10000.0);
    cfg.model.qk_eps = ini.get_num("model", "qk_eps", 1e-15);

    cfg.flow.steps = static_cast<int>(ini.get_num("flow", "steps", 30));
    cfg.flow.logit_m = ini.get_num("flow", "logit_m", 0.0);
    cfg.flow.logit_s = ini.get_num("flow", "logit_s", 1.0);
    cfg.flow.lr = ini.get_num("flow", "lr", 5e-5);
    cfg.flow.adam_eps = ini.get_num("flow", "adam_eps", 1e-15);
    cfg.flow_reference_resolution = ini.get("flow", "reference_resolution", "240p");
    cfg.flow_reference_frames = static_cast<int>(ini.get_num("flow", "reference_frames", 16));

    cfg.codec.latent_channels = cfg.model.latent_channels;
    cfg.codec.spatial_hidden = static_cast<int>(ini.get_num("codec", "spatial_hidden", 32));
    cfg.codec.temporal_hidden = static_cast<int>(ini.get_num("codec", "temporal_hidden", 16));
    cfg.codec.identity_weight = static_cast<float>(ini.get_num("codec", "identity_weight", 1.0));

    cfg.codec_train.spatial_pretrain_steps =
        static_cast<int>(ini.get_num("codec", "spatial_pretrain_steps", 400));
    cfg.codec_train.stage1_steps = static_cast<int>(ini.get_num("codec", "stage1_steps", 250));
    cfg.codec_train.stage2_steps = static_cast<int>(ini.get_num("codec", "stage2_steps", 150));
    cfg.codec_train.stage3_steps = static_cast<int>(ini.get_num("codec", "stage3_steps", 700));
    cfg.codec_train.batch = static_cast<int>(ini.get_num("codec", "batch", 4));
    cfg.codec_train.lr = ini.get_num("codec", "lr", 3e-3);
    cfg.codec_train.identity_weight = cfg.codec.identity_weight;
    cfg.codec_train.video_fraction = ini.get_num("codec", "video_fraction", 0.8);

    // training stages: [stages.N] sections, ordered by N
    std::vector<int> stage_ids;
    for (const auto& name : ini.section_order)
        if (name.rfind("stages.", 0) == 0) stage_ids.push_back(std::stoi(name.substr(7)));
    std::sort(stage_ids.begin(), stage_ids.end());
    for (int id : stage_ids) {
        std::string section = "stages." + std::to_string(id);
        StageConfig s;
        s.id = id;
        s.steps = static_cast<int>(ini.get_num(section, "steps", 100));
        s.mask_prob = ini.get_num(section, "mask_prob", 0.0);
        s.lr = ini.get_num(section, "lr", cfg.flow.lr);
        s.resolutions = split(ini.get(section, "resolutions", "144p"), ',');
        for (const auto& f : split(ini.get(section, "frames", "1,8,16"), ','))
            s.frames.push_back(std::stoi(f));
        cfg.stages.push_back(std::move(s));
    }

    // bucket table rows: resolution, frames, aspect, keep_prob, batch_size
    if (ini.items.count("buckets")) {
        for (const auto& row : ini.items.at("buckets")) {
            auto f = split(row, ',');
            if (f.size() != 5)
                throw ValueError("config: bucket row needs 5 fields, got '" + row + "'");
            Bucket b;
            b.label = f[0];
            b.frames = std::stoi(f[1]);
            auto aspect = split(f[2], ':');
            if (aspect.size() != 2) throw ValueError("config: bad aspect '" + f[2] + "'");
            b.aspect_w = std::stoi(aspect[0]);
            b.aspect_h = std::stoi(aspect[1]);
            b.keep_prob = std::stod(f[3]);
            b.batch_size = std::stoi(f[4]);
            cfg.buckets.push_back(std::move(b));
        }
    }

    cfg.grid.clips_per_cell = static_cast<int>(ini.get_num("validate", "clips_per_cell", 2));
    if (ini.has("validate", "lengths")) cfg.grid.length_labels = split(ini.get("validate", "lengths", ""), ',');
    if (ini.has("validate", "resolutions"))
        cfg.grid.resolution_labels = split(ini.get("validate", "resolutions", ""), ',');

    const char* env_seed = std::getenv("OPEN_SORA_KIT_SEED");
    if (env_seed && *env_seed) cfg.seed = std::strtoull(env_seed, nullptr, 10);

    cfg.finalize();
    return cfg;
}

std::string default_config_text() {
    return R"(# open-sora-kit configuration
# Every key below is optional; absent keys fall back to these defaults.

# master seed for dataset generation, training and sampling
# (the OPEN_SORA_KIT_SEED environment variable overrides it)
seed = 1234

[data]
# toy frame rate: length labels like "2s" map to round(seconds * fps) frames
fps = 4

[resolutions]
# desk-scale pixel stand-ins for the resolution labels (short side, px;
# multiples of 16 keep the 8x codec grid and patch-2 transformer happy)
144p = 16
240p = 32
360p = 48
480p = 64
720p = 96

[model]
# transformer width, attention heads, block count
dim = 16
heads = 2
blocks = 2
mlp_ratio = 4
# latent patch size consumed per token
patch = 2
latent_channels = 4
# deterministic hash text-embedding width and token budget
text_dim = 32
max_text_tokens = 16
time_basis = 32
# learned spatial position table covers up to pos_max x pos_max patches
pos_max = 16
rope_base = 10000
qk_eps = 1e-15

[flow]
# Euler sampling steps
steps = 30
# logit-normal timestep sampling parameters
logit_m = 0
logit_s = 1
# resolution-aware shift reference bucket
reference_resolution = 240p
reference_frames = 16
lr = 5e-5
adam_eps = 1e-15

[codec]
spatial_hidden = 32
temporal_hidden = 16
identity_weight = 1.0
# codec-train schedule: 2D warm-up, then the three stages
spatial_pretrain_steps = 400
stage1_steps = 250
stage2_steps = 150
stage3_steps = 700
batch = 4
lr = 3e-3
# stages 1-2 sample mix: fraction of video clips (rest are single frames)
video_fraction = 0.8

[validate]
clips_per_cell = 2
# grid axes; override to shrink the grid
lengths = image,2s,4s,8s,16s
resolutions = 144p,240p,360p,480p,720p

# diffusion training stages: low resolution first, masking enabled last
[stages.1]
steps = 300
mask_prob = 0.0
lr = 1e-3
resolutions = 144p
frames = 1,8,16

[stages.2]
steps = 300
mask_prob = 0.0
lr = 1e-3
resolutions = 144p,240p
frames = 1,8,16,32

[stages.3]
steps = 400
mask_prob = 0.25
lr = 1e-3
resolutions = 144p,240p,360p
frames = 1,8,16,32,64

[buckets]
# resolution, frames, aspect, keep_prob, batch_size
144p, 1, 1:1, 1.0, 16
144p, 8, 1:1, 1.0, 8
144p, 16, 1:1, 1.0, 6
144p, 32, 1:1, 1.0, 4
144p, 64, 1:1, 1.0, 2
240p, 1, 1:1, 1.0, 8
240p, 8, 1:1, 1.0, 4
240p, 16, 1:1, 0.9, 3
240p, 32, 1:1, 0.8, 2
240p, 64, 1:1, 0.7, 1
360p, 1, 1:1, 1.0, 4
360p, 8, 1:1, 0.8, 2
360p, 16, 1:1, 0.7, 1
480p, 8, 1:1, 0.5, 1
720p, 8, 1:1, 0.3, 1
)";
}

}  // namespace sora
