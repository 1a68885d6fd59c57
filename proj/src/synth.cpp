#include "sora/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "sora/csv.hpp"
#include "sora/vten.hpp"

namespace sora {

namespace {

struct Palette {
    const char* name;
    float r, g, b;
};

constexpr Palette kColors[] = {
    {"red", 0.85f, 0.15f, 0.12f},   {"green", 0.15f, 0.75f, 0.2f},
    {"blue", 0.15f, 0.3f, 0.85f},   {"yellow", 0.9f, 0.85f, 0.15f},
    {"purple", 0.6f, 0.2f, 0.75f},  {"white", 0.95f, 0.95f, 0.95f},
};

constexpr Palette kBackgrounds[] = {
    {"dark", 0.08f, 0.08f, 0.1f},
    {"gray", 0.35f, 0.35f, 0.37f},
    {"olive", 0.25f, 0.28f, 0.12f},
};

struct Motion {
    const char* phrase;
    const char* label;
    int dx, dy;
    bool spin;
};

constexpr Motion kMotions[] = {
    {"moving right", "right", 1, 0, false}, {"moving left", "left", -1, 0, false},
    {"moving up", "up", 0, -1, false},      {"moving down", "down", 0, 1, false},
    {"sitting still", "static", 0, 0, false}, {"spinning", "rotating", 0, 0, true},
};

}  // namespace

SynthResult make_synthetic(int n, const SynthSpec& spec, std::uint64_t seed,
                           const std::filesystem::path& out_dir) {
    if (n < 1) throw ValueError("make_synthetic: n must be >= 1");
    if (spec.sides.empty() || spec.frame_counts.empty())
        throw ValueError("make_synthetic: spec needs sides and frame counts");
    std::filesystem::create_directories(out_dir);

    SynthResult result;
    Rng rng = Rng(seed).fork("synth");
    for (int i = 0; i < n; ++i) {
        int side = spec.sides[static_cast<std::size_t>(rng.uniform_int(
            static_cast<int>(spec.sides.size())))];
        int frames = spec.frame_counts[static_cast<std::size_t>(rng.uniform_int(
            static_cast<int>(spec.frame_counts.size())))];
        if (spec.include_images && rng.bernoulli(0.15)) frames = 1;

        const Palette& color = kColors[rng.uniform_int(6)];
        const Palette& bg = kBackgrounds[rng.uniform_int(3)];
        const Motion& motion = frames == 1 ? kMotions[4] : kMotions[rng.uniform_int(6)];
        bool disk = motion.spin ? false : rng.bernoulli(0.5);
        int speed = 1 + rng.uniform_int(2);

        int size = std::max(4, side / 4 + rng.uniform_int(std::max(1, side / 4)));
        int x0 = rng.uniform_int(side);
        int y0 = rng.uniform_int(side);

        // the shape lives on a torus so any clip length keeps its motion label
        auto wrap_dist = [side](double d) {
            return d - side * std::round(d / side);
        };
        VideoTensor v(frames, side, side, 3);
        for (int t = 0; t < frames; ++t) {
            int sx = x0 + motion.dx * speed * t;
            int sy = y0 + motion.dy * speed * t;
            double cx = sx + size / 2.0, cy = sy + size / 2.0;
            double angle = motion.spin ? 0.12 * speed * t : 0.0;
            double ca = std::cos(angle), sa = std::sin(angle);
            for (int y = 0; y < side; ++y)
                for (int x = 0; x < side; ++x) {
                    bool inside;
                    if (disk) {
                        double dx = wrap_dist(x - cx + 0.5), dy = wrap_dist(y - cy + 0.5);
                        inside = dx * dx + dy * dy <= (size / 2.0) * (size / 2.0);
                    } else if (motion.spin) {
                        double dx = wrap_dist(x - cx + 0.5), dy = wrap_dist(y - cy + 0.5);
                        double rx = ca * dx + sa * dy, ry = -sa * dx + ca * dy;
                        inside = std::abs(rx) <= size / 2.0 && std::abs(ry) <= size / 2.0;
                    } else {
                        int relx = ((x - sx) % side + side) % side;
                        int rely = ((y - sy) % side + side) % side;
                        inside = relx < size && rely < size;
                    }
                    v.at(t, y, x, 0) = inside ? color.r : bg.r;
                    v.at(t, y, x, 1) = inside ? color.g : bg.g;
                    v.at(t, y, x, 2) = inside ? color.b : bg.b;
                }
        }

        SynthRecord rec;
        char id[32];
        std::snprintf(id, sizeof(id), "synth_%05d", i);
        rec.clip_id = id;
        rec.width = side;
        rec.height = side;
        rec.frames = frames;
        rec.fps = spec.fps;
        rec.caption = std::string(color.name) + (disk ? " disk " : " square ") + motion.phrase;
        rec.motion = motion.label;
        auto path = out_dir / (rec.clip_id + std::string(".vten"));
        vten_save_video(path, v);
        rec.path = path.string();
        result.records.push_back(std::move(rec));
    }

    result.catalog = out_dir / "catalog.csv";
    std::ofstream os(result.catalog);
    if (!os) throw IoError("cannot write " + result.catalog.string());
    os << "clip_id,path,width,height,frames,fps,caption,motion\n";
    for (const auto& r : result.records)
        os << csv_row({r.clip_id, r.path, std::to_string(r.width), std::to_string(r.height),
                       std::to_string(r.frames), std::to_string(r.fps), r.caption, r.motion});
    return result;
}

std::vector<SynthRecord> load_catalog(const std::filesystem::path& catalog_csv) {
    std::ifstream is(catalog_csv);
    if (!is) throw IoError("cannot read " + catalog_csv.string());
    std::vector<SynthRecord> out;
    std::string line;
    bool header = true;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        if (header) {
            header = false;
            continue;
        }
        auto f = csv_parse_row(line);
        if (f.size() != 8) throw IoError("catalog row with " + std::to_string(f.size()) + " fields");
        SynthRecord r;
        r.clip_id = f[0];
        r.path = f[1];
        r.width = std::stoi(f[2]);
        r.height = std::stoi(f[3]);
        r.frames = std::stoi(f[4]);
        r.fps = std::stod(f[5]);
        r.caption = f[6];
        r.motion = f[7];
        out.push_back(std::move(r));
    }
    return out;
}

}  // namespace sora
