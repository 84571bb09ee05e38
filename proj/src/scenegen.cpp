#include "cclab/scenegen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "cclab/rng.hpp"

namespace cclab {

using nlohmann::json;

IlluminantMap make_illuminant_map(const std::vector<Illuminant>& pool) {
    IlluminantMap m;
    for (const auto& ill : pool)
        if (!m.emplace(ill.id, ill).second)
            throw std::runtime_error("duplicate illuminant id: " + ill.id);
    return m;
}

std::string condition_name(Condition c) {
    switch (c) {
        case Condition::normal: return "normal";
        case Condition::no_patch: return "no_patch";
        case Condition::mask_patch: return "mask_patch";
        case Condition::wrong_back: return "wrong_back";
        case Condition::no_back: return "no_back";
    }
    throw std::logic_error("bad condition");
}

Condition condition_from_name(const std::string& name) {
    for (Condition c : {Condition::normal, Condition::no_patch, Condition::mask_patch,
                        Condition::wrong_back, Condition::no_back})
        if (condition_name(c) == name) return c;
    throw std::invalid_argument("unknown condition: " + name);
}

std::array<Rect, 6> default_patch_layout(int width, int height) {
    std::array<Rect, 6> rects;
    const int y0 = height / 10;
    const int y1 = y0 + std::max(3, height / 8);
    const int margin = width / 8;
    const int span = width - 2 * margin;
    for (int k = 0; k < 6; ++k) {
        const int x0 = margin + k * span / 6;
        const int x1 = margin + (k + 1) * span / 6 - 1;  // 1px gap between patches
        rects[static_cast<size_t>(k)] = Rect{x0, y0, x1, y1};
    }
    return rects;
}

std::array<int, 6> default_patch_chips(const Atlas& atlas) {
    if (!atlas.table_built()) throw std::logic_error("default_patch_chips: table missing");
    auto nearest_hue = [&](double target_deg) {
        int best = -1;
        double best_d = 1e300;
        for (const auto& c : atlas.chips()) {
            if (c.achromatic()) continue;
            const double ang = std::atan2(c.lab_d65.b, c.lab_d65.a) * 180.0 / M_PI;
            double d = std::abs(ang - target_deg);
            d = std::min(d, 360.0 - d);
            if (d < best_d) {
                best_d = d;
                best = c.id;
            }
        }
        if (best < 0) throw std::runtime_error("atlas has no chromatic chips");
        return best;
    };
    const int red = nearest_hue(30.0);
    const int yellow = nearest_hue(90.0);
    const int green = nearest_hue(140.0);
    const int blue = nearest_hue(-80.0);
    const int white = atlas.white_chip();
    int black = -1, black_v = 1 << 20;
    for (const auto& c : atlas.chips())
        if (c.achromatic() && c.value < black_v) {
            black_v = c.value;
            black = c.id;
        }
    return {green, red, white, blue, yellow, black};
}

namespace {

struct Blob {
    double cx, cy, base_radius;
    std::array<double, 4> amp;    // harmonics 2..5
    std::array<double, 4> phase;

    double radius(double theta) const {
        double r = 1.0;
        for (int k = 0; k < 4; ++k)
            r += amp[static_cast<size_t>(k)] * std::cos((k + 2) * theta + phase[static_cast<size_t>(k)]);
        return base_radius * std::max(0.1, r);
    }
};

Blob make_blob(const ObjectGeometry& geo, int width, int height) {
    Rng rng(geo.seed);
    Blob b;
    b.cx = geo.cx * width;
    b.cy = geo.cy * height;
    b.base_radius = 0.22 * std::min(width, height) * geo.scale;
    for (int k = 0; k < 4; ++k) {
        b.amp[static_cast<size_t>(k)] = rng.uniform(0.0, 0.22 / (k + 1));
        b.phase[static_cast<size_t>(k)] = rng.uniform(0.0, 2.0 * M_PI);
    }
    return b;
}

std::vector<uint8_t> rasterize_blob(const Blob& blob, int width, int height) {
    std::vector<uint8_t> mask(static_cast<size_t>(width) * height, 0);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            const double dx = x + 0.5 - blob.cx;
            const double dy = y + 0.5 - blob.cy;
            const double r = std::hypot(dx, dy);
            if (r <= blob.radius(std::atan2(dy, dx)))
                mask[static_cast<size_t>(y) * width + x] = 1;
        }
    }
    return mask;
}

// Shading factors for [back, floor, left, right, ceiling, p0..p5, object];
// drawn in a fixed order so a shared seed reproduces the identical scene.
std::array<double, 12> draw_shading(uint64_t seed, bool unit) {
    std::array<double, 12> g;
    Rng rng(seed);
    for (auto& v : g) v = unit ? 1.0 : rng.uniform(0.4, 1.0);
    return g;
}

Tristimulus region_color(const Atlas& atlas, int chip_id, const Illuminant& ill,
                         const SensorSet& sensors) {
    const SpectralDistribution spd =
        resample(ill.spd, sensors.grid(), {Extrapolation::clamp, false}) *
        atlas.chip(chip_id).reflectance;
    return spectrum_to_tristimulus(spd, sensors);
}

const Illuminant& lookup(const IlluminantMap& m, const std::string& id) {
    const auto it = m.find(id);
    if (it == m.end()) throw std::runtime_error("unknown illuminant id: " + id);
    return it->second;
}

}  // namespace

RenderedScene render(const SceneSpec& spec, const Atlas& atlas, const IlluminantMap& illuminants,
                     const SensorSet& sensors) {
    if (spec.width <= 0 || spec.height <= 0) throw std::invalid_argument("render: bad image size");
    if (spec.condition == Condition::wrong_back && spec.bg_illuminant_id == spec.illuminant_id)
        throw std::invalid_argument("wrong_back requires a different background illuminant");
    if (spec.condition == Condition::mask_patch &&
        (spec.mask_patch_index < 0 || spec.mask_patch_index >= 6))
        throw std::invalid_argument("mask_patch requires a patch index in [0, 6)");

    const Illuminant& obj_ill = lookup(illuminants, spec.illuminant_id);
    const Illuminant& bg_ill = spec.condition == Condition::wrong_back
                                   ? lookup(illuminants, spec.bg_illuminant_id)
                                   : obj_ill;

    const auto g = draw_shading(spec.shading_seed, spec.unit_shading);
    const int W = spec.width, H = spec.height;

    // Object mask first: area sanity is a hard precondition.
    const Blob blob = make_blob(spec.geometry, W, H);
    std::vector<uint8_t> mask = rasterize_blob(blob, W, H);
    const size_t area = static_cast<size_t>(std::count(mask.begin(), mask.end(), uint8_t(1)));
    const double frac = static_cast<double>(area) / (static_cast<double>(W) * H);
    if (area == 0) throw std::runtime_error("degenerate object geometry (zero area)");
    if (frac < 0.05 || frac > 0.40)
        throw std::runtime_error("object area fraction " + std::to_string(frac) +
                                 " outside [0.05, 0.40]");

    Image3 img;
    img.width = W;
    img.height = H;
    img.data.assign(3 * static_cast<size_t>(W) * H, 0.0);

    const bool draw_background = spec.condition != Condition::no_back;
    if (draw_background) {
        // Background layer colors (back wall, floor, side walls, ceiling share
        // the wall reflectance; shading separates the faces).
        const Tristimulus wall = region_color(atlas, spec.wall_chip, bg_ill, sensors);
        const Rect floor_rect{0, H - H / 5, W, H};
        const Rect left_rect{0, 0, W / 10, H};
        const Rect right_rect{W - W / 10, 0, W, H};
        const Rect ceil_rect{0, 0, W, H / 16};

        auto fill = [&](const Rect& r, const Tristimulus& color, double shade) {
            for (int c = 0; c < 3; ++c) {
                const double v = color[c] * shade;
                for (int y = std::max(0, r.y0); y < std::min(H, r.y1); ++y)
                    for (int x = std::max(0, r.x0); x < std::min(W, r.x1); ++x)
                        img.at(c, y, x) = v;
            }
        };

        fill(Rect{0, 0, W, H}, wall, g[0]);   // back wall
        fill(floor_rect, wall, g[1]);
        fill(left_rect, wall, g[2]);
        fill(right_rect, wall, g[3]);
        fill(ceil_rect, wall, g[4]);

        if (spec.condition != Condition::no_patch) {
            for (int k = 0; k < 6; ++k) {
                if (spec.condition == Condition::mask_patch && k == spec.mask_patch_index)
                    continue;  // masked patch leaves bare wall
                const Tristimulus pc =
                    region_color(atlas, spec.patch_chips[static_cast<size_t>(k)], bg_ill, sensors);
                fill(spec.patch_rects[static_cast<size_t>(k)], pc, g[5 + static_cast<size_t>(k)]);
            }
        }
    }

    // Object, always under its own illuminant.
    const Tristimulus obj = region_color(atlas, spec.object_chip, obj_ill, sensors);
    for (int c = 0; c < 3; ++c) {
        const double v = obj[c] * g[11];
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x)
                if (mask[static_cast<size_t>(y) * W + x]) img.at(c, y, x) = v;
    }

    return RenderedScene{std::move(img), std::move(mask), spec};
}

RenderedScene derive_condition(const RenderedScene& base, Condition condition, const Atlas& atlas,
                               const IlluminantMap& illuminants, const SensorSet& sensors,
                               int mask_patch_index, const std::string& bg_illuminant_id) {
    SceneSpec spec = base.spec;
    spec.condition = condition;
    spec.mask_patch_index = condition == Condition::mask_patch ? mask_patch_index : -1;
    if (condition == Condition::wrong_back) {
        if (bg_illuminant_id.empty() || bg_illuminant_id == spec.illuminant_id)
            throw std::invalid_argument("wrong_back requires a different background illuminant");
        spec.bg_illuminant_id = bg_illuminant_id;
    } else {
        spec.bg_illuminant_id.clear();
    }
    return render(spec, atlas, illuminants, sensors);
}

// ---- dataset persistence ---------------------------------------------------

namespace {

json spec_to_json(const SceneSpec& s) {
    json j;
    j["object_chip"] = s.object_chip;
    j["illuminant"] = s.illuminant_id;
    j["geometry"] = {{"seed", s.geometry.seed},
                     {"cx", s.geometry.cx},
                     {"cy", s.geometry.cy},
                     {"scale", s.geometry.scale}};
    j["wall_chip"] = s.wall_chip;
    j["patch_chips"] = s.patch_chips;
    json rects = json::array();
    for (const auto& r : s.patch_rects) rects.push_back({r.x0, r.y0, r.x1, r.y1});
    j["patch_rects"] = rects;
    j["condition"] = condition_name(s.condition);
    if (s.condition == Condition::mask_patch) j["mask_patch_index"] = s.mask_patch_index;
    if (s.condition == Condition::wrong_back) j["bg_illuminant"] = s.bg_illuminant_id;
    j["shading_seed"] = s.shading_seed;
    j["unit_shading"] = s.unit_shading;
    j["width"] = s.width;
    j["height"] = s.height;
    return j;
}

SceneSpec spec_from_json(const json& j) {
    SceneSpec s;
    s.object_chip = j.at("object_chip").get<int>();
    s.illuminant_id = j.at("illuminant").get<std::string>();
    const auto& g = j.at("geometry");
    s.geometry = {g.at("seed").get<uint64_t>(), g.at("cx").get<double>(), g.at("cy").get<double>(),
                  g.at("scale").get<double>()};
    s.wall_chip = j.at("wall_chip").get<int>();
    s.patch_chips = j.at("patch_chips").get<std::array<int, 6>>();
    const auto& rects = j.at("patch_rects");
    for (size_t k = 0; k < 6; ++k)
        s.patch_rects[k] = Rect{rects[k][0].get<int>(), rects[k][1].get<int>(),
                                rects[k][2].get<int>(), rects[k][3].get<int>()};
    s.condition = condition_from_name(j.at("condition").get<std::string>());
    s.mask_patch_index = j.value("mask_patch_index", -1);
    s.bg_illuminant_id = j.value("bg_illuminant", std::string{});
    s.shading_seed = j.at("shading_seed").get<uint64_t>();
    s.unit_shading = j.value("unit_shading", false);
    s.width = j.at("width").get<int>();
    s.height = j.at("height").get<int>();
    return s;
}

std::vector<uint8_t> pack_mask(const std::vector<uint8_t>& mask) {
    std::vector<uint8_t> packed((mask.size() + 7) / 8, 0);
    for (size_t i = 0; i < mask.size(); ++i)
        if (mask[i]) packed[i / 8] |= static_cast<uint8_t>(1u << (i % 8));
    return packed;
}

std::vector<uint8_t> unpack_mask(const std::vector<uint8_t>& packed, size_t n) {
    std::vector<uint8_t> mask(n, 0);
    for (size_t i = 0; i < n; ++i)
        mask[i] = (packed[i / 8] >> (i % 8)) & 1u;
    return mask;
}

void write_bytes(const std::filesystem::path& p, const void* data, size_t n) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + p.string());
    out.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
    if (!out) throw std::runtime_error("short write: " + p.string());
}

std::vector<char> read_bytes_checked(const std::filesystem::path& p, uint64_t expected) {
    std::ifstream in(p, std::ios::binary | std::ios::ate);
    if (!in) throw std::runtime_error("cannot open " + p.string());
    const uint64_t size = static_cast<uint64_t>(in.tellg());
    if (size != expected)
        throw std::runtime_error("file " + p.string() + " has " + std::to_string(size) +
                                 " bytes, manifest declares " + std::to_string(expected));
    std::vector<char> buf(size);
    in.seekg(0);
    in.read(buf.data(), static_cast<std::streamsize>(size));
    if (!in) throw std::runtime_error("short read: " + p.string());
    return buf;
}

}  // namespace

DatasetManifest write_dataset(const std::vector<SceneSpec>& specs, const Atlas& atlas,
                              const IlluminantMap& illuminants, const SensorSet& sensors,
                              const std::filesystem::path& out_dir) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    DatasetManifest manifest;
    if (!specs.empty()) {
        manifest.width = specs.front().width;
        manifest.height = specs.front().height;
    }
    manifest.sensor_tag = sensors.tag == SensorTag::cone ? "cone" : "cmf";

    char name[32];
    for (size_t i = 0; i < specs.size(); ++i) {
        const RenderedScene scene = render(specs[i], atlas, illuminants, sensors);
        std::snprintf(name, sizeof name, "img_%06zu.lms", i);
        const std::string img_name = name;
        std::snprintf(name, sizeof name, "msk_%06zu.bin", i);
        const std::string msk_name = name;

        std::vector<float> quantized(scene.lms.data.begin(), scene.lms.data.end());
        const size_t img_bytes = quantized.size() * sizeof(float);
        write_bytes(out_dir / img_name, quantized.data(), img_bytes);
        const auto packed = pack_mask(scene.object_mask);
        write_bytes(out_dir / msk_name, packed.data(), packed.size());

        manifest.entries.push_back(
            {img_name, msk_name, img_bytes, packed.size(), specs[i]});
    }

    json j;
    j["version"] = manifest.version;
    j["width"] = manifest.width;
    j["height"] = manifest.height;
    j["sensor_tag"] = manifest.sensor_tag;
    json entries = json::array();
    for (const auto& e : manifest.entries) {
        json je;
        je["image"] = e.image_file;
        je["mask"] = e.mask_file;
        je["image_bytes"] = e.image_bytes;
        je["mask_bytes"] = e.mask_bytes;
        je["spec"] = spec_to_json(e.spec);
        entries.push_back(std::move(je));
    }
    j["entries"] = std::move(entries);
    std::ofstream out(out_dir / "manifest.json");
    if (!out) throw std::runtime_error("cannot write manifest in " + out_dir.string());
    out << j.dump(1) << "\n";
    return manifest;
}

DatasetReader::DatasetReader(const std::filesystem::path& dir) : dir_(dir) {
    std::ifstream in(dir / "manifest.json");
    if (!in) throw std::runtime_error("cannot open manifest in " + dir.string());
    json j;
    in >> j;
    manifest_.version = j.at("version").get<int>();
    if (manifest_.version != 1)
        throw std::runtime_error("unsupported dataset version " +
                                 std::to_string(manifest_.version));
    manifest_.width = j.at("width").get<int>();
    manifest_.height = j.at("height").get<int>();
    manifest_.sensor_tag = j.at("sensor_tag").get<std::string>();
    for (const auto& je : j.at("entries")) {
        ManifestEntry e;
        e.image_file = je.at("image").get<std::string>();
        e.mask_file = je.at("mask").get<std::string>();
        e.image_bytes = je.at("image_bytes").get<uint64_t>();
        e.mask_bytes = je.at("mask_bytes").get<uint64_t>();
        e.spec = spec_from_json(je.at("spec"));
        manifest_.entries.push_back(std::move(e));
    }
}

RenderedScene DatasetReader::load(size_t index) const {
    const ManifestEntry& e = manifest_.entries.at(index);
    RenderedScene scene;
    scene.spec = e.spec;
    scene.lms.width = manifest_.width;
    scene.lms.height = manifest_.height;

    const auto img = read_bytes_checked(dir_ / e.image_file, e.image_bytes);
    std::vector<float> quantized(img.size() / sizeof(float));
    std::memcpy(quantized.data(), img.data(), img.size());
    scene.lms.data.assign(quantized.begin(), quantized.end());

    const auto msk = read_bytes_checked(dir_ / e.mask_file, e.mask_bytes);
    std::vector<uint8_t> packed(msk.begin(), msk.end());
    scene.object_mask = unpack_mask(packed, scene.lms.pixels());
    return scene;
}

}  // namespace cclab
