#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "cclab/atlas.hpp"
#include "cclab/colorimetry.hpp"
#include "cclab/illuminants.hpp"

namespace cclab {

using IlluminantMap = std::map<std::string, Illuminant>;

IlluminantMap make_illuminant_map(const std::vector<Illuminant>& pool);

enum class Condition { normal, no_patch, mask_patch, wrong_back, no_back };

std::string condition_name(Condition c);
Condition condition_from_name(const std::string& name);

struct Rect {
    int x0 = 0, y0 = 0, x1 = 0, y1 = 0;  // half-open

    bool contains(int x, int y) const { return x >= x0 && x < x1 && y >= y0 && y < y1; }
};

struct ObjectGeometry {
    uint64_t seed = 0;   // blob silhouette stream
    double cx = 0.5;     // center, fraction of image size
    double cy = 0.5;
    double scale = 1.0;  // radius multiplier, jittered around 1
};

struct SceneSpec {
    int object_chip = -1;
    std::string illuminant_id;
    ObjectGeometry geometry;
    int wall_chip = -1;
    std::array<int, 6> patch_chips{-1, -1, -1, -1, -1, -1};
    std::array<Rect, 6> patch_rects{};
    Condition condition = Condition::normal;
    int mask_patch_index = -1;       // mask_patch only
    std::string bg_illuminant_id;    // wrong_back only
    uint64_t shading_seed = 0;
    bool unit_shading = false;       // force every shading factor to 1
    int width = 64, height = 64;
};

/// Fill geometry defaults (patch rectangles along the top edge) for a size.
std::array<Rect, 6> default_patch_layout(int width, int height);

/// Pick the six default back-wall patches from an atlas: red, yellow, green
/// and blue analogues by Lab hue angle plus the lightest and darkest
/// achromatic chips, ordered green/red/white/blue/yellow/black.
std::array<int, 6> default_patch_chips(const Atlas& atlas);

/// Planar 3xHxW image; channel-major storage. Kept in double precision in
/// memory; dataset files quantize to float32.
struct Image3 {
    int width = 0, height = 0;
    std::vector<double> data;  // size 3*H*W

    double& at(int c, int y, int x) { return data[static_cast<size_t>((c * height + y) * width + x)]; }
    double at(int c, int y, int x) const { return data[static_cast<size_t>((c * height + y) * width + x)]; }
    size_t pixels() const { return static_cast<size_t>(width) * static_cast<size_t>(height); }
};

struct RenderedScene {
    Image3 lms;
    std::vector<uint8_t> object_mask;  // H*W, 0/1
    SceneSpec spec;
};

/// Flat-shaded Lambertian compositor. Per region, the pixel value is the
/// sensor response to E(λ)·R(λ) scaled by a per-region shading factor drawn
/// from shading_seed. Regions rasterize floor/walls/patches/object; the
/// object is lit by spec.illuminant_id in every condition.
RenderedScene render(const SceneSpec& spec, const Atlas& atlas, const IlluminantMap& illuminants,
                     const SensorSet& sensors);

/// Re-render `base` under a modified condition. wrong_back keeps the object
/// pixels bit-identical and swaps the background illuminant; no_back zeroes
/// everything outside the mask.
RenderedScene derive_condition(const RenderedScene& base, Condition condition,
                               const Atlas& atlas, const IlluminantMap& illuminants,
                               const SensorSet& sensors, int mask_patch_index = -1,
                               const std::string& bg_illuminant_id = {});

struct ManifestEntry {
    std::string image_file;
    std::string mask_file;
    uint64_t image_bytes = 0;
    uint64_t mask_bytes = 0;
    SceneSpec spec;
};

struct DatasetManifest {
    int version = 1;
    int width = 64, height = 64;
    std::string sensor_tag = "cone";
    std::vector<ManifestEntry> entries;
};

/// Render every spec and persist it: raw little-endian float32 planar LMS
/// images, bit-packed masks, and a JSON manifest.
DatasetManifest write_dataset(const std::vector<SceneSpec>& specs, const Atlas& atlas,
                              const IlluminantMap& illuminants, const SensorSet& sensors,
                              const std::filesystem::path& out_dir);

class DatasetReader {
public:
    explicit DatasetReader(const std::filesystem::path& dir);

    size_t size() const { return manifest_.entries.size(); }
    const DatasetManifest& manifest() const { return manifest_; }
    RenderedScene load(size_t index) const;

private:
    std::filesystem::path dir_;
    DatasetManifest manifest_;
};

}  // namespace cclab
