#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cclab/colorimetry.hpp"

namespace cclab {

/// Sentinel hue for achromatic (chroma 0) chips.
inline constexpr int kAchromaticHue = -1;

struct MunsellChip {
    int id = -1;
    int hue_index = kAchromaticHue;  // circular, [0, hue_count)
    int value = 0;                   // 0..10
    int chroma = 0;                  // even, 0..16
    SpectralDistribution reflectance;
    LabColor lab_d65;  // filled by build_chromaticity_table

    bool achromatic() const { return chroma == 0; }
    int chroma_step() const { return chroma / 2; }
};

/// The chip universe. Immutable once the chromaticity table is built.
class Atlas {
public:
    Atlas() = default;
    Atlas(std::vector<MunsellChip> chips, int hue_count);

    size_t size() const { return chips_.size(); }
    const MunsellChip& chip(int id) const;
    const std::vector<MunsellChip>& chips() const { return chips_; }
    int hue_count() const { return hue_count_; }

    std::optional<int> find(int hue_index, int value, int chroma) const;

    bool table_built() const { return table_built_; }
    const WhitePoint& white_point() const;
    /// Achromatic chip with value nearest `target_value` (defaults to 5).
    int grey_chip(int target_value = 5) const;
    int white_chip() const;

    friend void build_chromaticity_table(Atlas& atlas, const SpectralDistribution& d65,
                                         const SensorSet& cmf);

private:
    std::vector<MunsellChip> chips_;
    std::map<std::tuple<int, int, int>, int> by_coord_;
    int hue_count_ = 40;
    WhitePoint white_;
    int white_chip_ = -1;
    bool table_built_ = false;
};

struct AtlasLoadOptions {
    /// Optional index file `filename,hue_code,value,chroma`; when absent,
    /// chip coordinates are parsed from file names like "2.5R5-4.spd" or
    /// "N5.spd".
    std::optional<std::filesystem::path> index_file;
    SpectralGrid grid = kCanonicalGrid;
    double clip_tolerance = 1e-3;  // reflectance may exceed [0,1] by this much
};

/// Load a reflectance directory into an atlas on the canonical grid.
/// Ids are assigned in (hue_index, value, chroma) order.
Atlas load_atlas(const std::filesystem::path& reflectance_dir, const AtlasLoadOptions& opts = {});

/// Parse a Munsell hue code ("2.5R".."10RP", or "N") into a 40-step hue
/// index; returns kAchromaticHue for neutrals.
int parse_hue_code(const std::string& code);

struct SyntheticAtlasOptions {
    int hue_value = 5;
    int hue_chroma = 6;
    std::vector<int> neutral_values = {1, 3, 5, 7, 9};
    // Defaults put the hue circle at ~26 ΔE chroma with ~4 ΔE between
    // adjacent chips, so the 10 ΔE test illuminants span several chip steps.
    double bump_base = 0.12;
    double bump_amplitude = 0.22;
    double bump_sigma_nm = 50.0;
    SpectralGrid grid = kCanonicalGrid;
};

/// Generator-backed atlas: `n_hues` Gaussian-bump reflectances around a hue
/// circle plus flat neutral ramps. Lets every pipeline run without the
/// measured reflectance database.
Atlas synthetic_atlas(int n_hues, const SyntheticAtlasOptions& opts = {});

/// Fill each chip's lab_d65 and the atlas white point (response of the
/// highest-value achromatic chip under d65).
void build_chromaticity_table(Atlas& atlas, const SpectralDistribution& d65,
                              const SensorSet& cmf);

/// All chips within the 3x3x3 Munsell cube centered on `chip_id` (inclusive).
/// Hue distance is circular; the chroma lattice steps by 2; achromatic chips
/// skip hue arithmetic entirely.
std::vector<int> muns3_neighbors(const Atlas& atlas, int chip_id);

/// Chip ids listed in a subset file (one `hue_code,value,chroma` per line,
/// after a header); without a file, the subset is the whole atlas.
std::vector<int> wcs_subset(const Atlas& atlas,
                            const std::optional<std::filesystem::path>& subset_file = {});

}  // namespace cclab
