#include "cclab/atlas.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace cclab {

namespace {

struct ChipCoord {
    int hue_index, value, chroma;
};

// Munsell hue families in circle order; each splits into 2.5/5/7.5/10 steps.
const char* kHueFamilies[10] = {"R", "YR", "Y", "GY", "G", "BG", "B", "PB", "P", "RP"};

int round_even_chroma(double c) {
    const int step = static_cast<int>(std::lround(c / 2.0));
    return 2 * step;
}

}  // namespace

int parse_hue_code(const std::string& code) {
    if (code.empty()) throw std::invalid_argument("empty hue code");
    if (code == "N" || code == "n") return kAchromaticHue;
    size_t i = 0;
    while (i < code.size() && (std::isdigit(static_cast<unsigned char>(code[i])) || code[i] == '.'))
        ++i;
    if (i == 0 || i == code.size()) throw std::invalid_argument("bad hue code: " + code);
    const double step_value = std::stod(code.substr(0, i));
    const std::string family = code.substr(i);
    int fam = -1;
    for (int f = 0; f < 10; ++f)
        if (family == kHueFamilies[f]) fam = f;
    if (fam < 0) throw std::invalid_argument("unknown hue family: " + code);
    int sub = -1;
    if (step_value == 2.5) sub = 0;
    else if (step_value == 5.0) sub = 1;
    else if (step_value == 7.5) sub = 2;
    else if (step_value == 10.0) sub = 3;
    if (sub < 0) throw std::invalid_argument("hue step must be 2.5/5/7.5/10: " + code);
    return fam * 4 + sub;
}

Atlas::Atlas(std::vector<MunsellChip> chips, int hue_count)
    : chips_(std::move(chips)), hue_count_(hue_count) {
    std::sort(chips_.begin(), chips_.end(), [](const MunsellChip& a, const MunsellChip& b) {
        return std::tuple(a.hue_index, a.value, a.chroma) <
               std::tuple(b.hue_index, b.value, b.chroma);
    });
    for (size_t i = 0; i < chips_.size(); ++i) {
        chips_[i].id = static_cast<int>(i);
        const auto key = std::tuple(chips_[i].hue_index, chips_[i].value, chips_[i].chroma);
        if (!by_coord_.emplace(key, chips_[i].id).second)
            throw std::runtime_error("duplicate chip coordinate in atlas");
    }
}

const MunsellChip& Atlas::chip(int id) const {
    if (id < 0 || id >= static_cast<int>(chips_.size()))
        throw std::out_of_range("unknown chip id " + std::to_string(id));
    return chips_[static_cast<size_t>(id)];
}

std::optional<int> Atlas::find(int hue_index, int value, int chroma) const {
    const auto it = by_coord_.find(std::tuple(hue_index, value, chroma));
    if (it == by_coord_.end()) return std::nullopt;
    return it->second;
}

const WhitePoint& Atlas::white_point() const {
    if (!table_built_) throw std::logic_error("chromaticity table not built");
    return white_;
}

int Atlas::grey_chip(int target_value) const {
    int best = -1, best_d = 1 << 20;
    for (const auto& c : chips_) {
        if (!c.achromatic()) continue;
        const int d = std::abs(c.value - target_value);
        if (d < best_d) {
            best_d = d;
            best = c.id;
        }
    }
    if (best < 0) throw std::runtime_error("atlas has no achromatic chip");
    return best;
}

int Atlas::white_chip() const {
    int best = -1, best_v = -1;
    for (const auto& c : chips_) {
        if (c.achromatic() && c.value > best_v) {
            best_v = c.value;
            best = c.id;
        }
    }
    if (best < 0) throw std::runtime_error("atlas has no achromatic chip");
    return best;
}

Atlas load_atlas(const std::filesystem::path& reflectance_dir, const AtlasLoadOptions& opts) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(reflectance_dir))
        throw std::runtime_error("not a directory: " + reflectance_dir.string());

    std::map<std::string, ChipCoord> coords;  // filename -> coordinate
    if (opts.index_file) {
        std::ifstream in(*opts.index_file);
        if (!in) throw std::runtime_error("cannot open index file: " + opts.index_file->string());
        std::string line;
        bool first = true;
        while (std::getline(in, line)) {
            if (first) {
                first = false;
                continue;
            }
            if (line.empty()) continue;
            std::istringstream ss(line);
            std::string fname, hue_code, v_s, c_s;
            if (!std::getline(ss, fname, ',') || !std::getline(ss, hue_code, ',') ||
                !std::getline(ss, v_s, ',') || !std::getline(ss, c_s))
                throw std::runtime_error("bad index row: " + line);
            coords[fname] = ChipCoord{parse_hue_code(hue_code), std::stoi(v_s),
                                      round_even_chroma(std::stod(c_s))};
        }
    }

    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(reflectance_dir))
        if (e.is_regular_file() && e.path().filename().string() != "index.csv")
            files.push_back(e.path());
    std::sort(files.begin(), files.end());

    std::vector<MunsellChip> chips;
    for (const auto& f : files) {
        ChipCoord coord{};
        const std::string name = f.filename().string();
        if (opts.index_file) {
            const auto it = coords.find(name);
            if (it == coords.end()) continue;  // not an indexed reflectance
            coord = it->second;
        } else {
            // "N5.spd" or "<hue_code><value>-<chroma>.spd", e.g. "2.5R5-4.spd"
            const std::string stem = f.stem().string();
            if (stem.size() >= 2 && (stem[0] == 'N' || stem[0] == 'n')) {
                coord = ChipCoord{kAchromaticHue, std::stoi(stem.substr(1)), 0};
            } else {
                const auto dash = stem.rfind('-');
                if (dash == std::string::npos)
                    throw std::runtime_error("cannot parse chip coordinate from name: " + name);
                size_t split = dash;
                while (split > 0 && std::isdigit(static_cast<unsigned char>(stem[split - 1])))
                    --split;
                coord = ChipCoord{parse_hue_code(stem.substr(0, split)),
                                  std::stoi(stem.substr(split, dash - split)),
                                  round_even_chroma(std::stod(stem.substr(dash + 1)))};
            }
        }

        SpectralDistribution raw = load_spd_file(f, opts.grid, {Extrapolation::clamp, false});
        for (double v : raw.values())
            if (v < -opts.clip_tolerance || v > 1.0 + opts.clip_tolerance)
                throw std::runtime_error("reflectance out of [0,1] beyond tolerance: " + name);
        MunsellChip chip;
        chip.hue_index = coord.hue_index;
        chip.value = coord.value;
        chip.chroma = coord.chroma;
        chip.reflectance = resample(raw, opts.grid, {Extrapolation::clamp, true});
        chips.push_back(std::move(chip));
    }
    if (chips.empty()) throw std::runtime_error("no reflectances found in " + reflectance_dir.string());
    return Atlas(std::move(chips), 40);
}

namespace {

// Luminance factor of a Munsell value step (renotation polynomial, percent).
double value_to_luminance(double v) {
    const double y = 1.2219 * v - 0.23111 * v * v + 0.23951 * v * v * v -
                     0.021009 * v * v * v * v + 0.0008404 * v * v * v * v * v;
    return y / 100.0;
}

double gaussian(double x, double mu, double sigma) {
    const double d = (x - mu) / sigma;
    return std::exp(-0.5 * d * d);
}

}  // namespace

Atlas synthetic_atlas(int n_hues, const SyntheticAtlasOptions& opts) {
    if (n_hues < 3) throw std::invalid_argument("synthetic_atlas: need at least 3 hues");
    std::vector<MunsellChip> chips;
    const SpectralGrid& g = opts.grid;

    // Hue circle: a single bump sweeping long->short wavelengths over the
    // spectral section, then a two-bump blend through the purples so the
    // rendered Lab hue angle wraps monotonically.
    for (int h = 0; h < n_hues; ++h) {
        const double t = static_cast<double>(h) / n_hues;
        std::vector<double> vals(static_cast<size_t>(g.n));
        for (int i = 0; i < g.n; ++i) {
            const double nm = g.wavelength(i);
            double shape;
            if (t <= 0.8) {
                const double center = 630.0 - (630.0 - 455.0) * (t / 0.8);
                shape = gaussian(nm, center, opts.bump_sigma_nm);
            } else {
                const double w = (t - 0.8) / 0.2;  // blue -> red blend
                shape = w * gaussian(nm, 630.0, opts.bump_sigma_nm) +
                        (1.0 - w) * gaussian(nm, 455.0, opts.bump_sigma_nm);
            }
            vals[static_cast<size_t>(i)] =
                std::clamp(opts.bump_base + opts.bump_amplitude * shape, 0.0, 1.0);
        }
        MunsellChip chip;
        chip.hue_index = h;
        chip.value = opts.hue_value;
        chip.chroma = opts.hue_chroma;
        chip.reflectance = SpectralDistribution(g, std::move(vals));
        chips.push_back(std::move(chip));
    }

    for (int v : opts.neutral_values) {
        MunsellChip chip;
        chip.hue_index = kAchromaticHue;
        chip.value = v;
        chip.chroma = 0;
        chip.reflectance = SpectralDistribution(
            g, std::vector<double>(static_cast<size_t>(g.n), value_to_luminance(v)));
        chips.push_back(std::move(chip));
    }

    return Atlas(std::move(chips), n_hues);
}

void build_chromaticity_table(Atlas& atlas, const SpectralDistribution& d65,
                              const SensorSet& cmf) {
    if (atlas.size() == 0) throw std::runtime_error("empty atlas");
    const SpectralDistribution d65g = resample(d65, cmf.grid(), {Extrapolation::clamp, false});

    const int white_id = atlas.white_chip();  // throws when no achromatic chip
    const auto& white_chip = atlas.chips_[static_cast<size_t>(white_id)];
    WhitePoint white{spectrum_to_tristimulus(d65g * white_chip.reflectance, cmf)};
    for (int k = 0; k < 3; ++k)
        if (white.xyz[k] <= 0.0) throw std::runtime_error("degenerate white point");

    for (auto& chip : atlas.chips_) {
        const Tristimulus xyz = spectrum_to_tristimulus(d65g * chip.reflectance, cmf);
        chip.lab_d65 = xyz_to_lab(xyz, white);
    }
    atlas.white_ = white;
    atlas.white_chip_ = white_id;
    atlas.table_built_ = true;
}

std::vector<int> muns3_neighbors(const Atlas& atlas, int chip_id) {
    const MunsellChip& c = atlas.chip(chip_id);
    const int n_h = atlas.hue_count();
    std::vector<int> out;
    for (const auto& o : atlas.chips()) {
        if (std::abs(o.value - c.value) > 1) continue;
        if (std::abs(o.chroma_step() - c.chroma_step()) > 1) continue;
        if (!c.achromatic() && !o.achromatic()) {
            const int dh = std::abs(o.hue_index - c.hue_index);
            if (std::min(dh, n_h - dh) > 1) continue;
        }
        out.push_back(o.id);
    }
    return out;
}

std::vector<int> wcs_subset(const Atlas& atlas,
                            const std::optional<std::filesystem::path>& subset_file) {
    std::vector<int> ids;
    if (!subset_file) {
        ids.reserve(atlas.size());
        for (const auto& c : atlas.chips()) ids.push_back(c.id);
        return ids;
    }
    std::ifstream in(*subset_file);
    if (!in) throw std::runtime_error("cannot open subset file: " + subset_file->string());
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (first) {
            first = false;
            continue;
        }
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string hue_code, v_s, c_s;
        if (!std::getline(ss, hue_code, ',') || !std::getline(ss, v_s, ',') ||
            !std::getline(ss, c_s))
            throw std::runtime_error("bad subset row: " + line);
        const auto id = atlas.find(parse_hue_code(hue_code), std::stoi(v_s),
                                   round_even_chroma(std::stod(c_s)));
        if (!id) throw std::runtime_error("subset references missing chip: " + line);
        ids.push_back(*id);
    }
    if (ids.empty()) throw std::runtime_error("empty subset file: " + subset_file->string());
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    return ids;
}

}  // namespace cclab
