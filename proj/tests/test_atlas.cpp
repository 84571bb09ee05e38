#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "cclab/atlas.hpp"

using namespace cclab;
namespace fs = std::filesystem;

namespace {

Atlas built_synthetic(int n_hues = 40) {
    Atlas atlas = synthetic_atlas(n_hues);
    build_chromaticity_table(atlas, d65_spd(), cie1931_cmfs());
    return atlas;
}

// Coordinate-lattice atlas for neighborhood tests; flat reflectances.
Atlas lattice_atlas(const std::vector<std::tuple<int, int, int>>& coords) {
    std::vector<MunsellChip> chips;
    for (const auto& [h, v, c] : coords) {
        MunsellChip chip;
        chip.hue_index = h;
        chip.value = v;
        chip.chroma = c;
        chip.reflectance = SpectralDistribution(
            kCanonicalGrid, std::vector<double>(static_cast<size_t>(kCanonicalGrid.n), 0.5));
        chips.push_back(std::move(chip));
    }
    return Atlas(std::move(chips), 40);
}

void write_chip_file(const fs::path& p, double level) {
    std::ofstream out(p);
    out << "wavelength_nm,value\n";
    for (int nm = 380; nm <= 830; nm += 10) out << nm << "," << level << "\n";
}

}  // namespace

TEST_CASE("hue codes parse onto the 40-step circle") {
    CHECK(parse_hue_code("2.5R") == 0);
    CHECK(parse_hue_code("5R") == 1);
    CHECK(parse_hue_code("10R") == 3);
    CHECK(parse_hue_code("2.5YR") == 4);
    CHECK(parse_hue_code("10RP") == 39);
    CHECK(parse_hue_code("N") == kAchromaticHue);
    CHECK_THROWS(parse_hue_code("3R"));
    CHECK_THROWS(parse_hue_code("5Q"));
    CHECK_THROWS(parse_hue_code(""));
}

TEST_CASE("load_atlas reads a directory of three chips with dense ids") {
    const fs::path dir = fs::temp_directory_path() / "cclab_atlas3";
    fs::create_directories(dir);
    write_chip_file(dir / "5R4-6.spd", 0.4);
    write_chip_file(dir / "5G6-4.spd", 0.5);
    write_chip_file(dir / "N5.spd", 0.2);

    const Atlas atlas = load_atlas(dir);
    CHECK(atlas.size() == 3);
    for (int id = 0; id < 3; ++id) CHECK(atlas.chip(id).id == id);
    // sorted by (hue_index, value, chroma): achromatic sentinel first
    CHECK(atlas.chip(0).achromatic());
    CHECK(atlas.chip(1).hue_index == parse_hue_code("5R"));
    CHECK(atlas.chip(2).hue_index == parse_hue_code("5G"));
    CHECK(atlas.chip(1).value == 4);
    CHECK(atlas.chip(1).chroma == 6);
    fs::remove_all(dir);
}

TEST_CASE("load_atlas honors an index file and flags bad reflectances") {
    const fs::path dir = fs::temp_directory_path() / "cclab_atlas_idx";
    fs::create_directories(dir);
    write_chip_file(dir / "a.spd", 0.4);
    write_chip_file(dir / "b.spd", 0.6);
    {
        std::ofstream idx(dir / "index.csv");
        idx << "filename,hue_code,value,chroma\n";
        idx << "a.spd,7.5YR,5,8\n";
        idx << "b.spd,N,7,0\n";
    }
    AtlasLoadOptions opts;
    opts.index_file = dir / "index.csv";
    const Atlas atlas = load_atlas(dir, opts);
    CHECK(atlas.size() == 2);
    CHECK(atlas.find(parse_hue_code("7.5YR"), 5, 8).has_value());

    write_chip_file(dir / "c.spd", 1.7);  // far out of [0,1]
    {
        std::ofstream idx(dir / "index.csv", std::ios::app);
        idx << "c.spd,5B,5,4\n";
    }
    CHECK_THROWS(load_atlas(dir, opts));
    fs::remove_all(dir);
}

TEST_CASE("duplicate chip coordinates are rejected") {
    CHECK_THROWS(lattice_atlas({{0, 5, 4}, {0, 5, 4}}));
}

TEST_CASE("synthetic atlas produces the requested hue circle plus neutrals") {
    const Atlas atlas = built_synthetic(40);
    size_t hue_chips = 0, neutral_chips = 0;
    for (const auto& c : atlas.chips()) {
        if (c.achromatic()) ++neutral_chips;
        else ++hue_chips;
        for (double v : c.reflectance.values()) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
    }
    CHECK(hue_chips == 40);
    CHECK(neutral_chips == 5);
    CHECK(atlas.hue_count() == 40);
}

TEST_CASE("synthetic hue circle has circularly monotone Lab hue angles") {
    const Atlas atlas = built_synthetic(40);
    std::vector<double> angles;
    for (const auto& c : atlas.chips()) {
        if (c.achromatic()) continue;
        angles.push_back(std::atan2(c.lab_d65.b, c.lab_d65.a));
    }
    REQUIRE(angles.size() == 40);
    // walking the circle must wrap exactly once, always in the same direction
    double total = 0.0;
    int direction_flips = 0;
    for (size_t i = 0; i < angles.size(); ++i) {
        double d = angles[(i + 1) % angles.size()] - angles[i];
        while (d > M_PI) d -= 2.0 * M_PI;
        while (d < -M_PI) d += 2.0 * M_PI;
        total += d;
        if (d <= 0.0) ++direction_flips;
    }
    CHECK(std::abs(std::abs(total) - 2.0 * M_PI) < 1e-9);
    CHECK(direction_flips == 0);
}

TEST_CASE("chromaticity table: white chip maps to (100,0,0), neutrals stay neutral") {
    const Atlas atlas = built_synthetic(40);
    const auto& white = atlas.chip(atlas.white_chip());
    CHECK(white.lab_d65.L == doctest::Approx(100.0).epsilon(1e-9));
    CHECK(std::abs(white.lab_d65.a) < 1e-9);
    CHECK(std::abs(white.lab_d65.b) < 1e-9);
    for (const auto& c : atlas.chips()) {
        if (!c.achromatic()) continue;
        CHECK(std::abs(c.lab_d65.a) < 2.0);
        CHECK(std::abs(c.lab_d65.b) < 2.0);
    }
}

TEST_CASE("chromaticity table: higher value means higher L* (only-value pairs)") {
    const Atlas atlas = built_synthetic(40);
    std::vector<const MunsellChip*> neutrals;
    for (const auto& c : atlas.chips())
        if (c.achromatic()) neutrals.push_back(&c);
    for (size_t i = 0; i + 1 < neutrals.size(); ++i)
        for (size_t j = i + 1; j < neutrals.size(); ++j) {
            const bool higher = neutrals[j]->value > neutrals[i]->value;
            CHECK((neutrals[j]->lab_d65.L > neutrals[i]->lab_d65.L) == higher);
        }
}

TEST_CASE("chromaticity table requires an achromatic chip") {
    Atlas atlas = lattice_atlas({{0, 5, 4}, {1, 5, 4}});
    CHECK_THROWS(build_chromaticity_table(atlas, d65_spd(), cie1931_cmfs()));
}

TEST_CASE("chromaticity table is bit-stable across builds") {
    Atlas a = built_synthetic(16);
    Atlas b = built_synthetic(16);
    for (size_t i = 0; i < a.size(); ++i) {
        CHECK(a.chip(static_cast<int>(i)).lab_d65.L == b.chip(static_cast<int>(i)).lab_d65.L);
        CHECK(a.chip(static_cast<int>(i)).lab_d65.a == b.chip(static_cast<int>(i)).lab_d65.a);
        CHECK(a.chip(static_cast<int>(i)).lab_d65.b == b.chip(static_cast<int>(i)).lab_d65.b);
    }
}

TEST_CASE("muns3: interior hue-circle chip has exactly two hue neighbors plus itself") {
    const Atlas atlas = built_synthetic(40);
    int probe = -1;
    for (const auto& c : atlas.chips())
        if (!c.achromatic() && c.hue_index == 7) probe = c.id;
    REQUIRE(probe >= 0);
    const auto n = muns3_neighbors(atlas, probe);
    CHECK(n.size() == 3);
    std::set<int> hues;
    for (int id : n) hues.insert(atlas.chip(id).hue_index);
    CHECK(hues == std::set<int>{6, 7, 8});
}

TEST_CASE("muns3: hue index 39 neighbors hue index 0") {
    const Atlas atlas = built_synthetic(40);
    int h39 = -1, h0 = -1;
    for (const auto& c : atlas.chips()) {
        if (c.achromatic()) continue;
        if (c.hue_index == 39) h39 = c.id;
        if (c.hue_index == 0) h0 = c.id;
    }
    const auto n = muns3_neighbors(atlas, h39);
    CHECK(std::find(n.begin(), n.end(), h0) != n.end());
}

TEST_CASE("muns3: gamut edge excludes nonexistent higher-chroma chips") {
    // a small lattice whose chroma ladder stops at 8
    const Atlas atlas = lattice_atlas({
        {5, 5, 4}, {5, 5, 6}, {5, 5, 8}, {4, 5, 6}, {6, 5, 6}, {5, 4, 6}, {5, 6, 6},
    });
    const int edge = *atlas.find(5, 5, 8);
    const auto n = muns3_neighbors(atlas, edge);
    // brute-force oracle over the 3x3x3 coordinate cube via indexed lookups
    std::set<int> expect;
    for (int dh = -1; dh <= 1; ++dh)
        for (int dv = -1; dv <= 1; ++dv)
            for (int dc = -1; dc <= 1; ++dc) {
                const int h = ((5 + dh) % 40 + 40) % 40;
                if (auto id = atlas.find(h, 5 + dv, 8 + 2 * dc)) expect.insert(*id);
            }
    CHECK(std::set<int>(n.begin(), n.end()) == expect);
}

TEST_CASE("muns3: neighborhood is symmetric, bounded, and matches the coordinate oracle") {
    const Atlas atlas = built_synthetic(24);
    for (const auto& c : atlas.chips()) {
        const auto n = muns3_neighbors(atlas, c.id);
        CHECK(n.size() <= 27);
        CHECK(std::find(n.begin(), n.end(), c.id) != n.end());
        for (int other : n) {
            const auto back = muns3_neighbors(atlas, other);
            CHECK(std::find(back.begin(), back.end(), c.id) != back.end());
        }
        if (!c.achromatic()) {
            std::set<int> expect;
            for (int dh = -1; dh <= 1; ++dh)
                for (int dv = -1; dv <= 1; ++dv)
                    for (int dc = -1; dc <= 1; ++dc) {
                        const int n_h = atlas.hue_count();
                        const int h = ((c.hue_index + dh) % n_h + n_h) % n_h;
                        if (auto id = atlas.find(h, c.value + dv, c.chroma + 2 * dc))
                            expect.insert(*id);
                    }
            // plus achromatic chips within the value/chroma-step bounds
            for (const auto& o : atlas.chips())
                if (o.achromatic() && std::abs(o.value - c.value) <= 1 && c.chroma_step() <= 1)
                    expect.insert(o.id);
            CHECK(std::set<int>(n.begin(), n.end()) == expect);
        }
    }
}

TEST_CASE("muns3: achromatic chips neighbor low-chroma chips of any hue") {
    const Atlas atlas =
        lattice_atlas({{kAchromaticHue, 5, 0}, {0, 5, 2}, {20, 5, 2}, {20, 5, 8}, {kAchromaticHue, 7, 0}});
    const int grey = *atlas.find(kAchromaticHue, 5, 0);
    const auto n = muns3_neighbors(atlas, grey);
    const std::set<int> got(n.begin(), n.end());
    CHECK(got.count(*atlas.find(0, 5, 2)) == 1);
    CHECK(got.count(*atlas.find(20, 5, 2)) == 1);
    CHECK(got.count(*atlas.find(20, 5, 8)) == 0);            // chroma step 4
    CHECK(got.count(*atlas.find(kAchromaticHue, 7, 0)) == 0);  // two value steps away
    CHECK_THROWS(muns3_neighbors(atlas, 999));
}

TEST_CASE("wcs subset defaults to the whole atlas and loads coordinate files") {
    const Atlas atlas = built_synthetic(12);
    const auto all = wcs_subset(atlas);
    CHECK(all.size() == atlas.size());

    const fs::path dir = fs::temp_directory_path() / "cclab_wcs";
    fs::create_directories(dir);
    {
        std::ofstream out(dir / "subset.csv");
        out << "hue_code,value,chroma\n";
        out << "N,5,0\n";
        out << "N,9,0\n";
    }
    const auto ids = wcs_subset(atlas, dir / "subset.csv");
    CHECK(ids.size() == 2);
    for (int id : ids) CHECK(atlas.chip(id).achromatic());

    {
        std::ofstream out(dir / "missing.csv");
        out << "hue_code,value,chroma\n";
        out << "5R,5,16\n";  // not in the synthetic atlas
    }
    CHECK_THROWS(wcs_subset(atlas, dir / "missing.csv"));
    {
        std::ofstream out(dir / "empty.csv");
        out << "hue_code,value,chroma\n";
    }
    CHECK_THROWS(wcs_subset(atlas, dir / "empty.csv"));
    fs::remove_all(dir);
}
