#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "cclab/illuminants.hpp"

using namespace cclab;

namespace {

Atlas built_synthetic(int n = 40) {
    Atlas atlas = synthetic_atlas(n);
    build_chromaticity_table(atlas, d65_spd(), cie1931_cmfs());
    return atlas;
}

std::pair<double, double> judd_m_for(double cct) {
    const auto [x, y] = daylight_chromaticity(cct);
    const double m = 0.0241 + 0.2562 * x - 0.7341 * y;
    return {(-1.3515 - 1.7703 * x + 5.9114 * y) / m, (0.0300 - 31.4424 * x + 30.0717 * y) / m};
}

}  // namespace

TEST_CASE("daylight chromaticity matches the published cubic at 6500 K") {
    const auto [x, y] = daylight_chromaticity(6500.0);
    CHECK(x == doctest::Approx(0.3128).epsilon(5e-4));
    CHECK(y == doctest::Approx(0.3292).epsilon(5e-4));
    CHECK_THROWS(daylight_chromaticity(3000.0));
    CHECK_THROWS(daylight_chromaticity(30000.0));
}

TEST_CASE("daylight chromaticity branches agree near 7000 K") {
    const double t1 = 1e3 / 7000.0, t2 = t1 * t1, t3 = t2 * t1;
    const double x_low = 0.244063 + 0.09911 * t1 + 2.9678 * t2 - 4.6070 * t3;
    const double x_high = 0.237040 + 0.24748 * t1 + 1.9018 * t2 - 2.0064 * t3;
    CHECK(std::abs(x_low - x_high) < 2e-3);
}

TEST_CASE("daylight composition with zero coefficients is exactly S0") {
    const JuddBasis& basis = standard_judd_basis();
    const auto spd = compose_daylight(basis, 0.0, 0.0);
    for (int i = 0; i < spd.bands(); ++i) CHECK(spd.value(i) == basis.s0.value(i));
}

TEST_CASE("d-series spectrum has nonnegative bands and records its coefficients") {
    const JuddBasis& basis = standard_judd_basis();
    for (double cct : {4000.0, 5200.0, 6504.0, 9000.0, 14000.0, 25000.0}) {
        const Illuminant ill = d_series_spd(cct, basis);
        for (double v : ill.spd.values()) CHECK(v >= 0.0);
        CHECK(ill.cct.has_value());
        CHECK(ill.judd_m.has_value());
    }
    CHECK_THROWS(d_series_spd(3500.0, basis));
}

TEST_CASE("generated 6504 K spectrum tracks the bundled D65 table") {
    // same chip, same white point: generated vs tabulated D65 within 1 dE
    const Atlas atlas = built_synthetic();
    const SensorSet& cmf = cie1931_cmfs();
    Illuminant gen = d_series_spd(6504.0, standard_judd_basis());
    Illuminant tab{"D65tab", d65_spd()};
    const int grey = atlas.grey_chip();
    const LabColor a = chip_under(atlas, grey, gen, cmf);
    const LabColor b = chip_under(atlas, grey, tab, cmf);
    CHECK(delta_e76(a, b) < 1.0);
}

TEST_CASE("normalize peak100 doubles a spectrum whose max is 50") {
    std::vector<double> v(static_cast<size_t>(kCanonicalGrid.n), 20.0);
    v[10] = 50.0;
    Illuminant ill{"x", SpectralDistribution(kCanonicalGrid, v)};
    const Illuminant out = normalize(ill, NormMode::peak100);
    CHECK(out.spd.max_value() == doctest::Approx(100.0));
    CHECK(out.spd.value(0) == doctest::Approx(40.0));
    CHECK(out.norm_scale == doctest::Approx(2.0));
}

TEST_CASE("normalize equal_area is idempotent and equalizes areas") {
    const JuddBasis& basis = standard_judd_basis();
    const double ref_area = d_series_spd(6504.0, basis).spd.area();
    const Illuminant a = normalize(d_series_spd(5000.0, basis), NormMode::equal_area, ref_area);
    const Illuminant b = normalize(d_series_spd(11000.0, basis), NormMode::equal_area, ref_area);
    CHECK(a.spd.area() == doctest::Approx(ref_area).epsilon(1e-9));
    CHECK(b.spd.area() == doctest::Approx(ref_area).epsilon(1e-9));
    const Illuminant twice = normalize(a, NormMode::equal_area, ref_area);
    for (int i = 0; i < a.spd.bands(); ++i)
        CHECK(twice.spd.value(i) == doctest::Approx(a.spd.value(i)).epsilon(1e-12));
}

TEST_CASE("normalize rejects an all-zero spectrum") {
    Illuminant ill{"zero",
                   SpectralDistribution(kCanonicalGrid, std::vector<double>(91, 0.0))};
    CHECK_THROWS(normalize(ill, NormMode::peak100));
}

TEST_CASE("normalization never moves the hue angle of a fixed reflectance") {
    const Atlas atlas = built_synthetic();
    const SensorSet& cmf = cie1931_cmfs();
    const Illuminant base = d_series_spd(5500.0, standard_judd_basis());
    const Illuminant scaled = normalize(base, NormMode::peak100);
    for (int id : {0, 5, 17}) {
        const LabColor la = chip_under(atlas, id, base, cmf);
        const LabColor lb = chip_under(atlas, id, scaled, cmf);
        CHECK(std::atan2(la.b, la.a) == doctest::Approx(std::atan2(lb.b, lb.a)).epsilon(1e-9));
    }
}

TEST_CASE("test quad: all four illuminants sit on the target circle") {
    const Atlas atlas = built_synthetic();
    const IlluminantQuad quad = build_test_quad(standard_judd_basis(), atlas);
    const SensorSet& cmf = cie1931_cmfs();
    for (const Illuminant* ill : quad.all()) {
        const LabColor lab = chip_under(atlas, quad.grey_chip_id, *ill, cmf);
        const double d = std::hypot(lab.a - quad.grey_point.a, lab.b - quad.grey_point.b);
        CHECK(std::abs(d - 10.0) < 0.05);
    }
    // Y is the warm side (+b*), B the cool side (-b*)
    const LabColor y = chip_under(atlas, quad.grey_chip_id, quad.y, cmf);
    const LabColor b = chip_under(atlas, quad.grey_chip_id, quad.b, cmf);
    CHECK(y.b > quad.grey_point.b);
    CHECK(b.b < quad.grey_point.b);
    // G is the low-a* side, R the high-a* side
    const LabColor g = chip_under(atlas, quad.grey_chip_id, quad.g, cmf);
    const LabColor r = chip_under(atlas, quad.grey_chip_id, quad.r, cmf);
    CHECK(g.a < r.a);
}

TEST_CASE("test quad: chords are orthogonal and Y-B follows the locus tangent") {
    const Atlas atlas = built_synthetic();
    const SensorSet& cmf = cie1931_cmfs();
    const IlluminantQuad quad = build_test_quad(standard_judd_basis(), atlas);
    auto ab = [&](const Illuminant& ill) {
        const LabColor lab = chip_under(atlas, quad.grey_chip_id, ill, cmf);
        return std::pair<double, double>(lab.a, lab.b);
    };
    const auto y = ab(quad.y), b = ab(quad.b), g = ab(quad.g), r = ab(quad.r);
    const double ybx = b.first - y.first, yby = b.second - y.second;
    const double grx = r.first - g.first, gry = r.second - g.second;
    const double cosine =
        (ybx * grx + yby * gry) / (std::hypot(ybx, yby) * std::hypot(grx, gry));
    CHECK(std::abs(cosine) < 0.02);

    // tangent of the daylight locus at the grey point, from a CCT sweep
    const JuddBasis& basis = standard_judd_basis();
    const double ref_area = d_series_spd(6504.0, basis).spd.area();
    auto locus_ab = [&](double cct) {
        return ab(normalize(d_series_spd(cct, basis), NormMode::equal_area, ref_area));
    };
    const auto lo = locus_ab(6200.0), hi = locus_ab(6800.0);
    const double tx = hi.first - lo.first, ty = hi.second - lo.second;
    const double cos_tangent =
        std::abs((ybx * tx + yby * ty) / (std::hypot(ybx, yby) * std::hypot(tx, ty)));
    CHECK(std::acos(std::clamp(cos_tangent, 0.0, 1.0)) < 5.0 * M_PI / 180.0);
}

TEST_CASE("test quad: zero radius collapses to the D65 coefficients") {
    const Atlas atlas = built_synthetic();
    QuadOptions opts;
    opts.radius_de = 0.0;
    const IlluminantQuad quad = build_test_quad(standard_judd_basis(), atlas, opts);
    const auto [m1_d65, m2_d65] = judd_m_for(6504.0);
    for (const Illuminant* ill : quad.all()) {
        REQUIRE(ill->judd_m.has_value());
        CHECK(std::abs(ill->judd_m->first - m1_d65) < 0.08);
        CHECK(std::abs(ill->judd_m->second - m2_d65) < 0.08);
    }
}

TEST_CASE("training pool: deterministic, distinct, normalized") {
    const JuddBasis& basis = standard_judd_basis();
    const auto pool = training_pool(basis, 43, 4000.0, 12000.0, 17);
    CHECK(pool.size() == 43);
    std::set<long long> ccts;
    for (const auto& ill : pool) {
        REQUIRE(ill.cct.has_value());
        CHECK(*ill.cct >= 4000.0);
        CHECK(*ill.cct <= 12000.0);
        ccts.insert(static_cast<long long>(*ill.cct * 1000.0));
        CHECK(ill.spd.max_value() == doctest::Approx(100.0));
    }
    CHECK(ccts.size() == 43);

    const auto again = training_pool(basis, 43, 4000.0, 12000.0, 17);
    for (size_t i = 0; i < pool.size(); ++i) CHECK(*pool[i].cct == *again[i].cct);

    CHECK_THROWS(training_pool(basis, 1, 4000.0, 12000.0, 17));
}

TEST_CASE("training pool appends measured spectra from a directory") {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "cclab_measured";
    fs::create_directories(dir);
    {
        std::ofstream out(dir / "forest01.spd");
        out << "wavelength_nm,value\n";
        for (int nm = 380; nm <= 830; nm += 10)
            out << nm << "," << (nm % 100 ? 30.0 : 55.0) << "\n";
    }
    const auto pool = training_pool(standard_judd_basis(), 3, 4000.0, 12000.0, 1, dir);
    CHECK(pool.size() == 4);
    CHECK(pool.back().id == "meas_forest01");
    CHECK(pool.back().spd.max_value() == doctest::Approx(100.0));
    fs::remove_all(dir);
}
