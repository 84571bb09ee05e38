#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "cclab/colorimetry.hpp"
#include "cclab/rng.hpp"

using namespace cclab;

namespace {

SpectralDistribution constant_spd(double v, const SpectralGrid& g = kCanonicalGrid) {
    return SpectralDistribution(g, std::vector<double>(static_cast<size_t>(g.n), v));
}

}  // namespace

TEST_CASE("resample of a constant spectrum is constant on any grid") {
    const auto s = constant_spd(0.5);
    const auto r = resample(s, SpectralGrid{400.0, 7.0, 20});
    for (int i = 0; i < r.bands(); ++i) CHECK(r.value(i) == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("resample onto the same grid is the identity") {
    std::vector<double> vals;
    Rng rng(7);
    for (int i = 0; i < kCanonicalGrid.n; ++i) vals.push_back(rng.uniform());
    const SpectralDistribution s(kCanonicalGrid, vals);
    const auto r = resample(s, kCanonicalGrid);
    for (int i = 0; i < r.bands(); ++i) CHECK(r.value(i) == s.value(i));
}

TEST_CASE("resample evaluates a linear ramp exactly") {
    // ramp 0 -> 1 over 380..830; at 605 nm the line gives 0.5
    std::vector<double> vals(static_cast<size_t>(kCanonicalGrid.n));
    for (int i = 0; i < kCanonicalGrid.n; ++i)
        vals[static_cast<size_t>(i)] = (kCanonicalGrid.wavelength(i) - 380.0) / 450.0;
    const SpectralDistribution ramp(kCanonicalGrid, vals);
    const auto r = resample(ramp, SpectralGrid{605.0, 1.0, 1});
    CHECK(r.value(0) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("resample rejects empty sources and bad grids") {
    CHECK_THROWS(SpectralDistribution(kCanonicalGrid, {}));
    const auto s = constant_spd(1.0);
    CHECK_THROWS(resample(s, SpectralGrid{380.0, -5.0, 10}));
    CHECK_THROWS(resample(s, SpectralGrid{100.0, 5.0, 10}));  // outside source, forbid mode
    CHECK_NOTHROW(resample(s, SpectralGrid{100.0, 5.0, 10}, {Extrapolation::clamp, false}));
}

TEST_CASE("resample round-trips piecewise-linear data through a finer grid") {
    Rng rng(21);
    std::vector<double> vals;
    for (int i = 0; i < kCanonicalGrid.n; ++i) vals.push_back(rng.uniform());
    const SpectralDistribution s(kCanonicalGrid, vals);
    const auto fine = resample(s, SpectralGrid{380.0, 1.0, 451});
    const auto back = resample(fine, kCanonicalGrid);
    for (int i = 0; i < s.bands(); ++i)
        CHECK(back.value(i) == doctest::Approx(s.value(i)).epsilon(1e-9));
}

TEST_CASE("tristimulus of the zero spectrum is zero") {
    const auto t = spectrum_to_tristimulus(constant_spd(0.0), cie1931_cmfs());
    for (int k = 0; k < 3; ++k) CHECK(t[k] == 0.0);
}

TEST_CASE("tristimulus of a single band is the sensor sample times step") {
    const SensorSet& cmf = cie1931_cmfs();
    std::vector<double> vals(static_cast<size_t>(kCanonicalGrid.n), 0.0);
    const int band = 40;
    const double power = 2.5;
    vals[band] = power;
    const auto t = spectrum_to_tristimulus(SpectralDistribution(kCanonicalGrid, vals), cmf);
    for (int k = 0; k < 3; ++k)
        CHECK(t[k] == doctest::Approx(cmf.sensor(k).value(band) * power * 5.0).epsilon(1e-12));
}

TEST_CASE("tristimulus of the equal-energy spectrum sums the sensitivity table") {
    const SensorSet& cmf = cie1931_cmfs();
    const auto t = spectrum_to_tristimulus(constant_spd(1.0), cmf);
    for (int k = 0; k < 3; ++k) {
        double expect = 0.0;
        for (int i = 0; i < kCanonicalGrid.n; ++i) expect += cmf.sensor(k).value(i);
        expect *= kCanonicalGrid.step_nm;
        CHECK(t[k] == doctest::Approx(expect).epsilon(1e-12));
    }
}

TEST_CASE("tristimulus requires aligned grids") {
    const auto coarse = constant_spd(1.0, SpectralGrid{380.0, 10.0, 46});
    CHECK_THROWS(spectrum_to_tristimulus(coarse, cie1931_cmfs()));
}

TEST_CASE("tristimulus is linear in the spectrum") {
    Rng rng(3);
    std::vector<double> a, b;
    for (int i = 0; i < kCanonicalGrid.n; ++i) {
        a.push_back(rng.uniform());
        b.push_back(rng.uniform());
    }
    const SpectralDistribution sa(kCanonicalGrid, a), sb(kCanonicalGrid, b);
    const double ca = 0.7, cb = -0.3;
    std::vector<double> mix(a.size());
    for (size_t i = 0; i < a.size(); ++i) mix[i] = ca * a[i] + cb * b[i];
    const auto tm = spectrum_to_tristimulus(SpectralDistribution(kCanonicalGrid, mix), cie1931_cmfs());
    const auto ta = spectrum_to_tristimulus(sa, cie1931_cmfs());
    const auto tb = spectrum_to_tristimulus(sb, cie1931_cmfs());
    for (int k = 0; k < 3; ++k)
        CHECK(tm[k] == doctest::Approx(ca * ta[k] + cb * tb[k]).epsilon(1e-12));
}

TEST_CASE("lab of the white point is exactly (100, 0, 0)") {
    const WhitePoint white{{{95.047, 100.0, 108.883}}};
    const LabColor lab = xyz_to_lab(white.xyz, white);
    CHECK(lab.L == doctest::Approx(100.0).epsilon(1e-12));
    CHECK(lab.a == 0.0);
    CHECK(lab.b == 0.0);
}

TEST_CASE("lab of black is (0, 0, 0)") {
    const WhitePoint white{{{95.047, 100.0, 108.883}}};
    const LabColor lab = xyz_to_lab(Tristimulus{{0.0, 0.0, 0.0}}, white);
    CHECK(lab.L == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(lab.a == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(lab.b == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("lab of half the white point follows the cube-root branch") {
    const WhitePoint white{{{95.047, 100.0, 108.883}}};
    Tristimulus half = white.xyz;
    for (int k = 0; k < 3; ++k) half[k] *= 0.5;
    const LabColor lab = xyz_to_lab(half, white);
    CHECK(lab.L == doctest::Approx(116.0 * std::cbrt(0.5) - 16.0).epsilon(1e-12));
    CHECK(lab.a == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(lab.b == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("lab rejects a nonpositive white point") {
    CHECK_THROWS(xyz_to_lab(Tristimulus{{1, 1, 1}}, WhitePoint{{{1.0, 0.0, 1.0}}}));
}

TEST_CASE("lab lightness is monotone in Y for fixed ratios") {
    const WhitePoint white{{{95.047, 100.0, 108.883}}};
    double prev = -1.0;
    for (double y = 1.0; y <= 100.0; y += 7.0) {
        Tristimulus xyz{{0.95047 * y, y, 1.08883 * y}};
        const double L = xyz_to_lab(xyz, white).L;
        CHECK(L > prev);
        prev = L;
    }
}

TEST_CASE("delta E is zero for identical colors and 5 for a 3-4-5 pair") {
    const LabColor a{10, 20, 30};
    CHECK(delta_e76(a, a) == 0.0);
    CHECK(delta_e76(LabColor{0, 0, 0}, LabColor{0, 3, 4}) == doctest::Approx(5.0));
    CHECK(delta_e76_ab(LabColor{50, 0, 0}, LabColor{10, 3, 4}) == doctest::Approx(5.0));
}

TEST_CASE("delta E satisfies the metric axioms on random triples") {
    Rng rng(99);
    for (int it = 0; it < 200; ++it) {
        auto rand_lab = [&] {
            return LabColor{rng.uniform(0, 100), rng.uniform(-80, 80), rng.uniform(-80, 80)};
        };
        const LabColor a = rand_lab(), b = rand_lab(), c = rand_lab();
        CHECK(delta_e76(a, b) == doctest::Approx(delta_e76(b, a)).epsilon(1e-15));
        CHECK(delta_e76(a, a) == 0.0);
        CHECK(delta_e76(a, c) <= delta_e76(a, b) + delta_e76(b, c) + 1e-12);
        CHECK(delta_e76(a, b) >= 0.0);
    }
}

TEST_CASE("cone fundamentals are nonnegative and consistent with the HPE matrix") {
    const SensorSet& cones = cone_fundamentals();
    for (int k = 0; k < 3; ++k)
        for (int i = 0; i < kCanonicalGrid.n; ++i) CHECK(cones.sensor(k).value(i) >= 0.0);

    // LMS response of a spectrum equals HPE * XYZ response of the same spectrum
    const auto& d65 = d65_spd();
    const Tristimulus lms = spectrum_to_tristimulus(d65, cones);
    const Tristimulus xyz = spectrum_to_tristimulus(d65, cie1931_cmfs());
    const Tristimulus mapped = xyz_to_lms(xyz);
    for (int k = 0; k < 3; ++k) CHECK(lms[k] == doctest::Approx(mapped[k]).epsilon(1e-6));
}

TEST_CASE("lms/xyz matrices are mutual inverses") {
    Rng rng(5);
    for (int it = 0; it < 20; ++it) {
        Tristimulus v{{rng.uniform(0, 100), rng.uniform(0, 100), rng.uniform(0, 100)}};
        const Tristimulus round = lms_to_xyz(xyz_to_lms(v));
        for (int k = 0; k < 3; ++k) CHECK(round[k] == doctest::Approx(v[k]).epsilon(1e-10));
    }
}

TEST_CASE("narrowband sensors are disjoint single bands") {
    const SensorSet& nb = narrowband_sensors();
    for (int k = 0; k < 3; ++k) {
        int nonzero = 0;
        for (int i = 0; i < kCanonicalGrid.n; ++i)
            if (nb.sensor(k).value(i) != 0.0) ++nonzero;
        CHECK(nonzero == 1);
    }
    for (int i = 0; i < kCanonicalGrid.n; ++i) {
        int active = 0;
        for (int k = 0; k < 3; ++k)
            if (nb.sensor(k).value(i) != 0.0) ++active;
        CHECK(active <= 1);
    }
}

TEST_CASE("spd files round-trip and reject malformed rows") {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "cclab_spd_test";
    fs::create_directories(dir);

    const auto s = d65_spd();
    write_spd_file(dir / "d65.csv", s);
    const auto loaded = load_spd_file(dir / "d65.csv");
    for (int i = 0; i < s.bands(); ++i)
        CHECK(loaded.value(i) == doctest::Approx(s.value(i)).epsilon(1e-9));

    {
        std::ofstream bad(dir / "bad.csv");
        bad << "wavelength_nm,value\n500,1.0\n400,2.0\n";  // descending
    }
    CHECK_THROWS(load_spd_file(dir / "bad.csv"));
    {
        std::ofstream bad(dir / "bad2.csv");
        bad << "header only\n";
    }
    CHECK_THROWS(load_spd_file(dir / "bad2.csv"));
    fs::remove_all(dir);
}
