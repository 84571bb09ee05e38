#include "cclab/illuminants.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "cclab/rng.hpp"
#include "data_tables.hpp"

namespace cclab {

const JuddBasis& standard_judd_basis() {
    static const JuddBasis basis = [] {
        const size_t n = tables::kDaylightComponentsCount;
        std::vector<double> xs(n), s0(n), s1(n), s2(n);
        for (size_t i = 0; i < n; ++i) {
            xs[i] = tables::kDaylightComponents[i].nm;
            s0[i] = tables::kDaylightComponents[i].s0;
            s1[i] = tables::kDaylightComponents[i].s1;
            s2[i] = tables::kDaylightComponents[i].s2;
        }
        auto to_grid = [&](const std::vector<double>& ys) {
            std::vector<double> out(static_cast<size_t>(kCanonicalGrid.n));
            for (int i = 0; i < kCanonicalGrid.n; ++i) {
                const double nm = kCanonicalGrid.wavelength(i);
                const auto it = std::upper_bound(xs.begin(), xs.end(), nm);
                size_t j = static_cast<size_t>(it - xs.begin());
                if (j == 0) j = 1;
                if (j == xs.size()) j = xs.size() - 1;
                const double t = (nm - xs[j - 1]) / (xs[j] - xs[j - 1]);
                out[static_cast<size_t>(i)] = ys[j - 1] + t * (ys[j] - ys[j - 1]);
            }
            return SpectralDistribution(kCanonicalGrid, std::move(out));
        };
        return JuddBasis{to_grid(s0), to_grid(s1), to_grid(s2)};
    }();
    return basis;
}

std::pair<double, double> daylight_chromaticity(double cct) {
    if (cct < 4000.0 || cct > 25000.0)
        throw std::out_of_range("daylight CCT must be in [4000, 25000] K");
    const double t1 = 1e3 / cct, t2 = t1 * t1, t3 = t2 * t1;
    double x;
    if (cct <= 7000.0)
        x = 0.244063 + 0.09911 * t1 + 2.9678 * t2 - 4.6070 * t3;
    else
        x = 0.237040 + 0.24748 * t1 + 1.9018 * t2 - 2.0064 * t3;
    const double y = -3.000 * x * x + 2.870 * x - 0.275;
    return {x, y};
}

namespace {

std::pair<double, double> judd_coefficients(double x, double y) {
    const double m = 0.0241 + 0.2562 * x - 0.7341 * y;
    const double m1 = (-1.3515 - 1.7703 * x + 5.9114 * y) / m;
    const double m2 = (0.0300 - 31.4424 * x + 30.0717 * y) / m;
    return {m1, m2};
}

}  // namespace

SpectralDistribution compose_daylight(const JuddBasis& basis, double m1, double m2) {
    std::vector<double> v(basis.s0.values());
    const auto& a = basis.s1.values();
    const auto& b = basis.s2.values();
    for (size_t i = 0; i < v.size(); ++i) v[i] = std::max(0.0, v[i] + m1 * a[i] + m2 * b[i]);
    return SpectralDistribution(basis.s0.grid(), std::move(v));
}

Illuminant d_series_spd(double cct, const JuddBasis& basis) {
    const auto [x, y] = daylight_chromaticity(cct);
    const auto [m1, m2] = judd_coefficients(x, y);
    Illuminant ill;
    ill.id = "D" + std::to_string(static_cast<int>(std::lround(cct)));
    ill.spd = compose_daylight(basis, m1, m2);
    ill.cct = cct;
    ill.judd_m = {m1, m2};
    return ill;
}

Illuminant normalize(const Illuminant& ill, NormMode mode, double reference_area) {
    const double area = ill.spd.area();
    const double peak = ill.spd.max_value();
    if (peak <= 0.0 || area <= 0.0) throw std::invalid_argument("normalize: all-zero spectrum");
    double scale = 1.0;
    switch (mode) {
        case NormMode::none: break;
        case NormMode::peak100: scale = 100.0 / peak; break;
        case NormMode::equal_area:
            if (reference_area <= 0.0)
                throw std::invalid_argument("normalize: equal_area needs a reference area");
            scale = reference_area / area;
            break;
    }
    Illuminant out = ill;
    out.spd = ill.spd * scale;
    out.norm = mode;
    out.norm_scale = scale;
    return out;
}

LabColor chip_under(const Atlas& atlas, int chip_id, const Illuminant& ill, const SensorSet& cmf) {
    const auto& chip = atlas.chip(chip_id);
    const SpectralDistribution spd =
        resample(ill.spd, cmf.grid(), {Extrapolation::clamp, false}) * chip.reflectance;
    return xyz_to_lab(spectrum_to_tristimulus(spd, cmf), atlas.white_point());
}

const Illuminant& IlluminantQuad::by_tag(const std::string& tag) const {
    if (tag == "Y") return y;
    if (tag == "B") return b;
    if (tag == "G") return g;
    if (tag == "R") return r;
    throw std::invalid_argument("unknown quad tag: " + tag);
}

IlluminantQuad build_test_quad(const JuddBasis& basis, const Atlas& atlas,
                               const QuadOptions& opts) {
    const SensorSet& cmf = cie1931_cmfs();
    if (!atlas.table_built()) throw std::logic_error("build_test_quad: chromaticity table missing");

    const int grey_id = atlas.grey_chip(opts.grey_target_value);
    const SpectralDistribution d65 = opts.d65 ? *opts.d65 : d65_spd();
    Illuminant d65_ill{"D65ref", resample(d65, cmf.grid(), {Extrapolation::clamp, false})};
    const LabColor grey_point = chip_under(atlas, grey_id, d65_ill, cmf);

    // All candidates share the area of the peak100-normalized 6504 K
    // spectrum, which keeps the grey chip's lightness nearly constant across
    // the quad and luminance-matched to the peak100 training pool.
    const double ref_area = normalize(d_series_spd(6504.0, basis), NormMode::peak100).spd.area();

    auto grey_ab = [&](const Illuminant& candidate) {
        const LabColor lab = chip_under(atlas, grey_id, normalize(candidate, NormMode::equal_area, ref_area), cmf);
        return std::pair<double, double>(lab.a, lab.b);
    };
    auto dist_from_grey = [&](std::pair<double, double> ab) {
        return std::hypot(ab.first - grey_point.a, ab.second - grey_point.b);
    };

    // Y and B: bisection over CCT until the grey chip sits radius_de away.
    auto solve_locus = [&](double t_lo, double t_hi, bool increasing) {
        double lo = t_lo, hi = t_hi;
        for (int it = 0; it < opts.max_iterations; ++it) {
            const double mid = 0.5 * (lo + hi);
            const double d = dist_from_grey(grey_ab(d_series_spd(mid, basis)));
            if (std::abs(d - opts.radius_de) < opts.tolerance_de) return mid;
            // distance grows away from the D65 temperature
            const bool too_far = d > opts.radius_de;
            if (increasing == too_far) hi = mid;
            else lo = mid;
        }
        throw std::runtime_error("quad search: locus bisection did not converge");
    };

    if (opts.radius_de > 0.0) {
        const double d_at_4000 = dist_from_grey(grey_ab(d_series_spd(4000.0, basis)));
        const double d_at_25000 = dist_from_grey(grey_ab(d_series_spd(25000.0, basis)));
        if (d_at_4000 < opts.radius_de || d_at_25000 < opts.radius_de)
            throw std::runtime_error("quad search: radius unreachable on the daylight locus");
    }

    const double t_y = opts.radius_de > 0.0 ? solve_locus(4000.0, 6504.0, false) : 6504.0;
    const double t_b = opts.radius_de > 0.0 ? solve_locus(6504.0, 25000.0, true) : 6504.0;

    Illuminant ill_y = normalize(d_series_spd(t_y, basis), NormMode::equal_area, ref_area);
    Illuminant ill_b = normalize(d_series_spd(t_b, basis), NormMode::equal_area, ref_area);
    ill_y.id = "Y";
    ill_b.id = "B";

    const auto ab_y = grey_ab(ill_y);
    const auto ab_b = grey_ab(ill_b);

    // G and R targets: on the line through the grey point orthogonal to the
    // Y-B chord.
    double ux = ab_b.first - ab_y.first, uy = ab_b.second - ab_y.second;
    const double chord = std::hypot(ux, uy);
    double px, py;
    if (chord > 1e-12) {
        px = -uy / chord;
        py = ux / chord;
    } else {  // degenerate radius: any direction works
        px = 1.0;
        py = 0.0;
    }

    auto solve_offlocus = [&](double target_a, double target_b, const char* tag) {
        // Newton iteration in (m1, m2) with a finite-difference Jacobian.
        auto d65_xy = daylight_chromaticity(6504.0);
        auto [m1, m2] = judd_coefficients(d65_xy.first, d65_xy.second);
        auto eval = [&](double a1, double a2) {
            Illuminant c;
            c.spd = compose_daylight(basis, a1, a2);
            const auto ab = grey_ab(c);
            return std::pair<double, double>(ab.first - target_a, ab.second - target_b);
        };
        const double h = 1e-3;
        for (int it = 0; it < opts.max_iterations; ++it) {
            const auto f = eval(m1, m2);
            if (std::hypot(f.first, f.second) < opts.tolerance_de) {
                Illuminant out;
                out.id = tag;
                out.spd = compose_daylight(basis, m1, m2);
                out.judd_m = {m1, m2};
                return normalize(out, NormMode::equal_area, ref_area);
            }
            const auto f1 = eval(m1 + h, m2);
            const auto f2 = eval(m1, m2 + h);
            const double j11 = (f1.first - f.first) / h, j12 = (f2.first - f.first) / h;
            const double j21 = (f1.second - f.second) / h, j22 = (f2.second - f.second) / h;
            const double det = j11 * j22 - j12 * j21;
            if (std::abs(det) < 1e-12)
                throw std::runtime_error("quad search: singular Jacobian for " + std::string(tag));
            double dm1 = (-f.first * j22 + f.second * j12) / det;
            double dm2 = (f.first * j21 - f.second * j11) / det;
            // Damp long steps; the response is mildly nonlinear.
            const double norm = std::hypot(dm1, dm2);
            if (norm > 0.5) {
                dm1 *= 0.5 / norm;
                dm2 *= 0.5 / norm;
            }
            m1 += dm1;
            m2 += dm2;
        }
        throw std::runtime_error("quad search: off-locus Newton did not converge for " +
                                 std::string(tag));
    };

    const double ga = grey_point.a + opts.radius_de * px;
    const double gb = grey_point.b + opts.radius_de * py;
    const double ra = grey_point.a - opts.radius_de * px;
    const double rb = grey_point.b - opts.radius_de * py;
    Illuminant cand1 = solve_offlocus(ga, gb, "G");
    Illuminant cand2 = solve_offlocus(ra, rb, "R");
    // Green side = smaller a* on the grey chip.
    if (grey_ab(cand1).first > grey_ab(cand2).first) {
        std::swap(cand1, cand2);
        cand1.id = "G";
        cand2.id = "R";
    }

    // Clamping must not have pushed any of the four off target.
    IlluminantQuad quad{std::move(ill_y), std::move(ill_b), std::move(cand1), std::move(cand2),
                        grey_point, opts.radius_de, grey_id};
    for (const Illuminant* ill : quad.all()) {
        const double d = dist_from_grey(grey_ab(*ill));
        if (std::abs(d - opts.radius_de) > 2.0 * opts.tolerance_de)
            throw std::runtime_error("quad illuminant " + ill->id +
                                     " off target after clamping");
    }
    return quad;
}

std::vector<Illuminant> training_pool(const JuddBasis& basis, int n, double cct_lo, double cct_hi,
                                      uint64_t seed,
                                      const std::optional<std::filesystem::path>& measured_dir) {
    if (n < 2) throw std::invalid_argument("training_pool: need at least 2 illuminants");
    if (cct_lo <= 0.0 || cct_hi <= cct_lo) throw std::invalid_argument("training_pool: bad CCT range");
    Rng rng(seed);
    std::vector<Illuminant> pool;
    pool.reserve(static_cast<size_t>(n));
    const double log_lo = std::log(cct_lo), log_hi = std::log(cct_hi);
    for (int i = 0; i < n; ++i) {
        const double cct = std::exp(rng.uniform(log_lo, log_hi));
        Illuminant ill = normalize(d_series_spd(cct, basis), NormMode::peak100);
        ill.id = "train" + std::to_string(i) + "_D" + std::to_string(static_cast<int>(std::lround(cct)));
        pool.push_back(std::move(ill));
    }
    if (measured_dir) {
        namespace fs = std::filesystem;
        std::vector<fs::path> files;
        for (const auto& e : fs::directory_iterator(*measured_dir))
            if (e.is_regular_file()) files.push_back(e.path());
        std::sort(files.begin(), files.end());
        for (const auto& f : files) {
            Illuminant ill;
            ill.id = "meas_" + f.stem().string();
            ill.spd = load_spd_file(f, basis.s0.grid(), {Extrapolation::clamp, false});
            pool.push_back(normalize(ill, NormMode::peak100));
        }
    }
    if (pool.empty()) throw std::runtime_error("training_pool: empty pool");
    return pool;
}

}  // namespace cclab
