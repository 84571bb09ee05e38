#include "cclab/colorimetry.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "data_tables.hpp"

namespace cclab {

namespace {

// Shared piecewise-linear interpolation core.
double interp_at(const std::vector<double>& xs, const std::vector<double>& ys, double x,
                 Extrapolation mode) {
    if (xs.empty()) throw std::invalid_argument("interpolation: empty source");
    if (x <= xs.front()) {
        if (x < xs.front() && mode == Extrapolation::forbid)
            throw std::out_of_range("interpolation: wavelength below source range");
        return ys.front();
    }
    if (x >= xs.back()) {
        if (x > xs.back() && mode == Extrapolation::forbid)
            throw std::out_of_range("interpolation: wavelength above source range");
        return ys.back();
    }
    const auto it = std::upper_bound(xs.begin(), xs.end(), x);
    const size_t j = static_cast<size_t>(it - xs.begin());
    const double x0 = xs[j - 1], x1 = xs[j];
    const double t = (x - x0) / (x1 - x0);
    return ys[j - 1] + t * (ys[j] - ys[j - 1]);
}

std::vector<double> interp_to_grid(const std::vector<double>& xs, const std::vector<double>& ys,
                                   const SpectralGrid& grid, const ResampleOptions& opts) {
    std::vector<double> out(static_cast<size_t>(grid.n));
    for (int i = 0; i < grid.n; ++i) {
        double v = interp_at(xs, ys, grid.wavelength(i), opts.extrapolation);
        if (opts.clip_to_unit) v = std::clamp(v, 0.0, 1.0);
        out[static_cast<size_t>(i)] = v;
    }
    return out;
}

SpectralDistribution from_table(const tables::SpdRow* rows, size_t n, const SpectralGrid& grid) {
    std::vector<double> xs(n), ys(n);
    for (size_t i = 0; i < n; ++i) {
        xs[i] = rows[i].nm;
        ys[i] = rows[i].v;
    }
    return SpectralDistribution(grid, interp_to_grid(xs, ys, grid, {}));
}

}  // namespace

SpectralDistribution::SpectralDistribution(double start_nm, double step_nm,
                                           std::vector<double> values)
    : SpectralDistribution(SpectralGrid{start_nm, step_nm, static_cast<int>(values.size())},
                           std::move(values)) {}

SpectralDistribution::SpectralDistribution(const SpectralGrid& grid, std::vector<double> values)
    : grid_(grid), values_(std::move(values)) {
    if (values_.empty()) throw std::invalid_argument("SpectralDistribution: values empty");
    if (grid_.step_nm <= 0.0) throw std::invalid_argument("SpectralDistribution: step_nm <= 0");
    if (grid_.n != static_cast<int>(values_.size()))
        throw std::invalid_argument("SpectralDistribution: grid size does not match values");
}

double SpectralDistribution::sample(double nm) const {
    if (nm <= grid_.start_nm) return values_.front();
    if (nm >= grid_.end_nm()) return values_.back();
    const double pos = (nm - grid_.start_nm) / grid_.step_nm;
    const int i = static_cast<int>(pos);
    const double t = pos - i;
    return values_[static_cast<size_t>(i)] * (1.0 - t) + values_[static_cast<size_t>(i) + 1] * t;
}

double SpectralDistribution::max_value() const {
    return *std::max_element(values_.begin(), values_.end());
}

double SpectralDistribution::area() const {
    double s = 0.0;
    for (double v : values_) s += v;
    return s * grid_.step_nm;
}

bool SpectralDistribution::covers(const SpectralGrid& target) const {
    return grid_.start_nm <= target.start_nm + 1e-9 && grid_.end_nm() >= target.end_nm() - 1e-9;
}

SpectralDistribution resample(const SpectralDistribution& spd, const SpectralGrid& target,
                              const ResampleOptions& opts) {
    if (target.n <= 0 || target.step_nm <= 0.0)
        throw std::invalid_argument("resample: non-increasing target grid");
    if (opts.extrapolation == Extrapolation::forbid && !spd.covers(target))
        throw std::out_of_range("resample: source does not cover target range");
    std::vector<double> out(static_cast<size_t>(target.n));
    for (int i = 0; i < target.n; ++i) {
        double v = spd.sample(target.wavelength(i));
        if (opts.clip_to_unit) v = std::clamp(v, 0.0, 1.0);
        out[static_cast<size_t>(i)] = v;
    }
    return SpectralDistribution(target, std::move(out));
}

Tristimulus spectrum_to_tristimulus(const SpectralDistribution& spd, const SensorSet& sensors) {
    if (!(spd.grid() == sensors.grid()))
        throw std::invalid_argument("spectrum_to_tristimulus: grid mismatch (resample first)");
    Tristimulus t;
    const double dl = spd.step_nm();
    for (int k = 0; k < 3; ++k) {
        const auto& s = sensors.sensor(k).values();
        const auto& v = spd.values();
        double acc = 0.0;
        for (size_t i = 0; i < v.size(); ++i) acc += v[i] * s[i];
        t[k] = acc * dl;
    }
    return t;
}

namespace {
// CIE 1976 companding: cube root above (6/29)^3, linear segment below.
double lab_f(double t) {
    constexpr double delta = 6.0 / 29.0;
    constexpr double delta3 = delta * delta * delta;
    if (t > delta3) return std::cbrt(t);
    return t / (3.0 * delta * delta) + 4.0 / 29.0;
}
}  // namespace

LabColor xyz_to_lab(const Tristimulus& xyz, const WhitePoint& white) {
    for (int k = 0; k < 3; ++k)
        if (white.xyz[k] <= 0.0) throw std::invalid_argument("xyz_to_lab: nonpositive white point");
    const double fx = lab_f(xyz[0] / white.xyz[0]);
    const double fy = lab_f(xyz[1] / white.xyz[1]);
    const double fz = lab_f(xyz[2] / white.xyz[2]);
    LabColor lab;
    lab.L = 116.0 * fy - 16.0;
    lab.a = 500.0 * (fx - fy);
    lab.b = 200.0 * (fy - fz);
    return lab;
}

double delta_e76(const LabColor& c1, const LabColor& c2) {
    const double dL = c1.L - c2.L, da = c1.a - c2.a, db = c1.b - c2.b;
    return std::sqrt(dL * dL + da * da + db * db);
}

double delta_e76_ab(const LabColor& c1, const LabColor& c2) {
    const double da = c1.a - c2.a, db = c1.b - c2.b;
    return std::sqrt(da * da + db * db);
}

SpectralDistribution operator*(const SpectralDistribution& a, const SpectralDistribution& b) {
    if (!(a.grid() == b.grid()))
        throw std::invalid_argument("SpectralDistribution product: grid mismatch");
    std::vector<double> out(a.values());
    for (size_t i = 0; i < out.size(); ++i) out[i] *= b.values()[i];
    return SpectralDistribution(a.grid(), std::move(out));
}

SpectralDistribution operator*(const SpectralDistribution& a, double s) {
    std::vector<double> out(a.values());
    for (double& v : out) v *= s;
    return SpectralDistribution(a.grid(), std::move(out));
}

SpectralDistribution operator+(const SpectralDistribution& a, const SpectralDistribution& b) {
    if (!(a.grid() == b.grid()))
        throw std::invalid_argument("SpectralDistribution sum: grid mismatch");
    std::vector<double> out(a.values());
    for (size_t i = 0; i < out.size(); ++i) out[i] += b.values()[i];
    return SpectralDistribution(a.grid(), std::move(out));
}

// ---- Standard data -------------------------------------------------------

namespace {

// Hunt-Pointer-Estevez, equal-energy normalized.
constexpr std::array<double, 9> kXyzToLms = {
    0.38971, 0.68898, -0.07868,  //
    -0.22981, 1.18340, 0.04641,  //
    0.0, 0.0, 1.0,
};

std::array<double, 9> invert3(const std::array<double, 9>& m) {
    const double a = m[0], b = m[1], c = m[2];
    const double d = m[3], e = m[4], f = m[5];
    const double g = m[6], h = m[7], i = m[8];
    const double det = a * (e * i - f * h) - b * (d * i - f * g) + c * (d * h - e * g);
    if (std::abs(det) < 1e-30) throw std::runtime_error("invert3: singular matrix");
    const double id = 1.0 / det;
    return {(e * i - f * h) * id, (c * h - b * i) * id, (b * f - c * e) * id,
            (f * g - d * i) * id, (a * i - c * g) * id, (c * d - a * f) * id,
            (d * h - e * g) * id, (b * g - a * h) * id, (a * e - b * d) * id};
}

Tristimulus apply3(const std::array<double, 9>& m, const Tristimulus& v) {
    Tristimulus r;
    for (int k = 0; k < 3; ++k) r[k] = m[3 * k] * v[0] + m[3 * k + 1] * v[1] + m[3 * k + 2] * v[2];
    return r;
}

SensorSet build_cmfs() {
    const size_t n = tables::kCie1931Cmf2degCount;
    std::vector<double> xs(n), x(n), y(n), z(n);
    for (size_t i = 0; i < n; ++i) {
        xs[i] = tables::kCie1931Cmf2deg[i].nm;
        x[i] = tables::kCie1931Cmf2deg[i].x;
        y[i] = tables::kCie1931Cmf2deg[i].y;
        z[i] = tables::kCie1931Cmf2deg[i].z;
    }
    SensorSet s;
    s.tag = SensorTag::cmf;
    s.s0 = SpectralDistribution(kCanonicalGrid, interp_to_grid(xs, x, kCanonicalGrid, {}));
    s.s1 = SpectralDistribution(kCanonicalGrid, interp_to_grid(xs, y, kCanonicalGrid, {}));
    s.s2 = SpectralDistribution(kCanonicalGrid, interp_to_grid(xs, z, kCanonicalGrid, {}));
    return s;
}

SensorSet build_cones() {
    const SensorSet& cmf = cie1931_cmfs();
    SensorSet s;
    s.tag = SensorTag::cone;
    std::array<std::vector<double>, 3> out;
    for (auto& o : out) o.resize(static_cast<size_t>(kCanonicalGrid.n));
    for (int i = 0; i < kCanonicalGrid.n; ++i) {
        Tristimulus xyz;
        for (int k = 0; k < 3; ++k) xyz[k] = cmf.sensor(k).value(i);
        const Tristimulus lms = apply3(kXyzToLms, xyz);
        for (int k = 0; k < 3; ++k)
            out[static_cast<size_t>(k)][static_cast<size_t>(i)] = std::max(0.0, lms[k]);
    }
    s.s0 = SpectralDistribution(kCanonicalGrid, std::move(out[0]));
    s.s1 = SpectralDistribution(kCanonicalGrid, std::move(out[1]));
    s.s2 = SpectralDistribution(kCanonicalGrid, std::move(out[2]));
    return s;
}

SensorSet build_narrowband() {
    auto indicator = [](double nm) {
        std::vector<double> v(static_cast<size_t>(kCanonicalGrid.n), 0.0);
        const int i = static_cast<int>(std::lround((nm - kCanonicalGrid.start_nm) / kCanonicalGrid.step_nm));
        v[static_cast<size_t>(i)] = 1.0;
        return SpectralDistribution(kCanonicalGrid, std::move(v));
    };
    SensorSet s;
    s.tag = SensorTag::cone;
    s.s0 = indicator(600.0);  // "L"
    s.s1 = indicator(550.0);  // "M"
    s.s2 = indicator(450.0);  // "S"
    return s;
}

}  // namespace

const SensorSet& cie1931_cmfs() {
    static const SensorSet s = build_cmfs();
    return s;
}

const SensorSet& cone_fundamentals() {
    static const SensorSet s = build_cones();
    return s;
}

const SensorSet& narrowband_sensors() {
    static const SensorSet s = build_narrowband();
    return s;
}

const SpectralDistribution& d65_spd() {
    static const SpectralDistribution s =
        from_table(tables::kD65, tables::kD65Count, kCanonicalGrid);
    return s;
}

const std::array<double, 9>& xyz_to_lms_matrix() {
    static const std::array<double, 9> m = kXyzToLms;
    return m;
}

const std::array<double, 9>& lms_to_xyz_matrix() {
    static const std::array<double, 9> m = invert3(kXyzToLms);
    return m;
}

Tristimulus lms_to_xyz(const Tristimulus& lms) { return apply3(lms_to_xyz_matrix(), lms); }
Tristimulus xyz_to_lms(const Tristimulus& xyz) { return apply3(xyz_to_lms_matrix(), xyz); }

// ---- SPD text files ------------------------------------------------------

void read_spd_samples(const std::filesystem::path& path, std::vector<double>& wavelengths,
                      std::vector<double>& values) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open SPD file: " + path.string());
    wavelengths.clear();
    values.clear();
    std::string line;
    bool first = true;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (first) {  // header line, skipped
            first = false;
            continue;
        }
        if (line.empty()) continue;
        std::istringstream ss(line);
        double nm = 0.0, v = 0.0;
        char comma = 0;
        if (!(ss >> nm >> comma >> v) || comma != ',')
            throw std::runtime_error(path.string() + ":" + std::to_string(lineno) +
                                     ": expected 'wavelength_nm,value'");
        if (!wavelengths.empty() && nm <= wavelengths.back())
            throw std::runtime_error(path.string() + ":" + std::to_string(lineno) +
                                     ": wavelengths must be strictly ascending");
        wavelengths.push_back(nm);
        values.push_back(v);
    }
    if (wavelengths.empty()) throw std::runtime_error("SPD file has no data rows: " + path.string());
}

SpectralDistribution load_spd_file(const std::filesystem::path& path, const SpectralGrid& grid,
                                   const ResampleOptions& opts) {
    std::vector<double> xs, ys;
    read_spd_samples(path, xs, ys);
    return SpectralDistribution(grid, interp_to_grid(xs, ys, grid, opts));
}

void write_spd_file(const std::filesystem::path& path, const SpectralDistribution& spd,
                    const std::string& header) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write SPD file: " + path.string());
    out << header << "\n";
    out.precision(12);
    for (int i = 0; i < spd.bands(); ++i) out << spd.wavelength(i) << "," << spd.value(i) << "\n";
}

}  // namespace cclab
