#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

namespace cclab {

/// Uniform wavelength grid: samples at start_nm + i*step_nm for i in [0, n).
struct SpectralGrid {
    double start_nm = 380.0;
    double step_nm = 5.0;
    int n = 91;

    double wavelength(int i) const { return start_nm + step_nm * i; }
    double end_nm() const { return wavelength(n - 1); }
    bool operator==(const SpectralGrid&) const = default;
};

/// The grid every bundled table is resampled onto: 380-830 nm at 5 nm.
inline constexpr SpectralGrid kCanonicalGrid{380.0, 5.0, 91};

/// 20 equally spaced bands over 380-830 nm (the coarse rendering grid).
inline constexpr SpectralGrid kRenderGrid20{380.0, (830.0 - 380.0) / 19.0, 20};

/// Sampled function of wavelength on a uniform grid. Carries illuminant
/// power, surface reflectance, or sensor sensitivity depending on context.
class SpectralDistribution {
public:
    SpectralDistribution() = default;
    SpectralDistribution(double start_nm, double step_nm, std::vector<double> values);
    SpectralDistribution(const SpectralGrid& grid, std::vector<double> values);

    const SpectralGrid& grid() const { return grid_; }
    double start_nm() const { return grid_.start_nm; }
    double step_nm() const { return grid_.step_nm; }
    int bands() const { return grid_.n; }
    double wavelength(int i) const { return grid_.wavelength(i); }

    const std::vector<double>& values() const { return values_; }
    std::vector<double>& values() { return values_; }
    double value(int i) const { return values_[static_cast<size_t>(i)]; }

    /// Linear interpolation at an arbitrary wavelength, clamped to the edges.
    double sample(double nm) const;

    double max_value() const;
    /// Rectangle-rule integral: sum(values) * step_nm.
    double area() const;
    bool covers(const SpectralGrid& target) const;

private:
    SpectralGrid grid_;
    std::vector<double> values_;
};

enum class Extrapolation {
    forbid,  // source must cover the target range
    clamp,   // hold edge values outside the source range
};

struct ResampleOptions {
    Extrapolation extrapolation = Extrapolation::forbid;
    bool clip_to_unit = false;  // reflectances: clip output to [0, 1]
};

SpectralDistribution resample(const SpectralDistribution& spd, const SpectralGrid& target,
                              const ResampleOptions& opts = {});

/// Sensor response triple; XYZ or LMS depending on the SensorSet that made it.
struct Tristimulus {
    std::array<double, 3> v{0.0, 0.0, 0.0};

    double& operator[](int i) { return v[static_cast<size_t>(i)]; }
    double operator[](int i) const { return v[static_cast<size_t>(i)]; }
};

enum class SensorTag { cone, cmf };

/// Three sensitivity curves on a shared grid.
struct SensorSet {
    SpectralDistribution s0, s1, s2;  // L,M,S or x̄,ȳ,z̄
    SensorTag tag = SensorTag::cmf;

    const SpectralDistribution& sensor(int k) const { return k == 0 ? s0 : (k == 1 ? s1 : s2); }
    const SpectralGrid& grid() const { return s0.grid(); }
};

struct LabColor {
    double L = 0.0;
    double a = 0.0;
    double b = 0.0;
};

struct WhitePoint {
    Tristimulus xyz;
};

/// Rectangle-rule integration of spd against each sensor. Grids must match.
Tristimulus spectrum_to_tristimulus(const SpectralDistribution& spd, const SensorSet& sensors);

/// CIE 1976 forward transform with the standard two-branch companding.
LabColor xyz_to_lab(const Tristimulus& xyz, const WhitePoint& white);

/// Euclidean distance in (L*, a*, b*).
double delta_e76(const LabColor& c1, const LabColor& c2);
/// Distance restricted to the (a*, b*) chromatic plane.
double delta_e76_ab(const LabColor& c1, const LabColor& c2);

/// Elementwise product of two distributions on the same grid.
SpectralDistribution operator*(const SpectralDistribution& a, const SpectralDistribution& b);
SpectralDistribution operator*(const SpectralDistribution& a, double s);
SpectralDistribution operator+(const SpectralDistribution& a, const SpectralDistribution& b);

// ---- Standard data -------------------------------------------------------

/// CIE 1931 2° standard observer on the canonical grid.
const SensorSet& cie1931_cmfs();

/// Cone fundamentals (2° observer) on the canonical grid, obtained from the
/// CIE 1931 CMFs through the Hunt-Pointer-Estevez transform so that LMS and
/// XYZ responses stay exactly consistent.
const SensorSet& cone_fundamentals();

/// Disjoint single-band test sensors (S@450, M@550, L@600). Von Kries
/// correction is exact for these; several physics tests depend on that.
const SensorSet& narrowband_sensors();

/// Tabulated CIE D65 on the canonical grid.
const SpectralDistribution& d65_spd();

/// Row-major 3x3 matrices between HPE cone space and XYZ.
const std::array<double, 9>& xyz_to_lms_matrix();
const std::array<double, 9>& lms_to_xyz_matrix();

Tristimulus lms_to_xyz(const Tristimulus& lms);
Tristimulus xyz_to_lms(const Tristimulus& xyz);

// ---- SPD text files ------------------------------------------------------
// One header line, then "wavelength_nm,value" rows with ascending wavelengths.

/// Parse a file into (wavelengths, values); wavelengths need not be uniform.
void read_spd_samples(const std::filesystem::path& path, std::vector<double>& wavelengths,
                      std::vector<double>& values);

/// Load and linearly interpolate onto `grid`.
SpectralDistribution load_spd_file(const std::filesystem::path& path,
                                   const SpectralGrid& grid = kCanonicalGrid,
                                   const ResampleOptions& opts = {});

void write_spd_file(const std::filesystem::path& path, const SpectralDistribution& spd,
                    const std::string& header = "wavelength_nm,value");

}  // namespace cclab
