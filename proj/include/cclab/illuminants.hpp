#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "cclab/atlas.hpp"
#include "cclab/colorimetry.hpp"

namespace cclab {

enum class NormMode { none, peak100, equal_area };

struct Illuminant {
    std::string id;
    SpectralDistribution spd;
    NormMode norm = NormMode::none;
    std::optional<double> cct;                        // K, when built from a CCT
    std::optional<std::pair<double, double>> judd_m;  // (m1, m2) when built from the basis
    double norm_scale = 1.0;                          // factor applied by normalize()
};

struct JuddBasis {
    SpectralDistribution s0, s1, s2;
};

/// Bundled daylight components on the canonical grid.
const JuddBasis& standard_judd_basis();

/// CIE daylight-series spectrum for a correlated color temperature in
/// [4000, 25000] K: chromaticity from the published cubic (two branches at
/// 7000 K), then SPD = S0 + M1*S1 + M2*S2, clamped to be non-negative.
Illuminant d_series_spd(double cct, const JuddBasis& basis);

/// Daylight chromaticity (x_D, y_D) for a CCT; exposed for tests.
std::pair<double, double> daylight_chromaticity(double cct);

/// S0 + m1*S1 + m2*S2 with negative bands clamped to zero.
SpectralDistribution compose_daylight(const JuddBasis& basis, double m1, double m2);

/// Scaled copy per mode. equal_area scales to `reference_area` (required for
/// that mode); peak100 scales the maximum band to 100.
Illuminant normalize(const Illuminant& ill, NormMode mode, double reference_area = 0.0);

struct IlluminantQuad {
    Illuminant y, b, g, r;
    LabColor grey_point;      // grey chip under D65
    double radius_de = 10.0;  // target distance in the (a*, b*) plane
    int grey_chip_id = -1;

    const Illuminant& by_tag(const std::string& tag) const;
    std::vector<const Illuminant*> all() const { return {&y, &b, &g, &r}; }
};

struct QuadOptions {
    double radius_de = 10.0;
    double tolerance_de = 0.05;
    int max_iterations = 200;
    int grey_target_value = 5;
    /// D65 spectrum used for the grey point; defaults to the bundled table.
    std::optional<SpectralDistribution> d65;
};

/// Build the four test illuminants: Y and B on the daylight locus (bisection
/// over CCT), G and R on the orthogonal direction through the grey point
/// (Newton search over Judd coefficients). All equal-area normalized.
IlluminantQuad build_test_quad(const JuddBasis& basis, const Atlas& atlas,
                               const QuadOptions& opts = {});

/// n daylight illuminants at CCTs sampled log-uniformly in [cct_lo, cct_hi],
/// peak100-normalized, deterministic under seed. Spectra found in
/// `measured_dir` (SPD files) are appended to the pool.
std::vector<Illuminant> training_pool(const JuddBasis& basis, int n, double cct_lo, double cct_hi,
                                      uint64_t seed,
                                      const std::optional<std::filesystem::path>& measured_dir = {});

/// Lab coordinate of `chip` under `ill` using the atlas white point.
LabColor chip_under(const Atlas& atlas, int chip_id, const Illuminant& ill, const SensorSet& cmf);

}  // namespace cclab
