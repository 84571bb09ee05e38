#pragma once

#include <string>
#include <vector>

#include "cclab/metrics.hpp"
#include "cclab/scenegen.hpp"

namespace cclab {

/// Per-channel sensor-space estimate of the scene illumination.
struct IlluminantEstimate {
    Tristimulus lms;
    std::string method;
};

/// Estimates are floored here so von Kries division stays finite.
inline constexpr double kEstimateFloor = 1e-9;

/// Mean pixel value per channel.
IlluminantEstimate grey_world(const Image3& img);

enum class WhitePatchMode { channel_max, brightest_pixel };

/// Channelwise maximum (default), or the single pixel with the highest
/// luminance when mode = brightest_pixel.
IlluminantEstimate white_patch(const Image3& img, WhitePatchMode mode = WhitePatchMode::channel_max);

struct AsmOptions {
    double p_min = 0.01;
    double p_max = 0.60;
    double c_ref = 0.3;  // contrast that saturates the pooled fraction
};

/// Contrast-adaptive bright-pixel pooling: the pooled fraction grows with the
/// luminance contrast (std/mean); the estimate is the mean of the top
/// fraction ranked by luminance, with fractional-rank interpolation at the
/// cut so the estimate is continuous in p.
IlluminantEstimate asm_estimate(const Image3& img, const AsmOptions& opts = {});

/// Mean of the top-p fraction by luminance; exposed for the ASM oracle tests.
IlluminantEstimate top_fraction_mean(const Image3& img, double p);

/// Diagonal map to the D65-referenced frame: pixel * (d65_response / estimate).
Image3 von_kries_correct(const Image3& img, const IlluminantEstimate& estimate,
                         const Tristimulus& d65_response);

/// Sensor response to the illuminant spectrum itself (the oracle estimate).
Tristimulus illuminant_response(const Illuminant& ill, const SensorSet& sensors);

/// Mean LMS over the mask, converted to Lab through the fixed LMS->XYZ matrix.
LabColor object_chromaticity(const Image3& img, const std::vector<uint8_t>& mask,
                             const WhitePoint& white);

Tristimulus mean_over_mask(const Image3& img, const std::vector<uint8_t>& mask);

struct BaselineResult {
    int chip = -1;
    std::string illuminant_id;
    std::string condition;
    std::string method;
    IlluminantEstimate estimate;
    LabColor corrected;   // object chromaticity after correction
    LabColor reference;   // same object rendered under D65
    double de = 0.0;
    double cci = 0.0;
    bool cci_defined = true;
};

struct BaselineScene {
    RenderedScene scene;      // rendered under its own illuminant
    RenderedScene reference;  // identical spec rendered under D65
};

/// Render the D65 reference pair for a spec (same geometry and shading).
BaselineScene make_baseline_scene(const SceneSpec& spec, const Atlas& atlas,
                                  const IlluminantMap& illuminants, const SensorSet& sensors,
                                  const std::string& d65_id = "D65");

inline const std::vector<std::string> kBaselineMethods = {"grey_world", "white_patch", "asm",
                                                          "oracle", "none"};

/// Estimate + correct + compare against the D65 reference for each method.
/// "oracle" uses the true illuminant response, "none" skips correction.
std::vector<BaselineResult> run_baselines(const std::vector<BaselineScene>& scenes,
                                          const std::vector<std::string>& methods,
                                          const Atlas& atlas, const IlluminantMap& illuminants,
                                          const SensorSet& sensors,
                                          const AsmOptions& asm_opts = {});

void write_baselines_csv(const std::filesystem::path& path,
                         const std::vector<BaselineResult>& results);

}  // namespace cclab
