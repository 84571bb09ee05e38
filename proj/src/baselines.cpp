#include "cclab/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

namespace cclab {

namespace {

double luminance(const Image3& img, size_t pixel) {
    // L+M channel sum; a cone-space analogue of luminosity
    return img.data[pixel] + img.data[img.pixels() + pixel];
}

Tristimulus floored(Tristimulus t) {
    for (int k = 0; k < 3; ++k) t[k] = std::max(t[k], kEstimateFloor);
    return t;
}

}  // namespace

IlluminantEstimate grey_world(const Image3& img) {
    if (img.pixels() == 0) throw std::invalid_argument("grey_world: empty image");
    Tristimulus t;
    const size_t n = img.pixels();
    for (int c = 0; c < 3; ++c) {
        double acc = 0.0;
        const double* ch = img.data.data() + static_cast<size_t>(c) * n;
        for (size_t i = 0; i < n; ++i) acc += ch[i];
        t[c] = acc / static_cast<double>(n);
    }
    return {floored(t), "grey_world"};
}

IlluminantEstimate white_patch(const Image3& img, WhitePatchMode mode) {
    if (img.pixels() == 0) throw std::invalid_argument("white_patch: empty image");
    const size_t n = img.pixels();
    Tristimulus t;
    if (mode == WhitePatchMode::channel_max) {
        for (int c = 0; c < 3; ++c) {
            const double* ch = img.data.data() + static_cast<size_t>(c) * n;
            t[c] = *std::max_element(ch, ch + n);
        }
    } else {
        size_t best = 0;
        double best_l = -1.0;
        for (size_t i = 0; i < n; ++i) {
            const double l = luminance(img, i);
            if (l > best_l) {
                best_l = l;
                best = i;
            }
        }
        for (int c = 0; c < 3; ++c) t[c] = img.data[static_cast<size_t>(c) * n + best];
    }
    return {floored(t), "white_patch"};
}

IlluminantEstimate top_fraction_mean(const Image3& img, double p) {
    const size_t n = img.pixels();
    if (n == 0) throw std::invalid_argument("top_fraction_mean: empty image");
    p = std::clamp(p, 0.0, 1.0);

    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), size_t{0});
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        const double la = luminance(img, a), lb = luminance(img, b);
        return la != lb ? la > lb : a < b;
    });

    // Fractional rank: p*n pixels, the last one weighted by the remainder,
    // which makes the estimate continuous in p across sample boundaries.
    const double count = std::max(1.0, p * static_cast<double>(n));
    const size_t full = static_cast<size_t>(count);
    const double frac = count - static_cast<double>(full);

    Tristimulus acc;
    for (size_t r = 0; r < full; ++r)
        for (int c = 0; c < 3; ++c) acc[c] += img.data[static_cast<size_t>(c) * n + order[r]];
    if (frac > 0.0 && full < n)
        for (int c = 0; c < 3; ++c)
            acc[c] += frac * img.data[static_cast<size_t>(c) * n + order[full]];
    for (int c = 0; c < 3; ++c) acc[c] /= count;
    return {floored(acc), "top_fraction"};
}

IlluminantEstimate asm_estimate(const Image3& img, const AsmOptions& opts) {
    if (!(opts.p_min > 0.0) || opts.p_min > opts.p_max || opts.p_max > 1.0)
        throw std::invalid_argument("asm_estimate: need 0 < p_min <= p_max <= 1");
    const size_t n = img.pixels();
    double mean = 0.0;
    for (size_t i = 0; i < n; ++i) mean += luminance(img, i);
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (size_t i = 0; i < n; ++i) {
        const double d = luminance(img, i) - mean;
        var += d * d;
    }
    const double stddev = std::sqrt(var / static_cast<double>(n));
    const double contrast = mean > 0.0 ? stddev / mean : 0.0;
    const double p =
        opts.p_min + (opts.p_max - opts.p_min) * std::clamp(contrast / opts.c_ref, 0.0, 1.0);
    IlluminantEstimate est = top_fraction_mean(img, p);
    est.method = "asm";
    return est;
}

Image3 von_kries_correct(const Image3& img, const IlluminantEstimate& estimate,
                         const Tristimulus& d65_response) {
    for (int c = 0; c < 3; ++c)
        if (estimate.lms[c] <= 0.0) throw std::invalid_argument("von_kries: nonpositive estimate");
    Image3 out = img;
    const size_t n = img.pixels();
    for (int c = 0; c < 3; ++c) {
        const double gain = d65_response[c] / estimate.lms[c];
        double* ch = out.data.data() + static_cast<size_t>(c) * n;
        for (size_t i = 0; i < n; ++i) ch[i] *= gain;
    }
    return out;
}

Tristimulus illuminant_response(const Illuminant& ill, const SensorSet& sensors) {
    return spectrum_to_tristimulus(
        resample(ill.spd, sensors.grid(), {Extrapolation::clamp, false}), sensors);
}

Tristimulus mean_over_mask(const Image3& img, const std::vector<uint8_t>& mask) {
    const size_t n = img.pixels();
    Tristimulus acc;
    size_t count = 0;
    for (size_t i = 0; i < n; ++i) {
        if (!mask[i]) continue;
        ++count;
        for (int c = 0; c < 3; ++c) acc[c] += img.data[static_cast<size_t>(c) * n + i];
    }
    if (count == 0) throw std::invalid_argument("mean_over_mask: empty mask");
    for (int c = 0; c < 3; ++c) acc[c] /= static_cast<double>(count);
    return acc;
}

LabColor object_chromaticity(const Image3& img, const std::vector<uint8_t>& mask,
                             const WhitePoint& white) {
    return xyz_to_lab(lms_to_xyz(mean_over_mask(img, mask)), white);
}

BaselineScene make_baseline_scene(const SceneSpec& spec, const Atlas& atlas,
                                  const IlluminantMap& illuminants, const SensorSet& sensors,
                                  const std::string& d65_id) {
    SceneSpec ref_spec = spec;
    ref_spec.illuminant_id = d65_id;
    if (ref_spec.condition == Condition::wrong_back) {
        ref_spec.condition = Condition::normal;
        ref_spec.bg_illuminant_id.clear();
    }
    return {render(spec, atlas, illuminants, sensors), render(ref_spec, atlas, illuminants, sensors)};
}

std::vector<BaselineResult> run_baselines(const std::vector<BaselineScene>& scenes,
                                          const std::vector<std::string>& methods,
                                          const Atlas& atlas, const IlluminantMap& illuminants,
                                          const SensorSet& sensors, const AsmOptions& asm_opts) {
    const auto d65_it = illuminants.find("D65");
    if (d65_it == illuminants.end())
        throw std::runtime_error("run_baselines: illuminant map must contain D65");
    const Tristimulus d65_resp = illuminant_response(d65_it->second, sensors);
    const WhitePoint& white = atlas.white_point();

    std::vector<BaselineResult> results;
    for (const auto& bs : scenes) {
        const auto& spec = bs.scene.spec;
        const auto ill_it = illuminants.find(spec.illuminant_id);
        if (ill_it == illuminants.end())
            throw std::runtime_error("run_baselines: unknown illuminant " + spec.illuminant_id);

        const LabColor reference =
            object_chromaticity(bs.reference.lms, bs.reference.object_mask, white);
        // denominator of the constancy index: uncorrected shift of the object
        const LabColor uncorrected =
            object_chromaticity(bs.scene.lms, bs.scene.object_mask, white);
        const double shift = delta_e76(uncorrected, reference);

        for (const auto& method : methods) {
            IlluminantEstimate est;
            if (method == "grey_world") est = grey_world(bs.scene.lms);
            else if (method == "white_patch") est = white_patch(bs.scene.lms);
            else if (method == "asm") est = asm_estimate(bs.scene.lms, asm_opts);
            else if (method == "oracle")
                est = {illuminant_response(ill_it->second, sensors), "oracle"};
            else if (method == "none") est = {d65_resp, "none"};  // gain 1: no correction
            else throw std::invalid_argument("unknown baseline method: " + method);

            const Image3 corrected_img = von_kries_correct(bs.scene.lms, est, d65_resp);
            const LabColor corrected =
                object_chromaticity(corrected_img, bs.scene.object_mask, white);

            BaselineResult r;
            r.chip = spec.object_chip;
            r.illuminant_id = spec.illuminant_id;
            r.condition = condition_name(spec.condition);
            r.method = method;
            r.estimate = est;
            r.corrected = corrected;
            r.reference = reference;
            r.de = delta_e76(corrected, reference);
            r.cci_defined = shift > kCciDenominatorFloor;
            r.cci = r.cci_defined ? 1.0 - r.de / shift : 0.0;
            results.push_back(std::move(r));
        }
    }
    return results;
}

void write_baselines_csv(const std::filesystem::path& path,
                         const std::vector<BaselineResult>& results) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write baselines csv: " + path.string());
    out << "image,method,dE,cci,est_L,est_M,est_S\n";
    out.precision(10);
    for (size_t i = 0; i < results.size(); ++i) {
        const auto& r = results[i];
        out << "chip" << r.chip << "_" << r.illuminant_id << "_" << r.condition << "," << r.method
            << "," << r.de << "," << r.cci << "," << r.estimate.lms[0] << "," << r.estimate.lms[1]
            << "," << r.estimate.lms[2] << "\n";
    }
}

}  // namespace cclab
