#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "cclab/atlas.hpp"
#include "cclab/baselines.hpp"
#include "cclab/illuminants.hpp"
#include "cclab/metrics.hpp"
#include "cclab/neuralnet.hpp"
#include "cclab/scenegen.hpp"

namespace cclab {

struct ModelSpec {
    std::string name;       // output prefix, e.g. "deepcc"
    std::string arch;       // "deepcc" | "rescc"
    std::string train_set;  // "cc" | "d65"
};

struct ExperimentConfig {
    int schema_version = 1;

    // atlas
    std::string atlas_source = "synthetic";  // "synthetic" | directory path
    int synthetic_hues = 40;
    std::optional<std::filesystem::path> atlas_index;

    // illuminants
    int pool_size = 20;
    double cct_min = 4000.0, cct_max = 12000.0;
    std::optional<std::filesystem::path> measured_illuminant_dir;
    int val_illuminants = 4;
    uint64_t split_seed = 42;
    double quad_radius_de = 10.0;
    int grey_value = 5;

    // scenes
    int image_size = 64;
    int train_reps = 2;
    int eval_reps = 5;

    // models / training
    std::vector<ModelSpec> models = {{"deepcc", "deepcc", "cc"},
                                     {"deep65", "deepcc", "d65"},
                                     {"rescc", "rescc", "cc"}};
    int epochs = 30;
    double base_lr = 1e-3;
    int decay_every = 10;
    double decay_factor = 0.1;
    int batch_size = 32;
    std::vector<uint64_t> seeds = {1, 2, 3};
    std::vector<std::string> conditions = {"normal", "no_patch", "wrong_back", "no_back"};

    // probes / rsa
    std::string probe_model = "deepcc";
    std::vector<std::string> probe_taps = {"C1", "C2", "C3", "F1", "F2"};
    int probe_epochs = 15;
    std::vector<std::string> rsa_models = {"deepcc", "rescc"};
    int rsa_permutations = 1000;

    // run
    std::filesystem::path out_dir = "out";
    bool deterministic = false;
    int threads = 0;

    std::string to_json() const;
    /// Parses and validates; unknown keys are an error.
    static ExperimentConfig from_json(const std::string& text);
    static ExperimentConfig load(const std::filesystem::path& path);
};

/// Everything deterministic that stages rebuild from the config: atlas with
/// chromaticity table, training pool, quad, illuminant map, holdout split.
struct ExperimentContext {
    ExperimentConfig cfg;
    Atlas atlas;
    std::vector<Illuminant> pool;
    IlluminantQuad quad;
    IlluminantMap illuminants;  // pool + quad + "D65"
    std::vector<std::string> train_illuminant_ids, val_illuminant_ids;
    ChromaRefs refs;            // all illuminants above
    /// Fixed network input normalization: the white chip under D65 maps to
    /// roughly unit activation. Applied when datasets are loaded as samples;
    /// the stored images stay physical.
    double input_scale = 1.0;
};

ExperimentContext build_context(const ExperimentConfig& cfg);

enum class Stage { gen, train, eval, baselines, probes, rsa, report };

std::string stage_name(Stage s);
Stage stage_from_name(const std::string& name);

struct StageRecord {
    std::string status;  // "ok" | "cached"
    uint64_t input_hash = 0;
    double wall_seconds = 0.0;
    std::vector<std::string> outputs;
};

struct RunLedger {
    std::map<std::string, StageRecord> stages;

    void save(const std::filesystem::path& path) const;
    static RunLedger load_or_empty(const std::filesystem::path& path);
};

/// Run the requested stages in dependency order. Stages whose input hash is
/// unchanged and whose outputs still exist are skipped.
RunLedger run_experiment(const ExperimentConfig& cfg, const std::set<Stage>& stages);

/// Samples (image, class label) from a dataset directory; pixel values are
/// multiplied by `input_scale`.
nn::SampleSet load_samples(const std::filesystem::path& dataset_dir, double input_scale = 1.0);

/// Records CSV reader (counterpart of write_records_csv).
std::vector<EvalRecord> read_records_csv(const std::filesystem::path& path);

/// Debug sRGB preview of a stored LMS image (binary PPM).
void write_srgb_preview(const std::filesystem::path& dataset_dir, size_t index,
                        const std::filesystem::path& out_ppm, double exposure = 1.0);

/// Minimal standalone line/scatter plot as SVG markup.
struct SvgSeries {
    std::string label;
    std::vector<double> x, y;
    std::string color = "#000000";
};
void write_svg_plot(const std::filesystem::path& path, const std::string& title,
                    const std::vector<SvgSeries>& series, const std::string& x_label,
                    const std::string& y_label);

}  // namespace cclab
