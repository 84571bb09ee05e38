#include "cclab/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "cclab/rng.hpp"
#include "cclab/rsa.hpp"

namespace cclab {

using nlohmann::json;
namespace fs = std::filesystem;

// ---- config ----------------------------------------------------------------

namespace {

void check_keys(const json& j, const std::string& where,
                std::initializer_list<const char*> allowed) {
    for (const auto& [key, _] : j.items()) {
        bool ok = false;
        for (const char* a : allowed)
            if (key == a) ok = true;
        if (!ok) throw std::invalid_argument("config: unknown key '" + key + "' in " + where);
    }
}

std::optional<fs::path> opt_path(const json& j, const char* key) {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    return fs::path(j.at(key).get<std::string>());
}

struct ConditionSpec {
    Condition condition;
    int mask_index = -1;
};

// "normal", "no_patch", "wrong_back", "no_back", or "mask_patch_<k>"
ConditionSpec parse_condition_spec(const std::string& name) {
    const std::string prefix = "mask_patch_";
    if (name.rfind(prefix, 0) == 0) {
        const int k = std::stoi(name.substr(prefix.size()));
        if (k < 0 || k >= 6)
            throw std::invalid_argument("mask_patch index out of range: " + name);
        return {Condition::mask_patch, k};
    }
    const Condition c = condition_from_name(name);
    if (c == Condition::mask_patch)
        throw std::invalid_argument("use mask_patch_<k> to select the masked patch");
    return {c, -1};
}

std::string condition_label(const SceneSpec& spec) {
    std::string label = condition_name(spec.condition);
    if (spec.condition == Condition::mask_patch)
        label += "_" + std::to_string(spec.mask_patch_index);
    return label;
}

}  // namespace

std::string ExperimentConfig::to_json() const {
    json j;
    j["schema_version"] = schema_version;
    j["atlas"] = {{"source", atlas_source},
                  {"synthetic_hues", synthetic_hues},
                  {"index_file", atlas_index ? json(atlas_index->string()) : json(nullptr)}};
    j["illuminants"] = {
        {"pool_size", pool_size},
        {"cct_min", cct_min},
        {"cct_max", cct_max},
        {"measured_dir", measured_illuminant_dir ? json(measured_illuminant_dir->string()) : json(nullptr)},
        {"val_holdout", val_illuminants},
        {"split_seed", split_seed}};
    j["quad"] = {{"radius_de", quad_radius_de}, {"grey_value", grey_value}};
    j["scene"] = {{"image_size", image_size}, {"train_reps", train_reps}, {"eval_reps", eval_reps}};
    json ms = json::array();
    for (const auto& m : models)
        ms.push_back({{"name", m.name}, {"arch", m.arch}, {"train_set", m.train_set}});
    j["models"] = std::move(ms);
    j["train"] = {{"epochs", epochs},
                  {"base_lr", base_lr},
                  {"decay_every", decay_every},
                  {"decay_factor", decay_factor},
                  {"batch_size", batch_size}};
    j["seeds"] = seeds;
    j["conditions"] = conditions;
    j["probes"] = {{"model", probe_model}, {"taps", probe_taps}, {"epochs", probe_epochs}};
    j["rsa"] = {{"models", rsa_models}, {"permutations", rsa_permutations}};
    j["run"] = {{"out_dir", out_dir.string()},
                {"deterministic", deterministic},
                {"threads", threads}};
    return j.dump(1);
}

ExperimentConfig ExperimentConfig::from_json(const std::string& text) {
    const json j = json::parse(text);
    check_keys(j, "root",
               {"schema_version", "atlas", "illuminants", "quad", "scene", "models", "train",
                "seeds", "conditions", "probes", "rsa", "run"});
    ExperimentConfig c;
    c.schema_version = j.at("schema_version").get<int>();
    if (c.schema_version != 1)
        throw std::invalid_argument("config: unsupported schema_version " +
                                    std::to_string(c.schema_version));
    if (j.contains("atlas")) {
        const auto& a = j.at("atlas");
        check_keys(a, "atlas", {"source", "synthetic_hues", "index_file"});
        c.atlas_source = a.value("source", c.atlas_source);
        c.synthetic_hues = a.value("synthetic_hues", c.synthetic_hues);
        c.atlas_index = opt_path(a, "index_file");
    }
    if (j.contains("illuminants")) {
        const auto& a = j.at("illuminants");
        check_keys(a, "illuminants",
                   {"pool_size", "cct_min", "cct_max", "measured_dir", "val_holdout", "split_seed"});
        c.pool_size = a.value("pool_size", c.pool_size);
        c.cct_min = a.value("cct_min", c.cct_min);
        c.cct_max = a.value("cct_max", c.cct_max);
        c.measured_illuminant_dir = opt_path(a, "measured_dir");
        c.val_illuminants = a.value("val_holdout", c.val_illuminants);
        c.split_seed = a.value("split_seed", c.split_seed);
    }
    if (j.contains("quad")) {
        const auto& a = j.at("quad");
        check_keys(a, "quad", {"radius_de", "grey_value"});
        c.quad_radius_de = a.value("radius_de", c.quad_radius_de);
        c.grey_value = a.value("grey_value", c.grey_value);
    }
    if (j.contains("scene")) {
        const auto& a = j.at("scene");
        check_keys(a, "scene", {"image_size", "train_reps", "eval_reps"});
        c.image_size = a.value("image_size", c.image_size);
        c.train_reps = a.value("train_reps", c.train_reps);
        c.eval_reps = a.value("eval_reps", c.eval_reps);
    }
    if (j.contains("models")) {
        c.models.clear();
        for (const auto& jm : j.at("models")) {
            check_keys(jm, "models[]", {"name", "arch", "train_set"});
            c.models.push_back({jm.at("name").get<std::string>(), jm.at("arch").get<std::string>(),
                                jm.at("train_set").get<std::string>()});
        }
    }
    if (j.contains("train")) {
        const auto& a = j.at("train");
        check_keys(a, "train", {"epochs", "base_lr", "decay_every", "decay_factor", "batch_size"});
        c.epochs = a.value("epochs", c.epochs);
        c.base_lr = a.value("base_lr", c.base_lr);
        c.decay_every = a.value("decay_every", c.decay_every);
        c.decay_factor = a.value("decay_factor", c.decay_factor);
        c.batch_size = a.value("batch_size", c.batch_size);
    }
    if (j.contains("seeds")) c.seeds = j.at("seeds").get<std::vector<uint64_t>>();
    if (j.contains("conditions")) c.conditions = j.at("conditions").get<std::vector<std::string>>();
    if (j.contains("probes")) {
        const auto& a = j.at("probes");
        check_keys(a, "probes", {"model", "taps", "epochs"});
        c.probe_model = a.value("model", c.probe_model);
        if (a.contains("taps")) c.probe_taps = a.at("taps").get<std::vector<std::string>>();
        c.probe_epochs = a.value("epochs", c.probe_epochs);
    }
    if (j.contains("rsa")) {
        const auto& a = j.at("rsa");
        check_keys(a, "rsa", {"models", "permutations"});
        if (a.contains("models")) c.rsa_models = a.at("models").get<std::vector<std::string>>();
        c.rsa_permutations = a.value("permutations", c.rsa_permutations);
    }
    if (j.contains("run")) {
        const auto& a = j.at("run");
        check_keys(a, "run", {"out_dir", "deterministic", "threads"});
        c.out_dir = a.value("out_dir", c.out_dir.string());
        c.deterministic = a.value("deterministic", c.deterministic);
        c.threads = a.value("threads", c.threads);
    }
    if (c.seeds.empty()) throw std::invalid_argument("config: seeds must not be empty");
    for (const auto& cond : c.conditions) parse_condition_spec(cond);  // validates
    return c;
}

ExperimentConfig ExperimentConfig::load(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config: " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return from_json(ss.str());
}

// ---- context -----------------------------------------------------------------

ExperimentContext build_context(const ExperimentConfig& cfg) {
    ExperimentContext ctx;
    ctx.cfg = cfg;

    if (cfg.atlas_source == "synthetic") {
        ctx.atlas = synthetic_atlas(cfg.synthetic_hues);
    } else {
        AtlasLoadOptions opts;
        opts.index_file = cfg.atlas_index;
        ctx.atlas = load_atlas(cfg.atlas_source, opts);
    }
    build_chromaticity_table(ctx.atlas, d65_spd(), cie1931_cmfs());

    const JuddBasis& basis = standard_judd_basis();
    ctx.pool = training_pool(basis, cfg.pool_size, cfg.cct_min, cfg.cct_max, cfg.split_seed,
                             cfg.measured_illuminant_dir);

    QuadOptions qopts;
    qopts.radius_de = cfg.quad_radius_de;
    qopts.grey_target_value = cfg.grey_value;
    ctx.quad = build_test_quad(basis, ctx.atlas, qopts);

    std::vector<Illuminant> all = ctx.pool;
    all.push_back(ctx.quad.y);
    all.push_back(ctx.quad.b);
    all.push_back(ctx.quad.g);
    all.push_back(ctx.quad.r);
    Illuminant d65;
    d65.id = "D65";
    d65.spd = d65_spd();
    all.push_back(normalize(d65, NormMode::peak100));
    ctx.illuminants = make_illuminant_map(all);

    // Whole-illuminant holdout: no pool id appears in both splits.
    std::vector<std::string> ids;
    for (const auto& ill : ctx.pool) ids.push_back(ill.id);
    Rng rng = Rng::stream(cfg.split_seed, 0xc0ffee);
    rng.shuffle(ids);
    const int holdout = std::min<int>(cfg.val_illuminants, static_cast<int>(ids.size()) - 1);
    ctx.val_illuminant_ids.assign(ids.begin(), ids.begin() + holdout);
    ctx.train_illuminant_ids.assign(ids.begin() + holdout, ids.end());
    std::sort(ctx.val_illuminant_ids.begin(), ctx.val_illuminant_ids.end());
    std::sort(ctx.train_illuminant_ids.begin(), ctx.train_illuminant_ids.end());

    ctx.refs = ChromaRefs(ctx.atlas, all, cie1931_cmfs());

    const SensorSet& cones = cone_fundamentals();
    const Illuminant& d65_norm = ctx.illuminants.at("D65");
    const SpectralDistribution white_light =
        resample(d65_norm.spd, cones.grid(), {Extrapolation::clamp, false}) *
        ctx.atlas.chip(ctx.atlas.white_chip()).reflectance;
    const Tristimulus white_resp = spectrum_to_tristimulus(white_light, cones);
    ctx.input_scale = 1.0 / std::max({white_resp[0], white_resp[1], white_resp[2]});
    return ctx;
}

// ---- scene spec builders -------------------------------------------------------

namespace {

uint64_t derive_seed(uint64_t base, const char* tag, uint64_t index) {
    Fnv1a h;
    h.update(&base, sizeof base);
    h.update(tag, std::strlen(tag));
    h.update(&index, sizeof index);
    return h.digest();
}

SceneSpec base_spec(const ExperimentContext& ctx, int chip, const std::string& ill_id,
                    const char* tag, uint64_t index) {
    SceneSpec s;
    s.object_chip = chip;
    s.illuminant_id = ill_id;
    s.wall_chip = ctx.atlas.grey_chip(ctx.cfg.grey_value);
    s.patch_chips = default_patch_chips(ctx.atlas);
    s.width = s.height = ctx.cfg.image_size;
    s.patch_rects = default_patch_layout(s.width, s.height);
    s.shading_seed = derive_seed(ctx.cfg.split_seed, tag, index * 2 + 1);
    Rng rng(derive_seed(ctx.cfg.split_seed, tag, index * 2));
    s.geometry.seed = rng.next_u64();
    s.geometry.cx = rng.uniform(0.36, 0.64);
    s.geometry.cy = rng.uniform(0.40, 0.66);
    s.geometry.scale = rng.uniform(0.75, 1.25);
    return s;
}

std::vector<SceneSpec> training_specs(const ExperimentContext& ctx,
                                      const std::vector<std::string>& ills, const char* tag,
                                      int reps, bool force_d65) {
    std::vector<SceneSpec> specs;
    uint64_t idx = 0;
    for (const auto& chip : ctx.atlas.chips())
        for (const auto& ill : ills)
            for (int r = 0; r < reps; ++r) {
                SceneSpec s = base_spec(ctx, chip.id, force_d65 ? "D65" : ill, tag, idx++);
                specs.push_back(std::move(s));
            }
    return specs;
}

std::vector<SceneSpec> eval_specs(const ExperimentContext& ctx, const ConditionSpec& condition) {
    const std::vector<std::string> quad_ids = {"Y", "B", "G", "R"};
    std::vector<SceneSpec> specs;
    uint64_t idx = 0;
    for (const auto& chip : ctx.atlas.chips())
        for (const auto& ill : quad_ids)
            for (int r = 0; r < ctx.cfg.eval_reps; ++r) {
                SceneSpec s = base_spec(ctx, chip.id, ill, "eval", idx);
                s.condition = condition.condition;
                s.mask_patch_index = condition.mask_index;
                if (condition.condition == Condition::wrong_back) {
                    Rng rng(derive_seed(ctx.cfg.split_seed, "wbg", idx));
                    s.bg_illuminant_id = ctx.train_illuminant_ids[static_cast<size_t>(
                        rng.uniform_index(ctx.train_illuminant_ids.size()))];
                }
                specs.push_back(std::move(s));
                ++idx;
            }
    return specs;
}

}  // namespace

// ---- stage plumbing -------------------------------------------------------------

std::string stage_name(Stage s) {
    switch (s) {
        case Stage::gen: return "gen";
        case Stage::train: return "train";
        case Stage::eval: return "eval";
        case Stage::baselines: return "baselines";
        case Stage::probes: return "probes";
        case Stage::rsa: return "rsa";
        case Stage::report: return "report";
    }
    throw std::logic_error("bad stage");
}

Stage stage_from_name(const std::string& name) {
    for (Stage s : {Stage::gen, Stage::train, Stage::eval, Stage::baselines, Stage::probes,
                    Stage::rsa, Stage::report})
        if (stage_name(s) == name) return s;
    throw std::invalid_argument("unknown stage: " + name);
}

void RunLedger::save(const fs::path& path) const {
    json j;
    for (const auto& [name, rec] : stages) {
        j[name] = {{"status", rec.status},
                   {"input_hash", rec.input_hash},
                   {"wall_seconds", rec.wall_seconds},
                   {"outputs", rec.outputs}};
    }
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write ledger: " + path.string());
    out << j.dump(1) << "\n";
}

RunLedger RunLedger::load_or_empty(const fs::path& path) {
    RunLedger ledger;
    std::ifstream in(path);
    if (!in) return ledger;
    json j;
    in >> j;
    for (const auto& [name, jr] : j.items()) {
        StageRecord rec;
        rec.status = jr.at("status").get<std::string>();
        rec.input_hash = jr.at("input_hash").get<uint64_t>();
        rec.wall_seconds = jr.at("wall_seconds").get<double>();
        rec.outputs = jr.at("outputs").get<std::vector<std::string>>();
        ledger.stages[name] = std::move(rec);
    }
    return ledger;
}

namespace {

struct LockGuard {
    fs::path lock;
    explicit LockGuard(const fs::path& dir) : lock(dir / ".lock") {
        if (fs::exists(lock))
            throw std::runtime_error("run directory is locked by another process: " +
                                     lock.string());
        std::ofstream out(lock);
        out << "locked\n";
    }
    ~LockGuard() {
        std::error_code ec;
        fs::remove(lock, ec);
    }
};

uint64_t hash_string(const std::string& s) {
    Fnv1a h;
    h.update_string(s);
    return h.digest();
}

std::vector<Stage> stage_dependencies(Stage s) {
    switch (s) {
        case Stage::gen: return {};
        case Stage::train: return {Stage::gen};
        case Stage::eval: return {Stage::train};
        case Stage::baselines: return {Stage::gen};
        case Stage::probes: return {Stage::train};
        case Stage::rsa: return {Stage::train};
        case Stage::report: return {Stage::eval, Stage::probes, Stage::rsa};
    }
    return {};
}

// ---- individual stages ---------------------------------------------------------

std::vector<std::string> run_gen(const ExperimentContext& ctx) {
    const auto& cfg = ctx.cfg;
    const fs::path data = cfg.out_dir / "data";
    fs::create_directories(data);
    std::vector<std::string> outputs;

    {  // provenance tables
        std::ofstream out(data / "atlas_table.csv");
        out << "id,hue_index,value,chroma,L,a,b\n";
        out.precision(10);
        for (const auto& c : ctx.atlas.chips())
            out << c.id << "," << c.hue_index << "," << c.value << "," << c.chroma << ","
                << c.lab_d65.L << "," << c.lab_d65.a << "," << c.lab_d65.b << "\n";
        outputs.push_back("data/atlas_table.csv");
    }
    {
        std::ofstream out(data / "illuminants.csv");
        out << "id,cct,m1,m2,split\n";
        out.precision(10);
        for (const auto& ill : ctx.pool) {
            const bool val = std::find(ctx.val_illuminant_ids.begin(),
                                       ctx.val_illuminant_ids.end(),
                                       ill.id) != ctx.val_illuminant_ids.end();
            out << ill.id << "," << (ill.cct ? *ill.cct : 0.0) << ","
                << (ill.judd_m ? ill.judd_m->first : 0.0) << ","
                << (ill.judd_m ? ill.judd_m->second : 0.0) << "," << (val ? "val" : "train")
                << "\n";
        }
        outputs.push_back("data/illuminants.csv");
    }
    {
        json q;
        q["radius_de"] = ctx.quad.radius_de;
        q["grey_chip"] = ctx.quad.grey_chip_id;
        q["grey_point"] = {ctx.quad.grey_point.L, ctx.quad.grey_point.a, ctx.quad.grey_point.b};
        for (const Illuminant* ill : ctx.quad.all()) {
            const LabColor lab = chip_under(ctx.atlas, ctx.quad.grey_chip_id, *ill, cie1931_cmfs());
            q["illuminants"][ill->id] = {{"cct", ill->cct ? json(*ill->cct) : json(nullptr)},
                                         {"m1", ill->judd_m ? json(ill->judd_m->first) : json(nullptr)},
                                         {"m2", ill->judd_m ? json(ill->judd_m->second) : json(nullptr)},
                                         {"grey_lab", {lab.L, lab.a, lab.b}}};
        }
        std::ofstream out(data / "quad.json");
        out << q.dump(1) << "\n";
        outputs.push_back("data/quad.json");
    }

    const SensorSet& cones = cone_fundamentals();
    auto emit = [&](const std::string& name, const std::vector<SceneSpec>& specs) {
        write_dataset(specs, ctx.atlas, ctx.illuminants, cones, data / name);
        outputs.push_back("data/" + name + "/manifest.json");
    };

    emit("train_cc", training_specs(ctx, ctx.train_illuminant_ids, "train", cfg.train_reps, false));
    emit("train_d65", training_specs(ctx, ctx.train_illuminant_ids, "train", cfg.train_reps, true));
    emit("val_cc", training_specs(ctx, ctx.val_illuminant_ids, "val", cfg.train_reps, false));
    emit("val_d65", training_specs(ctx, ctx.val_illuminant_ids, "val", cfg.train_reps, true));
    for (const auto& cond : cfg.conditions)
        emit("eval_" + cond, eval_specs(ctx, parse_condition_spec(cond)));
    return outputs;
}

nn::TrainConfig make_train_config(const ExperimentConfig& cfg, uint64_t seed, int epochs) {
    nn::TrainConfig tc;
    tc.epochs = epochs;
    tc.base_lr = cfg.base_lr;
    tc.decay_every_epochs = cfg.decay_every;
    tc.decay_factor = cfg.decay_factor;
    tc.batch_size = cfg.batch_size;
    tc.seed = seed;
    tc.threads = cfg.deterministic ? 1 : cfg.threads;
    return tc;
}

nn::ArchitectureSpec arch_by_name(const std::string& name, int classes) {
    if (name == "deepcc") return nn::deepcc_arch(classes);
    if (name == "rescc") return nn::rescc_arch(classes);
    throw std::invalid_argument("unknown architecture: " + name);
}

std::vector<std::string> run_train(const ExperimentContext& ctx) {
    const auto& cfg = ctx.cfg;
    const fs::path data = cfg.out_dir / "data";
    const fs::path models = cfg.out_dir / "models";
    fs::create_directories(models);
    std::vector<std::string> outputs;

    std::map<std::string, nn::SampleSet> cache;
    auto samples = [&](const std::string& name) -> const nn::SampleSet& {
        auto it = cache.find(name);
        if (it == cache.end())
            it = cache.emplace(name, load_samples(data / name, ctx.input_scale)).first;
        return it->second;
    };

    const int classes = static_cast<int>(ctx.atlas.size());
    for (const auto& model : cfg.models) {
        const auto& train_set = samples("train_" + model.train_set);
        const auto& val_set = samples("val_" + model.train_set);
        for (uint64_t seed : cfg.seeds) {
            nn::Network<float> net = nn::Network<float>::build(
                arch_by_name(model.arch, classes),
                nn::Shape{3, cfg.image_size, cfg.image_size}, derive_seed(seed, "init", 0));
            nn::TrainConfig tc = make_train_config(cfg, seed, cfg.epochs);
            tc.divergence_dump = models / (model.name + "_seed" + std::to_string(seed) + ".dump");
            const nn::TrainResult res = nn::train(net, train_set, val_set, tc);

            const std::string stem = model.name + "_seed" + std::to_string(seed);
            nn::save_checkpoint(net, models / (stem + ".ckpt"));
            std::ofstream log(models / ("train_log_" + stem + ".csv"));
            log << "epoch,train_loss,val_top1,lr\n";
            log.precision(10);
            for (const auto& e : res.log)
                log << e.epoch << "," << e.train_loss << "," << e.val_top1 << "," << e.lr << "\n";
            outputs.push_back("models/" + stem + ".ckpt");
            outputs.push_back("models/train_log_" + stem + ".csv");
        }
    }
    return outputs;
}

std::vector<EvalRecord> score_dataset(const ExperimentContext& ctx, const nn::Network<float>& net,
                                      const fs::path& dataset_dir, int threads) {
    DatasetReader reader(dataset_dir);
    nn::SampleSet set;
    std::vector<const ManifestEntry*> entries;
    for (size_t i = 0; i < reader.size(); ++i) {
        const RenderedScene scene = reader.load(i);
        nn::Sample s;
        s.image.resize(scene.lms.data.size());
        for (size_t k = 0; k < s.image.size(); ++k)
            s.image[k] = static_cast<float>(scene.lms.data[k] * ctx.input_scale);
        s.label = scene.spec.object_chip;
        set.push_back(std::move(s));
        entries.push_back(&reader.manifest().entries[i]);
    }
    const auto scores = nn::score_set(net, set, threads);
    std::vector<EvalRecord> records;
    records.reserve(set.size());
    for (size_t i = 0; i < set.size(); ++i) {
        const SceneSpec& spec = entries[i]->spec;
        Prediction p = make_prediction(spec.object_chip, spec.illuminant_id,
                                       condition_label(spec), scores[i],
                                       spec.bg_illuminant_id);
        records.push_back(evaluate_prediction(p, ctx.atlas, ctx.refs));
    }
    return records;
}

std::vector<std::string> run_eval(const ExperimentContext& ctx) {
    const auto& cfg = ctx.cfg;
    const fs::path evals = cfg.out_dir / "eval";
    fs::create_directories(evals);
    const int threads = cfg.deterministic ? 1 : cfg.threads;
    std::vector<std::string> outputs;

    for (const auto& model : cfg.models) {
        for (uint64_t seed : cfg.seeds) {
            const std::string stem = model.name + "_seed" + std::to_string(seed);
            const nn::Network<float> net =
                nn::load_checkpoint(cfg.out_dir / "models" / (stem + ".ckpt"));
            std::vector<EvalRecord> records;
            for (const auto& cond : cfg.conditions) {
                auto part = score_dataset(ctx, net, cfg.out_dir / "data" / ("eval_" + cond), threads);
                records.insert(records.end(), part.begin(), part.end());
            }
            write_records_csv(evals / ("records_" + stem + ".csv"), records);
            outputs.push_back("eval/records_" + stem + ".csv");
        }
    }
    return outputs;
}

std::vector<std::string> run_baselines_stage(const ExperimentContext& ctx) {
    const auto& cfg = ctx.cfg;
    const fs::path dir = cfg.out_dir / "baselines";
    fs::create_directories(dir);
    const SensorSet& cones = cone_fundamentals();

    DatasetReader reader(cfg.out_dir / "data" / "eval_normal");
    std::vector<BaselineScene> scenes;
    scenes.reserve(reader.size());
    for (size_t i = 0; i < reader.size(); ++i)
        scenes.push_back(
            make_baseline_scene(reader.manifest().entries[i].spec, ctx.atlas, ctx.illuminants, cones));
    const auto results =
        run_baselines(scenes, kBaselineMethods, ctx.atlas, ctx.illuminants, cones);
    write_baselines_csv(dir / "baselines.csv", results);
    return {"baselines/baselines.csv"};
}

std::vector<std::string> run_probes(const ExperimentContext& ctx) {
    const auto& cfg = ctx.cfg;
    const fs::path dir = cfg.out_dir / "probes";
    fs::create_directories(dir);
    const int threads = cfg.deterministic ? 1 : cfg.threads;
    std::vector<std::string> outputs;

    const nn::SampleSet train_set =
        load_samples(cfg.out_dir / "data" / "train_cc", ctx.input_scale);
    const nn::SampleSet val_set = load_samples(cfg.out_dir / "data" / "val_cc", ctx.input_scale);

    const nn::SampleSet eval_set =
        load_samples(cfg.out_dir / "data" / "eval_normal", ctx.input_scale);
    DatasetReader eval_reader(cfg.out_dir / "data" / "eval_normal");
    std::vector<SceneSpec> eval_specs_list;
    for (size_t i = 0; i < eval_reader.size(); ++i)
        eval_specs_list.push_back(eval_reader.manifest().entries[i].spec);

    std::ofstream summary(dir / "probe_cci.csv");
    summary << "seed,tap,median_cci,top1,n_undefined\n";
    summary.precision(10);

    for (uint64_t seed : cfg.seeds) {
        const std::string stem = cfg.probe_model + "_seed" + std::to_string(seed);
        const nn::Network<float> base =
            nn::load_checkpoint(cfg.out_dir / "models" / (stem + ".ckpt"));
        for (const auto& tap : cfg.probe_taps) {
            nn::TrainConfig tc = make_train_config(cfg, derive_seed(seed, "probe", hash_string(tap)),
                                                   cfg.probe_epochs);
            const nn::ProbeResult probe = nn::train_probe(base, tap, train_set, val_set, tc);
            const auto scores = nn::probe_scores(base, probe, eval_set, threads);

            std::vector<EvalRecord> records;
            for (size_t i = 0; i < eval_set.size(); ++i) {
                const auto& spec = eval_specs_list[i];
                Prediction p = make_prediction(spec.object_chip, spec.illuminant_id,
                                               condition_label(spec), scores[i]);
                records.push_back(evaluate_prediction(p, ctx.atlas, ctx.refs));
            }
            const std::string rec_name = "probe_records_" + stem + "_" + tap + ".csv";
            write_records_csv(dir / rec_name, records);
            outputs.push_back("probes/" + rec_name);

            std::vector<double> ccis;
            size_t undefined = 0, hits = 0;
            for (const auto& r : records) {
                if (r.cci_defined) ccis.push_back(r.cci);
                else ++undefined;
                if (r.top1) ++hits;
            }
            summary << seed << "," << tap << "," << percentile(ccis, 0.5) << ","
                    << static_cast<double>(hits) / static_cast<double>(records.size()) << ","
                    << undefined << "\n";
        }
    }
    summary.close();
    outputs.push_back("probes/probe_cci.csv");
    return outputs;
}

std::vector<std::string> run_rsa(const ExperimentContext& ctx) {
    const auto& cfg = ctx.cfg;
    const fs::path dir = cfg.out_dir / "rsa";
    fs::create_directories(dir);
    const int threads = cfg.deterministic ? 1 : cfg.threads;
    std::vector<std::string> outputs;

    const nn::SampleSet eval_set =
        load_samples(cfg.out_dir / "data" / "eval_normal", ctx.input_scale);
    std::vector<int> labels;
    for (const auto& s : eval_set) labels.push_back(s.label);
    std::vector<int> class_ids;
    for (const auto& c : ctx.atlas.chips()) class_ids.push_back(c.id);

    json fits = json::array();
    for (const auto& model_name : cfg.rsa_models) {
        const ModelSpec* model = nullptr;
        for (const auto& m : cfg.models)
            if (m.name == model_name) model = &m;
        if (!model) throw std::runtime_error("rsa: model not in config: " + model_name);

        for (uint64_t seed : cfg.seeds) {
            const std::string stem = model_name + "_seed" + std::to_string(seed);
            const nn::Network<float> net =
                nn::load_checkpoint(cfg.out_dir / "models" / (stem + ".ckpt"));
            std::vector<std::string> taps;
            for (const auto& [tap, _] : net.taps()) taps.push_back(tap);
            const auto acts = nn::extract_activations(net, eval_set, taps, threads);
            for (const auto& batch : acts) {
                const auto patterns = rsa::class_patterns(
                    batch.data, static_cast<size_t>(batch.dim), labels, class_ids);
                const rsa::RDM dm = rsa::rdm(patterns, rsa::RdmMetric::correlation);
                const rsa::MdsResult mds = rsa::classical_mds(dm, 3);

                const std::string tag = stem + "_" + batch.tap;
                rsa::write_matrix_csv(dir / ("rdm_" + tag + ".csv"), dm.d, dm.class_ids);
                rsa::write_matrix_csv(dir / ("mds_" + tag + ".csv"), mds.coords, dm.class_ids);
                outputs.push_back("rsa/rdm_" + tag + ".csv");
                outputs.push_back("rsa/mds_" + tag + ".csv");

                double ev3 = 0.0;
                for (size_t i = 0; i < std::min<size_t>(3, mds.explained_variance.size()); ++i)
                    ev3 += mds.explained_variance[i];

                for (const auto space : {rsa::ReferenceSpace::cielab, rsa::ReferenceSpace::munsell}) {
                    const rsa::Matrix ref =
                        rsa::reference_coordinates(ctx.atlas, dm.class_ids, space);
                    const auto fit = rsa::procrustes(mds.coords, ref);
                    const double chance = rsa::permutation_baseline(
                        mds.coords, ref, cfg.rsa_permutations, derive_seed(seed, "perm", 0));
                    fits.push_back({{"model", model_name},
                                    {"seed", seed},
                                    {"tap", batch.tap},
                                    {"space", space == rsa::ReferenceSpace::cielab ? "cielab"
                                                                                   : "munsell"},
                                    {"explained_var", fit.explained_variance},
                                    {"chance_p95", chance},
                                    {"mds_ev3", ev3}});
                }
            }
        }
    }
    std::ofstream out(dir / "fits.json");
    out << fits.dump(1) << "\n";
    outputs.push_back("rsa/fits.json");
    return outputs;
}

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
    const size_t n = x.size();
    double mx = 0.0, my = 0.0;
    for (size_t i = 0; i < n; ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (size_t i = 0; i < n; ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    return sxy / std::sqrt(sxx * syy);
}

std::vector<std::string> run_report(const ExperimentContext& ctx) {
    const auto& cfg = ctx.cfg;
    const fs::path dir = cfg.out_dir / "report";
    fs::create_directories(dir);
    std::vector<std::string> outputs;

    // Per-condition and per-illuminant tables, pooled over seeds.
    for (const auto& model : cfg.models) {
        std::vector<EvalRecord> all;
        for (uint64_t seed : cfg.seeds) {
            const auto part = read_records_csv(
                cfg.out_dir / "eval" /
                ("records_" + model.name + "_seed" + std::to_string(seed) + ".csv"));
            all.insert(all.end(), part.begin(), part.end());
        }
        write_report_csv(dir / ("summary_" + model.name + ".csv"),
                         aggregate(all, GroupBy::condition));
        std::vector<EvalRecord> normal;
        for (const auto& r : all)
            if (r.pred.condition == "normal") normal.push_back(r);
        write_report_csv(dir / ("per_illuminant_" + model.name + ".csv"),
                         aggregate(normal, GroupBy::illuminant));
        outputs.push_back("report/summary_" + model.name + ".csv");
        outputs.push_back("report/per_illuminant_" + model.name + ".csv");
    }

    // Wrong-background mismatch: model error vs illuminant discrepancy.
    {
        const int grey = ctx.atlas.grey_chip(cfg.grey_value);
        std::vector<double> xs, ys;
        for (uint64_t seed : cfg.seeds) {
            const auto records = read_records_csv(
                cfg.out_dir / "eval" /
                ("records_" + cfg.probe_model + "_seed" + std::to_string(seed) + ".csv"));
            for (const auto& r : records) {
                if (r.pred.condition != "wrong_back" || r.pred.bg_illuminant_id.empty()) continue;
                const double ill_de = delta_e76(ctx.refs.lab_under(grey, r.pred.illuminant_id),
                                                ctx.refs.lab_under(grey, r.pred.bg_illuminant_id));
                xs.push_back(ill_de);
                ys.push_back(r.de_d65);
            }
        }
        std::ofstream out(dir / "wrongback_correlation.csv");
        out << "model,n,pearson_r\n";
        out.precision(10);
        out << cfg.probe_model << "," << xs.size() << ","
            << (xs.size() >= 3 ? pearson(xs, ys) : 0.0) << "\n";
        outputs.push_back("report/wrongback_correlation.csv");
    }

    // Probe depth profile.
    {
        std::ifstream in(cfg.out_dir / "probes" / "probe_cci.csv");
        if (!in) throw std::runtime_error("report: probes stage output missing");
        std::string line;
        std::getline(in, line);
        std::map<std::string, std::vector<double>> per_tap;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            std::istringstream ss(line);
            std::string seed_s, tap, cci_s, top1_s, und_s;
            std::getline(ss, seed_s, ',');
            std::getline(ss, tap, ',');
            std::getline(ss, cci_s, ',');
            std::getline(ss, top1_s, ',');
            std::getline(ss, und_s);
            per_tap[tap].push_back(std::stod(cci_s));
        }
        std::ofstream out(dir / "probe_depth.csv");
        out << "tap,mean_median_cci,n_seeds\n";
        out.precision(10);
        SvgSeries series;
        series.label = cfg.probe_model;
        double x = 0.0;
        for (const auto& tap : cfg.probe_taps) {
            const auto it = per_tap.find(tap);
            if (it == per_tap.end()) continue;
            double mean = 0.0;
            for (double v : it->second) mean += v;
            mean /= static_cast<double>(it->second.size());
            out << tap << "," << mean << "," << it->second.size() << "\n";
            series.x.push_back(x++);
            series.y.push_back(mean);
        }
        write_svg_plot(dir / "probe_depth.svg", "readout constancy by depth", {series}, "tap",
                       "median CCI");
        outputs.push_back("report/probe_depth.csv");
        outputs.push_back("report/probe_depth.svg");
    }

    // Procrustes by tap.
    {
        std::ifstream in(cfg.out_dir / "rsa" / "fits.json");
        if (!in) throw std::runtime_error("report: rsa stage output missing");
        json fits;
        in >> fits;
        std::map<std::string, std::map<std::string, std::vector<double>>> by_model_tap;
        for (const auto& f : fits)
            if (f.at("space") == "cielab")
                by_model_tap[f.at("model")][f.at("tap")].push_back(
                    f.at("explained_var").get<double>());
        std::ofstream out(dir / "procrustes_by_tap.csv");
        out << "model,tap,mean_explained_var,n\n";
        out.precision(10);
        std::vector<SvgSeries> series;
        const char* colors[] = {"#202020", "#c03020", "#2060c0", "#208040"};
        size_t mi = 0;
        for (const auto& [model, taps] : by_model_tap) {
            SvgSeries s;
            s.label = model;
            s.color = colors[mi++ % 4];
            double x = 0.0;
            for (const auto& [tap, vals] : taps) {
                double mean = 0.0;
                for (double v : vals) mean += v;
                mean /= static_cast<double>(vals.size());
                out << model << "," << tap << "," << mean << "," << vals.size() << "\n";
                s.x.push_back(x++);
                s.y.push_back(mean);
            }
            series.push_back(std::move(s));
        }
        write_svg_plot(dir / "procrustes_by_tap.svg", "CIELAB correspondence by layer", series,
                       "tap", "explained variance");
        outputs.push_back("report/procrustes_by_tap.csv");
        outputs.push_back("report/procrustes_by_tap.svg");
    }
    return outputs;
}

}  // namespace

// ---- stage runner ------------------------------------------------------------

RunLedger run_experiment(const ExperimentConfig& cfg, const std::set<Stage>& stages) {
    fs::create_directories(cfg.out_dir);
    LockGuard lock(cfg.out_dir);

    {  // config echo for provenance
        std::ofstream out(cfg.out_dir / "config_echo.json");
        out << cfg.to_json() << "\n";
    }

    RunLedger ledger = RunLedger::load_or_empty(cfg.out_dir / "ledger.json");
    const uint64_t cfg_hash = hash_string(cfg.to_json());

    ExperimentContext ctx = build_context(cfg);

    const std::vector<Stage> order = {Stage::gen,       Stage::train, Stage::eval,
                                      Stage::baselines, Stage::probes, Stage::rsa,
                                      Stage::report};
    for (Stage stage : order) {
        if (!stages.count(stage)) continue;
        const std::string name = stage_name(stage);

        Fnv1a h;
        uint64_t ch = cfg_hash;
        h.update(&ch, sizeof ch);
        for (Stage dep : stage_dependencies(stage)) {
            const auto it = ledger.stages.find(stage_name(dep));
            if (it == ledger.stages.end())
                throw std::runtime_error("stage '" + name + "' needs stage '" + stage_name(dep) +
                                         "' to run first");
            h.update(&it->second.input_hash, sizeof(uint64_t));
        }
        const uint64_t input_hash = h.digest();

        const auto existing = ledger.stages.find(name);
        if (existing != ledger.stages.end() && existing->second.input_hash == input_hash) {
            bool all_exist = true;
            for (const auto& o : existing->second.outputs)
                if (!fs::exists(cfg.out_dir / o)) all_exist = false;
            if (all_exist) {
                existing->second.status = "cached";
                ledger.save(cfg.out_dir / "ledger.json");
                continue;
            }
        }

        const auto t0 = std::chrono::steady_clock::now();
        std::vector<std::string> outputs;
        try {
            switch (stage) {
                case Stage::gen: outputs = run_gen(ctx); break;
                case Stage::train: outputs = run_train(ctx); break;
                case Stage::eval: outputs = run_eval(ctx); break;
                case Stage::baselines: outputs = run_baselines_stage(ctx); break;
                case Stage::probes: outputs = run_probes(ctx); break;
                case Stage::rsa: outputs = run_rsa(ctx); break;
                case Stage::report: outputs = run_report(ctx); break;
            }
        } catch (const std::exception& e) {
            throw std::runtime_error("stage '" + name + "' failed: " + e.what());
        }
        const auto t1 = std::chrono::steady_clock::now();

        StageRecord rec;
        rec.status = "ok";
        rec.input_hash = input_hash;
        rec.wall_seconds = std::chrono::duration<double>(t1 - t0).count();
        rec.outputs = std::move(outputs);
        ledger.stages[name] = std::move(rec);
        ledger.save(cfg.out_dir / "ledger.json");
    }
    return ledger;
}

// ---- helpers -------------------------------------------------------------------

nn::SampleSet load_samples(const fs::path& dataset_dir, double input_scale) {
    DatasetReader reader(dataset_dir);
    nn::SampleSet set;
    set.reserve(reader.size());
    for (size_t i = 0; i < reader.size(); ++i) {
        const RenderedScene scene = reader.load(i);
        nn::Sample s;
        s.image.resize(scene.lms.data.size());
        for (size_t k = 0; k < s.image.size(); ++k)
            s.image[k] = static_cast<float>(scene.lms.data[k] * input_scale);
        s.label = scene.spec.object_chip;
        set.push_back(std::move(s));
    }
    return set;
}

std::vector<EvalRecord> read_records_csv(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open records: " + path.string());
    std::vector<EvalRecord> records;
    std::string line;
    std::getline(in, line);  // header
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string f[13];
        for (int i = 0; i < 12; ++i) std::getline(ss, f[i], ',');
        std::getline(ss, f[12]);
        EvalRecord r;
        r.pred.true_chip = std::stoi(f[0]);
        r.pred.illuminant_id = f[1];
        r.pred.condition = f[2];
        r.pred.bg_illuminant_id = f[3];
        r.pred.predicted_chip = std::stoi(f[4]);
        r.top1 = f[5] == "1";
        r.top5 = f[6] == "1";
        r.muns3 = f[7] == "1";
        r.de_d65 = std::stod(f[8]);
        r.de_i = std::stod(f[9]);
        r.cci = std::stod(f[10]);
        r.cci_defined = f[11] == "1";
        r.denominator = std::stod(f[12]);
        records.push_back(std::move(r));
    }
    return records;
}

void write_srgb_preview(const fs::path& dataset_dir, size_t index, const fs::path& out_ppm,
                        double exposure) {
    DatasetReader reader(dataset_dir);
    const RenderedScene scene = reader.load(index);
    const int w = scene.lms.width, h = scene.lms.height;

    // linear sRGB from XYZ (D65 primaries)
    const double m[9] = {3.2404542,  -1.5371385, -0.4985314, -0.9692660, 1.8760108,
                         0.0415560,  0.0556434,  -0.2040259, 1.0572252};
    double max_y = 1e-12;
    std::vector<double> xyz(static_cast<size_t>(w) * h * 3);
    for (size_t p = 0; p < scene.lms.pixels(); ++p) {
        Tristimulus lms{{scene.lms.data[p], scene.lms.data[scene.lms.pixels() + p],
                         scene.lms.data[2 * scene.lms.pixels() + p]}};
        const Tristimulus v = lms_to_xyz(lms);
        for (int c = 0; c < 3; ++c) xyz[3 * p + static_cast<size_t>(c)] = v[c];
        max_y = std::max(max_y, v[1]);
    }
    std::ofstream out(out_ppm, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write preview: " + out_ppm.string());
    out << "P6\n" << w << " " << h << "\n255\n";
    for (size_t p = 0; p < scene.lms.pixels(); ++p) {
        for (int c = 0; c < 3; ++c) {
            double lin = 0.0;
            for (int k = 0; k < 3; ++k)
                lin += m[3 * c + k] * xyz[3 * p + static_cast<size_t>(k)] * exposure / max_y;
            lin = std::clamp(lin, 0.0, 1.0);
            const double srgb =
                lin <= 0.0031308 ? 12.92 * lin : 1.055 * std::pow(lin, 1.0 / 2.4) - 0.055;
            out.put(static_cast<char>(std::lround(srgb * 255.0)));
        }
    }
}

void write_svg_plot(const fs::path& path, const std::string& title,
                    const std::vector<SvgSeries>& series, const std::string& x_label,
                    const std::string& y_label) {
    double x_min = 1e300, x_max = -1e300, y_min = 1e300, y_max = -1e300;
    for (const auto& s : series)
        for (size_t i = 0; i < s.x.size(); ++i) {
            x_min = std::min(x_min, s.x[i]);
            x_max = std::max(x_max, s.x[i]);
            y_min = std::min(y_min, s.y[i]);
            y_max = std::max(y_max, s.y[i]);
        }
    if (x_min > x_max) {
        x_min = 0;
        x_max = 1;
        y_min = 0;
        y_max = 1;
    }
    if (x_max - x_min < 1e-12) x_max = x_min + 1.0;
    if (y_max - y_min < 1e-12) y_max = y_min + 1.0;

    const double W = 640, H = 420, L = 70, R = 20, T = 40, B = 50;
    auto sx = [&](double x) { return L + (x - x_min) / (x_max - x_min) * (W - L - R); };
    auto sy = [&](double y) { return H - B - (y - y_min) / (y_max - y_min) * (H - T - B); };

    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write svg: " + path.string());
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
        << "\" viewBox=\"0 0 " << W << " " << H << "\">\n";
    out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    out << "<text x=\"" << W / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"15\">" << title
        << "</text>\n";
    out << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B
        << "\" stroke=\"black\"/>\n";
    out << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B
        << "\" stroke=\"black\"/>\n";
    out << "<text x=\"" << W / 2 << "\" y=\"" << H - 12
        << "\" text-anchor=\"middle\" font-size=\"12\">" << x_label << "</text>\n";
    out << "<text x=\"16\" y=\"" << H / 2 << "\" font-size=\"12\" transform=\"rotate(-90 16 "
        << H / 2 << ")\" text-anchor=\"middle\">" << y_label << "</text>\n";
    for (const double f : {0.0, 0.25, 0.5, 0.75, 1.0}) {
        const double yv = y_min + f * (y_max - y_min);
        out << "<text x=\"" << L - 6 << "\" y=\"" << sy(yv) + 4
            << "\" text-anchor=\"end\" font-size=\"10\">";
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.3g", yv);
        out << buf << "</text>\n";
        const double xv = x_min + f * (x_max - x_min);
        std::snprintf(buf, sizeof buf, "%.3g", xv);
        out << "<text x=\"" << sx(xv) << "\" y=\"" << H - B + 16
            << "\" text-anchor=\"middle\" font-size=\"10\">" << buf << "</text>\n";
    }
    double legend_y = T + 4;
    for (const auto& s : series) {
        out << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"1.5\" points=\"";
        for (size_t i = 0; i < s.x.size(); ++i) out << sx(s.x[i]) << "," << sy(s.y[i]) << " ";
        out << "\"/>\n";
        for (size_t i = 0; i < s.x.size(); ++i)
            out << "<circle cx=\"" << sx(s.x[i]) << "\" cy=\"" << sy(s.y[i])
                << "\" r=\"2.5\" fill=\"" << s.color << "\"/>\n";
        out << "<text x=\"" << W - R - 4 << "\" y=\"" << legend_y
            << "\" text-anchor=\"end\" font-size=\"11\" fill=\"" << s.color << "\">" << s.label
            << "</text>\n";
        legend_y += 14;
    }
    out << "</svg>\n";
}

}  // namespace cclab
