#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "cclab/experiment.hpp"

using namespace cclab;
namespace fs = std::filesystem;

namespace {

ExperimentConfig tiny_config(const fs::path& out) {
    ExperimentConfig cfg;
    cfg.synthetic_hues = 8;
    cfg.pool_size = 6;
    cfg.val_illuminants = 2;
    cfg.image_size = 32;
    cfg.train_reps = 1;
    cfg.eval_reps = 1;
    cfg.models = {{"deepcc", "deepcc", "cc"}};
    cfg.epochs = 2;
    cfg.decay_every = 1;
    cfg.batch_size = 8;
    cfg.seeds = {1};
    cfg.conditions = {"normal", "wrong_back"};
    cfg.probe_taps = {"C1", "F1"};
    cfg.probe_epochs = 2;
    cfg.rsa_models = {"deepcc"};
    cfg.rsa_permutations = 100;
    cfg.out_dir = out;
    cfg.deterministic = true;
    return cfg;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("config round-trips through json and rejects unknown keys") {
    ExperimentConfig cfg = tiny_config("/tmp/x");
    const std::string text = cfg.to_json();
    const ExperimentConfig back = ExperimentConfig::from_json(text);
    CHECK(back.to_json() == text);
    CHECK(back.synthetic_hues == 8);
    CHECK(back.models.size() == 1);

    CHECK_THROWS_WITH_AS(ExperimentConfig::from_json(R"({"schema_version":1,"bogus":3})"),
                         doctest::Contains("unknown key"), std::invalid_argument);
    CHECK_THROWS(ExperimentConfig::from_json(R"({"schema_version":1,"train":{"lr":0.1}})"));
    CHECK_THROWS(ExperimentConfig::from_json(R"({"schema_version":2})"));
    CHECK_THROWS(ExperimentConfig::from_json(R"({"schema_version":1,"seeds":[]})"));
    CHECK_THROWS(
        ExperimentConfig::from_json(R"({"schema_version":1,"conditions":["nonsense"]})"));
}

TEST_CASE("context builds a coherent atlas, pool, quad, and holdout split") {
    ExperimentConfig cfg = tiny_config(fs::temp_directory_path() / "cclab_ctx");
    const ExperimentContext ctx = build_context(cfg);
    CHECK(ctx.atlas.size() == 13);  // 8 hues + 5 neutrals
    CHECK(ctx.pool.size() == 6);
    CHECK(ctx.train_illuminant_ids.size() == 4);
    CHECK(ctx.val_illuminant_ids.size() == 2);
    // no illuminant appears in both splits
    for (const auto& v : ctx.val_illuminant_ids)
        for (const auto& t : ctx.train_illuminant_ids) CHECK(v != t);
    // the map holds pool + quad + D65
    CHECK(ctx.illuminants.size() == 6 + 4 + 1);
    CHECK(ctx.illuminants.count("D65") == 1);
    CHECK(ctx.illuminants.count("Y") == 1);
    // refs cover the quad under every chip
    CHECK(ctx.refs.has_illuminant("R"));
    CHECK(ctx.refs.has_illuminant(ctx.pool.front().id));
}

TEST_CASE("full tiny pipeline, caching, and report idempotence") {
    const fs::path out = fs::temp_directory_path() / "cclab_pipeline";
    fs::remove_all(out);
    ExperimentConfig cfg = tiny_config(out);

    const std::set<Stage> all = {Stage::gen,       Stage::train,  Stage::eval, Stage::baselines,
                                 Stage::probes,    Stage::rsa,    Stage::report};
    const RunLedger ledger = run_experiment(cfg, all);

    for (const auto& name :
         {"gen", "train", "eval", "baselines", "probes", "rsa", "report"}) {
        REQUIRE(ledger.stages.count(name) == 1);
        CHECK(ledger.stages.at(name).status == "ok");
        for (const auto& o : ledger.stages.at(name).outputs) CHECK(fs::exists(out / o));
    }

    // label balance: every chip appears equally often in the training manifest
    {
        DatasetReader reader(out / "data" / "train_cc");
        std::map<int, int> counts;
        for (const auto& e : reader.manifest().entries) counts[e.spec.object_chip]++;
        for (const auto& [chip, n] : counts) CHECK(n == counts.begin()->second);
        // holdout: no validation illuminant in the training manifest
        const ExperimentContext ctx = build_context(cfg);
        for (const auto& e : reader.manifest().entries)
            for (const auto& v : ctx.val_illuminant_ids) CHECK(e.spec.illuminant_id != v);
    }

    // eval records: per-illuminant rows cover exactly Y,B,G,R in the normal condition
    {
        const auto records = read_records_csv(out / "eval" / "records_deepcc_seed1.csv");
        std::set<std::string> ills;
        size_t normals = 0;
        for (const auto& r : records) {
            if (r.pred.condition == "normal") {
                ills.insert(r.pred.illuminant_id);
                ++normals;
            }
            if (r.pred.condition == "wrong_back") CHECK(!r.pred.bg_illuminant_id.empty());
        }
        CHECK(ills == std::set<std::string>{"Y", "B", "G", "R"});
        CHECK(normals == 13 * 4);  // chips x quad, one rep
    }

    // probe depth table has one row per tap
    {
        const std::string depth = slurp(out / "report" / "probe_depth.csv");
        CHECK(depth.find("C1") != std::string::npos);
        CHECK(depth.find("F1") != std::string::npos);
    }

    // rerun: everything cache-hits, nothing recomputes
    const RunLedger again = run_experiment(cfg, all);
    for (const auto& [name, rec] : again.stages) CHECK(rec.status == "cached");

    // report idempotence: byte-identical summary on a forced re-run
    const std::string before = slurp(out / "report" / "summary_deepcc.csv");
    fs::remove(out / "report" / "summary_deepcc.csv");
    run_experiment(cfg, {Stage::report});
    CHECK(slurp(out / "report" / "summary_deepcc.csv") == before);

    // config echo matches the input config exactly
    CHECK(slurp(out / "config_echo.json") == cfg.to_json() + "\n");

    fs::remove_all(out);
}

TEST_CASE("stages fail fast when dependencies never ran") {
    const fs::path out = fs::temp_directory_path() / "cclab_deps";
    fs::remove_all(out);
    ExperimentConfig cfg = tiny_config(out);
    CHECK_THROWS_WITH_AS(run_experiment(cfg, {Stage::train}),
                         doctest::Contains("needs stage"), std::runtime_error);
    fs::remove_all(out);
}

TEST_CASE("the run directory lock rejects concurrent owners") {
    const fs::path out = fs::temp_directory_path() / "cclab_lock";
    fs::remove_all(out);
    fs::create_directories(out);
    std::ofstream(out / ".lock") << "held\n";
    ExperimentConfig cfg = tiny_config(out);
    CHECK_THROWS_WITH_AS(run_experiment(cfg, {Stage::gen}), doctest::Contains("locked"),
                         std::runtime_error);
    fs::remove_all(out);
}

TEST_CASE("srgb preview writes a valid ppm") {
    const fs::path out = fs::temp_directory_path() / "cclab_preview";
    fs::remove_all(out);
    ExperimentConfig cfg = tiny_config(out);
    run_experiment(cfg, {Stage::gen});
    const fs::path ppm = out / "preview.ppm";
    write_srgb_preview(out / "data" / "eval_normal", 0, ppm);
    const std::string bytes = slurp(ppm);
    CHECK(bytes.substr(0, 2) == "P6");
    CHECK(bytes.size() > static_cast<size_t>(32 * 32 * 3));
    fs::remove_all(out);
}

TEST_CASE("svg plots contain the series and axis labels") {
    const fs::path svg = fs::temp_directory_path() / "cclab_plot.svg";
    SvgSeries s;
    s.label = "alpha";
    s.x = {0, 1, 2};
    s.y = {0.2, 0.5, 0.9};
    write_svg_plot(svg, "demo", {s}, "depth", "score");
    const std::string text = slurp(svg);
    CHECK(text.find("<svg") != std::string::npos);
    CHECK(text.find("polyline") != std::string::npos);
    CHECK(text.find("alpha") != std::string::npos);
    CHECK(text.find("depth") != std::string::npos);
    fs::remove(svg);
}

TEST_CASE("mask_patch_k conditions generate, evaluate, and aggregate per patch") {
    const fs::path out = fs::temp_directory_path() / "cclab_maskpatch";
    fs::remove_all(out);
    ExperimentConfig cfg = tiny_config(out);
    cfg.conditions = {"normal", "mask_patch_1", "mask_patch_4"};
    run_experiment(cfg, {Stage::gen, Stage::train, Stage::eval});

    const auto records = read_records_csv(out / "eval" / "records_deepcc_seed1.csv");
    std::set<std::string> conditions;
    for (const auto& r : records) conditions.insert(r.pred.condition);
    CHECK(conditions == std::set<std::string>{"normal", "mask_patch_1", "mask_patch_4"});

    DatasetReader reader(out / "data" / "eval_mask_patch_1");
    CHECK(reader.manifest().entries.front().spec.mask_patch_index == 1);

    CHECK_THROWS(ExperimentConfig::from_json(
        R"({"schema_version":1,"conditions":["mask_patch_9"]})"));
    CHECK_THROWS(ExperimentConfig::from_json(
        R"({"schema_version":1,"conditions":["mask_patch"]})"));
    fs::remove_all(out);
}
