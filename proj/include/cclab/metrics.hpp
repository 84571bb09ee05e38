#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cclab/atlas.hpp"
#include "cclab/illuminants.hpp"

namespace cclab {

struct Prediction {
    int true_chip = -1;
    std::string illuminant_id;
    std::string condition;
    std::string bg_illuminant_id;  // wrong_back provenance
    std::vector<float> scores;
    int predicted_chip = -1;  // argmax, ties to the lowest chip id
};

Prediction make_prediction(int true_chip, std::string illuminant_id, std::string condition,
                           std::vector<float> scores, std::string bg_illuminant_id = {});

/// Per-(chip, illuminant) Lab references used by the CCI and ΔE measures.
/// lab_d65 comes from the atlas table, lab_under from the illuminant spectra.
class ChromaRefs {
public:
    ChromaRefs() = default;
    ChromaRefs(const Atlas& atlas, const std::vector<Illuminant>& test_illuminants,
               const SensorSet& cmf);

    /// Assemble from explicit Lab tables (exact-value unit suites).
    static ChromaRefs from_tables(std::vector<LabColor> d65,
                                  std::map<std::string, std::vector<LabColor>> under);

    const LabColor& lab_d65(int chip) const;
    const LabColor& lab_under(int chip, const std::string& illuminant_id) const;
    bool has_illuminant(const std::string& id) const { return under_.count(id) > 0; }

private:
    std::vector<LabColor> d65_;
    std::map<std::string, std::vector<LabColor>> under_;
};

/// Floor below which the illuminant shift makes Eq.-style indices
/// meaningless; such records are flagged and excluded from aggregates.
inline constexpr double kCciDenominatorFloor = 0.5;

struct EvalRecord {
    Prediction pred;
    bool top1 = false, top5 = false, muns3 = false;
    double de_d65 = 0.0;  // ΔE76 between predicted and true chip, both under D65
    double de_i = 0.0;    // same pair under the test illuminant
    double cci = 0.0;
    bool cci_defined = true;
    double denominator = 0.0;  // illuminant-induced shift of the true chip
};

bool topk_hit(const Prediction& pred, int k);
bool muns3_hit(const Prediction& pred, const Atlas& atlas);

/// Eq.-form constancy index: 1 - |C_I^N - C_I^M| / |C_D65^M - C_I^M|.
/// Exactly 1.0 when the prediction is correct; nullopt when the denominator
/// is below the floor.
std::optional<double> cci(const Prediction& pred, const ChromaRefs& refs);

double delta_e_error(const Prediction& pred, const ChromaRefs& refs);

EvalRecord evaluate_prediction(const Prediction& pred, const Atlas& atlas,
                               const ChromaRefs& refs);

enum class GroupBy { condition, illuminant, chip, none };

struct ReportRow {
    std::string group;
    std::string metric;
    double median = 0.0, q1 = 0.0, q3 = 0.0, mean = 0.0;
    size_t n = 0;
    size_t n_undefined = 0;
};

/// Per-group medians/quartiles/means for every metric, plus the CCI>0 and
/// ΔE<5 fraction rows.
std::vector<ReportRow> aggregate(const std::vector<EvalRecord>& records, GroupBy group_by);

void write_report_csv(const std::filesystem::path& path, const std::vector<ReportRow>& rows);
void write_records_csv(const std::filesystem::path& path, const std::vector<EvalRecord>& records);

/// Percentile with linear interpolation on the sorted values (p in [0,1]).
double percentile(std::vector<double> values, double p);

}  // namespace cclab
