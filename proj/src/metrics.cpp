#include "cclab/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace cclab {

Prediction make_prediction(int true_chip, std::string illuminant_id, std::string condition,
                           std::vector<float> scores, std::string bg_illuminant_id) {
    if (scores.empty()) throw std::invalid_argument("prediction needs a score vector");
    Prediction p;
    p.true_chip = true_chip;
    p.illuminant_id = std::move(illuminant_id);
    p.condition = std::move(condition);
    p.bg_illuminant_id = std::move(bg_illuminant_id);
    p.scores = std::move(scores);
    int best = 0;
    for (int i = 1; i < static_cast<int>(p.scores.size()); ++i)
        if (p.scores[static_cast<size_t>(i)] > p.scores[static_cast<size_t>(best)]) best = i;
    p.predicted_chip = best;
    return p;
}

ChromaRefs::ChromaRefs(const Atlas& atlas, const std::vector<Illuminant>& test_illuminants,
                       const SensorSet& cmf) {
    if (!atlas.table_built()) throw std::logic_error("ChromaRefs: chromaticity table missing");
    d65_.reserve(atlas.size());
    for (const auto& chip : atlas.chips()) d65_.push_back(chip.lab_d65);
    for (const auto& ill : test_illuminants) {
        std::vector<LabColor> labs;
        labs.reserve(atlas.size());
        for (const auto& chip : atlas.chips())
            labs.push_back(chip_under(atlas, chip.id, ill, cmf));
        under_[ill.id] = std::move(labs);
    }
}

ChromaRefs ChromaRefs::from_tables(std::vector<LabColor> d65,
                                   std::map<std::string, std::vector<LabColor>> under) {
    ChromaRefs refs;
    refs.d65_ = std::move(d65);
    refs.under_ = std::move(under);
    return refs;
}

const LabColor& ChromaRefs::lab_d65(int chip) const {
    return d65_.at(static_cast<size_t>(chip));
}

const LabColor& ChromaRefs::lab_under(int chip, const std::string& illuminant_id) const {
    const auto it = under_.find(illuminant_id);
    if (it == under_.end())
        throw std::out_of_range("ChromaRefs: no illuminant " + illuminant_id);
    return it->second.at(static_cast<size_t>(chip));
}

bool topk_hit(const Prediction& pred, int k) {
    const int n = static_cast<int>(pred.scores.size());
    if (k < 1 || k > n) throw std::invalid_argument("topk_hit: k out of range");
    // rank = how many classes strictly beat the true one, plus equal-scored
    // classes with a lower id (the deterministic tie order)
    const float true_score = pred.scores[static_cast<size_t>(pred.true_chip)];
    int rank = 0;
    for (int i = 0; i < n; ++i) {
        if (i == pred.true_chip) continue;
        const float s = pred.scores[static_cast<size_t>(i)];
        if (s > true_score || (s == true_score && i < pred.true_chip)) ++rank;
    }
    return rank < k;
}

bool muns3_hit(const Prediction& pred, const Atlas& atlas) {
    const auto neighbors = muns3_neighbors(atlas, pred.true_chip);
    return std::find(neighbors.begin(), neighbors.end(), pred.predicted_chip) != neighbors.end();
}

std::optional<double> cci(const Prediction& pred, const ChromaRefs& refs) {
    if (pred.predicted_chip == pred.true_chip) return 1.0;
    const LabColor& true_under_i = refs.lab_under(pred.true_chip, pred.illuminant_id);
    const double denom = delta_e76(refs.lab_d65(pred.true_chip), true_under_i);
    if (denom <= kCciDenominatorFloor) return std::nullopt;
    const double numer =
        delta_e76(refs.lab_under(pred.predicted_chip, pred.illuminant_id), true_under_i);
    return 1.0 - numer / denom;
}

double delta_e_error(const Prediction& pred, const ChromaRefs& refs) {
    return delta_e76(refs.lab_d65(pred.predicted_chip), refs.lab_d65(pred.true_chip));
}

EvalRecord evaluate_prediction(const Prediction& pred, const Atlas& atlas,
                               const ChromaRefs& refs) {
    EvalRecord r;
    r.pred = pred;
    r.top1 = topk_hit(pred, 1);
    r.top5 = topk_hit(pred, std::min<int>(5, static_cast<int>(pred.scores.size())));
    r.muns3 = muns3_hit(pred, atlas);
    r.de_d65 = delta_e_error(pred, refs);
    const LabColor& true_under_i = refs.lab_under(pred.true_chip, pred.illuminant_id);
    r.de_i = delta_e76(refs.lab_under(pred.predicted_chip, pred.illuminant_id), true_under_i);
    r.denominator = delta_e76(refs.lab_d65(pred.true_chip), true_under_i);
    const auto c = cci(pred, refs);
    r.cci_defined = c.has_value();
    r.cci = c.value_or(0.0);
    return r;
}

double percentile(std::vector<double> values, double p) {
    if (values.empty()) throw std::invalid_argument("percentile of empty set");
    std::sort(values.begin(), values.end());
    const double pos = p * static_cast<double>(values.size() - 1);
    const size_t lo = static_cast<size_t>(pos);
    if (lo + 1 >= values.size()) return values.back();
    const double t = pos - static_cast<double>(lo);
    return values[lo] * (1.0 - t) + values[lo + 1] * t;
}

namespace {

std::string group_key(const EvalRecord& r, GroupBy g) {
    switch (g) {
        case GroupBy::condition: return r.pred.condition;
        case GroupBy::illuminant: return r.pred.illuminant_id;
        case GroupBy::chip: return std::to_string(r.pred.true_chip);
        case GroupBy::none: return "all";
    }
    throw std::logic_error("bad GroupBy");
}

ReportRow stats_row(const std::string& group, const std::string& metric,
                    const std::vector<double>& values, size_t n_undefined) {
    ReportRow row;
    row.group = group;
    row.metric = metric;
    row.n = values.size();
    row.n_undefined = n_undefined;
    if (!values.empty()) {
        row.median = percentile(values, 0.5);
        row.q1 = percentile(values, 0.25);
        row.q3 = percentile(values, 0.75);
        double s = 0.0;
        for (double v : values) s += v;
        row.mean = s / static_cast<double>(values.size());
    }
    return row;
}

ReportRow fraction_row(const std::string& group, const std::string& metric, double fraction,
                       size_t n) {
    ReportRow row;
    row.group = group;
    row.metric = metric;
    row.median = row.q1 = row.q3 = row.mean = fraction;
    row.n = n;
    return row;
}

}  // namespace

std::vector<ReportRow> aggregate(const std::vector<EvalRecord>& records, GroupBy group_by) {
    if (records.empty()) throw std::invalid_argument("aggregate: no records");
    std::map<std::string, std::vector<const EvalRecord*>> groups;
    for (const auto& r : records) groups[group_key(r, group_by)].push_back(&r);

    std::vector<ReportRow> rows;
    for (const auto& [group, recs] : groups) {
        auto collect = [&](auto&& get) {
            std::vector<double> v;
            v.reserve(recs.size());
            for (const auto* r : recs) v.push_back(get(*r));
            return v;
        };
        rows.push_back(stats_row(group, "top1",
                                 collect([](const EvalRecord& r) { return r.top1 ? 1.0 : 0.0; }), 0));
        rows.push_back(stats_row(group, "top5",
                                 collect([](const EvalRecord& r) { return r.top5 ? 1.0 : 0.0; }), 0));
        rows.push_back(stats_row(group, "muns3",
                                 collect([](const EvalRecord& r) { return r.muns3 ? 1.0 : 0.0; }), 0));
        rows.push_back(stats_row(group, "de_d65",
                                 collect([](const EvalRecord& r) { return r.de_d65; }), 0));
        rows.push_back(stats_row(group, "de_i",
                                 collect([](const EvalRecord& r) { return r.de_i; }), 0));

        std::vector<double> ccis;
        size_t undefined = 0;
        for (const auto* r : recs) {
            if (r->cci_defined) ccis.push_back(r->cci);
            else ++undefined;
        }
        rows.push_back(stats_row(group, "cci", ccis, undefined));

        size_t cci_pos = 0;
        for (double c : ccis)
            if (c > 0.0) ++cci_pos;
        rows.push_back(fraction_row(
            group, "frac_cci_pos",
            ccis.empty() ? 0.0 : static_cast<double>(cci_pos) / static_cast<double>(ccis.size()),
            ccis.size()));

        size_t de_lt5 = 0;
        for (const auto* r : recs)
            if (r->de_d65 < 5.0) ++de_lt5;
        rows.push_back(fraction_row(group, "frac_de_lt5",
                                    static_cast<double>(de_lt5) / static_cast<double>(recs.size()),
                                    recs.size()));
    }
    return rows;
}

void write_report_csv(const std::filesystem::path& path, const std::vector<ReportRow>& rows) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write report: " + path.string());
    out << "group,metric,median,q1,q3,mean,n,n_undefined\n";
    out.precision(10);
    for (const auto& r : rows)
        out << r.group << "," << r.metric << "," << r.median << "," << r.q1 << "," << r.q3 << ","
            << r.mean << "," << r.n << "," << r.n_undefined << "\n";
}

void write_records_csv(const std::filesystem::path& path, const std::vector<EvalRecord>& records) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write records: " + path.string());
    out << "chip,illuminant,condition,bg_illuminant,predicted,top1,top5,muns3,"
           "de_d65,de_i,cci,cci_defined,denominator\n";
    out.precision(10);
    for (const auto& r : records) {
        out << r.pred.true_chip << "," << r.pred.illuminant_id << "," << r.pred.condition << ","
            << r.pred.bg_illuminant_id << "," << r.pred.predicted_chip << "," << r.top1 << ","
            << r.top5 << "," << r.muns3 << "," << r.de_d65 << "," << r.de_i << "," << r.cci << ","
            << r.cci_defined << "," << r.denominator << "\n";
    }
}

}  // namespace cclab
