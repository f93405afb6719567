#include "fednlp/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "fednlp/errors.hpp"

namespace fednlp {

namespace {

int class_index(const std::vector<ClassLabel>& classes, ClassLabel label) {
    for (std::size_t i = 0; i < classes.size(); ++i) {
        if (classes[i] == label) return static_cast<int>(i);
    }
    throw LabelError("confusion: label " + to_string(label) + " outside the class list");
}

double ratio(std::int64_t num, std::int64_t den) {
    return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

void append_row(std::ostream& out, const std::string& key, const Prf& row) {
    out << key << ',' << std::fixed << std::setprecision(6) << row.precision << ','
        << row.recall << ',' << row.f1 << '\n';
}

nlohmann::json prf_to_json(const Prf& row) {
    return {{"precision", row.precision}, {"recall", row.recall}, {"f1", row.f1}};
}

Prf prf_from_json(const nlohmann::json& j) {
    Prf row;
    row.precision = j.at("precision").get<double>();
    row.recall = j.at("recall").get<double>();
    row.f1 = j.at("f1").get<double>();
    return row;
}

}  // namespace

std::int64_t ConfusionTable::total() const {
    std::int64_t sum = 0;
    for (std::int64_t c : counts) sum += c;
    return sum;
}

ConfusionTable confusion(const std::vector<ClassLabel>& true_labels,
                         const std::vector<ClassLabel>& pred_labels,
                         const std::vector<ClassLabel>& classes) {
    if (classes.empty()) throw ConfigError("confusion: empty class list");
    if (true_labels.size() != pred_labels.size()) {
        throw ShapeError("confusion: " + std::to_string(true_labels.size()) + " true vs " +
                         std::to_string(pred_labels.size()) + " predicted labels");
    }
    ConfusionTable table;
    table.classes = classes;
    table.counts.assign(classes.size() * classes.size(), 0);
    for (std::size_t i = 0; i < true_labels.size(); ++i) {
        const int t = class_index(classes, true_labels[i]);
        const int p = class_index(classes, pred_labels[i]);
        table.counts[static_cast<std::size_t>(t * table.num_classes() + p)] += 1;
    }
    return table;
}

Prf prf_class(const ConfusionTable& table, int class_index) {
    const int c = table.num_classes();
    if (class_index < 0 || class_index >= c) {
        throw ShapeError("prf_class: class index " + std::to_string(class_index) +
                         " outside table of " + std::to_string(c) + " classes");
    }
    const std::int64_t tp = table.at(class_index, class_index);
    std::int64_t fp = 0;
    std::int64_t fn = 0;
    for (int k = 0; k < c; ++k) {
        if (k == class_index) continue;
        fp += table.at(k, class_index);
        fn += table.at(class_index, k);
    }
    Prf row;
    row.precision = ratio(tp, tp + fp);
    row.recall = ratio(tp, tp + fn);
    const double pr = row.precision + row.recall;
    row.f1 = pr == 0.0 ? 0.0 : 2.0 * row.precision * row.recall / pr;
    return row;
}

Prf prf(const ConfusionTable& table, Averaging averaging) {
    (void)averaging;  // Macro is the only mode
    if (table.classes.empty()) throw ConfigError("prf: empty table");
    Prf sum;
    for (int k = 0; k < table.num_classes(); ++k) {
        const Prf row = prf_class(table, k);
        sum.precision += row.precision;
        sum.recall += row.recall;
        sum.f1 += row.f1;
    }
    const double n = static_cast<double>(table.num_classes());
    return {sum.precision / n, sum.recall / n, sum.f1 / n};
}

MetricsReport aggregate_report(const std::map<DiseaseId, Prf>& per_disease) {
    if (per_disease.empty()) throw DataError("aggregate_report: no disease rows");
    MetricsReport report;
    report.per_disease = per_disease;
    Prf sum;
    for (const auto& [id, row] : per_disease) {
        (void)id;
        sum.precision += row.precision;
        sum.recall += row.recall;
        sum.f1 += row.f1;
    }
    const double n = static_cast<double>(per_disease.size());
    report.average = {sum.precision / n, sum.recall / n, sum.f1 / n};
    return report;
}

std::string report_csv(const MetricsReport& report) {
    std::ostringstream out;
    out << "disease,precision,recall,f1\n";
    for (const auto& [id, row] : report.per_disease) append_row(out, std::to_string(id), row);
    append_row(out, "AVERAGE", report.average);
    return out.str();
}

void write_report_csv(const std::string& path, const MetricsReport& report) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("write_report_csv: cannot open " + path);
    out << report_csv(report);
}

std::string report_json(const MetricsReport& report) {
    nlohmann::json j;
    j["diseases"] = nlohmann::json::array();
    for (const auto& [id, row] : report.per_disease) {
        nlohmann::json entry = prf_to_json(row);
        entry["disease"] = id;
        j["diseases"].push_back(entry);
    }
    j["average"] = prf_to_json(report.average);
    return j.dump(2) + "\n";
}

void write_report_json(const std::string& path, const MetricsReport& report) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("write_report_json: cannot open " + path);
    out << report_json(report);
}

MetricsReport load_report_json(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("load_report_json: cannot open " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("load_report_json: " + path + ": " + e.what());
    }
    MetricsReport report;
    for (const auto& entry : j.at("diseases")) {
        report.per_disease[entry.at("disease").get<DiseaseId>()] = prf_from_json(entry);
    }
    report.average = prf_from_json(j.at("average"));
    return report;
}

ReportSummary summarize_reports(const std::vector<MetricsReport>& reports) {
    if (reports.empty()) throw DataError("summarize_reports: no reports");
    const auto& keys = reports.front().per_disease;
    for (const auto& r : reports) {
        if (r.per_disease.size() != keys.size() ||
            !std::equal(keys.begin(), keys.end(), r.per_disease.begin(),
                        [](const auto& a, const auto& b) { return a.first == b.first; })) {
            throw ShapeError("summarize_reports: reports cover different diseases");
        }
    }

    const double n = static_cast<double>(reports.size());
    ReportSummary summary;

    // Mean/std of one metric column over seeds, applied per cell.
    auto column = [&](auto getter) {
        std::map<DiseaseId, std::pair<double, double>> stats;  // id -> (mean, std)
        for (const auto& [id, unused] : keys) {
            (void)unused;
            double mean = 0.0;
            for (const auto& r : reports) mean += getter(r.per_disease.at(id));
            mean /= n;
            double var = 0.0;
            for (const auto& r : reports) {
                const double d = getter(r.per_disease.at(id)) - mean;
                var += d * d;
            }
            const double sd = reports.size() > 1 ? std::sqrt(var / (n - 1.0)) : 0.0;
            stats[id] = {mean, sd};
        }
        return stats;
    };

    const auto p = column([](const Prf& r) { return r.precision; });
    const auto rc = column([](const Prf& r) { return r.recall; });
    const auto f = column([](const Prf& r) { return r.f1; });
    for (const auto& [id, unused] : keys) {
        (void)unused;
        summary.mean.per_disease[id] = {p.at(id).first, rc.at(id).first, f.at(id).first};
        summary.stddev.per_disease[id] = {p.at(id).second, rc.at(id).second, f.at(id).second};
    }
    summary.mean = aggregate_report(summary.mean.per_disease);

    // The stddev "average" row is the seed-to-seed deviation of each
    // report's own average, not an average of the per-disease deviations.
    auto avg_stat = [&](auto getter) {
        double mean = 0.0;
        for (const auto& r : reports) mean += getter(r.average);
        mean /= n;
        double var = 0.0;
        for (const auto& r : reports) {
            const double d = getter(r.average) - mean;
            var += d * d;
        }
        return reports.size() > 1 ? std::sqrt(var / (n - 1.0)) : 0.0;
    };
    summary.stddev.average = {avg_stat([](const Prf& r) { return r.precision; }),
                              avg_stat([](const Prf& r) { return r.recall; }),
                              avg_stat([](const Prf& r) { return r.f1; })};
    return summary;
}

}  // namespace fednlp
