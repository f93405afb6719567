#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "fednlp/corpus.hpp"

namespace fednlp {

// Square tally of true class (row) against predicted class (column), over
// a fixed ordered class list.
struct ConfusionTable {
    std::vector<ClassLabel> classes;
    std::vector<std::int64_t> counts;  // row-major [C, C]

    int num_classes() const { return static_cast<int>(classes.size()); }
    std::int64_t at(int true_class, int pred_class) const {
        return counts[static_cast<std::size_t>(true_class * num_classes() + pred_class)];
    }
    std::int64_t total() const;
};

ConfusionTable confusion(const std::vector<ClassLabel>& true_labels,
                         const std::vector<ClassLabel>& pred_labels,
                         const std::vector<ClassLabel>& classes);

struct Prf {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

enum class Averaging { Macro };

// Per-class P/R/F1 for one row/column of the table; zero denominators
// yield 0 by convention.
Prf prf_class(const ConfusionTable& table, int class_index);

// Macro average over every class in the table, including classes with no
// support (their zeros count toward the mean).
Prf prf(const ConfusionTable& table, Averaging averaging = Averaging::Macro);

struct MetricsReport {
    std::map<DiseaseId, Prf> per_disease;
    Prf average;
};

// Unweighted mean per metric column over the disease rows.
MetricsReport aggregate_report(const std::map<DiseaseId, Prf>& per_disease);

// `disease,precision,recall,f1` rows in ascending disease order, then an
// AVERAGE row; values fixed to 6 decimals so identical runs emit
// identical bytes.
std::string report_csv(const MetricsReport& report);
void write_report_csv(const std::string& path, const MetricsReport& report);

std::string report_json(const MetricsReport& report);
void write_report_json(const std::string& path, const MetricsReport& report);
MetricsReport load_report_json(const std::string& path);

// Elementwise mean and sample standard deviation across seed runs; all
// reports must cover the same diseases.
struct ReportSummary {
    MetricsReport mean;
    MetricsReport stddev;
};

ReportSummary summarize_reports(const std::vector<MetricsReport>& reports);

}  // namespace fednlp
