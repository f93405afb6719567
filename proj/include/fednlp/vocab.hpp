#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "fednlp/corpus.hpp"
#include "fednlp/errors.hpp"

namespace fednlp {

// Sparse vector as a sorted coordinate list; no explicit zeros.
struct SparseVector {
    int dims = 0;
    std::vector<std::pair<ConceptId, double>> entries;

    double l2_norm() const;
};

// Smoothed inverse document frequencies over a fixed-size vocabulary.
struct IdfTable {
    int dims = 0;
    std::vector<double> idf;
    std::int64_t num_docs = 0;
};

// Term counts: entry (i, c) iff token i occurs c > 0 times.
SparseVector count_vector(const ConceptDoc& doc, int dims);

// idf[i] = ln((1 + num_docs) / (1 + df_i)) + 1.
IdfTable fit_idf(const std::vector<ConceptDoc>& docs, int dims);

// tf * idf, L2-normalized; an empty document maps to the empty vector.
SparseVector tfidf_vector(const ConceptDoc& doc, const IdfTable& idf);

// Two-column text format: index<TAB>idf, one row per vocabulary entry.
void save_idf(const std::string& path, const IdfTable& table);
IdfTable load_idf(const std::string& path);

}  // namespace fednlp
