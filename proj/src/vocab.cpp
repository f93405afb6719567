#include "fednlp/vocab.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

namespace fednlp {

double SparseVector::l2_norm() const {
    double sq = 0.0;
    for (const auto& [i, v] : entries) sq += v * v;
    return std::sqrt(sq);
}

SparseVector count_vector(const ConceptDoc& doc, int dims) {
    if (dims <= 0) throw VocabError("count_vector: dims must be positive");
    std::map<ConceptId, double> counts;
    for (ConceptId t : doc.tokens) {
        if (t >= static_cast<ConceptId>(dims)) {
            throw VocabError("token " + std::to_string(t) + " outside vocabulary of size " +
                             std::to_string(dims));
        }
        counts[t] += 1.0;
    }
    SparseVector v;
    v.dims = dims;
    v.entries.assign(counts.begin(), counts.end());
    return v;
}

IdfTable fit_idf(const std::vector<ConceptDoc>& docs, int dims) {
    if (docs.empty()) throw FitError("fit_idf: empty corpus");
    if (dims <= 0) throw VocabError("fit_idf: dims must be positive");
    std::vector<std::int64_t> df(static_cast<std::size_t>(dims), 0);
    std::vector<std::int64_t> last_doc(static_cast<std::size_t>(dims), -1);
    for (std::size_t d = 0; d < docs.size(); ++d) {
        for (ConceptId t : docs[d].tokens) {
            if (t >= static_cast<ConceptId>(dims)) {
                throw VocabError("token " + std::to_string(t) + " outside vocabulary of size " +
                                 std::to_string(dims));
            }
            if (last_doc[t] != static_cast<std::int64_t>(d)) {
                last_doc[t] = static_cast<std::int64_t>(d);
                ++df[t];
            }
        }
    }
    IdfTable table;
    table.dims = dims;
    table.num_docs = static_cast<std::int64_t>(docs.size());
    table.idf.resize(static_cast<std::size_t>(dims));
    const double n = static_cast<double>(table.num_docs);
    for (int i = 0; i < dims; ++i) {
        table.idf[static_cast<std::size_t>(i)] =
            std::log((1.0 + n) / (1.0 + static_cast<double>(df[static_cast<std::size_t>(i)]))) + 1.0;
    }
    return table;
}

SparseVector tfidf_vector(const ConceptDoc& doc, const IdfTable& idf) {
    if (idf.dims <= 0 || idf.idf.size() != static_cast<std::size_t>(idf.dims)) {
        throw VocabError("tfidf_vector: malformed idf table");
    }
    SparseVector v = count_vector(doc, idf.dims);
    for (auto& [i, value] : v.entries) {
        value *= idf.idf[i];
    }
    const double norm = v.l2_norm();
    if (norm > 0.0) {
        for (auto& [i, value] : v.entries) value /= norm;
    }
    return v;
}

void save_idf(const std::string& path, const IdfTable& table) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open " + path + " for writing");
    out.precision(17);
    for (int i = 0; i < table.dims; ++i) {
        out << i << '\t' << table.idf[static_cast<std::size_t>(i)] << '\n';
    }
}

IdfTable load_idf(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path);
    IdfTable table;
    long long index;
    double value;
    while (in >> index >> value) {
        if (index != table.dims) throw DataError("idf file rows must be consecutive indices");
        table.idf.push_back(value);
        ++table.dims;
    }
    if (table.dims == 0) throw DataError("idf file " + path + " is empty");
    return table;
}

}  // namespace fednlp
