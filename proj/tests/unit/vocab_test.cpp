#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>
#include <string>

#include "fednlp/errors.hpp"
#include "fednlp/rng.hpp"
#include "fednlp/vocab.hpp"

using namespace fednlp;

namespace {

ConceptDoc doc(std::vector<ConceptId> tokens) { return ConceptDoc{std::move(tokens)}; }

double entry_or_zero(const SparseVector& v, ConceptId i) {
    for (const auto& [idx, val] : v.entries) {
        if (idx == i) return val;
    }
    return 0.0;
}

}  // namespace

TEST_CASE("count_vector tallies repeated tokens") {
    const SparseVector v = count_vector(doc({2, 2, 5}), 8);
    CHECK(v.dims == 8);
    REQUIRE(v.entries.size() == 2);
    CHECK(v.entries[0] == std::pair<ConceptId, double>{2, 2.0});
    CHECK(v.entries[1] == std::pair<ConceptId, double>{5, 1.0});
}

TEST_CASE("count_vector of an empty document is empty") {
    const SparseVector v = count_vector(doc({}), 8);
    CHECK(v.entries.empty());
    CHECK(v.dims == 8);
}

TEST_CASE("count_vector conserves token mass") {
    std::mt19937_64 rng = make_rng(17);
    std::uniform_int_distribution<ConceptId> tok(0, 19);
    std::vector<ConceptId> tokens(100);
    for (ConceptId& t : tokens) t = tok(rng);
    const SparseVector v = count_vector(doc(tokens), 20);
    double mass = 0;
    for (const auto& [idx, val] : v.entries) {
        CHECK(val > 0.0);
        mass += val;
    }
    CHECK(mass == 100.0);
    // Entries sorted by index, no duplicates.
    for (std::size_t i = 1; i < v.entries.size(); ++i) {
        CHECK(v.entries[i - 1].first < v.entries[i].first);
    }
}

TEST_CASE("count_vector rejects out-of-range tokens") {
    CHECK_THROWS_AS(count_vector(doc({8}), 8), VocabError);
}

TEST_CASE("idf of a token present in every document is exactly 1") {
    const std::vector<ConceptDoc> docs = {doc({0, 1}), doc({0, 2}), doc({0, 0, 3})};
    const IdfTable t = fit_idf(docs, 4);
    CHECK(t.num_docs == 3);
    CHECK(t.idf[0] == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("idf of an absent token is ln(4)+1 over three documents") {
    const std::vector<ConceptDoc> docs = {doc({0}), doc({1}), doc({2})};
    const IdfTable t = fit_idf(docs, 4);
    CHECK(t.idf[3] == doctest::Approx(std::log(4.0) + 1.0).epsilon(1e-12));
}

TEST_CASE("single-document corpus gives idf 1 for present tokens") {
    const IdfTable t = fit_idf({doc({0, 0, 2})}, 3);
    CHECK(t.idf[0] == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(t.idf[2] == doctest::Approx(1.0).epsilon(1e-15));
    // absent token: ln(2/1)+1
    CHECK(t.idf[1] == doctest::Approx(std::log(2.0) + 1.0).epsilon(1e-12));
}

TEST_CASE("fit_idf requires documents and positive dims") {
    CHECK_THROWS_AS(fit_idf({}, 4), FitError);
    CHECK_THROWS_AS(fit_idf({doc({0})}, 0), VocabError);
}

TEST_CASE("tfidf of a single-axis document normalizes to 1") {
    IdfTable t;
    t.dims = 2;
    t.idf = {1.0, 1.0};
    t.num_docs = 1;
    const SparseVector v = tfidf_vector(doc({0, 0}), t);
    REQUIRE(v.entries.size() == 1);
    CHECK(v.entries[0].first == 0);
    CHECK(v.entries[0].second == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("tfidf of an empty document is the empty vector") {
    IdfTable t;
    t.dims = 2;
    t.idf = {1.0, 1.0};
    t.num_docs = 1;
    CHECK(tfidf_vector(doc({}), t).entries.empty());
}

TEST_CASE("tfidf matches a hand-computed 3-document table") {
    // Corpus: d0=[0,0,1], d1=[1,2], d2=[1]. N=3, df = {0:1, 1:3, 2:1}.
    //   idf0 = ln(4/2)+1, idf1 = ln(4/4)+1 = 1, idf2 = ln(4/2)+1.
    const std::vector<ConceptDoc> docs = {doc({0, 0, 1}), doc({1, 2}), doc({1})};
    const IdfTable t = fit_idf(docs, 3);
    const double idf0 = std::log(2.0) + 1.0;
    CHECK(t.idf[0] == doctest::Approx(idf0).epsilon(1e-12));
    CHECK(t.idf[1] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(t.idf[2] == doctest::Approx(idf0).epsilon(1e-12));

    // d0: raw = (2*idf0, 1, 0); normalize by sqrt(4*idf0^2 + 1).
    {
        const SparseVector v = tfidf_vector(docs[0], t);
        const double norm = std::sqrt(4.0 * idf0 * idf0 + 1.0);
        CHECK(entry_or_zero(v, 0) == doctest::Approx(2.0 * idf0 / norm).epsilon(1e-12));
        CHECK(entry_or_zero(v, 1) == doctest::Approx(1.0 / norm).epsilon(1e-12));
        CHECK(entry_or_zero(v, 2) == 0.0);
    }
    // d1: raw = (0, 1, idf0); normalize by sqrt(1 + idf0^2).
    {
        const SparseVector v = tfidf_vector(docs[1], t);
        const double norm = std::sqrt(1.0 + idf0 * idf0);
        CHECK(entry_or_zero(v, 1) == doctest::Approx(1.0 / norm).epsilon(1e-12));
        CHECK(entry_or_zero(v, 2) == doctest::Approx(idf0 / norm).epsilon(1e-12));
    }
    // d2: single token -> unit axis.
    {
        const SparseVector v = tfidf_vector(docs[2], t);
        REQUIRE(v.entries.size() == 1);
        CHECK(v.entries[0].second == doctest::Approx(1.0).epsilon(1e-15));
    }
}

TEST_CASE("tfidf vectors have unit L2 norm") {
    std::mt19937_64 rng = make_rng(23);
    std::uniform_int_distribution<ConceptId> tok(0, 11);
    std::uniform_int_distribution<int> len(1, 30);
    std::vector<ConceptDoc> docs;
    for (int i = 0; i < 12; ++i) {
        std::vector<ConceptId> tokens(static_cast<std::size_t>(len(rng)));
        for (ConceptId& t : tokens) t = tok(rng);
        docs.push_back(doc(std::move(tokens)));
    }
    const IdfTable t = fit_idf(docs, 12);
    for (const ConceptDoc& d : docs) {
        CHECK(tfidf_vector(d, t).l2_norm() == doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("tfidf is invariant to token order") {
    const std::vector<ConceptDoc> docs = {doc({0, 1, 1, 2}), doc({3})};
    const IdfTable t = fit_idf(docs, 4);
    const SparseVector a = tfidf_vector(doc({0, 1, 1, 2}), t);
    const SparseVector b = tfidf_vector(doc({2, 1, 0, 1}), t);
    REQUIRE(a.entries.size() == b.entries.size());
    for (std::size_t i = 0; i < a.entries.size(); ++i) {
        CHECK(a.entries[i].first == b.entries[i].first);
        CHECK(a.entries[i].second == doctest::Approx(b.entries[i].second).epsilon(1e-15));
    }
}

TEST_CASE("fit_idf is invariant to document order") {
    const std::vector<ConceptDoc> docs = {doc({0, 0, 1}), doc({1, 2}), doc({1})};
    const std::vector<ConceptDoc> shuffled = {docs[2], docs[0], docs[1]};
    const IdfTable a = fit_idf(docs, 3);
    const IdfTable b = fit_idf(shuffled, 3);
    for (int i = 0; i < 3; ++i) CHECK(a.idf[static_cast<std::size_t>(i)] == b.idf[static_cast<std::size_t>(i)]);
}

TEST_CASE("idf table round-trips through the two-column text format") {
    const std::vector<ConceptDoc> docs = {doc({0, 0, 1}), doc({1, 2}), doc({4})};
    const IdfTable t = fit_idf(docs, 5);
    const std::string path = "idf_roundtrip_test.tsv";
    save_idf(path, t);
    const IdfTable back = load_idf(path);
    std::remove(path.c_str());
    CHECK(back.dims == t.dims);
    REQUIRE(back.idf.size() == t.idf.size());
    for (std::size_t i = 0; i < t.idf.size(); ++i) CHECK(back.idf[i] == t.idf[i]);
}

TEST_CASE("tfidf rejects mismatched dimensions") {
    IdfTable t;
    t.dims = 2;
    t.idf = {1.0, 1.0};
    t.num_docs = 1;
    CHECK_THROWS_AS(tfidf_vector(doc({5}), t), VocabError);
}
