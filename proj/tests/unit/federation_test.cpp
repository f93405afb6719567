#include <doctest.h>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "fednlp/corpus.hpp"
#include "fednlp/errors.hpp"
#include "fednlp/federation.hpp"
#include "fednlp/phenotype.hpp"
#include "fednlp/representation.hpp"
#include "fednlp/rng.hpp"

using namespace fednlp;

namespace {

ParamSet scalar_set(double v) {
    ParamSet s;
    s.add("x", Tensor({1}, {v}));
    return s;
}

bool param_sets_identical(const ParamSet& a, const ParamSet& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a.name(i) != b.name(i)) return false;
        if (a.tensor(i).shape() != b.tensor(i).shape()) return false;
        for (std::int64_t j = 0; j < a.tensor(i).numel(); ++j) {
            if (a.tensor(i)[j] != b.tensor(i)[j]) return false;
        }
    }
    return true;
}

SynthConfig small_config() {
    SynthConfig cfg;
    cfg.vocab_size = 40;
    cfg.num_codes = 6;
    cfg.num_diseases = 3;
    cfg.patients_pretrain = 60;
    cfg.patients_phenotype = 120;
    cfg.doc_length_min = 8;
    cfg.doc_length_max = 16;
    cfg.latent_noise = 0.3;
    cfg.seed = 19;
    return cfg;
}

}  // namespace

TEST_CASE("single-model average is returned unchanged") {
    ParamSet m = scalar_set(0.123456789);
    const ParamSet out = weighted_average({m}, {7});
    CHECK(param_sets_identical(out, m));
}

TEST_CASE("two scalars 0 and 4 with counts 1 and 3 average to 3") {
    const ParamSet out = weighted_average({scalar_set(0.0), scalar_set(4.0)}, {1, 3});
    CHECK(out.tensor("x")[0] == doctest::Approx(3.0).epsilon(1e-15));
}

TEST_CASE("equal counts reduce to the arithmetic mean") {
    ParamSet a, b, c;
    a.add("w", Tensor({2}, {1.0, 10.0}));
    b.add("w", Tensor({2}, {2.0, 20.0}));
    c.add("w", Tensor({2}, {3.0, 30.0}));
    const ParamSet out = weighted_average({a, b, c}, {5, 5, 5});
    CHECK(out.tensor("w")[0] == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(out.tensor("w")[1] == doctest::Approx(20.0).epsilon(1e-12));
}

TEST_CASE("weighted_average validates its arguments") {
    CHECK_THROWS_AS(weighted_average({}, {}), ConfigError);
    CHECK_THROWS_AS(weighted_average({scalar_set(1.0)}, {1, 2}), ShapeError);
    CHECK_THROWS_AS(weighted_average({scalar_set(1.0), scalar_set(2.0)}, {1, 0}), WeightError);
    CHECK_THROWS_AS(weighted_average({scalar_set(1.0), scalar_set(2.0)}, {1, -3}), WeightError);

    ParamSet other;
    other.add("y", Tensor({1}, {1.0}));
    CHECK_THROWS_AS(weighted_average({scalar_set(1.0), other}, {1, 1}), ShapeError);
}

TEST_CASE("averaging is equivariant under joint permutation") {
    std::mt19937_64 rng = make_rng(83);
    std::uniform_real_distribution<double> coef(-3.0, 3.0);
    for (int trial = 0; trial < 30; ++trial) {
        const int k = 2 + static_cast<int>(rng() % 4);
        std::vector<ParamSet> models;
        std::vector<std::int64_t> counts;
        for (int i = 0; i < k; ++i) {
            ParamSet m;
            m.add("a", Tensor({3}, {coef(rng), coef(rng), coef(rng)}));
            m.add("b", Tensor({1}, {coef(rng)}));
            models.push_back(std::move(m));
            counts.push_back(1 + static_cast<std::int64_t>(rng() % 50));
        }
        const ParamSet base = weighted_average(models, counts);

        std::vector<std::size_t> order(models.size());
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), rng);
        std::vector<ParamSet> shuffled_models;
        std::vector<std::int64_t> shuffled_counts;
        for (std::size_t i : order) {
            shuffled_models.push_back(models[i]);
            shuffled_counts.push_back(counts[i]);
        }
        const ParamSet perm = weighted_average(shuffled_models, shuffled_counts);
        for (std::size_t i = 0; i < base.size(); ++i) {
            for (std::int64_t j = 0; j < base.tensor(i).numel(); ++j) {
                CHECK(base.tensor(i)[j] == doctest::Approx(perm.tensor(i)[j]).epsilon(1e-12));
            }
        }

        // Convexity: every coordinate stays inside the inputs' hull.
        for (std::size_t i = 0; i < base.size(); ++i) {
            for (std::int64_t j = 0; j < base.tensor(i).numel(); ++j) {
                double lo = 1e300, hi = -1e300;
                for (const ParamSet& m : models) {
                    lo = std::min(lo, m.tensor(i)[j]);
                    hi = std::max(hi, m.tensor(i)[j]);
                }
                CHECK(base.tensor(i)[j] >= lo - 1e-12);
                CHECK(base.tensor(i)[j] <= hi + 1e-12);
            }
        }
    }
}

TEST_CASE("federation config validation") {
    FedConfig cfg;
    cfg.local_spec = TrainSpec{1, 0.1, 4, 0};
    CHECK_NOTHROW(cfg.validate());
    cfg.global_rounds = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg.global_rounds = 1;
    cfg.num_sites = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("one-site federation is bitwise identical to plain local training") {
    const SynthCorpus corpus = generate_corpus(small_config());
    const Silo silo{0, corpus.pretrain};
    const DanParams init = init_params(40, 6, 6, 6, 4);

    FedConfig cfg;
    cfg.num_sites = 1;
    cfg.global_rounds = 3;
    cfg.local_spec = TrainSpec{2, 0.2, 8, 21};
    cfg.stage = FedStage::Representation;

    const FederatedRun fed = run_federated_dan({silo}, cfg, init);
    const DanParams local = train_local_dan(init, silo, TrainSpec{6, 0.2, 8, 21});
    CHECK(param_sets_identical(fed.params, local.param_set()));
    CHECK(fed.rounds.size() == 3);
}

TEST_CASE("identical silos aggregate to the shared local model") {
    const SynthCorpus corpus = generate_corpus(small_config());
    const Silo silo{0, corpus.pretrain};
    const Silo copy1{1, corpus.pretrain};
    const Silo copy2{2, corpus.pretrain};
    const DanParams init = init_params(40, 6, 6, 6, 4);

    FedConfig cfg;
    cfg.num_sites = 3;
    cfg.global_rounds = 1;
    cfg.local_spec = TrainSpec{1, 0.2, 16, 21};
    cfg.stage = FedStage::Representation;

    const FederatedRun fed = run_federated_dan({silo, copy1, copy2}, cfg, init);
    const DanParams local = train_local_dan(init, silo, cfg.local_spec);
    // All three sites train identically, so the convex combination must
    // equal the common value up to summation rounding.
    for (std::size_t i = 0; i < fed.params.size(); ++i) {
        for (std::int64_t j = 0; j < fed.params.tensor(i).numel(); ++j) {
            CHECK(fed.params.tensor(i)[j] ==
                  doctest::Approx(local.param_set().tensor(i)[j]).epsilon(1e-12));
        }
    }
}

TEST_CASE("serial and parallel federation agree bitwise") {
    const SynthCorpus corpus = generate_corpus(small_config());
    const std::vector<Silo> silos = partition_silos(corpus.pretrain, 3, 77);
    const DanParams init = init_params(40, 6, 6, 6, 4);

    FedConfig cfg;
    cfg.num_sites = 3;
    cfg.global_rounds = 2;
    cfg.local_spec = TrainSpec{1, 0.2, 8, 21};
    cfg.stage = FedStage::Representation;

    const FederatedRun parallel = run_federated_dan(silos, cfg, init, Activation::Relu, true);
    const FederatedRun serial = run_federated_dan(silos, cfg, init, Activation::Relu, false);
    CHECK(param_sets_identical(parallel.params, serial.params));
    REQUIRE(parallel.rounds.size() == serial.rounds.size());
    for (std::size_t t = 0; t < parallel.rounds.size(); ++t) {
        CHECK(parallel.rounds[t].digest == serial.rounds[t].digest);
        CHECK(parallel.rounds[t].site_loss == serial.rounds[t].site_loss);
    }
}

TEST_CASE("a failing site aborts the round with a site-indexed error") {
    FedConfig cfg;
    cfg.num_sites = 3;
    cfg.global_rounds = 2;
    cfg.local_spec = TrainSpec{1, 0.1, 4, 0};

    const SiteTrainer trainer = [](int site, const ParamSet& start, int) -> LocalResult {
        if (site == 2) throw DataError("disk on fire");
        return {start, 0.5};
    };
    try {
        run_federated({10, 10, 10}, cfg, scalar_set(1.0), trainer, false);
        FAIL("expected FederationError");
    } catch (const FederationError& e) {
        const std::string what = e.what();
        CHECK(what.find("site 2") != std::string::npos);
        CHECK(what.find("round 1") != std::string::npos);
        CHECK(what.find("disk on fire") != std::string::npos);
    }
}

TEST_CASE("run_federated validates counts against the config") {
    FedConfig cfg;
    cfg.num_sites = 2;
    cfg.local_spec = TrainSpec{1, 0.1, 4, 0};
    const SiteTrainer trainer = [](int, const ParamSet& start, int) -> LocalResult {
        return {start, 0.0};
    };
    CHECK_THROWS_AS(run_federated({5}, cfg, scalar_set(1.0), trainer), ConfigError);
    CHECK_THROWS_AS(run_federated({5, 0}, cfg, scalar_set(1.0), trainer), WeightError);
}

TEST_CASE("epoch offsets advance round by round") {
    FedConfig cfg;
    cfg.num_sites = 1;
    cfg.global_rounds = 4;
    cfg.local_spec = TrainSpec{3, 0.1, 4, 0};
    std::vector<int> offsets;
    const SiteTrainer trainer = [&](int, const ParamSet& start, int offset) -> LocalResult {
        offsets.push_back(offset);
        return {start, 0.0};
    };
    run_federated({5}, cfg, scalar_set(1.0), trainer, false);
    CHECK(offsets == std::vector<int>{0, 3, 6, 9});
}

TEST_CASE("round logs serialize one JSON line per round and site") {
    RoundLog r1{1, {10, 20}, {0.5, 0.25}, "abc"};
    RoundLog r2{2, {10, 20}, {0.4, 0.2}, "def"};
    const std::string path = "round_logs_test.jsonl";
    write_round_logs(path, {r1, r2});

    std::ifstream in(path);
    std::vector<nlohmann::json> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty()) lines.push_back(nlohmann::json::parse(line));
    }
    in.close();
    std::remove(path.c_str());

    REQUIRE(lines.size() == 4);
    CHECK(lines[0]["round"] == 1);
    CHECK(lines[0]["site"] == 0);
    CHECK(lines[0]["samples"] == 10);
    CHECK(lines[0]["loss"] == 0.5);
    CHECK(lines[0]["digest"] == "abc");
    CHECK(lines[3]["round"] == 2);
    CHECK(lines[3]["site"] == 1);
}

TEST_CASE("federated svm with one site matches plain training") {
    // Separable 1-D task split across rounds.
    PhenotypeDataset ds;
    ds.disease = 0;
    ds.classes = {ClassLabel::Present, ClassLabel::Absent};
    ds.feature_kind = FeatureKind::Representation;
    for (int i = 0; i < 12; ++i) {
        ds.examples.push_back({{i % 2 ? 1.0 : -1.0}, i % 2 ? ClassLabel::Absent : ClassLabel::Present});
    }

    FedConfig cfg;
    cfg.num_sites = 1;
    cfg.global_rounds = 5;
    cfg.local_spec = TrainSpec{1, 0.2, 4, 31};
    cfg.stage = FedStage::Phenotype;

    const SvmModel init = zero_svm(ds.classes, 1, ds.feature_kind);
    const SvmRun fed = run_federated_svm({ds.examples}, cfg, init);
    const SvmModel local = train_svm(ds, TrainSpec{5, 0.2, 4, 31});
    for (std::int64_t i = 0; i < local.weights.numel(); ++i) {
        CHECK(fed.model.weights[i] == local.weights[i]);
    }
    for (std::int64_t i = 0; i < local.biases.numel(); ++i) {
        CHECK(fed.model.biases[i] == local.biases[i]);
    }
}

TEST_CASE("stage mismatches are rejected") {
    const SynthCorpus corpus = generate_corpus(small_config());
    const Silo silo{0, corpus.pretrain};
    FedConfig cfg;
    cfg.num_sites = 1;
    cfg.global_rounds = 1;
    cfg.local_spec = TrainSpec{1, 0.1, 8, 0};
    cfg.stage = FedStage::Phenotype;  // wrong stage for a DAN run
    CHECK_THROWS_AS(run_federated_dan({silo}, cfg, init_params(40, 4, 4, 6, 1)), ConfigError);

    cfg.stage = FedStage::Representation;  // wrong stage for an SVM run
    const SvmModel init = zero_svm({ClassLabel::Present, ClassLabel::Absent}, 1,
                                   FeatureKind::Representation);
    CHECK_THROWS_AS(run_federated_svm({{{{0.5}, ClassLabel::Present}}}, cfg, init), ConfigError);
}

TEST_CASE("three-site federated phenotyping stays close to pooled training") {
    // Desk analog of the paper's centralized-vs-federated comparison:
    // macro F1 of K=3 federation within 0.05 of pooled training.
    const SynthConfig cfg = small_config();
    const SynthCorpus corpus = generate_corpus(cfg);

    // TF-IDF features fit on the training records.
    std::vector<PatientRecord> train(corpus.phenotype.begin(), corpus.phenotype.end() - 30);
    std::vector<PatientRecord> test(corpus.phenotype.end() - 30, corpus.phenotype.end());
    std::vector<ConceptDoc> docs;
    for (const auto& r : train) docs.push_back(r.doc);
    const TfidfFeatures features(fit_idf(docs, cfg.vocab_size));

    const std::vector<DiseaseId> diseases = diseases_in(train);
    REQUIRE_FALSE(diseases.empty());

    FedConfig fed_cfg;
    fed_cfg.num_sites = 3;
    fed_cfg.global_rounds = 40;
    fed_cfg.local_spec = TrainSpec{1, 0.5, 32, 41};
    fed_cfg.stage = FedStage::Phenotype;

    std::map<DiseaseId, SvmModel> central, federated;
    for (DiseaseId d : diseases) {
        const std::vector<ClassLabel> classes = decide_classes(train, d, 10);
        const PhenotypeDataset pooled = build_dataset(train, d, classes, features);
        central[d] = train_svm(pooled, TrainSpec{40, 0.5, 32, 41});

        const std::vector<Silo> silos = partition_silos(train, 3, 99);
        std::vector<std::vector<PhenotypeExample>> site_examples;
        for (const Silo& s : silos) {
            site_examples.push_back(build_dataset(s.records, d, classes, features).examples);
        }
        const SvmModel init = zero_svm(classes, features.dims(), features.kind());
        federated[d] = run_federated_svm(site_examples, fed_cfg, init).model;
    }
    const MetricsReport central_report = evaluate_models(central, test, features);
    const MetricsReport federated_report = evaluate_models(federated, test, features);
    CHECK(std::abs(central_report.average.f1 - federated_report.average.f1) <= 0.05);
}
