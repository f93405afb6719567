#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <vector>

#include <json.hpp>

#include "fednlp/errors.hpp"
#include "fednlp/experiment.hpp"

using namespace fednlp;

namespace {

SynthConfig tiny_corpus() {
    SynthConfig cfg;
    cfg.vocab_size = 60;
    cfg.num_codes = 6;
    cfg.num_diseases = 3;
    cfg.patients_pretrain = 80;
    cfg.patients_phenotype = 120;
    cfg.doc_length_min = 8;
    cfg.doc_length_max = 16;
    cfg.latent_noise = 0.3;
    cfg.seed = 11;
    return cfg;
}

// Shrinks a stock spec to smoke-test scale.
ExperimentSpec tiny_spec(int id) {
    ExperimentSpec spec = spec_for_id(id);
    spec.corpus = tiny_corpus();
    spec.seeds = {1};
    spec.embed_dim = 8;
    spec.hidden_dim = 8;
    if (spec.fed1) {
        spec.fed1->num_sites = std::min(spec.fed1->num_sites, 2);
        spec.fed1->global_rounds = 2;
        spec.fed1->local_spec.epochs_per_round = 1;
    }
    spec.fed2.num_sites = std::min(spec.fed2.num_sites, 2);
    spec.fed2.global_rounds = 4;
    return spec;
}

std::set<std::int64_t> patient_ids(const std::vector<PatientRecord>& records) {
    std::set<std::int64_t> out;
    for (const auto& r : records) out.insert(r.patient_id);
    return out;
}

}  // namespace

TEST_CASE("the seven ids map to the fixed mode pairs") {
    const std::vector<std::pair<RepMode, PhenoMode>> want = {
        {RepMode::None, PhenoMode::Centralized},
        {RepMode::None, PhenoMode::Federated},
        {RepMode::None, PhenoMode::SingleSource},
        {RepMode::Centralized, PhenoMode::Centralized},
        {RepMode::Centralized, PhenoMode::Federated},
        {RepMode::Federated, PhenoMode::Centralized},
        {RepMode::Federated, PhenoMode::Federated},
    };
    for (int id = 1; id <= 7; ++id) {
        const ExperimentSpec spec = spec_for_id(id);
        CHECK(spec.id == id);
        CHECK(spec.representation == want[static_cast<std::size_t>(id - 1)].first);
        CHECK(spec.phenotyping == want[static_cast<std::size_t>(id - 1)].second);
        CHECK_NOTHROW(spec.validate());
        CHECK(spec.fed1.has_value() == (spec.representation != RepMode::None));
    }
    CHECK_THROWS_AS(spec_for_id(0), ConfigError);
    CHECK_THROWS_AS(spec_for_id(8), ConfigError);
}

TEST_CASE("validation rejects inconsistent mode pairs and misplaced configs") {
    ExperimentSpec spec = spec_for_id(1);
    spec.phenotyping = PhenoMode::Federated;  // id 1 must be centralized
    CHECK_THROWS_AS(spec.validate(), ConfigError);

    spec = spec_for_id(1);
    spec.fed1 = spec_for_id(7).fed1;  // stage-1 config without representation learning
    CHECK_THROWS_AS(spec.validate(), ConfigError);

    spec = spec_for_id(7);
    spec.fed1.reset();  // representation learning without its config
    CHECK_THROWS_AS(spec.validate(), ConfigError);

    spec = spec_for_id(4);
    spec.test_fraction = 1.5;
    CHECK_THROWS_AS(spec.validate(), ConfigError);

    spec = spec_for_id(4);
    spec.embed_dim = 0;
    CHECK_THROWS_AS(spec.validate(), ConfigError);

    spec = spec_for_id(4);
    spec.seeds.clear();
    CHECK_THROWS_AS(spec.validate(), ConfigError);
}

TEST_CASE("mode names round-trip through strings") {
    for (RepMode m : {RepMode::None, RepMode::Centralized, RepMode::Federated}) {
        CHECK(rep_mode_from_string(to_string(m)) == m);
    }
    for (PhenoMode m : {PhenoMode::Centralized, PhenoMode::Federated, PhenoMode::SingleSource}) {
        CHECK(pheno_mode_from_string(to_string(m)) == m);
    }
    CHECK_THROWS_AS(rep_mode_from_string("bogus"), ConfigError);
    CHECK_THROWS_AS(pheno_mode_from_string("bogus"), ConfigError);
}

TEST_CASE("experiment specs round-trip through json") {
    for (int id : {1, 3, 7}) {
        ExperimentSpec spec = tiny_spec(id);
        spec.seeds = {4, 9};
        spec.min_class_count = 12;
        spec.activation = Activation::Tanh;
        const nlohmann::json j = experiment_spec_to_json(spec);
        const ExperimentSpec back = experiment_spec_from_json(j);

        CHECK(back.id == spec.id);
        CHECK(back.representation == spec.representation);
        CHECK(back.phenotyping == spec.phenotyping);
        CHECK(back.seeds == spec.seeds);
        CHECK(back.corpus.vocab_size == spec.corpus.vocab_size);
        CHECK(back.corpus.seed == spec.corpus.seed);
        CHECK(back.min_class_count == 12);
        CHECK(back.activation == Activation::Tanh);
        CHECK(back.fed1.has_value() == spec.fed1.has_value());
        if (spec.fed1) {
            CHECK(back.fed1->num_sites == spec.fed1->num_sites);
            CHECK(back.fed1->global_rounds == spec.fed1->global_rounds);
            CHECK(back.fed1->local_spec.lr == spec.fed1->local_spec.lr);
        }
        CHECK(back.fed2.num_sites == spec.fed2.num_sites);
        CHECK(back.test_fraction == spec.test_fraction);
    }
}

TEST_CASE("partial json overrides the stock spec for its id") {
    const nlohmann::json j = {{"id", 2}, {"seeds", {42}}, {"min_class_count", 5}};
    const ExperimentSpec spec = experiment_spec_from_json(j);
    CHECK(spec.id == 2);
    CHECK(spec.phenotyping == PhenoMode::Federated);
    CHECK(spec.seeds == std::vector<std::uint64_t>{42});
    CHECK(spec.min_class_count == 5);
    CHECK(spec.corpus.vocab_size == spec_for_id(2).corpus.vocab_size);
}

TEST_CASE("the held-out split is deterministic with pinned sizes") {
    const SynthCorpus corpus = generate_corpus(tiny_corpus());
    const SplitRecords a = split_phenotype_records(corpus.phenotype, 0.2, 13);
    const SplitRecords b = split_phenotype_records(corpus.phenotype, 0.2, 13);
    CHECK(a.train.size() == 96);
    CHECK(a.test.size() == 24);
    CHECK(patient_ids(a.train) == patient_ids(b.train));
    CHECK(patient_ids(a.test) == patient_ids(b.test));

    // Train and test are disjoint and exhaustive.
    std::set<std::int64_t> all = patient_ids(a.train);
    for (const auto& r : a.test) CHECK(all.insert(r.patient_id).second);
    CHECK(all.size() == corpus.phenotype.size());

    const SplitRecords c = split_phenotype_records(corpus.phenotype, 0.2, 14);
    CHECK(patient_ids(a.test) != patient_ids(c.test));
}

TEST_CASE("extreme test fractions clamp to at least one record per side") {
    const SynthCorpus corpus = generate_corpus(tiny_corpus());
    const SplitRecords lo = split_phenotype_records(corpus.phenotype, 1e-9, 13);
    CHECK(lo.test.size() == 1);
    const SplitRecords hi = split_phenotype_records(corpus.phenotype, 0.999999, 13);
    CHECK(hi.train.size() == 1);
    CHECK_THROWS_AS(split_phenotype_records(corpus.phenotype, 1.2, 13), ConfigError);
    CHECK_THROWS_AS(split_phenotype_records({}, 0.2, 13), DataError);
}

TEST_CASE("every experiment id sees the same held-out patients for a seed") {
    // The split depends only on (records, fraction, seed); stock specs share
    // the corpus configuration, so the ablation compares like with like.
    const ExperimentSpec one = tiny_spec(1);
    const ExperimentSpec seven = tiny_spec(7);
    SynthConfig c1 = one.corpus;
    SynthConfig c7 = seven.corpus;
    CHECK(c1.seed == c7.seed);
    CHECK(c1.patients_phenotype == c7.patients_phenotype);
}

TEST_CASE("a tiny bag-of-tokens experiment runs end to end and writes artifacts") {
    const ExperimentSpec spec = tiny_spec(1);
    const std::filesystem::path dir = std::filesystem::temp_directory_path() / "fednlp_exp_test";
    std::filesystem::remove_all(dir);

    const ExperimentResult result = run_experiment(spec, dir.string());
    CHECK(result.per_seed.size() == 1);
    CHECK_FALSE(result.summary.mean.per_disease.empty());
    for (const auto& [disease, row] : result.summary.mean.per_disease) {
        CHECK(row.f1 >= 0.0);
        CHECK(row.f1 <= 1.0);
    }

    CHECK(std::filesystem::exists(dir / "config.json"));
    CHECK(std::filesystem::exists(dir / "report_mean.csv"));
    CHECK(std::filesystem::exists(dir / "report_std.csv"));
    CHECK(std::filesystem::exists(dir / "report_mean.json"));
    CHECK(std::filesystem::exists(dir / "seed_1" / "report.csv"));
    CHECK(std::filesystem::exists(dir / "seed_1" / "report.json"));
    CHECK(std::filesystem::exists(dir / "seed_1" / "idf.tsv"));
    CHECK(std::filesystem::exists(dir / "seed_1" / "stage2_rounds.jsonl"));

    const std::ifstream cfg_in(dir / "config.json");
    REQUIRE(cfg_in.good());
    std::stringstream buf;
    buf << cfg_in.rdbuf();
    const nlohmann::json snapshot = nlohmann::json::parse(buf.str());
    CHECK(snapshot.at("id") == 1);
    CHECK(snapshot.at("representation") == "none");

    std::filesystem::remove_all(dir);
}

TEST_CASE("a tiny two-stage federated experiment writes encoder artifacts") {
    const ExperimentSpec spec = tiny_spec(7);
    const std::filesystem::path dir = std::filesystem::temp_directory_path() / "fednlp_exp7_test";
    std::filesystem::remove_all(dir);

    const ExperimentResult result = run_experiment(spec, dir.string());
    CHECK_FALSE(result.summary.mean.per_disease.empty());
    CHECK(std::filesystem::exists(dir / "seed_1" / "encoder.ckpt"));
    CHECK(std::filesystem::exists(dir / "seed_1" / "stage1_rounds.jsonl"));
    CHECK_FALSE(std::filesystem::exists(dir / "seed_1" / "idf.tsv"));

    std::filesystem::remove_all(dir);
}

TEST_CASE("single-source mode averages per-silo runs and keeps per-site models") {
    const ExperimentSpec spec = tiny_spec(3);
    const std::filesystem::path dir = std::filesystem::temp_directory_path() / "fednlp_exp3_test";
    std::filesystem::remove_all(dir);

    const ExperimentResult result = run_experiment(spec, dir.string());
    CHECK_FALSE(result.summary.mean.per_disease.empty());

    // One checkpoint per (disease, site) rather than a single model.
    bool solo_ckpt = false;
    for (const auto& entry : std::filesystem::directory_iterator(dir / "seed_1")) {
        const std::string name = entry.path().filename().string();
        solo_ckpt = solo_ckpt || name.find("_site") != std::string::npos;
    }
    CHECK(solo_ckpt);

    std::filesystem::remove_all(dir);
}

TEST_CASE("repeated seeds produce identical reports") {
    const ExperimentSpec spec = tiny_spec(2);
    const MetricsReport a = run_experiment_seed(spec, 5);
    const MetricsReport b = run_experiment_seed(spec, 5);
    REQUIRE(a.per_disease.size() == b.per_disease.size());
    for (const auto& [disease, row] : a.per_disease) {
        CHECK(b.per_disease.at(disease).precision == row.precision);
        CHECK(b.per_disease.at(disease).recall == row.recall);
        CHECK(b.per_disease.at(disease).f1 == row.f1);
    }
    CHECK(a.average.f1 == b.average.f1);

    const MetricsReport c = run_experiment_seed(spec, 6);
    const bool same = c.average.precision == a.average.precision &&
                      c.average.recall == a.average.recall && c.average.f1 == a.average.f1;
    CHECK_FALSE(same);
}
