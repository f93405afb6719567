#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "fednlp/corpus.hpp"
#include "fednlp/federation.hpp"
#include "fednlp/metrics.hpp"

namespace fednlp {

enum class RepMode { None, Centralized, Federated };
enum class PhenoMode { Centralized, Federated, SingleSource };

std::string to_string(RepMode m);
std::string to_string(PhenoMode m);
RepMode rep_mode_from_string(const std::string& s);
PhenoMode pheno_mode_from_string(const std::string& s);

// One row of the seven-way ablation. The id fixes the mode pair:
//   1 bag-of-tokens  + centralized     5 central representation + federated
//   2 bag-of-tokens  + federated       6 federated representation + centralized
//   3 bag-of-tokens  + single source   7 federated representation + federated
//   4 central representation + centralized
struct ExperimentSpec {
    int id = 1;
    RepMode representation = RepMode::None;
    PhenoMode phenotyping = PhenoMode::Centralized;
    std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
    SynthConfig corpus;
    std::optional<FedConfig> fed1;  // required iff representation != None
    FedConfig fed2;
    int embed_dim = 64;
    int hidden_dim = 64;
    int min_class_count = 10;
    int min_code_count = 1;  // code-frequency filter off by default
    double test_fraction = 0.2;
    Activation activation = Activation::Relu;

    void validate() const;
};

// Spec with the fixed mode pair for the id and the stock desk-scale
// configuration (10 stage-1 sites, 3 stage-2 sites).
ExperimentSpec spec_for_id(int id);

nlohmann::json experiment_spec_to_json(const ExperimentSpec& spec);
ExperimentSpec experiment_spec_from_json(const nlohmann::json& j);

// Seeded shuffle, then the last test_fraction of records held out. The
// split depends only on (records, test_fraction, seed), so every
// experiment id sees the same test set for a given corpus and seed.
struct SplitRecords {
    std::vector<PatientRecord> train;
    std::vector<PatientRecord> test;
};
SplitRecords split_phenotype_records(const std::vector<PatientRecord>& records,
                                     double test_fraction, std::uint64_t seed);

// Stage-2 training and evaluation under one phenotyping mode. Partitions
// the training records into cfg.num_sites silos (pooled back together
// for centralized mode), trains one classifier per disease, and scores
// the held-out records. SVM checkpoints and round logs land under
// out_dir unless empty.
struct Stage2Options {
    PhenoMode mode = PhenoMode::Centralized;
    FedConfig cfg;
    int min_class_count = 10;
    std::uint64_t partition_seed = 0;
};

MetricsReport run_stage2(const std::vector<PatientRecord>& train,
                         const std::vector<PatientRecord>& test, const FeatureSource& features,
                         const Stage2Options& opt, const std::string& out_dir = "");

// One end-to-end deterministic run: generate the per-seed corpus, train
// per the spec's modes, evaluate on the shared held-out split. Artifacts
// (reports, checkpoints, round logs) land under run_dir unless empty.
MetricsReport run_experiment_seed(const ExperimentSpec& spec, std::uint64_t seed,
                                  const std::string& run_dir = "");

struct ExperimentResult {
    std::vector<MetricsReport> per_seed;
    ReportSummary summary;
};

// Runs every seed and, unless out_dir is empty, writes the resolved
// config snapshot, per-seed artifacts, and mean/std aggregate reports.
ExperimentResult run_experiment(const ExperimentSpec& spec, const std::string& out_dir = "");

}  // namespace fednlp
