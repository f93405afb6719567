#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "fednlp/corpus.hpp"
#include "fednlp/dan.hpp"
#include "fednlp/metrics.hpp"
#include "fednlp/phenotype.hpp"
#include "fednlp/representation.hpp"
#include "fednlp/tensor.hpp"

namespace fednlp {

enum class FedStage { Representation, Phenotype };

struct FedConfig {
    int num_sites = 1;     // K
    int global_rounds = 1; // T
    TrainSpec local_spec;
    FedStage stage = FedStage::Representation;

    void validate() const;
};

// One global round: per-site sample counts and post-training losses plus
// the digest of the aggregated parameters.
struct RoundLog {
    int round = 0;  // 1-based t
    std::vector<std::int64_t> site_samples;
    std::vector<double> site_loss;
    std::string digest;
};

// One JSON line per (round, site): round, site, samples, loss, digest.
void write_round_logs(const std::string& path, const std::vector<RoundLog>& rounds);

// Elementwise convex combination with weights n_k / N. Reduction runs in
// site-index order so the result is bit-stable regardless of how the
// inputs were produced.
ParamSet weighted_average(const std::vector<ParamSet>& models,
                          const std::vector<std::int64_t>& counts);

// Local training on one site: returns updated parameters and the
// training loss to be logged for the round.
struct LocalResult {
    ParamSet params;
    double loss = 0.0;
};

using SiteTrainer = std::function<LocalResult(int site, const ParamSet& start, int epoch_offset)>;

struct FederatedRun {
    ParamSet params;
    std::vector<RoundLog> rounds;
};

// Algorithm: for t in 1..T, every site trains from the current global
// parameters (site k's round t starts at epoch offset (t-1) *
// epochs_per_round), then the coordinator averages per weighted_average.
// Sites run as parallel tasks unless `parallel` is false; either way the
// result is identical. A site failure aborts the round with a
// site-indexed error.
FederatedRun run_federated(const std::vector<std::int64_t>& site_counts, const FedConfig& cfg,
                           const ParamSet& init, const SiteTrainer& trainer,
                           bool parallel = true);

FederatedRun run_federated_dan(const std::vector<Silo>& silos, const FedConfig& cfg,
                               const DanParams& init, Activation act = Activation::Relu,
                               bool parallel = true);

struct SvmRun {
    SvmModel model;
    std::vector<RoundLog> rounds;
};

SvmRun run_federated_svm(const std::vector<std::vector<PhenotypeExample>>& site_examples,
                         const FedConfig& cfg, const SvmModel& init, bool parallel = true);

struct TwoStageResult {
    FrozenEncoder encoder;
    std::map<DiseaseId, SvmModel> models;
    MetricsReport report;
    std::vector<RoundLog> stage1_rounds;
    std::map<DiseaseId, std::vector<RoundLog>> stage2_rounds;
};

// Diseases present in the records' phenotype labels, ascending.
std::vector<DiseaseId> diseases_in(const std::vector<PatientRecord>& records);

// Per-disease evaluation of trained classifiers on held-out records:
// test examples whose label was dropped from the class set are excluded,
// mirroring the training-side rule.
MetricsReport evaluate_models(const std::map<DiseaseId, SvmModel>& models,
                              const std::vector<PatientRecord>& test_records,
                              const FeatureSource& features);

// Stage 1: federated DAN pre-training on code labels over pretrain_silos.
// Stage 2: freeze the encoder, map stage-2 documents to representations,
// train one federated SVM per disease over phenotype_silos (class sets
// decided on the pooled training records), evaluate on test_records.
TwoStageResult run_two_stage(const std::vector<Silo>& pretrain_silos,
                             const std::vector<Silo>& phenotype_silos,
                             const std::vector<PatientRecord>& test_records,
                             const FedConfig& cfg1, const FedConfig& cfg2, const DanParams& init,
                             int min_class_count = 10, Activation act = Activation::Relu,
                             bool parallel = true);

}  // namespace fednlp
