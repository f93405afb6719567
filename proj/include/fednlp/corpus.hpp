#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fednlp/errors.hpp"

namespace fednlp {

using ConceptId = std::uint32_t;
using DiseaseId = int;

// Patient-level annotation for one disease.
enum class ClassLabel : int { Present = 0, Absent = 1, Questionable = 2 };

std::string to_string(ClassLabel label);
ClassLabel class_label_from_string(const std::string& s);

// A patient's aggregated notes as a sequence of integer concept IDs.
struct ConceptDoc {
    std::vector<ConceptId> tokens;

    std::size_t size() const { return tokens.size(); }
    bool empty() const { return tokens.empty(); }
};

struct PatientRecord {
    std::int64_t patient_id = 0;
    ConceptDoc doc;
    // Multi-hot code targets, one bit per output code (stage 1 labels).
    std::optional<std::vector<std::uint8_t>> code_labels;
    // Per-disease annotation covering every configured disease (stage 2).
    std::optional<std::map<DiseaseId, ClassLabel>> phenotype_labels;
};

// One simulated healthcare provider's private share of the records.
struct Silo {
    int site_id = 0;
    std::vector<PatientRecord> records;

    std::int64_t sample_count() const { return static_cast<std::int64_t>(records.size()); }
};

// Synthetic corpus shape. Stands in for restricted clinical corpora; the
// latent-disease structure keeps codes predictable from tokens so that
// representation pre-training has signal to transfer.
struct SynthConfig {
    int vocab_size = 500;
    int num_codes = 20;
    int num_diseases = 8;
    int patients_pretrain = 2000;
    int patients_phenotype = 600;
    int doc_length_min = 40;
    int doc_length_max = 160;
    double latent_noise = 0.8;
    double questionable_rate = 0.02;
    std::uint64_t seed = 7;

    // Throws ConfigError naming the offending field.
    void validate() const;
};

struct SynthCorpus {
    std::vector<PatientRecord> pretrain;   // code-labeled records
    std::vector<PatientRecord> phenotype;  // phenotype-labeled records
};

// Deterministic generative model:
//   - each patient draws an independent Bernoulli(1/2) latent disease vector;
//   - each active disease owns a disjoint block of signature concept IDs
//     inside [0, num_diseases * signature_block_size); the remaining IDs are
//     noise. Non-noise token slots cover every active disease at least once,
//     then draw uniformly over active blocks; each slot independently becomes
//     a noise token with probability latent_noise;
//   - code bit c is set iff disease (c mod num_diseases) is active;
//   - active diseases label Present; inactive label Absent, flipped to
//     Questionable with probability questionable_rate.
SynthCorpus generate_corpus(const SynthConfig& cfg);

// Width of each disease's signature block for a given config.
int signature_block_size(const SynthConfig& cfg);

// Recovers the latent disease set from a document's signature tokens.
// Exact for corpora generated with latent_noise = 0.
std::vector<std::uint8_t> invert_signature(const ConceptDoc& doc, const SynthConfig& cfg);

// Keeps records whose document length is <= max_tokens; order preserved.
std::vector<PatientRecord> filter_patients(const std::vector<PatientRecord>& records,
                                           std::int64_t max_tokens = 10000);

// Seeded permutation followed by a near-equal split (sizes differ by <= 1).
// skew > 0 is a stress-test knob producing geometrically decaying silo
// sizes; the default keeps the balanced split.
std::vector<Silo> partition_silos(const std::vector<PatientRecord>& records, int num_sites,
                                  std::uint64_t seed, double skew = 0.0);

// Line-delimited record format:
//   patient_id<TAB>tokens<TAB>code bits as 0/1 string<TAB>disease:label,...
// Empty third/fourth fields mean the corresponding labels are absent.
void save_records(std::ostream& out, const std::vector<PatientRecord>& records);
void save_records(const std::string& path, const std::vector<PatientRecord>& records);
std::vector<PatientRecord> load_records(std::istream& in);
std::vector<PatientRecord> load_records(const std::string& path);

}  // namespace fednlp
