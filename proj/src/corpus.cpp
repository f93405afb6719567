#include "fednlp/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "fednlp/rng.hpp"

namespace fednlp {

std::string to_string(ClassLabel label) {
    switch (label) {
        case ClassLabel::Present: return "present";
        case ClassLabel::Absent: return "absent";
        case ClassLabel::Questionable: return "questionable";
    }
    throw LabelError("unknown class label value");
}

ClassLabel class_label_from_string(const std::string& s) {
    if (s == "present") return ClassLabel::Present;
    if (s == "absent") return ClassLabel::Absent;
    if (s == "questionable") return ClassLabel::Questionable;
    throw LabelError("unknown class label: " + s);
}

void SynthConfig::validate() const {
    if (vocab_size <= 0) throw ConfigError("SynthConfig.vocab_size must be positive");
    if (num_codes <= 0) throw ConfigError("SynthConfig.num_codes must be positive");
    if (num_diseases <= 0) throw ConfigError("SynthConfig.num_diseases must be positive");
    if (patients_pretrain <= 0) throw ConfigError("SynthConfig.patients_pretrain must be positive");
    if (patients_phenotype <= 0) throw ConfigError("SynthConfig.patients_phenotype must be positive");
    if (doc_length_min <= 0) throw ConfigError("SynthConfig.doc_length_min must be positive");
    if (doc_length_max < doc_length_min) {
        throw ConfigError("SynthConfig.doc_length_max must be >= doc_length_min");
    }
    if (latent_noise < 0.0 || latent_noise > 1.0) {
        throw ConfigError("SynthConfig.latent_noise must lie in [0,1]");
    }
    if (questionable_rate < 0.0 || questionable_rate > 1.0) {
        throw ConfigError("SynthConfig.questionable_rate must lie in [0,1]");
    }
    if (vocab_size < 2 * num_diseases) {
        throw ConfigError("SynthConfig.vocab_size must be at least twice num_diseases");
    }
}

int signature_block_size(const SynthConfig& cfg) {
    // Half the vocabulary carries disease signatures, the rest is noise.
    return std::max(1, (cfg.vocab_size / 2) / cfg.num_diseases);
}

namespace {

struct LatentPatient {
    std::vector<std::uint8_t> active;  // one flag per disease
    ConceptDoc doc;
};

LatentPatient draw_patient(const SynthConfig& cfg, int block, std::mt19937_64& rng) {
    LatentPatient p;
    p.active.resize(static_cast<std::size_t>(cfg.num_diseases), 0);
    std::vector<int> active_list;
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int d = 0; d < cfg.num_diseases; ++d) {
        if (unit(rng) < 0.5) {
            p.active[static_cast<std::size_t>(d)] = 1;
            active_list.push_back(d);
        }
    }

    std::uniform_int_distribution<int> len_dist(cfg.doc_length_min, cfg.doc_length_max);
    const int length = len_dist(rng);

    const int noise_begin = cfg.num_diseases * block;
    std::uniform_int_distribution<int> noise_tok(noise_begin, cfg.vocab_size - 1);

    p.doc.tokens.reserve(static_cast<std::size_t>(length));
    int signature_slots_filled = 0;
    for (int i = 0; i < length; ++i) {
        const bool noise_slot = active_list.empty() || unit(rng) < cfg.latent_noise;
        if (noise_slot) {
            p.doc.tokens.push_back(static_cast<ConceptId>(noise_tok(rng)));
            continue;
        }
        // The first non-noise slots cover each active disease once so the
        // signature set identifies the latent vector when noise is off.
        int disease;
        if (signature_slots_filled < static_cast<int>(active_list.size())) {
            disease = active_list[static_cast<std::size_t>(signature_slots_filled)];
        } else {
            std::uniform_int_distribution<std::size_t> pick(0, active_list.size() - 1);
            disease = active_list[pick(rng)];
        }
        ++signature_slots_filled;
        std::uniform_int_distribution<int> sig_tok(disease * block, (disease + 1) * block - 1);
        p.doc.tokens.push_back(static_cast<ConceptId>(sig_tok(rng)));
    }
    return p;
}

}  // namespace

SynthCorpus generate_corpus(const SynthConfig& cfg) {
    cfg.validate();
    const int block = signature_block_size(cfg);
    auto rng = make_rng(cfg.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    SynthCorpus corpus;
    corpus.pretrain.reserve(static_cast<std::size_t>(cfg.patients_pretrain));
    std::int64_t next_id = 0;
    for (int i = 0; i < cfg.patients_pretrain; ++i) {
        LatentPatient p = draw_patient(cfg, block, rng);
        PatientRecord rec;
        rec.patient_id = next_id++;
        rec.doc = std::move(p.doc);
        std::vector<std::uint8_t> codes(static_cast<std::size_t>(cfg.num_codes), 0);
        for (int c = 0; c < cfg.num_codes; ++c) {
            codes[static_cast<std::size_t>(c)] = p.active[static_cast<std::size_t>(c % cfg.num_diseases)];
        }
        rec.code_labels = std::move(codes);
        corpus.pretrain.push_back(std::move(rec));
    }

    corpus.phenotype.reserve(static_cast<std::size_t>(cfg.patients_phenotype));
    for (int i = 0; i < cfg.patients_phenotype; ++i) {
        LatentPatient p = draw_patient(cfg, block, rng);
        PatientRecord rec;
        rec.patient_id = next_id++;
        rec.doc = std::move(p.doc);
        std::map<DiseaseId, ClassLabel> labels;
        for (int d = 0; d < cfg.num_diseases; ++d) {
            if (p.active[static_cast<std::size_t>(d)]) {
                labels[d] = ClassLabel::Present;
            } else {
                labels[d] = unit(rng) < cfg.questionable_rate ? ClassLabel::Questionable
                                                              : ClassLabel::Absent;
            }
        }
        rec.phenotype_labels = std::move(labels);
        corpus.phenotype.push_back(std::move(rec));
    }
    return corpus;
}

std::vector<std::uint8_t> invert_signature(const ConceptDoc& doc, const SynthConfig& cfg) {
    const int block = signature_block_size(cfg);
    const ConceptId signature_end = static_cast<ConceptId>(cfg.num_diseases * block);
    std::vector<std::uint8_t> active(static_cast<std::size_t>(cfg.num_diseases), 0);
    for (ConceptId t : doc.tokens) {
        if (t < signature_end) {
            active[t / static_cast<ConceptId>(block)] = 1;
        }
    }
    return active;
}

std::vector<PatientRecord> filter_patients(const std::vector<PatientRecord>& records,
                                           std::int64_t max_tokens) {
    if (max_tokens < 1) throw ConfigError("filter_patients: max_tokens must be >= 1");
    std::vector<PatientRecord> kept;
    kept.reserve(records.size());
    for (const auto& rec : records) {
        if (static_cast<std::int64_t>(rec.doc.size()) <= max_tokens) {
            kept.push_back(rec);
        }
    }
    return kept;
}

std::vector<Silo> partition_silos(const std::vector<PatientRecord>& records, int num_sites,
                                  std::uint64_t seed, double skew) {
    if (num_sites < 1) throw PartitionError("partition_silos: need at least one site");
    if (records.empty()) throw PartitionError("partition_silos: no records to split");
    if (num_sites > static_cast<int>(records.size())) {
        throw PartitionError("partition_silos: " + std::to_string(num_sites) +
                             " sites requested for " + std::to_string(records.size()) + " records");
    }
    if (skew < 0.0 || skew >= 1.0) throw PartitionError("partition_silos: skew must lie in [0,1)");

    std::vector<std::size_t> order(records.size());
    std::iota(order.begin(), order.end(), 0);
    auto rng = make_rng(mix_seed(seed, 0x5110));
    std::shuffle(order.begin(), order.end(), rng);

    const std::int64_t n = static_cast<std::int64_t>(records.size());
    std::vector<std::int64_t> sizes(static_cast<std::size_t>(num_sites), 0);
    if (skew == 0.0) {
        const std::int64_t base = n / num_sites;
        const std::int64_t extra = n % num_sites;
        for (int k = 0; k < num_sites; ++k) {
            sizes[static_cast<std::size_t>(k)] = base + (k < extra ? 1 : 0);
        }
    } else {
        // Geometric weights, one record guaranteed per site; remainders go
        // to the largest sites first.
        std::vector<double> w(static_cast<std::size_t>(num_sites));
        double total = 0.0;
        for (int k = 0; k < num_sites; ++k) {
            w[static_cast<std::size_t>(k)] = std::pow(1.0 - skew, k);
            total += w[static_cast<std::size_t>(k)];
        }
        std::int64_t assigned = 0;
        for (int k = 0; k < num_sites; ++k) {
            auto s = static_cast<std::int64_t>((n - num_sites) * w[static_cast<std::size_t>(k)] / total);
            sizes[static_cast<std::size_t>(k)] = 1 + s;
            assigned += 1 + s;
        }
        for (int k = 0; assigned < n; k = (k + 1) % num_sites) {
            ++sizes[static_cast<std::size_t>(k)];
            ++assigned;
        }
    }

    std::vector<Silo> silos(static_cast<std::size_t>(num_sites));
    std::size_t cursor = 0;
    for (int k = 0; k < num_sites; ++k) {
        Silo& silo = silos[static_cast<std::size_t>(k)];
        silo.site_id = k;
        silo.records.reserve(static_cast<std::size_t>(sizes[static_cast<std::size_t>(k)]));
        for (std::int64_t i = 0; i < sizes[static_cast<std::size_t>(k)]; ++i) {
            silo.records.push_back(records[order[cursor++]]);
        }
    }
    return silos;
}

namespace {

std::vector<std::string> split_fields(const std::string& line, char sep) {
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
        std::size_t pos = line.find(sep, start);
        if (pos == std::string::npos) {
            fields.push_back(line.substr(start));
            break;
        }
        fields.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return fields;
}

}  // namespace

void save_records(std::ostream& out, const std::vector<PatientRecord>& records) {
    for (const auto& rec : records) {
        out << rec.patient_id << '\t';
        for (std::size_t i = 0; i < rec.doc.tokens.size(); ++i) {
            if (i > 0) out << ' ';
            out << rec.doc.tokens[i];
        }
        out << '\t';
        if (rec.code_labels) {
            for (std::uint8_t b : *rec.code_labels) out << (b ? '1' : '0');
        }
        out << '\t';
        if (rec.phenotype_labels) {
            bool first = true;
            for (const auto& [disease, label] : *rec.phenotype_labels) {
                if (!first) out << ',';
                first = false;
                out << disease << ':' << to_string(label);
            }
        }
        out << '\n';
    }
}

void save_records(const std::string& path, const std::vector<PatientRecord>& records) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open " + path + " for writing");
    save_records(out, records);
}

std::vector<PatientRecord> load_records(std::istream& in) {
    std::vector<PatientRecord> records;
    std::string line;
    std::size_t lineno = 0;
    std::optional<std::size_t> code_width;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto fields = split_fields(line, '\t');
        if (fields.size() != 4) {
            throw DataError("record line " + std::to_string(lineno) + ": expected 4 fields, got " +
                            std::to_string(fields.size()));
        }
        PatientRecord rec;
        try {
            rec.patient_id = std::stoll(fields[0]);
        } catch (const std::exception&) {
            throw DataError("record line " + std::to_string(lineno) + ": bad patient id");
        }
        if (fields[1].empty()) {
            throw DataError("record line " + std::to_string(lineno) + ": empty document");
        }
        std::istringstream toks(fields[1]);
        long long t;
        while (toks >> t) {
            if (t < 0) throw DataError("record line " + std::to_string(lineno) + ": negative token");
            rec.doc.tokens.push_back(static_cast<ConceptId>(t));
        }
        if (!fields[2].empty()) {
            std::vector<std::uint8_t> codes;
            codes.reserve(fields[2].size());
            for (char c : fields[2]) {
                if (c != '0' && c != '1') {
                    throw DataError("record line " + std::to_string(lineno) + ": code bits must be 0/1");
                }
                codes.push_back(c == '1' ? 1 : 0);
            }
            if (code_width && *code_width != codes.size()) {
                throw DataError("record line " + std::to_string(lineno) +
                                ": inconsistent code label width");
            }
            code_width = codes.size();
            rec.code_labels = std::move(codes);
        }
        if (!fields[3].empty()) {
            std::map<DiseaseId, ClassLabel> labels;
            for (const auto& item : split_fields(fields[3], ',')) {
                auto colon = item.find(':');
                if (colon == std::string::npos) {
                    throw DataError("record line " + std::to_string(lineno) +
                                    ": phenotype entry missing ':'");
                }
                DiseaseId disease;
                try {
                    disease = std::stoi(item.substr(0, colon));
                } catch (const std::exception&) {
                    throw DataError("record line " + std::to_string(lineno) + ": bad disease id");
                }
                labels[disease] = class_label_from_string(item.substr(colon + 1));
            }
            rec.phenotype_labels = std::move(labels);
        }
        records.push_back(std::move(rec));
    }
    return records;
}

std::vector<PatientRecord> load_records(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path);
    return load_records(in);
}

}  // namespace fednlp
