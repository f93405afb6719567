#include "fednlp/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <memory>
#include <numeric>
#include <utility>

#include "fednlp/checkpoint.hpp"
#include "fednlp/errors.hpp"
#include "fednlp/rng.hpp"
#include "fednlp/vocab.hpp"

namespace fednlp {

namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kSplitTag = 0x5B117;
constexpr std::uint64_t kStage1SeedTag = 0x51;
constexpr std::uint64_t kStage2SeedTag = 0x52;
constexpr std::uint64_t kStage1PartitionTag = 0xA1;
constexpr std::uint64_t kStage2PartitionTag = 0xA2;
constexpr std::uint64_t kInitTag = 0xD0;

nlohmann::json train_spec_to_json(const TrainSpec& s) {
    return {{"epochs_per_round", s.epochs_per_round},
            {"lr", s.lr},
            {"batch_size", s.batch_size},
            {"seed", s.seed}};
}

TrainSpec train_spec_from_json(const nlohmann::json& j, const TrainSpec& base) {
    TrainSpec s = base;
    s.epochs_per_round = j.value("epochs_per_round", base.epochs_per_round);
    s.lr = j.value("lr", base.lr);
    s.batch_size = j.value("batch_size", base.batch_size);
    s.seed = j.value("seed", base.seed);
    return s;
}

nlohmann::json fed_to_json(const FedConfig& f) {
    return {{"num_sites", f.num_sites},
            {"global_rounds", f.global_rounds},
            {"stage", f.stage == FedStage::Representation ? "representation" : "phenotype"},
            {"local", train_spec_to_json(f.local_spec)}};
}

FedConfig fed_from_json(const nlohmann::json& j, const FedConfig& base) {
    FedConfig f = base;
    f.num_sites = j.value("num_sites", base.num_sites);
    f.global_rounds = j.value("global_rounds", base.global_rounds);
    if (j.contains("stage")) {
        const std::string s = j["stage"].get<std::string>();
        if (s == "representation") {
            f.stage = FedStage::Representation;
        } else if (s == "phenotype") {
            f.stage = FedStage::Phenotype;
        } else {
            throw ConfigError("unknown federation stage: " + s);
        }
    }
    if (j.contains("local")) f.local_spec = train_spec_from_json(j["local"], base.local_spec);
    return f;
}

nlohmann::json corpus_to_json(const SynthConfig& c) {
    return {{"vocab_size", c.vocab_size},
            {"num_codes", c.num_codes},
            {"num_diseases", c.num_diseases},
            {"patients_pretrain", c.patients_pretrain},
            {"patients_phenotype", c.patients_phenotype},
            {"doc_length_min", c.doc_length_min},
            {"doc_length_max", c.doc_length_max},
            {"latent_noise", c.latent_noise},
            {"questionable_rate", c.questionable_rate},
            {"seed", c.seed}};
}

SynthConfig corpus_from_json(const nlohmann::json& j, const SynthConfig& base) {
    SynthConfig c = base;
    c.vocab_size = j.value("vocab_size", base.vocab_size);
    c.num_codes = j.value("num_codes", base.num_codes);
    c.num_diseases = j.value("num_diseases", base.num_diseases);
    c.patients_pretrain = j.value("patients_pretrain", base.patients_pretrain);
    c.patients_phenotype = j.value("patients_phenotype", base.patients_phenotype);
    c.doc_length_min = j.value("doc_length_min", base.doc_length_min);
    c.doc_length_max = j.value("doc_length_max", base.doc_length_max);
    c.latent_noise = j.value("latent_noise", base.latent_noise);
    c.questionable_rate = j.value("questionable_rate", base.questionable_rate);
    c.seed = j.value("seed", base.seed);
    return c;
}

std::string run_config_digest(const ExperimentSpec& spec, std::uint64_t seed) {
    const std::string text =
        experiment_spec_to_json(spec).dump() + "#seed=" + std::to_string(seed);
    return digest_hex(std::vector<std::uint8_t>(text.begin(), text.end()));
}

// Accumulates stage-2 round-log lines across diseases (and, for
// single-source mode, across solo sites).
class Stage2Log {
  public:
    void add(DiseaseId disease, const std::vector<RoundLog>& rounds, int solo_site = -1) {
        for (const auto& r : rounds) {
            for (std::size_t k = 0; k < r.site_samples.size(); ++k) {
                nlohmann::json line;
                line["disease"] = disease;
                line["round"] = r.round;
                line["site"] = solo_site >= 0 ? solo_site : static_cast<int>(k);
                line["samples"] = r.site_samples[k];
                line["loss"] = r.site_loss[k];
                line["digest"] = r.digest;
                if (solo_site >= 0) line["solo"] = true;
                lines_.push_back(line.dump());
            }
        }
    }

    void write(const std::string& path) const {
        std::ofstream out(path, std::ios::binary);
        if (!out) throw DataError("stage2 round log: cannot open " + path);
        for (const auto& l : lines_) out << l << "\n";
    }

  private:
    std::vector<std::string> lines_;
};

}  // namespace

std::string to_string(RepMode m) {
    switch (m) {
        case RepMode::None: return "none";
        case RepMode::Centralized: return "centralized";
        case RepMode::Federated: return "federated";
    }
    throw ConfigError("bad representation mode");
}

std::string to_string(PhenoMode m) {
    switch (m) {
        case PhenoMode::Centralized: return "centralized";
        case PhenoMode::Federated: return "federated";
        case PhenoMode::SingleSource: return "single_source";
    }
    throw ConfigError("bad phenotyping mode");
}

RepMode rep_mode_from_string(const std::string& s) {
    if (s == "none") return RepMode::None;
    if (s == "centralized") return RepMode::Centralized;
    if (s == "federated") return RepMode::Federated;
    throw ConfigError("unknown representation mode: " + s);
}

PhenoMode pheno_mode_from_string(const std::string& s) {
    if (s == "centralized") return PhenoMode::Centralized;
    if (s == "federated") return PhenoMode::Federated;
    if (s == "single_source") return PhenoMode::SingleSource;
    throw ConfigError("unknown phenotyping mode: " + s);
}

void ExperimentSpec::validate() const {
    if (id < 1 || id > 7) throw ConfigError("experiment id must be in 1..7");
    const ExperimentSpec ref = spec_for_id(id);
    if (representation != ref.representation || phenotyping != ref.phenotyping) {
        throw ConfigError("experiment " + std::to_string(id) + " is fixed to representation=" +
                          to_string(ref.representation) + ", phenotyping=" +
                          to_string(ref.phenotyping));
    }
    if (seeds.empty()) throw ConfigError("experiment: at least one seed required");
    corpus.validate();
    if (representation == RepMode::None) {
        if (fed1) {
            throw ConfigError(
                "experiment: representation=none conflicts with a stage-1 federation config");
        }
    } else {
        if (!fed1) {
            throw ConfigError("experiment: representation learning needs a stage-1 config");
        }
        fed1->validate();
        if (fed1->stage != FedStage::Representation) {
            throw ConfigError("experiment: fed1 must be a representation-stage config");
        }
    }
    fed2.validate();
    if (fed2.stage != FedStage::Phenotype) {
        throw ConfigError("experiment: fed2 must be a phenotype-stage config");
    }
    if (embed_dim < 1) throw ConfigError("experiment: embed_dim must be positive");
    if (hidden_dim < 1) throw ConfigError("experiment: hidden_dim must be positive");
    if (min_class_count < 1) throw ConfigError("experiment: min_class_count must be >= 1");
    if (min_code_count < 1) throw ConfigError("experiment: min_code_count must be >= 1");
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
        throw ConfigError("experiment: test_fraction must lie in (0, 1)");
    }
}

ExperimentSpec spec_for_id(int id) {
    if (id < 1 || id > 7) throw ConfigError("experiment id must be in 1..7");
    ExperimentSpec spec;
    spec.id = id;
    switch (id) {
        case 1: spec.representation = RepMode::None; spec.phenotyping = PhenoMode::Centralized; break;
        case 2: spec.representation = RepMode::None; spec.phenotyping = PhenoMode::Federated; break;
        case 3: spec.representation = RepMode::None; spec.phenotyping = PhenoMode::SingleSource; break;
        case 4: spec.representation = RepMode::Centralized; spec.phenotyping = PhenoMode::Centralized; break;
        case 5: spec.representation = RepMode::Centralized; spec.phenotyping = PhenoMode::Federated; break;
        case 6: spec.representation = RepMode::Federated; spec.phenotyping = PhenoMode::Centralized; break;
        case 7: spec.representation = RepMode::Federated; spec.phenotyping = PhenoMode::Federated; break;
        default: break;
    }
    if (spec.representation != RepMode::None) {
        // The DAN sits on a long low-gradient plateau before the loss
        // collapses; the round budget is sized so both the pooled and the
        // 10-site runs get through it.
        FedConfig f1;
        f1.num_sites = 10;
        f1.global_rounds = 100;
        f1.local_spec = TrainSpec{5, 0.25, 32, 11};
        f1.stage = FedStage::Representation;
        spec.fed1 = f1;
    }
    // Stage-2 rounds sized so the hinge loss converges in every mode;
    // the ablation should compare data regimes, not optimization budgets.
    spec.fed2.num_sites = 3;
    spec.fed2.global_rounds = 100;
    spec.fed2.local_spec = TrainSpec{1, 0.5, 32, 13};
    spec.fed2.stage = FedStage::Phenotype;
    return spec;
}

nlohmann::json experiment_spec_to_json(const ExperimentSpec& spec) {
    nlohmann::json j;
    j["id"] = spec.id;
    j["representation"] = to_string(spec.representation);
    j["phenotyping"] = to_string(spec.phenotyping);
    j["seeds"] = spec.seeds;
    j["corpus"] = corpus_to_json(spec.corpus);
    j["fed1"] = spec.fed1 ? fed_to_json(*spec.fed1) : nlohmann::json(nullptr);
    j["fed2"] = fed_to_json(spec.fed2);
    j["embed_dim"] = spec.embed_dim;
    j["hidden_dim"] = spec.hidden_dim;
    j["min_class_count"] = spec.min_class_count;
    j["min_code_count"] = spec.min_code_count;
    j["test_fraction"] = spec.test_fraction;
    j["activation"] = spec.activation == Activation::Relu ? "relu" : "tanh";
    return j;
}

ExperimentSpec experiment_spec_from_json(const nlohmann::json& j) {
    ExperimentSpec spec = spec_for_id(j.at("id").get<int>());
    if (j.contains("representation")) {
        spec.representation = rep_mode_from_string(j["representation"].get<std::string>());
    }
    if (j.contains("phenotyping")) {
        spec.phenotyping = pheno_mode_from_string(j["phenotyping"].get<std::string>());
    }
    if (j.contains("seeds")) spec.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
    if (j.contains("corpus")) spec.corpus = corpus_from_json(j["corpus"], spec.corpus);
    if (j.contains("fed1")) {
        if (j["fed1"].is_null()) {
            spec.fed1.reset();
        } else {
            FedConfig base = spec.fed1 ? *spec.fed1 : FedConfig{};
            if (!spec.fed1) base.stage = FedStage::Representation;
            spec.fed1 = fed_from_json(j["fed1"], base);
        }
    }
    if (j.contains("fed2")) spec.fed2 = fed_from_json(j["fed2"], spec.fed2);
    spec.embed_dim = j.value("embed_dim", spec.embed_dim);
    spec.hidden_dim = j.value("hidden_dim", spec.hidden_dim);
    spec.min_class_count = j.value("min_class_count", spec.min_class_count);
    spec.min_code_count = j.value("min_code_count", spec.min_code_count);
    spec.test_fraction = j.value("test_fraction", spec.test_fraction);
    if (j.contains("activation")) {
        const std::string a = j["activation"].get<std::string>();
        if (a == "relu") {
            spec.activation = Activation::Relu;
        } else if (a == "tanh") {
            spec.activation = Activation::Tanh;
        } else {
            throw ConfigError("unknown activation: " + a);
        }
    }
    return spec;
}

SplitRecords split_phenotype_records(const std::vector<PatientRecord>& records,
                                     double test_fraction, std::uint64_t seed) {
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
        throw ConfigError("split: test_fraction must lie in (0, 1)");
    }
    if (records.size() < 2) throw DataError("split: need at least two records");
    std::vector<std::size_t> idx(records.size());
    std::iota(idx.begin(), idx.end(), 0);
    auto rng = make_rng(mix_seed(seed, kSplitTag));
    std::shuffle(idx.begin(), idx.end(), rng);
    auto test_n = static_cast<std::size_t>(
        std::llround(test_fraction * static_cast<double>(records.size())));
    test_n = std::clamp<std::size_t>(test_n, 1, records.size() - 1);
    SplitRecords split;
    split.train.reserve(records.size() - test_n);
    split.test.reserve(test_n);
    for (std::size_t i = 0; i < idx.size(); ++i) {
        (i < idx.size() - test_n ? split.train : split.test).push_back(records[idx[i]]);
    }
    return split;
}

MetricsReport run_experiment_seed(const ExperimentSpec& spec, std::uint64_t seed,
                                  const std::string& run_dir) {
    spec.validate();
    const bool save = !run_dir.empty();
    if (save) fs::create_directories(run_dir);

    SynthConfig cc = spec.corpus;
    cc.seed = mix_seed(spec.corpus.seed, seed);
    const SynthCorpus corpus = generate_corpus(cc);
    const SplitRecords split =
        split_phenotype_records(corpus.phenotype, spec.test_fraction, cc.seed);

    std::unique_ptr<FeatureSource> features;
    if (spec.representation == RepMode::None) {
        std::vector<ConceptDoc> docs;
        docs.reserve(split.train.size());
        for (const auto& r : split.train) docs.push_back(r.doc);
        IdfTable idf = fit_idf(docs, cc.vocab_size);
        if (save) save_idf(run_dir + "/idf.tsv", idf);
        features = std::make_unique<TfidfFeatures>(std::move(idf));
    } else {
        std::vector<PatientRecord> pre = filter_patients(corpus.pretrain);
        const std::vector<int> kept = filter_rare_codes(pre, spec.min_code_count);
        FedConfig cfg1 = *spec.fed1;
        cfg1.local_spec.seed = mix_seed(cfg1.local_spec.seed, seed, kStage1SeedTag);
        std::vector<Silo> silos;
        if (spec.representation == RepMode::Federated) {
            silos = partition_silos(pre, cfg1.num_sites, mix_seed(cc.seed, kStage1PartitionTag));
        } else {
            cfg1.num_sites = 1;
            silos.push_back({0, std::move(pre)});
        }
        const DanParams init =
            init_params(cc.vocab_size, spec.embed_dim, spec.hidden_dim,
                        static_cast<int>(kept.size()), mix_seed(seed, kInitTag));
        FederatedRun run = run_federated_dan(silos, cfg1, init, spec.activation);
        FrozenEncoder encoder(DanParams::from_param_set(std::move(run.params)), spec.activation);
        if (save) {
            write_round_logs(run_dir + "/stage1_rounds.jsonl", run.rounds);
            save_encoder(run_dir + "/encoder.ckpt", encoder, run_config_digest(spec, seed));
        }
        features = std::make_unique<RepresentationFeatures>(std::move(encoder));
    }

    Stage2Options opt;
    opt.mode = spec.phenotyping;
    opt.cfg = spec.fed2;
    opt.cfg.local_spec.seed = mix_seed(spec.fed2.local_spec.seed, seed, kStage2SeedTag);
    opt.min_class_count = spec.min_class_count;
    opt.partition_seed = mix_seed(cc.seed, kStage2PartitionTag);
    const MetricsReport report = run_stage2(split.train, split.test, *features, opt, run_dir);

    if (save) {
        write_report_csv(run_dir + "/report.csv", report);
        write_report_json(run_dir + "/report.json", report);
    }
    return report;
}

MetricsReport run_stage2(const std::vector<PatientRecord>& train,
                         const std::vector<PatientRecord>& test, const FeatureSource& features,
                         const Stage2Options& opt, const std::string& out_dir) {
    opt.cfg.validate();
    if (opt.cfg.stage != FedStage::Phenotype) {
        throw ConfigError("run_stage2: cfg must be a phenotype-stage config");
    }
    const bool save = !out_dir.empty();
    if (save) fs::create_directories(out_dir);

    // Centralized mode trains on the pooled records and never partitions.
    const std::vector<Silo> silos =
        opt.mode == PhenoMode::Centralized
            ? std::vector<Silo>{}
            : partition_silos(train, opt.cfg.num_sites, opt.partition_seed);
    const std::vector<DiseaseId> diseases = diseases_in(train);
    if (diseases.empty()) throw DataError("run_stage2: no phenotype labels in training records");
    const FeatureKind kind = features.kind();

    Stage2Log log;
    MetricsReport report;
    if (opt.mode == PhenoMode::SingleSource) {
        FedConfig solo_cfg = opt.cfg;
        solo_cfg.num_sites = 1;
        std::vector<MetricsReport> solo;
        for (const auto& silo : silos) {
            std::map<DiseaseId, SvmModel> models;
            for (DiseaseId d : diseases) {
                const auto classes = decide_classes(train, d, opt.min_class_count);
                auto ds = build_dataset(silo.records, d, classes, features);
                SvmRun run = run_federated_svm({std::move(ds.examples)}, solo_cfg,
                                               zero_svm(classes, features.dims(), kind));
                if (save) {
                    log.add(d, run.rounds, silo.site_id);
                    save_svm(out_dir + "/svm_d" + std::to_string(d) + "_site" +
                                 std::to_string(silo.site_id) + ".ckpt",
                             run.model);
                }
                models.emplace(d, std::move(run.model));
            }
            solo.push_back(evaluate_models(models, test, features));
        }
        std::map<DiseaseId, Prf> rows;
        const double n = static_cast<double>(solo.size());
        for (DiseaseId d : diseases) {
            Prf sum;
            for (const auto& r : solo) {
                const Prf& row = r.per_disease.at(d);
                sum.precision += row.precision;
                sum.recall += row.recall;
                sum.f1 += row.f1;
            }
            rows[d] = {sum.precision / n, sum.recall / n, sum.f1 / n};
        }
        report = aggregate_report(rows);
    } else {
        const bool federated = opt.mode == PhenoMode::Federated;
        FedConfig cfg = opt.cfg;
        if (!federated) cfg.num_sites = 1;
        std::map<DiseaseId, SvmModel> models;
        for (DiseaseId d : diseases) {
            const auto classes = decide_classes(train, d, opt.min_class_count);
            std::vector<std::vector<PhenotypeExample>> site_examples;
            if (federated) {
                site_examples.reserve(silos.size());
                for (const auto& silo : silos) {
                    site_examples.push_back(
                        build_dataset(silo.records, d, classes, features).examples);
                }
            } else {
                site_examples.push_back(build_dataset(train, d, classes, features).examples);
            }
            SvmRun run =
                run_federated_svm(site_examples, cfg, zero_svm(classes, features.dims(), kind));
            if (save) {
                log.add(d, run.rounds);
                save_svm(out_dir + "/svm_d" + std::to_string(d) + ".ckpt", run.model);
            }
            models.emplace(d, std::move(run.model));
        }
        report = evaluate_models(models, test, features);
    }

    if (save) log.write(out_dir + "/stage2_rounds.jsonl");
    return report;
}

ExperimentResult run_experiment(const ExperimentSpec& spec, const std::string& out_dir) {
    spec.validate();
    const bool save = !out_dir.empty();
    if (save) {
        fs::create_directories(out_dir);
        std::ofstream cfg(out_dir + "/config.json", std::ios::binary);
        if (!cfg) throw DataError("run_experiment: cannot open " + out_dir + "/config.json");
        cfg << experiment_spec_to_json(spec).dump(2) << "\n";
    }
    ExperimentResult result;
    for (std::uint64_t s : spec.seeds) {
        const std::string dir = save ? out_dir + "/seed_" + std::to_string(s) : std::string();
        result.per_seed.push_back(run_experiment_seed(spec, s, dir));
    }
    result.summary = summarize_reports(result.per_seed);
    if (save) {
        write_report_csv(out_dir + "/report_mean.csv", result.summary.mean);
        write_report_json(out_dir + "/report_mean.json", result.summary.mean);
        write_report_csv(out_dir + "/report_std.csv", result.summary.stddev);
        write_report_json(out_dir + "/report_std.json", result.summary.stddev);
    }
    return result;
}

}  // namespace fednlp
