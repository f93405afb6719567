#include "fednlp/cli.hpp"

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "fednlp/checkpoint.hpp"
#include "fednlp/corpus.hpp"
#include "fednlp/dan.hpp"
#include "fednlp/errors.hpp"
#include "fednlp/experiment.hpp"
#include "fednlp/federation.hpp"
#include "fednlp/metrics.hpp"
#include "fednlp/phenotype.hpp"
#include "fednlp/representation.hpp"
#include "fednlp/rng.hpp"
#include "fednlp/vocab.hpp"

namespace fednlp {

namespace {

namespace fs = std::filesystem;

int infer_vocab_size(const std::vector<PatientRecord>& records) {
    ConceptId max_id = 0;
    bool any = false;
    for (const auto& rec : records) {
        for (ConceptId t : rec.doc.tokens) {
            max_id = std::max(max_id, t);
            any = true;
        }
    }
    if (!any) throw DataError("cannot infer vocabulary size from empty documents");
    return static_cast<int>(max_id) + 1;
}

Activation activation_from_name(const std::string& name) {
    if (name == "relu") return Activation::Relu;
    if (name == "tanh") return Activation::Tanh;
    throw ConfigError("unknown activation: " + name);
}

struct GenArgs {
    SynthConfig cfg;
    std::string out_dir;
};

int run_gen(const GenArgs& a) {
    const SynthCorpus corpus = generate_corpus(a.cfg);
    fs::create_directories(a.out_dir);
    save_records(a.out_dir + "/pretrain.tsv", corpus.pretrain);
    save_records(a.out_dir + "/phenotype.tsv", corpus.phenotype);
    nlohmann::json snapshot;
    snapshot["vocab_size"] = a.cfg.vocab_size;
    snapshot["num_codes"] = a.cfg.num_codes;
    snapshot["num_diseases"] = a.cfg.num_diseases;
    snapshot["patients_pretrain"] = a.cfg.patients_pretrain;
    snapshot["patients_phenotype"] = a.cfg.patients_phenotype;
    snapshot["doc_length_min"] = a.cfg.doc_length_min;
    snapshot["doc_length_max"] = a.cfg.doc_length_max;
    snapshot["latent_noise"] = a.cfg.latent_noise;
    snapshot["questionable_rate"] = a.cfg.questionable_rate;
    snapshot["seed"] = a.cfg.seed;
    std::ofstream meta(a.out_dir + "/corpus.json", std::ios::binary);
    if (!meta) throw DataError("gen: cannot open " + a.out_dir + "/corpus.json");
    meta << snapshot.dump(2) << "\n";
    std::cout << "wrote " << corpus.pretrain.size() << " pretrain and "
              << corpus.phenotype.size() << " phenotype records to " << a.out_dir << "\n";
    return 0;
}

struct PretrainArgs {
    std::string records_path;
    std::string out_path = "encoder.ckpt";
    std::string mode = "federated";
    int sites = 10;
    int rounds = 20;
    TrainSpec local;
    int vocab = 0;  // 0 = infer
    int embed_dim = 64;
    int hidden_dim = 64;
    int min_code_count = 1;
    std::string activation = "relu";
    std::uint64_t partition_seed = 7;
    bool serial = false;
};

int run_pretrain(const PretrainArgs& a) {
    std::vector<PatientRecord> records = filter_patients(load_records(a.records_path));
    const int vocab = a.vocab > 0 ? a.vocab : infer_vocab_size(records);
    const std::vector<int> kept = filter_rare_codes(records, a.min_code_count);
    const Activation act = activation_from_name(a.activation);

    FedConfig cfg;
    cfg.global_rounds = a.rounds;
    cfg.local_spec = a.local;
    cfg.stage = FedStage::Representation;
    std::vector<Silo> silos;
    if (a.mode == "federated") {
        cfg.num_sites = a.sites;
        silos = partition_silos(records, a.sites, a.partition_seed);
    } else if (a.mode == "centralized") {
        cfg.num_sites = 1;
        silos.push_back({0, records});
    } else {
        throw ConfigError("pretrain: mode must be centralized or federated");
    }

    const DanParams init = init_params(vocab, a.embed_dim, a.hidden_dim,
                                       static_cast<int>(kept.size()),
                                       mix_seed(a.local.seed, 0xD0));
    const FederatedRun run = run_federated_dan(silos, cfg, init, act, !a.serial);
    const FrozenEncoder encoder(DanParams::from_param_set(run.params), act);
    save_encoder(a.out_path, encoder, param_set_digest(run.params));
    write_round_logs(a.out_path + ".rounds.jsonl", run.rounds);
    std::cout << "pretrained " << kept.size() << "-code encoder over " << silos.size()
              << " site(s); final mean loss "
              << mean_dan_loss(encoder.params(), records, act) << "; saved to " << a.out_path
              << "\n";
    return 0;
}

struct PhenotypeArgs {
    std::string records_path;
    std::string out_dir = "phenotype_run";
    std::string mode = "federated";
    std::string encoder_path;  // empty = TF-IDF features
    int sites = 3;
    int rounds = 30;
    TrainSpec local;
    int vocab = 0;
    int min_class_count = 10;
    double test_fraction = 0.2;
    std::uint64_t split_seed = 7;
    std::uint64_t partition_seed = 7;
};

int run_phenotype(const PhenotypeArgs& a) {
    const std::vector<PatientRecord> records = load_records(a.records_path);
    const SplitRecords split = split_phenotype_records(records, a.test_fraction, a.split_seed);
    fs::create_directories(a.out_dir);

    std::unique_ptr<FeatureSource> features;
    if (a.encoder_path.empty()) {
        std::vector<ConceptDoc> docs;
        docs.reserve(split.train.size());
        for (const auto& r : split.train) docs.push_back(r.doc);
        IdfTable idf = fit_idf(docs, a.vocab > 0 ? a.vocab : infer_vocab_size(records));
        save_idf(a.out_dir + "/idf.tsv", idf);
        features = std::make_unique<TfidfFeatures>(std::move(idf));
    } else {
        features = std::make_unique<RepresentationFeatures>(load_encoder(a.encoder_path));
    }

    Stage2Options opt;
    opt.mode = pheno_mode_from_string(a.mode);
    opt.cfg.num_sites = a.sites;
    opt.cfg.global_rounds = a.rounds;
    opt.cfg.local_spec = a.local;
    opt.cfg.stage = FedStage::Phenotype;
    opt.min_class_count = a.min_class_count;
    opt.partition_seed = a.partition_seed;

    const MetricsReport report = run_stage2(split.train, split.test, *features, opt, a.out_dir);
    write_report_csv(a.out_dir + "/report.csv", report);
    write_report_json(a.out_dir + "/report.json", report);
    std::cout << report_csv(report);
    return 0;
}

struct GradcheckArgs {
    double h = 1e-5;
    int trials = 10;
    int max_coords = 100;
    std::uint64_t seed = 0;
    double bound = 1e-4;
};

int run_gradcheck(const GradcheckArgs& a) {
    double worst = 0.0;
    for (int trial = 0; trial < a.trials; ++trial) {
        const std::uint64_t s = mix_seed(a.seed, static_cast<std::uint64_t>(trial));
        auto rng = make_rng(s);
        const int vocab = 20 + static_cast<int>(rng() % 30);
        const int embed = 3 + static_cast<int>(rng() % 6);
        const int hidden = 3 + static_cast<int>(rng() % 6);
        const int outputs = 2 + static_cast<int>(rng() % 5);
        const Activation act = (trial % 2 == 0) ? Activation::Relu : Activation::Tanh;

        const DanParams params = init_params(vocab, embed, hidden, outputs, mix_seed(s, 1));
        ConceptDoc doc;
        const int len = 5 + static_cast<int>(rng() % 20);
        for (int i = 0; i < len; ++i) {
            doc.tokens.push_back(static_cast<ConceptId>(rng() % static_cast<std::uint64_t>(vocab)));
        }
        std::vector<std::uint8_t> labels(static_cast<std::size_t>(outputs));
        for (auto& l : labels) l = static_cast<std::uint8_t>(rng() % 2);

        const double err = grad_check(params, doc, labels, a.h, a.max_coords, mix_seed(s, 2), act);
        worst = std::max(worst, err);
    }
    std::cout << "gradcheck: max relative error " << worst << " over " << a.trials
              << " configs (h=" << a.h << ")\n";
    if (worst >= a.bound) {
        std::cerr << "gradcheck: error " << worst << " exceeds bound " << a.bound << "\n";
        return 1;
    }
    return 0;
}

struct ExperimentArgs {
    int id = 0;
    std::string config_path;
    std::string out_dir;
    std::vector<std::uint64_t> seeds;
};

int run_experiment_cmd(const ExperimentArgs& a, const std::function<void(ExperimentSpec&)>& apply_overrides) {
    ExperimentSpec spec;
    if (!a.config_path.empty()) {
        std::ifstream in(a.config_path);
        if (!in) throw ConfigError("experiment: cannot open config " + a.config_path);
        nlohmann::json j;
        try {
            in >> j;
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError("experiment: bad config file: " + std::string(e.what()));
        }
        if (a.id != 0) j["id"] = a.id;
        spec = experiment_spec_from_json(j);
    } else {
        if (a.id == 0) throw ConfigError("experiment: --id or --config required");
        spec = spec_for_id(a.id);
    }
    if (!a.seeds.empty()) spec.seeds = a.seeds;
    apply_overrides(spec);

    const ExperimentResult result = run_experiment(spec, a.out_dir);
    std::cout << "experiment " << spec.id << " (" << to_string(spec.representation) << " + "
              << to_string(spec.phenotyping) << "), " << spec.seeds.size() << " seed(s)\n";
    std::cout << report_csv(result.summary.mean);
    if (!a.out_dir.empty()) std::cout << "artifacts in " << a.out_dir << "\n";
    return 0;
}

int run_report(const std::vector<std::string>& dirs) {
    if (dirs.empty()) throw ConfigError("report: at least one run directory required");
    struct Row {
        int id;
        std::string rep;
        std::string pheno;
        Prf mean;
        double f1_std;
    };
    std::vector<Row> rows;
    for (const auto& dir : dirs) {
        std::ifstream cfg_in(dir + "/config.json");
        if (!cfg_in) throw DataError("report: cannot open " + dir + "/config.json");
        nlohmann::json cfg;
        try {
            cfg_in >> cfg;
        } catch (const nlohmann::json::exception& e) {
            throw DataError("report: bad config in " + dir + ": " + e.what());
        }
        const MetricsReport mean = load_report_json(dir + "/report_mean.json");
        const MetricsReport stddev = load_report_json(dir + "/report_std.json");
        rows.push_back({cfg.at("id").get<int>(), cfg.at("representation").get<std::string>(),
                        cfg.at("phenotyping").get<std::string>(), mean.average,
                        stddev.average.f1});
    }
    std::sort(rows.begin(), rows.end(), [](const Row& x, const Row& y) { return x.id < y.id; });
    std::cout << "id,representation,phenotyping,precision,recall,f1,f1_std\n";
    for (const auto& r : rows) {
        std::cout << r.id << ',' << r.rep << ',' << r.pheno << ',' << std::fixed
                  << std::setprecision(6) << r.mean.precision << ',' << r.mean.recall << ','
                  << r.mean.f1 << ',' << r.f1_std << "\n";
    }
    return 0;
}

void add_corpus_flags(CLI::App* cmd, SynthConfig& cfg) {
    cmd->add_option("--vocab-size", cfg.vocab_size, "vocabulary size");
    cmd->add_option("--num-codes", cfg.num_codes, "stage-1 label (code) count");
    cmd->add_option("--num-diseases", cfg.num_diseases, "stage-2 disease count");
    cmd->add_option("--patients-pretrain", cfg.patients_pretrain, "stage-1 patient count");
    cmd->add_option("--patients-phenotype", cfg.patients_phenotype, "stage-2 patient count");
    cmd->add_option("--doc-length-min", cfg.doc_length_min, "minimum tokens per document");
    cmd->add_option("--doc-length-max", cfg.doc_length_max, "maximum tokens per document");
    cmd->add_option("--latent-noise", cfg.latent_noise, "fraction of noise tokens");
    cmd->add_option("--questionable-rate", cfg.questionable_rate,
                    "absent->questionable flip rate");
    cmd->add_option("--corpus-seed", cfg.seed, "corpus generator seed");
}

void add_train_flags(CLI::App* cmd, TrainSpec& spec) {
    cmd->add_option("--epochs", spec.epochs_per_round, "local epochs per round");
    cmd->add_option("--lr", spec.lr, "learning rate");
    cmd->add_option("--batch", spec.batch_size, "minibatch size");
    cmd->add_option("--train-seed", spec.seed, "shuffle seed");
}

}  // namespace

int cli_main(int argc, const char* const* argv) {
    CLI::App app{"two-stage federated concept-token phenotyping pipeline"};
    app.require_subcommand(1);

    GenArgs gen;
    auto* gen_cmd = app.add_subcommand("gen", "generate a synthetic corpus");
    add_corpus_flags(gen_cmd, gen.cfg);
    gen_cmd->add_option("--out", gen.out_dir, "output directory")->required();

    PretrainArgs pre;
    auto* pre_cmd = app.add_subcommand("pretrain", "stage 1: train the representation encoder");
    pre_cmd->add_option("--records", pre.records_path, "pretrain records TSV")->required();
    pre_cmd->add_option("--out", pre.out_path, "encoder checkpoint path");
    pre_cmd->add_option("--mode", pre.mode, "centralized or federated")
        ->check(CLI::IsMember({"centralized", "federated"}));
    pre_cmd->add_option("--sites", pre.sites, "silo count (federated mode)");
    pre_cmd->add_option("--rounds", pre.rounds, "global rounds");
    add_train_flags(pre_cmd, pre.local);
    pre_cmd->add_option("--vocab", pre.vocab, "vocabulary size (0 = infer)");
    pre_cmd->add_option("--embed-dim", pre.embed_dim, "embedding width");
    pre_cmd->add_option("--hidden-dim", pre.hidden_dim, "representation width");
    pre_cmd->add_option("--min-code-count", pre.min_code_count, "drop rarer code columns");
    pre_cmd->add_option("--activation", pre.activation, "relu or tanh")
        ->check(CLI::IsMember({"relu", "tanh"}));
    pre_cmd->add_option("--partition-seed", pre.partition_seed, "silo partition seed");
    pre_cmd->add_flag("--serial", pre.serial, "train sites serially");

    PhenotypeArgs phe;
    auto* phe_cmd = app.add_subcommand("phenotype", "stage 2: train per-disease classifiers");
    phe_cmd->add_option("--records", phe.records_path, "phenotype records TSV")->required();
    phe_cmd->add_option("--out", phe.out_dir, "output directory");
    phe_cmd->add_option("--mode", phe.mode, "centralized, federated, or single_source")
        ->check(CLI::IsMember({"centralized", "federated", "single_source"}));
    phe_cmd->add_option("--encoder", phe.encoder_path,
                        "encoder checkpoint (omit for TF-IDF features)");
    phe_cmd->add_option("--sites", phe.sites, "silo count");
    phe_cmd->add_option("--rounds", phe.rounds, "global rounds");
    add_train_flags(phe_cmd, phe.local);
    phe_cmd->add_option("--vocab", phe.vocab, "vocabulary size for TF-IDF (0 = infer)");
    phe_cmd->add_option("--min-class-count", phe.min_class_count, "class survival threshold");
    phe_cmd->add_option("--test-fraction", phe.test_fraction, "held-out fraction");
    phe_cmd->add_option("--split-seed", phe.split_seed, "train/test split seed");
    phe_cmd->add_option("--partition-seed", phe.partition_seed, "silo partition seed");

    ExperimentArgs exp;
    ExperimentSpec overrides;  // staging area for flag values
    auto* exp_cmd = app.add_subcommand("experiment", "run one ablation row end to end");
    exp_cmd->add_option("--id", exp.id, "experiment id")->check(CLI::Range(1, 7));
    exp_cmd->add_option("--config", exp.config_path, "JSON config file (flags override)");
    exp_cmd->add_option("--out", exp.out_dir, "artifact directory");
    exp_cmd->add_option("--seed", exp.seeds, "run seeds (repeatable)");
    add_corpus_flags(exp_cmd, overrides.corpus);
    int sites1 = 0, rounds1 = 0, sites2 = 0, rounds2 = 0;
    double lr1 = 0.0, lr2 = 0.0;
    exp_cmd->add_option("--sites1", sites1, "stage-1 silo count");
    exp_cmd->add_option("--rounds1", rounds1, "stage-1 global rounds");
    exp_cmd->add_option("--lr1", lr1, "stage-1 learning rate");
    exp_cmd->add_option("--sites2", sites2, "stage-2 silo count");
    exp_cmd->add_option("--rounds2", rounds2, "stage-2 global rounds");
    exp_cmd->add_option("--lr2", lr2, "stage-2 learning rate");
    exp_cmd->add_option("--embed-dim", overrides.embed_dim, "embedding width");
    exp_cmd->add_option("--hidden-dim", overrides.hidden_dim, "representation width");
    exp_cmd->add_option("--min-class-count", overrides.min_class_count,
                        "class survival threshold");
    exp_cmd->add_option("--min-code-count", overrides.min_code_count, "code survival threshold");
    exp_cmd->add_option("--test-fraction", overrides.test_fraction, "held-out fraction");

    GradcheckArgs gc;
    auto* gc_cmd = app.add_subcommand("gradcheck", "verify analytic gradients numerically");
    gc_cmd->add_option("--step", gc.h, "finite-difference step");
    gc_cmd->add_option("--trials", gc.trials, "random configurations");
    gc_cmd->add_option("--max-coords", gc.max_coords, "coordinates checked per tensor");
    gc_cmd->add_option("--seed", gc.seed, "base seed");
    gc_cmd->add_option("--bound", gc.bound, "failure threshold");

    std::vector<std::string> report_dirs;
    auto* rep_cmd = app.add_subcommand("report", "tabulate finished experiment runs");
    rep_cmd->add_option("dirs", report_dirs, "experiment output directories")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (gen_cmd->parsed()) return run_gen(gen);
        if (pre_cmd->parsed()) return run_pretrain(pre);
        if (phe_cmd->parsed()) return run_phenotype(phe);
        if (gc_cmd->parsed()) return run_gradcheck(gc);
        if (rep_cmd->parsed()) return run_report(report_dirs);
        if (exp_cmd->parsed()) {
            return run_experiment_cmd(exp, [&](ExperimentSpec& spec) {
                auto touched = [&](const std::string& name) {
                    return exp_cmd->count(name) > 0;
                };
                if (touched("--vocab-size")) spec.corpus.vocab_size = overrides.corpus.vocab_size;
                if (touched("--num-codes")) spec.corpus.num_codes = overrides.corpus.num_codes;
                if (touched("--num-diseases")) spec.corpus.num_diseases = overrides.corpus.num_diseases;
                if (touched("--patients-pretrain")) spec.corpus.patients_pretrain = overrides.corpus.patients_pretrain;
                if (touched("--patients-phenotype")) spec.corpus.patients_phenotype = overrides.corpus.patients_phenotype;
                if (touched("--doc-length-min")) spec.corpus.doc_length_min = overrides.corpus.doc_length_min;
                if (touched("--doc-length-max")) spec.corpus.doc_length_max = overrides.corpus.doc_length_max;
                if (touched("--latent-noise")) spec.corpus.latent_noise = overrides.corpus.latent_noise;
                if (touched("--questionable-rate")) spec.corpus.questionable_rate = overrides.corpus.questionable_rate;
                if (touched("--corpus-seed")) spec.corpus.seed = overrides.corpus.seed;
                if (touched("--sites1") && spec.fed1) spec.fed1->num_sites = sites1;
                if (touched("--rounds1") && spec.fed1) spec.fed1->global_rounds = rounds1;
                if (touched("--lr1") && spec.fed1) spec.fed1->local_spec.lr = lr1;
                if (touched("--sites2")) spec.fed2.num_sites = sites2;
                if (touched("--rounds2")) spec.fed2.global_rounds = rounds2;
                if (touched("--lr2")) spec.fed2.local_spec.lr = lr2;
                if (touched("--embed-dim")) spec.embed_dim = overrides.embed_dim;
                if (touched("--hidden-dim")) spec.hidden_dim = overrides.hidden_dim;
                if (touched("--min-class-count")) spec.min_class_count = overrides.min_class_count;
                if (touched("--min-code-count")) spec.min_code_count = overrides.min_code_count;
                if (touched("--test-fraction")) spec.test_fraction = overrides.test_fraction;
            });
        }
        throw ConfigError("no subcommand selected");
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace fednlp
