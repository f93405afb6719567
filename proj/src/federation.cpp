#include "fednlp/federation.hpp"

#include <algorithm>
#include <fstream>
#include <future>
#include <set>
#include <utility>

#include <json.hpp>

#include "fednlp/checkpoint.hpp"
#include "fednlp/errors.hpp"

namespace fednlp {

void FedConfig::validate() const {
    if (num_sites < 1) throw ConfigError("FedConfig: num_sites must be >= 1");
    if (global_rounds < 1) throw ConfigError("FedConfig: global_rounds must be >= 1");
    local_spec.validate();
}

void write_round_logs(const std::string& path, const std::vector<RoundLog>& rounds) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("write_round_logs: cannot open " + path);
    for (const auto& r : rounds) {
        for (std::size_t k = 0; k < r.site_samples.size(); ++k) {
            nlohmann::json line;
            line["round"] = r.round;
            line["site"] = static_cast<int>(k);
            line["samples"] = r.site_samples[k];
            line["loss"] = r.site_loss[k];
            line["digest"] = r.digest;
            out << line.dump() << "\n";
        }
    }
}

ParamSet weighted_average(const std::vector<ParamSet>& models,
                          const std::vector<std::int64_t>& counts) {
    if (models.empty()) throw ConfigError("weighted_average: no models");
    if (models.size() != counts.size()) {
        throw ShapeError("weighted_average: " + std::to_string(models.size()) + " models vs " +
                         std::to_string(counts.size()) + " counts");
    }
    std::int64_t total = 0;
    for (std::int64_t c : counts) {
        if (c <= 0) throw WeightError("weighted_average: sample counts must be positive");
        total += c;
    }
    for (const auto& m : models) models.front().require_congruent(m);
    if (models.size() == 1) return models.front();

    ParamSet out;
    for (std::size_t i = 0; i < models.front().size(); ++i) {
        out.add(models.front().name(i), Tensor(models.front().tensor(i).shape()));
    }
    for (std::size_t k = 0; k < models.size(); ++k) {
        const double w = static_cast<double>(counts[k]) / static_cast<double>(total);
        for (std::size_t i = 0; i < out.size(); ++i) {
            const auto& src = models[k].tensor(i).values();
            auto& dst = out.tensor(i).values();
            for (std::size_t v = 0; v < dst.size(); ++v) dst[v] += w * src[v];
        }
    }
    out.check_finite();
    return out;
}

FederatedRun run_federated(const std::vector<std::int64_t>& site_counts, const FedConfig& cfg,
                           const ParamSet& init, const SiteTrainer& trainer, bool parallel) {
    cfg.validate();
    if (static_cast<int>(site_counts.size()) != cfg.num_sites) {
        throw ConfigError("run_federated: cfg.num_sites=" + std::to_string(cfg.num_sites) +
                          " but " + std::to_string(site_counts.size()) + " sites supplied");
    }
    for (std::int64_t c : site_counts) {
        if (c <= 0) throw WeightError("run_federated: every site needs samples");
    }

    FederatedRun run;
    run.params = init;
    const int k_sites = cfg.num_sites;
    for (int t = 1; t <= cfg.global_rounds; ++t) {
        const int offset = (t - 1) * cfg.local_spec.epochs_per_round;
        std::vector<LocalResult> results(static_cast<std::size_t>(k_sites));

        auto train_site = [&](int site) -> LocalResult {
            try {
                return trainer(site, run.params, offset);
            } catch (const std::exception& e) {
                throw FederationError("round " + std::to_string(t) + " site " +
                                      std::to_string(site) + ": " + e.what());
            }
        };

        if (parallel && k_sites > 1) {
            std::vector<std::future<LocalResult>> jobs;
            jobs.reserve(static_cast<std::size_t>(k_sites));
            for (int k = 0; k < k_sites; ++k) {
                jobs.push_back(std::async(std::launch::async, train_site, k));
            }
            for (int k = 0; k < k_sites; ++k) {
                results[static_cast<std::size_t>(k)] = jobs[static_cast<std::size_t>(k)].get();
            }
        } else {
            for (int k = 0; k < k_sites; ++k) results[static_cast<std::size_t>(k)] = train_site(k);
        }

        std::vector<ParamSet> models;
        models.reserve(results.size());
        RoundLog log;
        log.round = t;
        log.site_samples = site_counts;
        for (auto& r : results) {
            models.push_back(std::move(r.params));
            log.site_loss.push_back(r.loss);
        }
        run.params = weighted_average(models, site_counts);
        log.digest = param_set_digest(run.params);
        run.rounds.push_back(std::move(log));
    }
    return run;
}

FederatedRun run_federated_dan(const std::vector<Silo>& silos, const FedConfig& cfg,
                               const DanParams& init, Activation act, bool parallel) {
    if (cfg.stage != FedStage::Representation) {
        throw ConfigError("run_federated_dan: config is not a stage-1 config");
    }
    std::vector<std::int64_t> counts;
    counts.reserve(silos.size());
    for (const auto& s : silos) counts.push_back(s.sample_count());

    SiteTrainer trainer = [&silos, &cfg, act](int site, const ParamSet& start,
                                              int offset) -> LocalResult {
        const auto& silo = silos[static_cast<std::size_t>(site)];
        DanParams trained =
            train_local_dan(DanParams::from_param_set(start), silo, cfg.local_spec, offset, act);
        const double loss = mean_dan_loss(trained, silo.records, act);
        return {trained.param_set(), loss};
    };
    return run_federated(counts, cfg, init.param_set(), trainer, parallel);
}

SvmRun run_federated_svm(const std::vector<std::vector<PhenotypeExample>>& site_examples,
                         const FedConfig& cfg, const SvmModel& init, bool parallel) {
    if (cfg.stage != FedStage::Phenotype) {
        throw ConfigError("run_federated_svm: config is not a stage-2 config");
    }
    std::vector<std::int64_t> counts;
    counts.reserve(site_examples.size());
    for (const auto& ex : site_examples) counts.push_back(static_cast<std::int64_t>(ex.size()));

    SiteTrainer trainer = [&site_examples, &cfg, &init](int site, const ParamSet& start,
                                                        int offset) -> LocalResult {
        SvmModel model = SvmModel::from_param_set(start, init.classes, init.feature_kind);
        SvmModel trained = train_svm_from(model, site_examples[static_cast<std::size_t>(site)],
                                          cfg.local_spec, offset);
        const double loss =
            mean_svm_loss(trained, site_examples[static_cast<std::size_t>(site)]);
        return {trained.to_param_set(), loss};
    };
    FederatedRun run = run_federated(counts, cfg, init.to_param_set(), trainer, parallel);
    return {SvmModel::from_param_set(run.params, init.classes, init.feature_kind),
            std::move(run.rounds)};
}

std::vector<DiseaseId> diseases_in(const std::vector<PatientRecord>& records) {
    std::set<DiseaseId> ids;
    for (const auto& rec : records) {
        if (!rec.phenotype_labels) continue;
        for (const auto& [id, label] : *rec.phenotype_labels) {
            (void)label;
            ids.insert(id);
        }
    }
    return {ids.begin(), ids.end()};
}

MetricsReport evaluate_models(const std::map<DiseaseId, SvmModel>& models,
                              const std::vector<PatientRecord>& test_records,
                              const FeatureSource& features) {
    std::map<DiseaseId, Prf> rows;
    for (const auto& [disease, model] : models) {
        const PhenotypeDataset test =
            build_dataset(test_records, disease, model.classes, features);
        std::vector<ClassLabel> truth;
        std::vector<ClassLabel> pred;
        truth.reserve(test.examples.size());
        pred.reserve(test.examples.size());
        for (const auto& ex : test.examples) {
            truth.push_back(ex.label);
            pred.push_back(predict(model, ex.features));
        }
        rows[disease] = prf(confusion(truth, pred, model.classes));
    }
    return aggregate_report(rows);
}

TwoStageResult run_two_stage(const std::vector<Silo>& pretrain_silos,
                             const std::vector<Silo>& phenotype_silos,
                             const std::vector<PatientRecord>& test_records,
                             const FedConfig& cfg1, const FedConfig& cfg2, const DanParams& init,
                             int min_class_count, Activation act, bool parallel) {
    FederatedRun stage1 = run_federated_dan(pretrain_silos, cfg1, init, act, parallel);
    FrozenEncoder encoder(DanParams::from_param_set(stage1.params), act);
    RepresentationFeatures features(encoder);

    std::vector<PatientRecord> pooled;
    for (const auto& silo : phenotype_silos) {
        pooled.insert(pooled.end(), silo.records.begin(), silo.records.end());
    }

    std::map<DiseaseId, SvmModel> models;
    std::map<DiseaseId, std::vector<RoundLog>> stage2_rounds;
    for (DiseaseId disease : diseases_in(pooled)) {
        const auto classes = decide_classes(pooled, disease, min_class_count);
        std::vector<std::vector<PhenotypeExample>> site_examples;
        site_examples.reserve(phenotype_silos.size());
        for (const auto& silo : phenotype_silos) {
            site_examples.push_back(
                build_dataset(silo.records, disease, classes, features).examples);
        }
        SvmRun run = run_federated_svm(
            site_examples, cfg2,
            zero_svm(classes, features.dims(), FeatureKind::Representation), parallel);
        models.emplace(disease, std::move(run.model));
        stage2_rounds.emplace(disease, std::move(run.rounds));
    }

    MetricsReport report = evaluate_models(models, test_records, features);
    return {std::move(encoder), std::move(models), std::move(report), std::move(stage1.rounds),
            std::move(stage2_rounds)};
}

}  // namespace fednlp
