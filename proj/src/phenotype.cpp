#include "fednlp/phenotype.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "fednlp/checkpoint.hpp"
#include "fednlp/errors.hpp"
#include "fednlp/rng.hpp"

namespace fednlp {

namespace {

constexpr std::uint64_t kSvmShuffleTag = 0x5F4D;

std::string feature_kind_name(FeatureKind kind) {
    return kind == FeatureKind::TfIdf ? "tfidf" : "representation";
}

FeatureKind feature_kind_from_name(const std::string& name) {
    if (name == "tfidf") return FeatureKind::TfIdf;
    if (name == "representation") return FeatureKind::Representation;
    throw ConfigError("unknown feature kind: " + name);
}

void l2_normalize(std::vector<double>& v) {
    double sq = 0.0;
    for (double x : v) sq += x * x;
    if (sq <= 0.0) return;
    const double inv = 1.0 / std::sqrt(sq);
    for (double& x : v) x *= inv;
}

}  // namespace

std::vector<double> TfidfFeatures::features(const ConceptDoc& doc) const {
    std::vector<double> out(static_cast<std::size_t>(idf_.dims), 0.0);
    const SparseVector sv = tfidf_vector(doc, idf_);
    for (const auto& [index, value] : sv.entries) out[index] = value;
    return out;
}

std::vector<double> RepresentationFeatures::features(const ConceptDoc& doc) const {
    std::vector<double> out = enc_.extract(doc);
    l2_normalize(out);
    return out;
}

std::vector<ClassLabel> decide_classes(const std::vector<PatientRecord>& records,
                                       DiseaseId disease, int min_class_count) {
    if (min_class_count < 1) throw ConfigError("decide_classes: min_class_count must be >= 1");
    std::array<std::int64_t, 3> counts{0, 0, 0};
    for (const auto& rec : records) {
        if (!rec.phenotype_labels) continue;
        auto it = rec.phenotype_labels->find(disease);
        if (it == rec.phenotype_labels->end()) continue;
        counts[static_cast<std::size_t>(it->second)] += 1;
    }
    std::vector<ClassLabel> classes;
    for (ClassLabel c : {ClassLabel::Present, ClassLabel::Absent, ClassLabel::Questionable}) {
        if (counts[static_cast<std::size_t>(c)] >= min_class_count) classes.push_back(c);
    }
    if (classes.size() < 2) {
        throw DatasetError("decide_classes: disease " + std::to_string(disease) +
                           " has fewer than two classes with >= " +
                           std::to_string(min_class_count) + " examples");
    }
    return classes;
}

PhenotypeDataset build_dataset(const std::vector<PatientRecord>& records, DiseaseId disease,
                               const std::vector<ClassLabel>& classes,
                               const FeatureSource& features) {
    if (classes.empty()) throw ConfigError("build_dataset: empty class set");
    PhenotypeDataset ds;
    ds.disease = disease;
    ds.classes = classes;
    ds.feature_kind = features.kind();
    for (const auto& rec : records) {
        if (!rec.phenotype_labels) continue;
        auto it = rec.phenotype_labels->find(disease);
        if (it == rec.phenotype_labels->end()) continue;
        if (std::find(classes.begin(), classes.end(), it->second) == classes.end()) continue;
        ds.examples.push_back({features.features(rec.doc), it->second});
    }
    return ds;
}

PhenotypeDataset prepare_dataset(const std::vector<PatientRecord>& records, DiseaseId disease,
                                 const FeatureSource& features, int min_class_count) {
    return build_dataset(records, disease, decide_classes(records, disease, min_class_count),
                         features);
}

ParamSet SvmModel::to_param_set() const {
    ParamSet set;
    set.add("svm_w", weights);
    set.add("svm_b", biases);
    return set;
}

SvmModel SvmModel::from_param_set(const ParamSet& set, std::vector<ClassLabel> classes,
                                  FeatureKind kind) {
    if (set.size() != 2 || !set.has("svm_w") || !set.has("svm_b")) {
        throw ShapeError("svm: parameter set must hold exactly svm_w and svm_b");
    }
    SvmModel model;
    model.weights = set.tensor("svm_w");
    model.biases = set.tensor("svm_b");
    model.classes = std::move(classes);
    model.feature_kind = kind;
    const auto c = static_cast<std::int64_t>(model.classes.size());
    if (model.weights.rank() != 2 || model.weights.shape()[0] != c) {
        throw ShapeError("svm: weight shape does not match class count");
    }
    if (model.biases.rank() != 1 || model.biases.shape()[0] != c) {
        throw ShapeError("svm: bias shape does not match class count");
    }
    return model;
}

SvmModel zero_svm(const std::vector<ClassLabel>& classes, int feature_dim, FeatureKind kind) {
    if (classes.size() < 2) throw ConfigError("zero_svm: need at least two classes");
    if (feature_dim < 1) throw ConfigError("zero_svm: feature_dim must be positive");
    SvmModel model;
    model.classes = classes;
    model.weights = Tensor({static_cast<std::int64_t>(classes.size()), feature_dim});
    model.biases = Tensor({static_cast<std::int64_t>(classes.size())});
    model.feature_kind = kind;
    return model;
}

namespace {

int class_row(const SvmModel& model, ClassLabel label) {
    for (int i = 0; i < model.num_classes(); ++i) {
        if (model.classes[static_cast<std::size_t>(i)] == label) return i;
    }
    throw LabelError("svm: example label " + to_string(label) + " outside the model's classes");
}

// Adds the one-vs-rest hinge subgradient of one example into (gw, gb);
// returns the example's summed hinge loss.
double accumulate_hinge(const SvmModel& model, const PhenotypeExample& ex, Tensor* gw,
                        Tensor* gb) {
    const int c = model.num_classes();
    const int d = model.feature_dim();
    if (static_cast<int>(ex.features.size()) != d) {
        throw ShapeError("svm: feature vector has " + std::to_string(ex.features.size()) +
                         " dims, model expects " + std::to_string(d));
    }
    const int pos = class_row(model, ex.label);
    double loss = 0.0;
    for (int k = 0; k < c; ++k) {
        double score = model.biases.values()[static_cast<std::size_t>(k)];
        for (int j = 0; j < d; ++j) score += model.weights.at(k, j) * ex.features[static_cast<std::size_t>(j)];
        const double y = (k == pos) ? 1.0 : -1.0;
        const double margin = 1.0 - y * score;
        if (margin <= 0.0) continue;
        loss += margin;
        if (gw != nullptr) {
            for (int j = 0; j < d; ++j) gw->at(k, j) -= y * ex.features[static_cast<std::size_t>(j)];
            gb->values()[static_cast<std::size_t>(k)] -= y;
        }
    }
    return loss;
}

}  // namespace

SvmModel train_svm_from(const SvmModel& start, const std::vector<PhenotypeExample>& examples,
                        const TrainSpec& spec, int epoch_offset) {
    spec.validate();
    if (epoch_offset < 0) throw ConfigError("train_svm_from: epoch_offset must be >= 0");
    if (examples.empty()) throw DatasetError("train_svm_from: no training examples");

    SvmModel model = start;
    const int n = static_cast<int>(examples.size());
    std::vector<int> order(static_cast<std::size_t>(n));
    for (int epoch = 0; epoch < spec.epochs_per_round; ++epoch) {
        std::iota(order.begin(), order.end(), 0);
        auto rng = make_rng(mix_seed(spec.seed, kSvmShuffleTag,
                                     static_cast<std::uint64_t>(epoch_offset + epoch)));
        std::shuffle(order.begin(), order.end(), rng);
        for (int begin = 0; begin < n; begin += spec.batch_size) {
            const int end = std::min(n, begin + spec.batch_size);
            Tensor gw(model.weights.shape());
            Tensor gb(model.biases.shape());
            for (int i = begin; i < end; ++i) {
                accumulate_hinge(model, examples[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])],
                                 &gw, &gb);
            }
            const double scale = spec.lr / static_cast<double>(end - begin);
            for (std::int64_t v = 0; v < gw.numel(); ++v) {
                model.weights.values()[static_cast<std::size_t>(v)] -=
                    scale * gw.values()[static_cast<std::size_t>(v)];
            }
            for (std::int64_t v = 0; v < gb.numel(); ++v) {
                model.biases.values()[static_cast<std::size_t>(v)] -=
                    scale * gb.values()[static_cast<std::size_t>(v)];
            }
        }
        model.weights.check_finite("svm_w");
        model.biases.check_finite("svm_b");
    }
    return model;
}

SvmModel train_svm(const PhenotypeDataset& ds, const TrainSpec& spec, int epoch_offset) {
    if (ds.examples.empty()) throw DatasetError("train_svm: empty dataset");
    const int d = static_cast<int>(ds.examples.front().features.size());
    return train_svm_from(zero_svm(ds.classes, d, ds.feature_kind), ds.examples, spec,
                          epoch_offset);
}

double mean_svm_loss(const SvmModel& model, const std::vector<PhenotypeExample>& examples) {
    if (examples.empty()) throw DatasetError("mean_svm_loss: no examples");
    double total = 0.0;
    for (const auto& ex : examples) total += accumulate_hinge(model, ex, nullptr, nullptr);
    return total / static_cast<double>(examples.size());
}

ClassLabel predict(const SvmModel& model, const std::vector<double>& x) {
    const int c = model.num_classes();
    const int d = model.feature_dim();
    if (static_cast<int>(x.size()) != d) {
        throw ShapeError("predict: feature vector has " + std::to_string(x.size()) +
                         " dims, model expects " + std::to_string(d));
    }
    int best = 0;
    double best_score = 0.0;
    for (int k = 0; k < c; ++k) {
        double score = model.biases.values()[static_cast<std::size_t>(k)];
        for (int j = 0; j < d; ++j) score += model.weights.at(k, j) * x[static_cast<std::size_t>(j)];
        if (k == 0 || score > best_score) {
            best = k;
            best_score = score;
        }
    }
    return model.classes[static_cast<std::size_t>(best)];
}

void save_svm(const std::string& path, const SvmModel& model) {
    save_param_set(path, model.to_param_set());
    nlohmann::json meta;
    meta["classes"] = nlohmann::json::array();
    for (ClassLabel c : model.classes) meta["classes"].push_back(to_string(c));
    meta["feature_kind"] = feature_kind_name(model.feature_kind);
    meta["feature_dim"] = model.feature_dim();
    std::ofstream out(path + ".meta.json");
    if (!out) throw DataError("save_svm: cannot open " + path + ".meta.json");
    out << meta.dump(2) << "\n";
}

SvmModel load_svm(const std::string& path) {
    std::ifstream in(path + ".meta.json");
    if (!in) throw DataError("load_svm: cannot open " + path + ".meta.json");
    nlohmann::json meta;
    try {
        in >> meta;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("load_svm: bad sidecar: " + std::string(e.what()));
    }
    std::vector<ClassLabel> classes;
    for (const auto& name : meta.at("classes")) {
        classes.push_back(class_label_from_string(name.get<std::string>()));
    }
    const FeatureKind kind = feature_kind_from_name(meta.at("feature_kind").get<std::string>());
    return SvmModel::from_param_set(load_param_set(path), std::move(classes), kind);
}

}  // namespace fednlp
