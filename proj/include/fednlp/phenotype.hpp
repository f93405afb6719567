#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "fednlp/corpus.hpp"
#include "fednlp/representation.hpp"
#include "fednlp/tensor.hpp"
#include "fednlp/vocab.hpp"

namespace fednlp {

enum class FeatureKind { TfIdf, Representation };

// Maps a document to an L2-normalized dense feature vector. The TF-IDF
// and representation pipelines differ only in this encoder.
class FeatureSource {
  public:
    virtual ~FeatureSource() = default;
    virtual int dims() const = 0;
    virtual FeatureKind kind() const = 0;
    virtual std::vector<double> features(const ConceptDoc& doc) const = 0;
};

class TfidfFeatures final : public FeatureSource {
  public:
    explicit TfidfFeatures(IdfTable idf) : idf_(std::move(idf)) {}
    int dims() const override { return idf_.dims; }
    FeatureKind kind() const override { return FeatureKind::TfIdf; }
    std::vector<double> features(const ConceptDoc& doc) const override;

  private:
    IdfTable idf_;
};

class RepresentationFeatures final : public FeatureSource {
  public:
    explicit RepresentationFeatures(FrozenEncoder enc) : enc_(std::move(enc)) {}
    int dims() const override { return enc_.hidden_dim(); }
    FeatureKind kind() const override { return FeatureKind::Representation; }
    std::vector<double> features(const ConceptDoc& doc) const override;

  private:
    FrozenEncoder enc_;
};

struct PhenotypeExample {
    std::vector<double> features;
    ClassLabel label;
};

struct PhenotypeDataset {
    DiseaseId disease = 0;
    std::vector<ClassLabel> classes;  // surviving classes, ascending enum order
    FeatureKind feature_kind = FeatureKind::TfIdf;
    std::vector<PhenotypeExample> examples;
};

// Classes with at least min_class_count examples among the records'
// labels for this disease, in ascending enum order. Fewer than two
// survivors is a dataset error. Dropping Questionable leaves the binary
// Present/Absent task.
std::vector<ClassLabel> decide_classes(const std::vector<PatientRecord>& records,
                                       DiseaseId disease, int min_class_count);

// Featurizes records whose label for the disease is within `classes`;
// records with dropped labels are excluded. No class-count check.
PhenotypeDataset build_dataset(const std::vector<PatientRecord>& records, DiseaseId disease,
                               const std::vector<ClassLabel>& classes,
                               const FeatureSource& features);

// decide_classes + build_dataset; the spec-level dataset constructor.
PhenotypeDataset prepare_dataset(const std::vector<PatientRecord>& records, DiseaseId disease,
                                 const FeatureSource& features, int min_class_count = 10);

// One-vs-rest linear SVM; one weight row and bias per class.
struct SvmModel {
    std::vector<ClassLabel> classes;
    Tensor weights;  // [num_classes, D]
    Tensor biases;   // [num_classes]
    FeatureKind feature_kind = FeatureKind::TfIdf;

    int num_classes() const { return static_cast<int>(classes.size()); }
    int feature_dim() const { return static_cast<int>(weights.shape()[1]); }

    ParamSet to_param_set() const;
    static SvmModel from_param_set(const ParamSet& set, std::vector<ClassLabel> classes,
                                   FeatureKind kind);
};

SvmModel zero_svm(const std::vector<ClassLabel>& classes, int feature_dim, FeatureKind kind);

// Unregularized hinge loss trained with shuffled minibatch SGD (batch
// subgradients averaged). Epoch shuffles derive from (spec.seed, global
// epoch index) exactly as in train_local_dan, so federation with K=1
// chains rounds bit-identically.
SvmModel train_svm(const PhenotypeDataset& ds, const TrainSpec& spec, int epoch_offset = 0);

// Continues training from an existing model; used by the federated rounds.
SvmModel train_svm_from(const SvmModel& start, const std::vector<PhenotypeExample>& examples,
                        const TrainSpec& spec, int epoch_offset = 0);

// Mean per-example multiclass hinge loss.
double mean_svm_loss(const SvmModel& model, const std::vector<PhenotypeExample>& examples);

// argmax over class scores w_c . x + b_c; ties break toward the lowest
// class index in `classes` order.
ClassLabel predict(const SvmModel& model, const std::vector<double>& x);

// Checkpoint plus a JSON sidecar carrying class order and feature kind.
void save_svm(const std::string& path, const SvmModel& model);
SvmModel load_svm(const std::string& path);

}  // namespace fednlp
