#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fednlp/corpus.hpp"
#include "fednlp/dan.hpp"

namespace fednlp {

// Local-training hyperparameters; also the per-round unit inside a
// federated run.
struct TrainSpec {
    int epochs_per_round = 1;
    double lr = 0.01;
    int batch_size = 32;
    std::uint64_t seed = 0;

    void validate() const;
};

// Supervised pre-training on code labels. Runs epochs_per_round epochs of
// shuffled minibatch SGD on the summed BCE objective (batch gradients are
// averaged). The shuffle for global epoch e derives from (spec.seed, e)
// only, so a K=1 federated run that chains rounds with increasing
// epoch_offset is bit-identical to one long local run.
DanParams train_local_dan(const DanParams& start, const Silo& silo, const TrainSpec& spec,
                          int epoch_offset = 0, Activation act = Activation::Relu);

// Mean per-example BCE of the model over a silo; used for round logs and
// convergence checks.
double mean_dan_loss(const DanParams& p, const std::vector<PatientRecord>& records,
                     Activation act = Activation::Relu);

// Drops code columns with fewer than min_count positive examples across
// the records. Returns the kept column indices; records are rewritten in
// place with the reduced label width. min_count <= 1 keeps everything.
std::vector<int> filter_rare_codes(std::vector<PatientRecord>& records, int min_count);

// Pre-trained DAN with frozen weights; maps a document to the dense-layer
// activation vector.
class FrozenEncoder {
  public:
    FrozenEncoder(DanParams params, Activation act = Activation::Relu);

    int hidden_dim() const { return params_.hidden_dim(); }
    int vocab_size() const { return params_.vocab_size(); }
    const DanParams& params() const { return params_; }
    Activation activation() const { return act_; }

    std::vector<double> extract(const ConceptDoc& doc) const;

  private:
    DanParams params_;
    Activation act_;
};

inline std::vector<double> extract_representation(const FrozenEncoder& enc, const ConceptDoc& doc) {
    return enc.extract(doc);
}

// Checkpoint plus a JSON sidecar (<path>.meta.json) recording dimensions,
// activation, and the training-config digest.
void save_encoder(const std::string& path, const FrozenEncoder& enc,
                  const std::string& config_digest = "");
FrozenEncoder load_encoder(const std::string& path);

}  // namespace fednlp
