#include "fednlp/representation.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "fednlp/checkpoint.hpp"
#include "fednlp/rng.hpp"

namespace fednlp {

void TrainSpec::validate() const {
    if (epochs_per_round < 1) throw ConfigError("TrainSpec.epochs_per_round must be >= 1");
    if (!(lr > 0.0)) throw ConfigError("TrainSpec.lr must be positive");
    if (batch_size < 1) throw ConfigError("TrainSpec.batch_size must be >= 1");
}

DanParams train_local_dan(const DanParams& start, const Silo& silo, const TrainSpec& spec,
                          int epoch_offset, Activation act) {
    spec.validate();
    if (silo.records.empty()) throw DataError("train_local_dan: empty silo");
    for (const auto& rec : silo.records) {
        if (!rec.code_labels) {
            throw DataError("train_local_dan: record " + std::to_string(rec.patient_id) +
                            " has no code labels");
        }
    }

    DanParams params = start;
    ParamSet grads;
    for (const auto& [name, tensor] : params.param_set()) {
        grads.add(name, Tensor(tensor.shape()));
    }

    const std::size_t n = silo.records.size();
    std::vector<std::size_t> order(n);
    for (int epoch = 0; epoch < spec.epochs_per_round; ++epoch) {
        std::iota(order.begin(), order.end(), 0);
        auto rng = make_rng(mix_seed(spec.seed, 0xE70C, static_cast<std::uint64_t>(epoch_offset + epoch)));
        std::shuffle(order.begin(), order.end(), rng);

        for (std::size_t b = 0; b < n; b += static_cast<std::size_t>(spec.batch_size)) {
            const std::size_t end = std::min(n, b + static_cast<std::size_t>(spec.batch_size));
            for (auto& [name, tensor] : grads) tensor.fill(0.0);
            for (std::size_t i = b; i < end; ++i) {
                const auto& rec = silo.records[order[i]];
                dan_backward_accumulate(params, rec.doc, *rec.code_labels, grads, act);
            }
            const double scale = 1.0 / static_cast<double>(end - b);
            for (auto& [name, tensor] : grads) {
                for (std::int64_t j = 0; j < tensor.numel(); ++j) tensor[j] *= scale;
            }
            params.param_set() = sgd_step(params.param_set(), grads, spec.lr);
        }
        params.param_set().check_finite("train_local_dan epoch " + std::to_string(epoch));
    }
    return params;
}

double mean_dan_loss(const DanParams& p, const std::vector<PatientRecord>& records, Activation act) {
    if (records.empty()) throw DataError("mean_dan_loss: no records");
    double total = 0.0;
    for (const auto& rec : records) {
        if (!rec.code_labels) {
            throw DataError("mean_dan_loss: record " + std::to_string(rec.patient_id) +
                            " has no code labels");
        }
        total += bce_loss(dan_forward(p, rec.doc, act).probs, *rec.code_labels);
    }
    return total / static_cast<double>(records.size());
}

std::vector<int> filter_rare_codes(std::vector<PatientRecord>& records, int min_count) {
    if (records.empty()) throw DataError("filter_rare_codes: no records");
    std::size_t width = 0;
    for (const auto& rec : records) {
        if (!rec.code_labels) throw DataError("filter_rare_codes: record without code labels");
        if (width == 0) width = rec.code_labels->size();
        if (rec.code_labels->size() != width) {
            throw DataError("filter_rare_codes: inconsistent code label width");
        }
    }
    std::vector<int> kept;
    if (min_count <= 1) {
        kept.resize(width);
        std::iota(kept.begin(), kept.end(), 0);
        return kept;
    }
    std::vector<int> positives(width, 0);
    for (const auto& rec : records) {
        for (std::size_t c = 0; c < width; ++c) {
            positives[c] += (*rec.code_labels)[c] ? 1 : 0;
        }
    }
    for (std::size_t c = 0; c < width; ++c) {
        if (positives[c] >= min_count) kept.push_back(static_cast<int>(c));
    }
    if (kept.empty()) throw DataError("filter_rare_codes: no code column meets min_count");
    for (auto& rec : records) {
        std::vector<std::uint8_t> reduced;
        reduced.reserve(kept.size());
        for (int c : kept) reduced.push_back((*rec.code_labels)[static_cast<std::size_t>(c)]);
        rec.code_labels = std::move(reduced);
    }
    return kept;
}

FrozenEncoder::FrozenEncoder(DanParams params, Activation act)
    : params_(std::move(params)), act_(act) {
    params_.param_set().check_finite("FrozenEncoder");
}

std::vector<double> FrozenEncoder::extract(const ConceptDoc& doc) const {
    return dan_forward(params_, doc, act_).hidden;
}

void save_encoder(const std::string& path, const FrozenEncoder& enc,
                  const std::string& config_digest) {
    save_param_set(path, enc.params().param_set());
    nlohmann::json meta;
    meta["vocab_size"] = enc.vocab_size();
    meta["embed_dim"] = enc.params().embed_dim();
    meta["hidden_dim"] = enc.hidden_dim();
    meta["output_dim"] = enc.params().output_dim();
    meta["activation"] = enc.activation() == Activation::Relu ? "relu" : "tanh";
    meta["config_digest"] = config_digest;
    std::ofstream out(path + ".meta.json");
    if (!out) throw DataError("cannot open " + path + ".meta.json for writing");
    out << meta.dump(2) << '\n';
}

FrozenEncoder load_encoder(const std::string& path) {
    ParamSet set = load_param_set(path);
    Activation act = Activation::Relu;
    std::ifstream in(path + ".meta.json");
    if (in) {
        nlohmann::json meta = nlohmann::json::parse(in);
        if (meta.value("activation", "relu") == "tanh") act = Activation::Tanh;
    }
    return FrozenEncoder(DanParams::from_param_set(std::move(set)), act);
}

}  // namespace fednlp
