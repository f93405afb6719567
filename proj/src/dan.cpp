#include "fednlp/dan.hpp"

#include <algorithm>
#include <cmath>

#include "fednlp/rng.hpp"

namespace fednlp {

namespace {

constexpr double kProbClamp = 1e-12;

double sigmoid(double z) {
    return 1.0 / (1.0 + std::exp(-z));
}

void check_doc(const DanParams& p, const ConceptDoc& doc) {
    if (doc.empty()) throw InferenceError("dan: empty document");
    const auto vocab = static_cast<ConceptId>(p.vocab_size());
    for (ConceptId t : doc.tokens) {
        if (t >= vocab) {
            throw VocabError("token " + std::to_string(t) + " outside vocabulary of size " +
                             std::to_string(vocab));
        }
    }
}

struct DanTrace {
    std::vector<double> avg;         // E
    std::vector<double> pre_hidden;  // H, before activation
    std::vector<double> hidden;      // H
    std::vector<double> probs;       // M
};

DanTrace forward_trace(const DanParams& p, const ConceptDoc& doc, Activation act) {
    check_doc(p, doc);
    const int E = p.embed_dim();
    const int H = p.hidden_dim();
    const int M = p.output_dim();

    DanTrace t;
    t.avg.assign(static_cast<std::size_t>(E), 0.0);
    const Tensor& embed = p.embed();
    for (ConceptId tok : doc.tokens) {
        const double* row = embed.data() + static_cast<std::int64_t>(tok) * E;
        for (int e = 0; e < E; ++e) t.avg[static_cast<std::size_t>(e)] += row[e];
    }
    const double inv_len = 1.0 / static_cast<double>(doc.size());
    for (int e = 0; e < E; ++e) t.avg[static_cast<std::size_t>(e)] *= inv_len;

    t.pre_hidden.assign(static_cast<std::size_t>(H), 0.0);
    const Tensor& dense_w = p.dense_w();
    const Tensor& dense_b = p.dense_b();
    for (int e = 0; e < E; ++e) {
        const double a = t.avg[static_cast<std::size_t>(e)];
        if (a == 0.0) continue;
        const double* row = dense_w.data() + static_cast<std::int64_t>(e) * H;
        for (int h = 0; h < H; ++h) t.pre_hidden[static_cast<std::size_t>(h)] += a * row[h];
    }
    t.hidden.resize(static_cast<std::size_t>(H));
    for (int h = 0; h < H; ++h) {
        const double z = t.pre_hidden[static_cast<std::size_t>(h)] + dense_b[h];
        t.pre_hidden[static_cast<std::size_t>(h)] = z;
        t.hidden[static_cast<std::size_t>(h)] =
            act == Activation::Relu ? std::max(0.0, z) : std::tanh(z);
    }

    t.probs.assign(static_cast<std::size_t>(M), 0.0);
    const Tensor& out_w = p.out_w();
    const Tensor& out_b = p.out_b();
    for (int h = 0; h < H; ++h) {
        const double a = t.hidden[static_cast<std::size_t>(h)];
        if (a == 0.0) continue;
        const double* row = out_w.data() + static_cast<std::int64_t>(h) * M;
        for (int m = 0; m < M; ++m) t.probs[static_cast<std::size_t>(m)] += a * row[m];
    }
    for (int m = 0; m < M; ++m) {
        t.probs[static_cast<std::size_t>(m)] = sigmoid(t.probs[static_cast<std::size_t>(m)] + out_b[m]);
    }
    return t;
}

}  // namespace

DanParams::DanParams(int vocab, int embed_dim, int hidden_dim, int outputs) {
    if (vocab < 1 || embed_dim < 1 || hidden_dim < 1 || outputs < 1) {
        throw ConfigError("DanParams: all dimensions must be >= 1");
    }
    set_.add("embed", Tensor({vocab, embed_dim}));
    set_.add("dense_w", Tensor({embed_dim, hidden_dim}));
    set_.add("dense_b", Tensor({hidden_dim}));
    set_.add("out_w", Tensor({hidden_dim, outputs}));
    set_.add("out_b", Tensor({outputs}));
}

DanParams DanParams::from_param_set(ParamSet set) {
    static const char* names[] = {"embed", "dense_w", "dense_b", "out_w", "out_b"};
    if (set.size() != 5) throw ShapeError("DanParams: expected 5 tensors");
    for (std::size_t i = 0; i < 5; ++i) {
        if (set.name(i) != names[i]) {
            throw ShapeError("DanParams: expected tensor '" + std::string(names[i]) +
                             "' at position " + std::to_string(i));
        }
    }
    const auto& embed = set.tensor("embed").shape();
    const auto& dense_w = set.tensor("dense_w").shape();
    const auto& dense_b = set.tensor("dense_b").shape();
    const auto& out_w = set.tensor("out_w").shape();
    const auto& out_b = set.tensor("out_b").shape();
    if (embed.size() != 2 || dense_w.size() != 2 || dense_b.size() != 1 || out_w.size() != 2 ||
        out_b.size() != 1 || embed[1] != dense_w[0] || dense_w[1] != dense_b[0] ||
        dense_b[0] != out_w[0] || out_w[1] != out_b[0]) {
        throw ShapeError("DanParams: inconsistent tensor shapes");
    }
    DanParams p;
    p.set_ = std::move(set);
    return p;
}

DanParams init_params(int vocab, int embed_dim, int hidden_dim, int outputs, std::uint64_t seed) {
    DanParams p(vocab, embed_dim, hidden_dim, outputs);
    auto rng = make_rng(mix_seed(seed, 0xDA4));
    auto glorot = [&rng](Tensor& t, int fan_in, int fan_out) {
        const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        std::uniform_real_distribution<double> dist(-bound, bound);
        for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = dist(rng);
    };
    glorot(p.embed(), vocab, embed_dim);
    glorot(p.dense_w(), embed_dim, hidden_dim);
    glorot(p.out_w(), hidden_dim, outputs);
    return p;
}

DanForward dan_forward(const DanParams& p, const ConceptDoc& doc, Activation act) {
    DanTrace t = forward_trace(p, doc, act);
    return DanForward{std::move(t.hidden), std::move(t.probs)};
}

double bce_loss(const std::vector<double>& probs, const std::vector<std::uint8_t>& labels) {
    if (probs.size() != labels.size()) {
        throw ShapeError("bce_loss: " + std::to_string(probs.size()) + " probabilities vs " +
                         std::to_string(labels.size()) + " labels");
    }
    double loss = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        const double f = std::clamp(probs[i], kProbClamp, 1.0 - kProbClamp);
        loss -= labels[i] ? std::log(f) : std::log(1.0 - f);
    }
    return loss;
}

double dan_backward_accumulate(const DanParams& p, const ConceptDoc& doc,
                               const std::vector<std::uint8_t>& labels, ParamSet& acc,
                               Activation act) {
    const int E = p.embed_dim();
    const int H = p.hidden_dim();
    const int M = p.output_dim();
    if (static_cast<int>(labels.size()) != M) {
        throw ShapeError("dan_backward: expected " + std::to_string(M) + " labels, got " +
                         std::to_string(labels.size()));
    }
    acc.require_congruent(p.param_set(), "dan_backward accumulator");

    DanTrace t = forward_trace(p, doc, act);

    // d loss / d logit_m = prob_m - label_m for the summed objective.
    std::vector<double> dlogit(static_cast<std::size_t>(M));
    for (int m = 0; m < M; ++m) {
        dlogit[static_cast<std::size_t>(m)] =
            t.probs[static_cast<std::size_t>(m)] - static_cast<double>(labels[static_cast<std::size_t>(m)]);
    }

    Tensor& g_out_w = acc.tensor("out_w");
    Tensor& g_out_b = acc.tensor("out_b");
    for (int m = 0; m < M; ++m) g_out_b[m] += dlogit[static_cast<std::size_t>(m)];
    for (int h = 0; h < H; ++h) {
        const double a = t.hidden[static_cast<std::size_t>(h)];
        if (a == 0.0) continue;
        double* row = g_out_w.data() + static_cast<std::int64_t>(h) * M;
        for (int m = 0; m < M; ++m) row[m] += a * dlogit[static_cast<std::size_t>(m)];
    }

    std::vector<double> dpre(static_cast<std::size_t>(H), 0.0);
    const Tensor& out_w = p.out_w();
    for (int h = 0; h < H; ++h) {
        const double* row = out_w.data() + static_cast<std::int64_t>(h) * M;
        double dh = 0.0;
        for (int m = 0; m < M; ++m) dh += row[m] * dlogit[static_cast<std::size_t>(m)];
        if (act == Activation::Relu) {
            dpre[static_cast<std::size_t>(h)] = t.pre_hidden[static_cast<std::size_t>(h)] > 0.0 ? dh : 0.0;
        } else {
            const double y = t.hidden[static_cast<std::size_t>(h)];
            dpre[static_cast<std::size_t>(h)] = dh * (1.0 - y * y);
        }
    }

    Tensor& g_dense_w = acc.tensor("dense_w");
    Tensor& g_dense_b = acc.tensor("dense_b");
    for (int h = 0; h < H; ++h) g_dense_b[h] += dpre[static_cast<std::size_t>(h)];
    for (int e = 0; e < E; ++e) {
        const double a = t.avg[static_cast<std::size_t>(e)];
        if (a == 0.0) continue;
        double* row = g_dense_w.data() + static_cast<std::int64_t>(e) * H;
        for (int h = 0; h < H; ++h) row[h] += a * dpre[static_cast<std::size_t>(h)];
    }

    std::vector<double> davg(static_cast<std::size_t>(E), 0.0);
    const Tensor& dense_w = p.dense_w();
    for (int e = 0; e < E; ++e) {
        const double* row = dense_w.data() + static_cast<std::int64_t>(e) * H;
        double de = 0.0;
        for (int h = 0; h < H; ++h) de += row[h] * dpre[static_cast<std::size_t>(h)];
        davg[static_cast<std::size_t>(e)] = de;
    }

    // Each token occurrence contributes 1/doc_length of the pooled gradient
    // to its embedding row; untouched rows stay zero.
    Tensor& g_embed = acc.tensor("embed");
    const double inv_len = 1.0 / static_cast<double>(doc.size());
    for (ConceptId tok : doc.tokens) {
        double* row = g_embed.data() + static_cast<std::int64_t>(tok) * E;
        for (int e = 0; e < E; ++e) row[e] += inv_len * davg[static_cast<std::size_t>(e)];
    }

    return bce_loss(t.probs, labels);
}

ParamSet dan_backward(const DanParams& p, const ConceptDoc& doc,
                      const std::vector<std::uint8_t>& labels, Activation act) {
    ParamSet grads;
    for (const auto& [name, tensor] : p.param_set()) {
        grads.add(name, Tensor(tensor.shape()));
    }
    dan_backward_accumulate(p, doc, labels, grads, act);
    return grads;
}

double grad_check(const DanParams& p, const ConceptDoc& doc,
                  const std::vector<std::uint8_t>& labels, double h, int max_coords_per_tensor,
                  std::uint64_t seed, Activation act) {
    if (h <= 0.0) throw ConfigError("grad_check: step size h must be positive");
    if (max_coords_per_tensor < 1) throw ConfigError("grad_check: need at least one coordinate");

    const ParamSet analytic = dan_backward(p, doc, labels, act);
    DanParams probe = p;
    auto rng = make_rng(mix_seed(seed, 0x6C));

    double max_err = 0.0;
    for (std::size_t ti = 0; ti < analytic.size(); ++ti) {
        const std::int64_t n = analytic.tensor(ti).numel();
        std::vector<std::int64_t> coords;
        if (n <= max_coords_per_tensor) {
            coords.resize(static_cast<std::size_t>(n));
            for (std::int64_t i = 0; i < n; ++i) coords[static_cast<std::size_t>(i)] = i;
        } else {
            std::uniform_int_distribution<std::int64_t> pick(0, n - 1);
            coords.reserve(static_cast<std::size_t>(max_coords_per_tensor));
            for (int i = 0; i < max_coords_per_tensor; ++i) coords.push_back(pick(rng));
        }
        Tensor& tensor = probe.param_set().tensor(ti);
        for (std::int64_t c : coords) {
            const double saved = tensor[c];
            tensor[c] = saved + h;
            const double up = bce_loss(dan_forward(probe, doc, act).probs, labels);
            tensor[c] = saved - h;
            const double down = bce_loss(dan_forward(probe, doc, act).probs, labels);
            tensor[c] = saved;

            const double numeric = (up - down) / (2.0 * h);
            const double exact = analytic.tensor(ti)[c];
            const double denom = std::max(std::abs(numeric), std::abs(exact));
            // Both gradients at numerical zero: compare absolutely.
            const double err = denom < 1e-8 ? std::abs(numeric - exact)
                                            : std::abs(numeric - exact) / denom;
            max_err = std::max(max_err, err);
        }
    }
    return max_err;
}

}  // namespace fednlp
