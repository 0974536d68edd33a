#include "mipo/model.hpp"

#include <cmath>
#include <stdexcept>

#include "mipo/rng.hpp"

namespace mipo::lm {

using diff::Graph;
using diff::Tensor;

bool operator==(const ModelConfig& a, const ModelConfig& b) {
    return a.d_model == b.d_model && a.n_layers == b.n_layers &&
           a.context_len == b.context_len && a.vocab_size == b.vocab_size && a.seed == b.seed;
}

EncodedSequence encode_sequence(const Vocab& vocab, std::span<const int> prompt,
                                std::span<const int> response) {
    if (prompt.empty()) throw std::invalid_argument("encode_sequence: empty prompt");
    if (response.empty())
        throw std::invalid_argument("encode_sequence: empty response (|y| = 0)");
    EncodedSequence enc;
    enc.input.reserve(prompt.size() + response.size() + 2);
    enc.input.push_back(vocab.bos());
    enc.input.insert(enc.input.end(), prompt.begin(), prompt.end());
    enc.input.push_back(vocab.sep());
    enc.input.insert(enc.input.end(), response.begin(), response.end());
    enc.targets.assign(response.begin(), response.end());
    enc.targets.push_back(vocab.eos());
    enc.first_row = prompt.size() + 1;  // the SEP row predicts the first response char
    return enc;
}

TinyLm::TinyLm(ModelConfig cfg, HeadInit head_init) : cfg_(cfg) {
    if (cfg.d_model <= 0 || cfg.n_layers <= 0 || cfg.context_len <= 0 || cfg.vocab_size <= 0)
        throw std::invalid_argument("model config fields must be positive");
    Rng rng(cfg.seed);
    const auto D = static_cast<std::int64_t>(cfg.d_model);
    const auto V = static_cast<std::int64_t>(cfg.vocab_size);
    const double scale = 1.0 / std::sqrt(static_cast<double>(cfg.d_model));

    auto normal = [&rng](std::vector<std::int64_t> shape, double stddev) {
        Tensor t = Tensor::zeros(std::move(shape), /*requires_grad=*/true);
        for (auto& v : t.values()) v = rng.normal(0.0, stddev);
        return t;
    };

    params_["embed"] = normal({V, D}, 0.5);
    for (int l = 0; l < cfg.n_layers; ++l) {
        const std::string p = "block" + std::to_string(l) + ".";
        params_[p + "gate_w"] = normal({D, D}, scale);
        params_[p + "gate_b"] = Tensor::zeros({D}, true);
        params_[p + "cand_w"] = normal({D, D}, scale);
        params_[p + "cand_b"] = Tensor::zeros({D}, true);
    }
    if (head_init == HeadInit::Random) {
        params_["head_w"] = normal({D, V}, scale);
        params_["head_b"] = normal({V}, 0.1);
    } else {
        params_["head_w"] = Tensor::zeros({D, V}, true);
        params_["head_b"] = Tensor::zeros({V}, true);
    }
    validate();
}

TinyLm::TinyLm(ModelConfig cfg, std::map<std::string, diff::Tensor> params)
    : cfg_(cfg), params_(std::move(params)) {
    validate();
}

void TinyLm::validate() const {
    if (param_count() > 200000)
        throw std::invalid_argument("model has " + std::to_string(param_count()) +
                                    " parameters; desk-scale limit is 200000");
}

diff::Tensor& TinyLm::param(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) throw std::invalid_argument("unknown parameter: " + name);
    return it->second;
}

const diff::Tensor& TinyLm::cparam(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw std::invalid_argument("unknown parameter: " + name);
    return it->second;
}

std::vector<std::string> TinyLm::param_names() const {
    std::vector<std::string> names;
    names.reserve(params_.size());
    for (const auto& [name, t] : params_) names.push_back(name);
    return names;
}

std::size_t TinyLm::param_count() const {
    std::size_t n = 0;
    for (const auto& [name, t] : params_) n += static_cast<std::size_t>(t.numel());
    return n;
}

void TinyLm::zero_grads() {
    for (auto& [name, t] : params_) t.zero_grad();
}

TinyLm TinyLm::clone() const {
    std::map<std::string, Tensor> copy;
    for (const auto& [name, t] : params_) {
        std::vector<double> vals(t.values().begin(), t.values().end());
        copy[name] = Tensor::from(t.shape(), std::move(vals), t.requires_grad());
    }
    return TinyLm(cfg_, std::move(copy));
}

diff::Tensor TinyLm::forward(Graph& g, std::span<const int> tokens) const {
    if (tokens.empty()) throw std::invalid_argument("forward: empty token sequence");
    if (static_cast<int>(tokens.size()) > cfg_.context_len)
        throw std::invalid_argument("forward: sequence length " +
                                    std::to_string(tokens.size()) + " exceeds context_len " +
                                    std::to_string(cfg_.context_len));
    for (int id : tokens)
        if (id < 0 || id >= cfg_.vocab_size)
            throw std::invalid_argument("forward: token id " + std::to_string(id) +
                                        " outside vocabulary");

    Tensor x = g.embedding(cparam("embed"), tokens);
    const auto T = static_cast<std::int64_t>(tokens.size());
    for (int l = 0; l < cfg_.n_layers; ++l) {
        const std::string p = "block" + std::to_string(l) + ".";
        Tensor z = g.sigmoid(g.add_rowvec(g.matmul(x, cparam(p + "gate_w")), cparam(p + "gate_b")));
        Tensor c = g.tanh(g.add_rowvec(g.matmul(x, cparam(p + "cand_w")), cparam(p + "cand_b")));
        // h_t = (1 - z_t) * h_{t-1} + z_t * c_t, h_{-1} = 0
        std::vector<Tensor> states;
        states.reserve(static_cast<std::size_t>(T));
        Tensor h;
        for (std::int64_t t = 0; t < T; ++t) {
            Tensor zt = g.row(z, t);
            Tensor ct = g.row(c, t);
            Tensor gated = g.mul(zt, ct);
            h = (t == 0) ? gated : g.add(g.mul(g.affine(zt, -1.0, 1.0), h), gated);
            states.push_back(h);
        }
        x = g.stack_rows(states);
    }
    Tensor logits = g.add_rowvec(g.matmul(x, cparam("head_w")), cparam("head_b"));
    return g.log_softmax(logits);
}

diff::Tensor TinyLm::response_loglik_sum(Graph& g, std::span<const int> prompt,
                                         std::span<const int> response) const {
    const auto& vocab = Vocab::standard();
    EncodedSequence enc = encode_sequence(vocab, prompt, response);
    Tensor rows = forward(g, enc.input);
    const auto T = rows.rows();
    // Gather the target log-prob per row; rows outside the response region are
    // masked to exactly zero so they contribute nothing to value or gradient.
    std::vector<int> ids(static_cast<std::size_t>(T), 0);
    Tensor mask = Tensor::zeros({T});
    auto mv = mask.values();
    for (std::size_t j = 0; j < enc.targets.size(); ++j) {
        ids[enc.first_row + j] = enc.targets[j];
        mv[enc.first_row + j] = 1.0;
    }
    Tensor picked = g.take_per_row(rows, ids);
    return g.sum(g.mul(picked, mask));
}

SequenceLogLik TinyLm::sequence_loglik(std::span<const int> prompt,
                                       std::span<const int> response) const {
    Graph g;
    Tensor s = response_loglik_sum(g, prompt, response);
    SequenceLogLik out;
    out.sum_logp = s.item();
    out.n_tokens = static_cast<int>(response.size()) + 1;
    out.avg_logp = out.sum_logp / static_cast<double>(out.n_tokens);
    return out;
}

diff::Tensor TinyLm::sft_loss(
    Graph& g, std::span<const std::pair<std::vector<int>, std::vector<int>>> batch) const {
    if (batch.empty()) throw std::invalid_argument("sft_loss: empty batch");
    std::vector<Tensor> sums;
    sums.reserve(batch.size());
    std::int64_t total_tokens = 0;
    for (const auto& [prompt, chosen] : batch) {
        sums.push_back(response_loglik_sum(g, prompt, chosen));
        total_tokens += static_cast<std::int64_t>(chosen.size()) + 1;
    }
    Tensor stacked = g.stack_rows(sums);
    return g.affine(g.sum(stacked), -1.0 / static_cast<double>(total_tokens), 0.0);
}

}  // namespace mipo::lm
