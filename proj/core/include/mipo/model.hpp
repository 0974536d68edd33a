#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "mipo/tensor.hpp"
#include "mipo/vocab.hpp"

namespace mipo::lm {

struct ModelConfig {
    int d_model = 32;
    int n_layers = 2;
    int context_len = 64;
    int vocab_size = 40;
    std::uint64_t seed = 1;
};

bool operator==(const ModelConfig&, const ModelConfig&);

// Summed and length-averaged response log-likelihood in nats. n_tokens counts
// response tokens including EOS, excluding the prompt and BOS.
struct SequenceLogLik {
    double sum_logp = 0.0;
    int n_tokens = 0;
    double avg_logp = 0.0;
};

// Input tokens and scoring targets for one (prompt, response) sequence.
// input = BOS + prompt + SEP + response; row t of the forward output predicts
// input token t+1, so rows [first_row, first_row + targets.size()) score the
// response characters followed by EOS.
struct EncodedSequence {
    std::vector<int> input;
    std::vector<int> targets;
    std::size_t first_row = 0;
};

EncodedSequence encode_sequence(const Vocab& vocab, std::span<const int> prompt,
                                std::span<const int> response);

// Character-level causal language model: embedding, n_layers gated-recurrent
// blocks, and an output projection. The output projection is zero-initialized
// by default so an untrained model is exactly uniform over the vocabulary.
class TinyLm {
public:
    enum class HeadInit { Zero, Random };

    explicit TinyLm(ModelConfig cfg, HeadInit head_init = HeadInit::Zero);
    TinyLm(ModelConfig cfg, std::map<std::string, diff::Tensor> params);

    const ModelConfig& config() const { return cfg_; }
    const std::map<std::string, diff::Tensor>& params() const { return params_; }
    std::map<std::string, diff::Tensor>& params() { return params_; }
    diff::Tensor& param(const std::string& name);
    std::vector<std::string> param_names() const;
    std::size_t param_count() const;
    void zero_grads();

    TinyLm clone() const;  // deep copy of parameter values

    // Per-position log-probability rows: row t is log P(token_{t+1} | tokens_{<=t}).
    diff::Tensor forward(diff::Graph& g, std::span<const int> tokens) const;

    // Differentiable summed response log-likelihood (scalar tensor).
    diff::Tensor response_loglik_sum(diff::Graph& g, std::span<const int> prompt,
                                     std::span<const int> response) const;

    // Convenience evaluation; identical arithmetic path as the graph version.
    SequenceLogLik sequence_loglik(std::span<const int> prompt,
                                   std::span<const int> response) const;

    // Batch-mean negative log-likelihood per response token.
    diff::Tensor sft_loss(diff::Graph& g,
                          std::span<const std::pair<std::vector<int>, std::vector<int>>> batch) const;

private:
    ModelConfig cfg_;
    std::map<std::string, diff::Tensor> params_;
    const diff::Tensor& cparam(const std::string& name) const;
    void validate() const;
};

}  // namespace mipo::lm
