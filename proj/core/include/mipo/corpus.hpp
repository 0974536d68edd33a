#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace mipo::data {

struct PreferencePair {
    std::string id;
    std::string prompt;
    std::string chosen;
    std::string rejected;
    bool operator==(const PreferencePair&) const = default;
};

// Synthetic preference task. Prompts are random strings over 'a'..'y'; the
// preferred continuation chains a fixed successor rule from the prompt's last
// character and the rejected one is that chain with characters corrupted at a
// low or high rate (the mix manufactures both near-ties and clearly separable
// pairs). An alt_rule_fraction of prompts ends in the reserved marker 'z':
// there the preference follows a second successor rule while the rejected
// response is the primary-rule chain. A model fine-tuned mostly on primary
// chains stays genuinely misaligned with these marked pairs (negative K), yet
// the misalignment is systematic, so preference training on it generalizes.
struct CorpusSpec {
    int n_pairs = 2000;
    int prompt_len_min = 6;
    int prompt_len_max = 10;
    int response_len_min = 8;
    int response_len_max = 14;
    double corrupt_low = 0.05;
    double corrupt_high = 0.4;
    double high_fraction = 0.5;      // share of pairs corrupted at the high rate
    double alt_rule_fraction = 0.2;  // share of prompts under the marked second rule
    int max_encoded_len = 64;        // prompt + response + 2 must fit the model context
    std::uint64_t seed = 0;
};

// The grammar's successor rules: fixed permutations of 'a'..'y' plus an entry
// for the marker 'z' that seeds the chain.
char successor(char c);
char alt_successor(char c);

std::vector<PreferencePair> generate_corpus(const CorpusSpec& spec);

void write_jsonl(const std::vector<PreferencePair>& pairs, const std::filesystem::path& path);
std::vector<PreferencePair> read_jsonl(const std::filesystem::path& path);

// Deterministic disjoint partition into (train, eval).
std::pair<std::vector<PreferencePair>, std::vector<PreferencePair>> split(
    const std::vector<PreferencePair>& pairs, double eval_fraction, std::uint64_t seed);

}  // namespace mipo::data
