#include "mipo/corpus.hpp"

#include <array>
#include <cmath>
#include <fstream>
#include <set>
#include <stdexcept>

#include <json.hpp>

#include "mipo/rng.hpp"

namespace mipo::data {

namespace {

using json = nlohmann::ordered_json;

// Both rules permute 'a'..'y'; index 25 holds the chain seed for the marker
// 'z'. The tables are fixed constants of the task definition.
std::array<char, 26> build_rule_table(std::uint64_t table_seed) {
    std::array<char, 26> table;
    for (int i = 0; i < 25; ++i) table[static_cast<std::size_t>(i)] = static_cast<char>('a' + i);
    mipo::Rng rng(table_seed);
    for (int i = 24; i >= 1; --i) {
        const auto j = static_cast<int>(rng.below(static_cast<std::uint64_t>(i + 1)));
        std::swap(table[static_cast<std::size_t>(i)], table[static_cast<std::size_t>(j)]);
    }
    table[25] = static_cast<char>('a' + static_cast<int>(rng.below(25)));  // seed after 'z'
    return table;
}

char random_letter(mipo::Rng& rng) {  // 'z' is reserved as the rule marker
    return static_cast<char>('a' + static_cast<int>(rng.below(25)));
}

char random_other_letter(mipo::Rng& rng, char avoid) {
    char c = random_letter(rng);
    while (c == avoid) c = random_letter(rng);
    return c;
}

std::string corrupt(const std::string& clean, double rate, mipo::Rng& rng) {
    // Re-draw the corruption pattern until the result differs from the clean
    // string; at rate 0 (or after repeated misses) one position is forced.
    for (int attempt = 0; attempt < 64; ++attempt) {
        std::string out = clean;
        for (auto& c : out)
            if (rng.uniform() < rate) c = random_other_letter(rng, c);
        if (out != clean) return out;
    }
    std::string out = clean;
    const auto pos = rng.below(out.size());
    out[pos] = random_other_letter(rng, out[pos]);
    return out;
}

void validate_spec(const CorpusSpec& s) {
    if (s.n_pairs < 1) throw std::invalid_argument("corpus spec: n_pairs must be >= 1");
    if (s.prompt_len_min < 1 || s.prompt_len_min > s.prompt_len_max)
        throw std::invalid_argument("corpus spec: empty prompt length range");
    if (s.response_len_min < 1 || s.response_len_min > s.response_len_max)
        throw std::invalid_argument("corpus spec: empty response length range");
    for (double r : {s.corrupt_low, s.corrupt_high, s.high_fraction, s.alt_rule_fraction})
        if (r < 0.0 || r > 1.0)
            throw std::invalid_argument("corpus spec: rates must lie in [0, 1]");
    if (s.prompt_len_max + s.response_len_max + 2 > s.max_encoded_len)
        throw std::invalid_argument(
            "corpus spec: infeasible length constraints: prompt_len_max + response_len_max + 2 "
            "exceeds max_encoded_len " +
            std::to_string(s.max_encoded_len));
}

}  // namespace

char successor(char c) {
    static const std::array<char, 26> table = build_rule_table(0x5ea50e5u);
    if (c < 'a' || c > 'z') throw std::invalid_argument("successor: expected a lowercase letter");
    return table[static_cast<std::size_t>(c - 'a')];
}

char alt_successor(char c) {
    static const std::array<char, 26> table = [] {
        auto t = build_rule_table(0xa17e41u);
        if (t[25] == successor('z'))  // the two chains must split at the marker
            t[25] = t[25] == 'a' ? 'b' : 'a';
        return t;
    }();
    if (c < 'a' || c > 'z')
        throw std::invalid_argument("alt_successor: expected a lowercase letter");
    return table[static_cast<std::size_t>(c - 'a')];
}

namespace {

std::string rule_chain(char start, int len, char (*rule)(char)) {
    std::string out(static_cast<std::size_t>(len), 'a');
    char prev = start;
    for (auto& c : out) {
        c = rule(prev);
        prev = c;
    }
    return out;
}

}  // namespace

std::vector<PreferencePair> generate_corpus(const CorpusSpec& spec) {
    validate_spec(spec);
    std::vector<PreferencePair> pairs;
    pairs.reserve(static_cast<std::size_t>(spec.n_pairs));
    for (int i = 0; i < spec.n_pairs; ++i) {
        mipo::Rng rng(mix_seed(spec.seed, static_cast<std::uint64_t>(i)));
        const int plen = rng.range_int(spec.prompt_len_min, spec.prompt_len_max);
        const int rlen = rng.range_int(spec.response_len_min, spec.response_len_max);

        std::string prompt(static_cast<std::size_t>(plen), 'a');
        for (auto& c : prompt) c = random_letter(rng);
        const bool alt = rng.uniform() < spec.alt_rule_fraction;
        if (alt) prompt.back() = 'z';

        PreferencePair p;
        char idbuf[32];
        std::snprintf(idbuf, sizeof(idbuf), "pair-%06d", i);
        p.id = idbuf;
        p.prompt = prompt;
        if (alt) {
            p.chosen = rule_chain('z', rlen, alt_successor);
            p.rejected = rule_chain('z', rlen, successor);
        } else {
            const std::string clean = rule_chain(prompt.back(), rlen, successor);
            const double rate = rng.uniform() < spec.high_fraction ? spec.corrupt_high
                                                                   : spec.corrupt_low;
            p.chosen = clean;
            p.rejected = corrupt(clean, rate, rng);
        }
        pairs.push_back(std::move(p));
    }
    return pairs;
}

void write_jsonl(const std::vector<PreferencePair>& pairs, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open for writing: " + path.string());
    for (const auto& p : pairs) {
        json j;
        j["id"] = p.id;
        j["prompt"] = p.prompt;
        j["chosen"] = p.chosen;
        j["rejected"] = p.rejected;
        os << j.dump() << "\n";
    }
    if (!os) throw std::runtime_error("failed writing " + path.string());
}

std::vector<PreferencePair> read_jsonl(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open file: " + path.string());
    std::vector<PreferencePair> pairs;
    std::set<std::string> seen;
    std::string line;
    int line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();  // CRLF tolerance
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw std::runtime_error("line " + std::to_string(line_no) +
                                     ": malformed JSON: " + e.what());
        }
        PreferencePair p;
        for (const char* field : {"id", "prompt", "chosen", "rejected"}) {
            if (!j.contains(field) || !j[field].is_string())
                throw std::runtime_error("line " + std::to_string(line_no) +
                                         ": missing field " + field);
        }
        p.id = j["id"].get<std::string>();
        p.prompt = j["prompt"].get<std::string>();
        p.chosen = j["chosen"].get<std::string>();
        p.rejected = j["rejected"].get<std::string>();
        if (p.prompt.empty() || p.chosen.empty() || p.rejected.empty())
            throw std::runtime_error("line " + std::to_string(line_no) + ": empty field");
        if (p.chosen == p.rejected)
            throw std::runtime_error("line " + std::to_string(line_no) +
                                     ": chosen equals rejected");
        if (!seen.insert(p.id).second)
            throw std::runtime_error("line " + std::to_string(line_no) + ": duplicate id " +
                                     p.id);
        pairs.push_back(std::move(p));
    }
    return pairs;
}

std::pair<std::vector<PreferencePair>, std::vector<PreferencePair>> split(
    const std::vector<PreferencePair>& pairs, double eval_fraction, std::uint64_t seed) {
    if (!(eval_fraction > 0.0 && eval_fraction < 1.0))
        throw std::invalid_argument("split: eval_fraction must lie in (0, 1)");
    if (pairs.size() < 10)
        throw std::invalid_argument("split: need at least 10 pairs, got " +
                                    std::to_string(pairs.size()));
    const auto n = pairs.size();
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    mipo::Rng rng(mix_seed(seed, 0x5e7));
    for (std::size_t i = n - 1; i >= 1; --i) {
        const auto j = rng.below(i + 1);
        std::swap(order[i], order[j]);
    }
    auto n_eval = static_cast<std::size_t>(
        std::llround(eval_fraction * static_cast<double>(n)));
    n_eval = std::max<std::size_t>(1, std::min(n_eval, n - 1));
    std::vector<bool> is_eval(n, false);
    for (std::size_t i = 0; i < n_eval; ++i) is_eval[order[i]] = true;
    std::pair<std::vector<PreferencePair>, std::vector<PreferencePair>> out;
    for (std::size_t i = 0; i < n; ++i)
        (is_eval[i] ? out.second : out.first).push_back(pairs[i]);
    return out;
}

}  // namespace mipo::data
