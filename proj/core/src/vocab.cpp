#include "mipo/vocab.hpp"

#include <stdexcept>

namespace mipo::lm {

Vocab::Vocab() {
    index_.fill(-1);
    auto push = [this](char c) {
        index_[static_cast<unsigned char>(c)] = static_cast<int>(symbols_.size());
        symbols_.push_back(c);
    };
    // control glyphs: PAD '_', BOS '^', EOS '$', SEP '|'
    push('_');
    push('^');
    push('$');
    push('|');
    for (char c = 'a'; c <= 'z'; ++c) push(c);
    for (char c = '0'; c <= '9'; ++c) push(c);
}

const Vocab& Vocab::standard() {
    static const Vocab v;
    return v;
}

char Vocab::symbol(int id) const {
    if (id < 0 || id >= size())
        throw std::invalid_argument("vocab: id " + std::to_string(id) + " out of range");
    return symbols_[static_cast<std::size_t>(id)];
}

int Vocab::id(char c) const {
    const int i = index_[static_cast<unsigned char>(c)];
    if (i < 0)
        throw std::invalid_argument(std::string("vocab: character '") + c +
                                    "' outside the alphabet");
    return i;
}

std::vector<int> Vocab::encode(std::string_view text) const {
    std::vector<int> out;
    out.reserve(text.size());
    for (char c : text) out.push_back(id(c));
    return out;
}

std::string Vocab::decode(std::span<const int> ids) const {
    std::string out;
    out.reserve(ids.size());
    for (int i : ids) out.push_back(symbol(i));
    return out;
}

}  // namespace mipo::lm
