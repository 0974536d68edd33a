#pragma once

#include <array>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace mipo::lm {

// Fixed character-level vocabulary over a closed alphabet. Ids are dense
// 0..V-1 with the four control tokens first. Control tokens round-trip
// through decode()/encode() via reserved printable glyphs.
class Vocab {
public:
    static const Vocab& standard();  // PAD BOS EOS SEP + 'a'..'z' + '0'..'9' (V = 40)

    int size() const { return static_cast<int>(symbols_.size()); }
    int pad() const { return 0; }
    int bos() const { return 1; }
    int eos() const { return 2; }
    int sep() const { return 3; }

    char symbol(int id) const;
    int id(char c) const;  // throws on characters outside the alphabet

    std::vector<int> encode(std::string_view text) const;
    std::string decode(std::span<const int> ids) const;

private:
    Vocab();
    std::vector<char> symbols_;
    std::array<int, 256> index_;
};

}  // namespace mipo::lm
