#pragma once

#include <string>
#include <vector>

namespace okapi {

// Byte-level tokenizer: ids 0..255 are raw byte values, followed by the
// special tokens. decode(encode(s)) == s for every byte string.
struct Tokenizer {
    static constexpr int BOS = 256;
    static constexpr int EOS = 257;
    static constexpr int PAD = 258;
    static constexpr int SEP = 259;
    static constexpr int kVocabSize = 260;

    static std::vector<int> encode(const std::string& s);
    // Special tokens are dropped on decode.
    static std::string decode(const std::vector<int>& ids);
};

} // namespace okapi
