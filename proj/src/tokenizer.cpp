#include "okapi/tokenizer.hpp"

namespace okapi {

std::vector<int> Tokenizer::encode(const std::string& s) {
    std::vector<int> ids;
    ids.reserve(s.size());
    for (unsigned char c : s) ids.push_back(static_cast<int>(c));
    return ids;
}

std::string Tokenizer::decode(const std::vector<int>& ids) {
    std::string s;
    s.reserve(ids.size());
    for (int id : ids)
        if (0 <= id && id < 256) s.push_back(static_cast<char>(id));
    return s;
}

} // namespace okapi
