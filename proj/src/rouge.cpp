#include "okapi/rouge.hpp"

#include <algorithm>

#include "okapi/errors.hpp"
#include "okapi/util.hpp"

namespace okapi {

std::vector<std::string> rouge_tokens(const std::string& text) {
    return split_ws(to_lower(text));
}

double rouge_l(const std::string& candidate, const std::string& reference) {
    std::vector<std::string> c = rouge_tokens(candidate);
    std::vector<std::string> r = rouge_tokens(reference);
    if (c.empty() || r.empty()) return 0.0;

    const size_t n = c.size(), m = r.size();
    std::vector<size_t> prev(m + 1, 0), cur(m + 1, 0);
    for (size_t i = 1; i <= n; ++i) {
        for (size_t j = 1; j <= m; ++j) {
            if (c[i - 1] == r[j - 1])
                cur[j] = prev[j - 1] + 1;
            else
                cur[j] = std::max(prev[j], cur[j - 1]);
        }
        std::swap(prev, cur);
    }
    const double lcs = static_cast<double>(prev[m]);
    if (lcs == 0.0) return 0.0;
    const double p = lcs / static_cast<double>(n);
    const double rr = lcs / static_cast<double>(m);
    return 2.0 * p * rr / (p + rr);
}

SimilarityHit max_similarity(const std::string& candidate,
                             const std::vector<InstructionExample>& pool) {
    if (pool.empty()) throw Error("max_similarity: empty pool");
    SimilarityHit best;
    bool first = true;
    for (const InstructionExample& ex : pool) {
        double s = rouge_l(candidate, ex.instruction);
        if (first || s > best.score || (s == best.score && ex.id < best.id)) {
            best.score = s;
            best.id = ex.id;
            first = false;
        }
    }
    return best;
}

} // namespace okapi
