#pragma once

#include <string>
#include <vector>

#include "okapi/corpus.hpp"

namespace okapi {

// Case-folded whitespace tokens, the unit ROUGE-L works over.
std::vector<std::string> rouge_tokens(const std::string& text);

// ROUGE-L F1 between two texts: LCS over token sequences,
// P = LCS/|cand|, R = LCS/|ref|, F1 = 2PR/(P+R). 0 when either side
// has no tokens.
double rouge_l(const std::string& candidate, const std::string& reference);

struct SimilarityHit {
    double score = 0.0;
    std::string id;
};

// Max rouge_l of candidate against every pool instruction, with the arg-max
// id; ties go to the lexicographically smallest id. Throws on an empty pool.
SimilarityHit max_similarity(const std::string& candidate,
                             const std::vector<InstructionExample>& pool);

} // namespace okapi
