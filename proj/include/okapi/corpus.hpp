#pragma once

#include <string>
#include <vector>

namespace okapi {

enum class Origin { seed, generated, translated };

std::string origin_to_string(Origin o);
Origin origin_from_string(const std::string& s);

// One (instruction, input, output) triple. input is "" in memory when the
// task has no input; the JSONL files spell that as "<empty>".
struct InstructionExample {
    std::string id;
    std::string lang;
    std::string instruction;
    std::string input;
    std::string output;
    Origin origin = Origin::seed;

    void validate() const;
};

// Four policy responses to one example plus the judge's ranking (1 = best).
struct RankedResponseSet {
    InstructionExample base;
    std::vector<std::string> responses;
    std::vector<int> ranks;
    std::vector<std::string> judge_transcript; // in-memory only
    bool ties_possible = false;

    void validate() const; // 4 responses, ranks a permutation of 1..4
};

// "<empty>" <-> "" canonicalization for serialized input fields.
std::string input_to_disk(const std::string& input);
std::string input_from_disk(const std::string& field);

std::vector<InstructionExample> load_corpus(const std::string& path);
void save_corpus(const std::vector<InstructionExample>& corpus, const std::string& path);

std::vector<RankedResponseSet> load_ranked_sets(const std::string& path);
void save_ranked_sets(const std::vector<RankedResponseSet>& sets, const std::string& path);

} // namespace okapi
