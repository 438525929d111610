#include "okapi/corpus.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "okapi/jsonio.hpp"
#include "okapi/errors.hpp"
#include "okapi/util.hpp"

using nlohmann::json;

namespace okapi {

std::string origin_to_string(Origin o) {
    switch (o) {
    case Origin::seed: return "seed";
    case Origin::generated: return "generated";
    case Origin::translated: return "translated";
    }
    throw Error("unknown origin");
}

Origin origin_from_string(const std::string& s) {
    if (s == "seed") return Origin::seed;
    if (s == "generated") return Origin::generated;
    if (s == "translated") return Origin::translated;
    throw ParseError("unknown origin: " + s);
}

void InstructionExample::validate() const {
    if (id.empty()) throw ParseError("instruction example with empty id");
    if (instruction.empty()) throw ParseError("instruction example '" + id + "' has empty instruction");
    if (lang.empty()) throw ParseError("instruction example '" + id + "' has empty lang");
}

void RankedResponseSet::validate() const {
    base.validate();
    if (responses.size() != 4)
        throw ParseError("ranked set '" + base.id + "' has " + std::to_string(responses.size()) +
                         " responses, want 4");
    if (ranks.size() != 4)
        throw ParseError("ranked set '" + base.id + "' has " + std::to_string(ranks.size()) +
                         " ranks, want 4");
    std::set<int> seen(ranks.begin(), ranks.end());
    bool perm = seen.size() == 4;
    for (int r : ranks)
        if (r < 1 || r > 4) perm = false;
    if (!perm) throw ParseError("ranked set '" + base.id + "': ranks are not a permutation of 1..4");
}

std::string input_to_disk(const std::string& input) {
    return input.empty() ? "<empty>" : input;
}

std::string input_from_disk(const std::string& field) {
    return field == "<empty>" ? "" : field;
}

namespace {

json require(const json& j, const char* key, const std::string& where) {
    if (!j.contains(key))
        throw ParseError(where + ": missing field '" + key + "'");
    return j.at(key);
}

std::vector<std::string> nonblank_lines(const std::string& path) {
    std::vector<std::string> out;
    for (std::string& line : split_lines(read_file(path)))
        if (!trim(line).empty()) out.push_back(std::move(line));
    return out;
}

} // namespace

std::vector<InstructionExample> load_corpus(const std::string& path) {
    std::vector<InstructionExample> corpus;
    std::set<std::string> ids;
    size_t lineno = 0;
    for (const std::string& line : nonblank_lines(path)) {
        ++lineno;
        std::string where = path + ":" + std::to_string(lineno);
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw ParseError(where + ": bad json: " + e.what());
        }
        InstructionExample ex;
        ex.id = require(j, "id", where).get<std::string>();
        ex.lang = require(j, "lang", where).get<std::string>();
        ex.instruction = require(j, "instruction", where).get<std::string>();
        ex.input = input_from_disk(require(j, "input", where).get<std::string>());
        ex.output = require(j, "output", where).get<std::string>();
        ex.origin = origin_from_string(require(j, "origin", where).get<std::string>());
        ex.validate();
        if (!ids.insert(ex.id).second) throw ParseError(where + ": duplicate id '" + ex.id + "'");
        corpus.push_back(std::move(ex));
    }
    return corpus;
}

void save_corpus(const std::vector<InstructionExample>& corpus, const std::string& path) {
    std::set<std::string> ids;
    std::ostringstream out;
    for (const InstructionExample& ex : corpus) {
        ex.validate();
        if (!ids.insert(ex.id).second) throw Error("duplicate id '" + ex.id + "' in corpus");
        json j;
        j["id"] = ex.id;
        j["lang"] = ex.lang;
        j["instruction"] = ex.instruction;
        j["input"] = input_to_disk(ex.input);
        j["output"] = ex.output;
        j["origin"] = origin_to_string(ex.origin);
        out << json_line(j) << "\n";
    }
    write_file(path, out.str());
}

std::vector<RankedResponseSet> load_ranked_sets(const std::string& path) {
    std::vector<RankedResponseSet> sets;
    size_t lineno = 0;
    for (const std::string& line : nonblank_lines(path)) {
        ++lineno;
        std::string where = path + ":" + std::to_string(lineno);
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw ParseError(where + ": bad json: " + e.what());
        }
        RankedResponseSet s;
        s.base.id = require(j, "id", where).get<std::string>();
        s.base.lang = require(j, "lang", where).get<std::string>();
        s.base.instruction = require(j, "instruction", where).get<std::string>();
        s.base.input = input_from_disk(require(j, "input", where).get<std::string>());
        s.base.origin = Origin::generated;
        s.responses = require(j, "responses", where).get<std::vector<std::string>>();
        s.ranks = require(j, "ranks", where).get<std::vector<int>>();
        if (j.contains("ties_possible")) s.ties_possible = j.at("ties_possible").get<bool>();
        s.validate();
        sets.push_back(std::move(s));
    }
    return sets;
}

void save_ranked_sets(const std::vector<RankedResponseSet>& sets, const std::string& path) {
    std::ostringstream out;
    for (const RankedResponseSet& s : sets) {
        s.validate();
        json j;
        j["id"] = s.base.id;
        j["lang"] = s.base.lang;
        j["instruction"] = s.base.instruction;
        j["input"] = input_to_disk(s.base.input);
        j["responses"] = s.responses;
        j["ranks"] = s.ranks;
        if (s.ties_possible) j["ties_possible"] = true;
        out << json_line(j) << "\n";
    }
    write_file(path, out.str());
}

} // namespace okapi
