#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "okapi/checkpoint.hpp"
#include "okapi/language.hpp"

namespace okapi {

enum class EvalDataset { arc, hellaswag, mmlu, custom };
enum class ScoreNorm { none, per_token };

std::string dataset_to_string(EvalDataset d);
EvalDataset dataset_from_string(const std::string& s);
std::string norm_to_string(ScoreNorm n);

struct EvalItem {
    std::string id;
    std::string lang;
    EvalDataset dataset = EvalDataset::custom;
    std::string context;
    std::vector<std::string> choices; // 2..5, distinct, non-empty
    int gold_index = 0;

    void validate() const;
};

struct ItemResult {
    std::string id;
    std::string lang;
    int chosen = -1;
    bool correct = false;
    std::vector<double> scores; // per-choice, after normalization
};

struct EvalReport {
    ScoreNorm norm = ScoreNorm::none;
    std::vector<ItemResult> per_item;
    int skipped = 0;
    std::map<std::string, double> per_language;          // accuracy in [0,1]
    std::map<std::string, int> per_language_counts;      // scored items
    std::map<std::string, double> per_group;             // keyed "H"/"M"/"L"
    double overall = 0.0;                                // unweighted mean over languages
};

// Likelihood pick: argmax over choices of sequence_logprob(context, choice),
// per-token normalized when asked; ties go to the lowest index. Context is
// truncated from the left when context+choice overflows the window; nullopt
// means the item cannot fit at all and was skipped.
std::optional<int> score_item(const PolicyCheckpoint& model, const EvalItem& item, ScoreNorm norm,
                              std::vector<double>* scores = nullptr);

// Group/overall means over per-language accuracies. Every language must be
// known to the registry (builtin plus extra).
EvalReport aggregate(const std::map<std::string, double>& per_language,
                     const std::vector<Language>& extra_langs = {});

// Scores every item (optionally with n_shot in-context examples drawn in
// order from `shots`) and aggregates.
EvalReport evaluate(const PolicyCheckpoint& model, const std::vector<EvalItem>& items,
                    ScoreNorm norm, const std::vector<Language>& extra_langs = {},
                    int n_shot = 0, const std::vector<EvalItem>& shots = {});

struct LoadErrors {
    std::vector<std::string> lines; // "path:lineno: reason"
};

// Canonical newline-delimited {id, lang, dataset, context, choices,
// gold_index} records, or the three public layouts (which carry no language
// tag, so one is supplied). Over 1% malformed lines is a hard failure;
// individual bad lines are collected into `errors`.
std::vector<EvalItem> load_dataset(const std::string& path, const std::string& expected_format,
                                   const std::string& default_lang = "en",
                                   LoadErrors* errors = nullptr);

void save_eval_items(const std::vector<EvalItem>& items, const std::string& path);

// One results column per model, rendered Table-3 style: language rows in
// H/M/L blocks, an Ave Group row per block, a closing Average row. Values
// are accuracies in [0,1], shown as percents with 1 decimal.
struct ReportColumn {
    std::string label;
    std::map<std::string, double> per_language;
};
std::string render_table(const std::vector<ReportColumn>& cols,
                         const std::vector<Language>& extra_langs, bool markdown);

} // namespace okapi
