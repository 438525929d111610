#include "okapi/evalharness.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "json.hpp"
#include "okapi/jsonio.hpp"
#include "okapi/errors.hpp"
#include "okapi/model.hpp"
#include "okapi/tokenizer.hpp"
#include "okapi/util.hpp"

using nlohmann::json;

namespace okapi {

std::string dataset_to_string(EvalDataset d) {
    switch (d) {
    case EvalDataset::arc: return "arc";
    case EvalDataset::hellaswag: return "hellaswag";
    case EvalDataset::mmlu: return "mmlu";
    case EvalDataset::custom: return "custom";
    }
    throw Error("unknown dataset");
}

EvalDataset dataset_from_string(const std::string& s) {
    if (s == "arc") return EvalDataset::arc;
    if (s == "hellaswag") return EvalDataset::hellaswag;
    if (s == "mmlu") return EvalDataset::mmlu;
    if (s == "custom") return EvalDataset::custom;
    throw ParseError("unknown dataset: " + s);
}

std::string norm_to_string(ScoreNorm n) {
    return n == ScoreNorm::none ? "none" : "per_token";
}

void EvalItem::validate() const {
    if (id.empty()) throw ParseError("eval item with empty id");
    if (lang.empty()) throw ParseError("eval item '" + id + "' has empty lang");
    if (choices.size() < 2 || choices.size() > 5)
        throw ParseError("eval item '" + id + "' has " + std::to_string(choices.size()) +
                         " choices, want 2..5");
    std::set<std::string> uniq;
    for (const std::string& c : choices) {
        if (c.empty()) throw ParseError("eval item '" + id + "' has an empty choice");
        if (!uniq.insert(c).second)
            throw ParseError("eval item '" + id + "' has duplicate choices");
    }
    if (gold_index < 0 || gold_index >= static_cast<int>(choices.size()))
        throw ParseError("eval item '" + id + "' gold_index " + std::to_string(gold_index) +
                         " out of range for " + std::to_string(choices.size()) + " choices");
}

std::optional<int> score_item(const PolicyCheckpoint& model, const EvalItem& item, ScoreNorm norm,
                              std::vector<double>* scores) {
    item.validate();
    const int ctx_len = model.config.context_len;

    std::vector<int> context = {Tokenizer::BOS};
    for (int t : Tokenizer::encode(item.context)) context.push_back(t);

    int best = -1;
    double best_score = 0.0;
    std::vector<double> all;
    for (size_t i = 0; i < item.choices.size(); ++i) {
        std::vector<int> cont = Tokenizer::encode(item.choices[i]);
        const int room = ctx_len - static_cast<int>(cont.size());
        if (room < 1) return std::nullopt; // no context slot left at all
        std::vector<int> ctx = context;
        if (static_cast<int>(ctx.size()) > room)
            ctx.erase(ctx.begin(), ctx.end() - room); // keep the end nearest the choice
        SeqLogprob lp = sequence_logprob(model, ctx, cont);
        double s = lp.logprob;
        if (norm == ScoreNorm::per_token) s /= static_cast<double>(lp.token_count);
        all.push_back(s);
        if (best < 0 || s > best_score) {
            best = static_cast<int>(i);
            best_score = s;
        }
    }
    if (scores) *scores = all;
    return best;
}

EvalReport aggregate(const std::map<std::string, double>& per_language,
                     const std::vector<Language>& extra_langs) {
    EvalReport report;
    report.per_language = per_language;
    std::map<std::string, std::pair<double, int>> group_sums;
    double total = 0.0;
    for (const auto& [code, acc] : per_language) {
        const Language& lang = require_language(code, extra_langs);
        auto& [sum, count] = group_sums[category_to_string(lang.category)];
        sum += acc;
        ++count;
        total += acc;
    }
    for (const auto& [g, sc] : group_sums)
        report.per_group[g] = sc.first / static_cast<double>(sc.second);
    if (!per_language.empty()) report.overall = total / static_cast<double>(per_language.size());
    return report;
}

EvalReport evaluate(const PolicyCheckpoint& model, const std::vector<EvalItem>& items,
                    ScoreNorm norm, const std::vector<Language>& extra_langs, int n_shot,
                    const std::vector<EvalItem>& shots) {
    if (n_shot > 0 && static_cast<int>(shots.size()) < n_shot)
        throw Error("evaluate: " + std::to_string(n_shot) + "-shot needs at least that many shots");
    std::string shot_prefix;
    for (int i = 0; i < n_shot; ++i) {
        const EvalItem& s = shots[static_cast<size_t>(i)];
        shot_prefix += s.context + s.choices[static_cast<size_t>(s.gold_index)] + "\n\n";
    }

    EvalReport report;
    report.norm = norm;
    std::map<std::string, std::pair<int, int>> lang_hits; // correct, scored
    for (const EvalItem& item : items) {
        EvalItem shown = item;
        shown.context = shot_prefix + item.context;
        ItemResult r;
        r.id = item.id;
        r.lang = item.lang;
        std::optional<int> chosen = score_item(model, shown, norm, &r.scores);
        if (!chosen) {
            ++report.skipped;
            continue;
        }
        r.chosen = *chosen;
        r.correct = *chosen == item.gold_index;
        auto& [hits, total] = lang_hits[item.lang];
        hits += r.correct ? 1 : 0;
        ++total;
        report.per_item.push_back(std::move(r));
    }

    std::map<std::string, double> per_language;
    for (const auto& [code, ht] : lang_hits) {
        per_language[code] = static_cast<double>(ht.first) / static_cast<double>(ht.second);
        report.per_language_counts[code] = ht.second;
    }
    EvalReport agg = aggregate(per_language, extra_langs);
    report.per_language = std::move(agg.per_language);
    report.per_group = std::move(agg.per_group);
    report.overall = agg.overall;
    return report;
}

namespace {

int gold_from_label(const json& rec, const json& labels, const std::string& where) {
    std::string key = rec.at("answerKey").is_string()
                          ? rec.at("answerKey").get<std::string>()
                          : std::to_string(rec.at("answerKey").get<int>());
    for (size_t i = 0; i < labels.size(); ++i) {
        std::string l = labels[i].is_string() ? labels[i].get<std::string>()
                                              : std::to_string(labels[i].get<int>());
        if (l == key) return static_cast<int>(i);
    }
    throw ParseError(where + ": answerKey '" + key + "' matches no choice label");
}

EvalItem parse_canonical(const json& j, const std::string& where) {
    EvalItem item;
    item.id = j.at("id").get<std::string>();
    item.lang = j.at("lang").get<std::string>();
    item.dataset = dataset_from_string(j.at("dataset").get<std::string>());
    item.context = j.at("context").get<std::string>();
    item.choices = j.at("choices").get<std::vector<std::string>>();
    item.gold_index = j.at("gold_index").get<int>();
    (void)where;
    return item;
}

EvalItem parse_arc(const json& j, const std::string& lang, const std::string& where) {
    EvalItem item;
    item.id = j.at("id").get<std::string>();
    item.lang = lang;
    item.dataset = EvalDataset::arc;
    const json& q = j.at("question");
    item.context = q.at("stem").get<std::string>() + "\nAnswer: ";
    json labels = json::array();
    for (const json& c : q.at("choices")) {
        item.choices.push_back(c.at("text").get<std::string>());
        labels.push_back(c.at("label"));
    }
    item.gold_index = gold_from_label(j, labels, where);
    return item;
}

EvalItem parse_hellaswag(const json& j, const std::string& lang, const std::string& where) {
    EvalItem item;
    item.id = j.contains("ind") ? std::to_string(j.at("ind").get<long>())
                                : j.at("source_id").get<std::string>();
    item.lang = lang;
    item.dataset = EvalDataset::hellaswag;
    item.context = j.at("ctx").get<std::string>();
    item.choices = j.at("endings").get<std::vector<std::string>>();
    item.gold_index = j.at("label").is_string() ? std::stoi(j.at("label").get<std::string>())
                                                : j.at("label").get<int>();
    (void)where;
    return item;
}

EvalItem parse_mmlu(const json& j, const std::string& lang, size_t lineno,
                    const std::string& where) {
    EvalItem item;
    item.id = j.contains("id") ? j.at("id").get<std::string>()
                               : "mmlu-" + std::to_string(lineno);
    item.lang = lang;
    item.dataset = EvalDataset::mmlu;
    item.context = j.at("question").get<std::string>() + "\nAnswer: ";
    item.choices = j.at("choices").get<std::vector<std::string>>();
    item.gold_index = j.at("answer").get<int>();
    (void)where;
    return item;
}

} // namespace

std::vector<EvalItem> load_dataset(const std::string& path, const std::string& expected_format,
                                   const std::string& default_lang, LoadErrors* errors) {
    std::vector<EvalItem> items;
    LoadErrors local;
    LoadErrors& errs = errors ? *errors : local;
    size_t lineno = 0, total = 0;
    for (const std::string& raw : split_lines(read_file(path))) {
        ++lineno;
        if (trim(raw).empty()) continue;
        ++total;
        const std::string where = path + ":" + std::to_string(lineno);
        try {
            json j = json::parse(raw);
            EvalItem item;
            if (expected_format == "canonical")
                item = parse_canonical(j, where);
            else if (expected_format == "arc")
                item = parse_arc(j, default_lang, where);
            else if (expected_format == "hellaswag")
                item = parse_hellaswag(j, default_lang, where);
            else if (expected_format == "mmlu")
                item = parse_mmlu(j, default_lang, lineno, where);
            else
                throw ConfigError("unknown eval format: " + expected_format);
            item.validate();
            items.push_back(std::move(item));
        } catch (const ConfigError&) {
            throw;
        } catch (const std::exception& e) {
            errs.lines.push_back(where + ": " + e.what());
        }
    }
    if (total > 0 && static_cast<double>(errs.lines.size()) > 0.01 * static_cast<double>(total)) {
        std::string msg = "too many malformed lines in " + path + " (" +
                          std::to_string(errs.lines.size()) + "/" + std::to_string(total) + ")";
        for (size_t i = 0; i < errs.lines.size() && i < 5; ++i) msg += "\n  " + errs.lines[i];
        throw ParseError(msg);
    }
    return items;
}

void save_eval_items(const std::vector<EvalItem>& items, const std::string& path) {
    std::ostringstream out;
    for (const EvalItem& item : items) {
        item.validate();
        json j;
        j["id"] = item.id;
        j["lang"] = item.lang;
        j["dataset"] = dataset_to_string(item.dataset);
        j["context"] = item.context;
        j["choices"] = item.choices;
        j["gold_index"] = item.gold_index;
        out << json_line(j) << "\n";
    }
    write_file(path, out.str());
}

namespace {

std::string pct1(double frac) {
    std::ostringstream s;
    s.setf(std::ios::fixed);
    s.precision(1);
    s << frac * 100.0;
    return s.str();
}

} // namespace

std::string render_table(const std::vector<ReportColumn>& cols,
                         const std::vector<Language>& extra_langs, bool markdown) {
    // Languages shown: union over columns, grouped H -> M -> L, each group in
    // registry order.
    std::set<std::string> present;
    for (const ReportColumn& c : cols)
        for (const auto& [code, _] : c.per_language) present.insert(code);

    std::vector<const Language*> ordered;
    auto add_known = [&](const std::vector<Language>& regs) {
        for (const Language& l : regs)
            if (present.count(l.code)) {
                ordered.push_back(&l);
                present.erase(l.code);
            }
    };
    add_known(extra_langs);
    add_known(builtin_languages());
    if (!present.empty()) throw Error("render_table: unknown language code: " + *present.begin());

    const std::string sep = markdown ? " | " : "\t";
    std::ostringstream out;
    auto row = [&](const std::string& head, const std::vector<std::string>& cells) {
        if (markdown) out << "| ";
        out << head;
        for (const std::string& c : cells) out << sep << c;
        if (markdown) out << " |";
        out << "\n";
    };

    std::vector<std::string> headers;
    for (const ReportColumn& c : cols) headers.push_back(c.label);
    row("Language", headers);
    if (markdown) {
        std::vector<std::string> dashes(cols.size(), "---");
        row("---", dashes);
    }

    for (ResourceCategory cat :
         {ResourceCategory::H, ResourceCategory::M, ResourceCategory::L}) {
        std::vector<const Language*> members;
        for (const Language* l : ordered)
            if (l->category == cat) members.push_back(l);
        if (members.empty()) continue;
        for (const Language* l : members) {
            std::vector<std::string> cells;
            for (const ReportColumn& c : cols) {
                auto it = c.per_language.find(l->code);
                cells.push_back(it == c.per_language.end() ? "-" : pct1(it->second));
            }
            row(l->name, cells);
        }
        std::vector<std::string> cells;
        for (const ReportColumn& c : cols) {
            double sum = 0.0;
            int n = 0;
            for (const Language* l : members) {
                auto it = c.per_language.find(l->code);
                if (it != c.per_language.end()) {
                    sum += it->second;
                    ++n;
                }
            }
            cells.push_back(n ? pct1(sum / n) : "-");
        }
        row("Ave Group (" + category_to_string(cat) + ")", cells);
    }

    std::vector<std::string> cells;
    for (const ReportColumn& c : cols) {
        double sum = 0.0;
        int n = 0;
        for (const auto& [_, acc] : c.per_language) {
            sum += acc;
            ++n;
        }
        cells.push_back(n ? pct1(sum / n) : "-");
    }
    row("Average", cells);
    return out.str();
}

} // namespace okapi
