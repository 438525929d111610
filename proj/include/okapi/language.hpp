#pragma once

#include <string>
#include <vector>

namespace okapi {

enum class ResourceCategory { H, M, L };

std::string category_to_string(ResourceCategory c);

// H above 1% of CommonCrawl, M above 0.1%, L above 0.01%; anything at or
// below 0.01% (or nonpositive) is outside the taxonomy and throws.
ResourceCategory categorize_language(double cc_ratio_percent);

struct Language {
    std::string code; // 2-letter
    std::string name;
    double cc_ratio_percent = 0.0;
    ResourceCategory category = ResourceCategory::H;
};

Language make_language(const std::string& code, const std::string& name, double cc_ratio_percent);

// The 27 CommonCrawl-ranked languages the pipeline knows out of the box.
const std::vector<Language>& builtin_languages();

// Lookup by 2-letter code over builtin plus any extra registry the caller
// supplies (synthetic worlds register their own codes).
const Language* find_language(const std::string& code,
                              const std::vector<Language>& extra = {});
const Language& require_language(const std::string& code,
                                 const std::vector<Language>& extra = {});

} // namespace okapi
