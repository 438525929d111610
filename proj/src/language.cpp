#include "okapi/language.hpp"

#include "okapi/errors.hpp"

namespace okapi {

std::string category_to_string(ResourceCategory c) {
    switch (c) {
    case ResourceCategory::H: return "H";
    case ResourceCategory::M: return "M";
    case ResourceCategory::L: return "L";
    }
    throw Error("unknown category");
}

ResourceCategory categorize_language(double r) {
    if (r <= 0.0) throw Error("language ratio must be positive, got " + std::to_string(r));
    if (r > 1.0) return ResourceCategory::H;
    if (r > 0.1) return ResourceCategory::M;
    if (r > 0.01) return ResourceCategory::L;
    throw Error("language ratio " + std::to_string(r) + " is below the supported range (> 0.01)");
}

Language make_language(const std::string& code, const std::string& name, double cc_ratio_percent) {
    Language lang;
    lang.code = code;
    lang.name = name;
    lang.cc_ratio_percent = cc_ratio_percent;
    lang.category = categorize_language(cc_ratio_percent);
    return lang;
}

const std::vector<Language>& builtin_languages() {
    static const std::vector<Language> langs = {
        make_language("en", "English", 45.8786),
        make_language("ru", "Russian", 5.9692),
        make_language("de", "German", 5.8811),
        make_language("zh", "Chinese", 4.8747),
        make_language("fr", "French", 4.7254),
        make_language("es", "Spanish", 4.4690),
        make_language("it", "Italian", 2.5712),
        make_language("nl", "Dutch", 2.0585),
        make_language("vi", "Vietnamese", 1.0299),
        make_language("id", "Indonesian", 0.7991),
        make_language("ar", "Arabic", 0.6658),
        make_language("hu", "Hungarian", 0.6093),
        make_language("ro", "Romanian", 0.5637),
        make_language("da", "Danish", 0.4301),
        make_language("sk", "Slovak", 0.3777),
        make_language("uk", "Ukrainian", 0.3304),
        make_language("ca", "Catalan", 0.2314),
        make_language("sr", "Serbian", 0.2205),
        make_language("hr", "Croatian", 0.1979),
        make_language("hi", "Hindi", 0.1588),
        make_language("bn", "Bengali", 0.0930),
        make_language("ta", "Tamil", 0.0446),
        make_language("ne", "Nepali", 0.0304),
        make_language("ml", "Malayalam", 0.0222),
        make_language("mr", "Marathi", 0.0213),
        make_language("te", "Telugu", 0.0183),
        make_language("kn", "Kannada", 0.0122),
    };
    return langs;
}

const Language* find_language(const std::string& code, const std::vector<Language>& extra) {
    for (const Language& l : extra)
        if (l.code == code) return &l;
    for (const Language& l : builtin_languages())
        if (l.code == code) return &l;
    return nullptr;
}

const Language& require_language(const std::string& code, const std::vector<Language>& extra) {
    const Language* l = find_language(code, extra);
    if (!l) throw Error("unknown language code: " + code);
    return *l;
}

} // namespace okapi
