#include "relcot/preprocess.hpp"

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "utf8.hpp"

namespace relcot::preprocess {

using nlohmann::json;

namespace {

std::string ascii_lower(const std::string& s) {
    std::string out = s;
    for (char& c : out) {
        if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    }
    return out;
}

// Canonical composition pairs: {base, combining mark} -> precomposed.
// Covers the Latin-1 Supplement / Latin Extended-A diacritics used by the
// seeded languages (grave, acute, circumflex, tilde, macron, breve, dot,
// diaeresis, ring, double acute, caron, cedilla, ogonek).
struct ComposePair {
    char32_t base;
    char32_t mark;
    char32_t composed;
};

constexpr ComposePair kComposeTable[] = {
    {U'A', 0x300, 0xC0},  {U'A', 0x301, 0xC1},  {U'A', 0x302, 0xC2},  {U'A', 0x303, 0xC3},
    {U'A', 0x308, 0xC4},  {U'A', 0x30A, 0xC5},  {U'A', 0x304, 0x100}, {U'A', 0x306, 0x102},
    {U'A', 0x328, 0x104},
    {U'a', 0x300, 0xE0},  {U'a', 0x301, 0xE1},  {U'a', 0x302, 0xE2},  {U'a', 0x303, 0xE3},
    {U'a', 0x308, 0xE4},  {U'a', 0x30A, 0xE5},  {U'a', 0x304, 0x101}, {U'a', 0x306, 0x103},
    {U'a', 0x328, 0x105},
    {U'C', 0x327, 0xC7},  {U'C', 0x301, 0x106}, {U'C', 0x30C, 0x10C},
    {U'c', 0x327, 0xE7},  {U'c', 0x301, 0x107}, {U'c', 0x30C, 0x10D},
    {U'D', 0x30C, 0x10E}, {U'd', 0x30C, 0x10F},
    {U'E', 0x300, 0xC8},  {U'E', 0x301, 0xC9},  {U'E', 0x302, 0xCA},  {U'E', 0x308, 0xCB},
    {U'E', 0x304, 0x112}, {U'E', 0x30C, 0x11A}, {U'E', 0x328, 0x118}, {U'E', 0x307, 0x116},
    {U'e', 0x300, 0xE8},  {U'e', 0x301, 0xE9},  {U'e', 0x302, 0xEA},  {U'e', 0x308, 0xEB},
    {U'e', 0x304, 0x113}, {U'e', 0x30C, 0x11B}, {U'e', 0x328, 0x119}, {U'e', 0x307, 0x117},
    {U'G', 0x306, 0x11E}, {U'g', 0x306, 0x11F},
    {U'I', 0x300, 0xCC},  {U'I', 0x301, 0xCD},  {U'I', 0x302, 0xCE},  {U'I', 0x308, 0xCF},
    {U'I', 0x304, 0x12A},
    {U'i', 0x300, 0xEC},  {U'i', 0x301, 0xED},  {U'i', 0x302, 0xEE},  {U'i', 0x308, 0xEF},
    {U'i', 0x304, 0x12B},
    {U'N', 0x303, 0xD1},  {U'N', 0x301, 0x143}, {U'N', 0x30C, 0x147},
    {U'n', 0x303, 0xF1},  {U'n', 0x301, 0x144}, {U'n', 0x30C, 0x148},
    {U'O', 0x300, 0xD2},  {U'O', 0x301, 0xD3},  {U'O', 0x302, 0xD4},  {U'O', 0x303, 0xD5},
    {U'O', 0x308, 0xD6},  {U'O', 0x304, 0x14C}, {U'O', 0x30B, 0x150},
    {U'o', 0x300, 0xF2},  {U'o', 0x301, 0xF3},  {U'o', 0x302, 0xF4},  {U'o', 0x303, 0xF5},
    {U'o', 0x308, 0xF6},  {U'o', 0x304, 0x14D}, {U'o', 0x30B, 0x151},
    {U'R', 0x30C, 0x158}, {U'r', 0x30C, 0x159},
    {U'S', 0x301, 0x15A}, {U'S', 0x30C, 0x160}, {U'S', 0x327, 0x15E},
    {U's', 0x301, 0x15B}, {U's', 0x30C, 0x161}, {U's', 0x327, 0x15F},
    {U'T', 0x30C, 0x164}, {U't', 0x30C, 0x165},
    {U'U', 0x300, 0xD9},  {U'U', 0x301, 0xDA},  {U'U', 0x302, 0xDB},  {U'U', 0x308, 0xDC},
    {U'U', 0x304, 0x16A}, {U'U', 0x30A, 0x16E}, {U'U', 0x30B, 0x170},
    {U'u', 0x300, 0xF9},  {U'u', 0x301, 0xFA},  {U'u', 0x302, 0xFB},  {U'u', 0x308, 0xFC},
    {U'u', 0x304, 0x16B}, {U'u', 0x30A, 0x16F}, {U'u', 0x30B, 0x171},
    {U'Y', 0x301, 0xDD},  {U'Y', 0x308, 0x178},
    {U'y', 0x301, 0xFD},  {U'y', 0x308, 0xFF},
    {U'Z', 0x301, 0x179}, {U'Z', 0x307, 0x17B}, {U'Z', 0x30C, 0x17D},
    {U'z', 0x301, 0x17A}, {U'z', 0x307, 0x17C}, {U'z', 0x30C, 0x17E},
};

char32_t compose_pair(char32_t base, char32_t mark) {
    for (const auto& p : kComposeTable) {
        if (p.base == base && p.mark == mark) return p.composed;
    }
    return 0;
}

bool is_ascii_space(char32_t cp) {
    return cp == U' ' || cp == U'\t' || cp == U'\n' || cp == U'\r' || cp == U'\f' ||
           cp == U'\v';
}

}  // namespace

LanguageTable LanguageTable::builtin() {
    LanguageTable table;
    table.add("en", "English");
    table.add("es", "Spanish");
    table.add("fr", "French");
    table.add("ar", "Arabic");
    table.add("de", "German");
    table.add("it", "Italian");
    table.add("pt", "Portuguese");
    return table;
}

LanguageTable LanguageTable::from_csv(std::istream& in) {
    LanguageTable table;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::size_t comma = line.find(',');
        if (comma == std::string::npos) {
            throw ParseError(lineno, "expected `code,name` row");
        }
        table.add(line.substr(0, comma), line.substr(comma + 1));
    }
    if (table.names_.empty()) {
        throw std::invalid_argument("language table is empty");
    }
    return table;
}

LanguageTable LanguageTable::from_csv_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    return from_csv(in);
}

void LanguageTable::add(const std::string& code, const std::string& name) {
    const std::string lc = ascii_lower(code);
    validate_language_code(lc);
    if (name.empty()) throw std::invalid_argument("language name for \"" + lc + "\" is empty");
    names_[lc] = name;
}

bool LanguageTable::contains(const std::string& code) const {
    return names_.count(ascii_lower(code)) > 0;
}

LanguageTag LanguageTable::complete(const std::string& code) const {
    if (code.empty()) throw std::invalid_argument("language code is empty");
    const std::string lc = ascii_lower(code);
    auto it = names_.find(lc);
    if (it == names_.end()) {
        throw std::invalid_argument("unknown language code \"" + lc + "\"");
    }
    return LanguageTag{lc, it->second};
}

std::string LanguageTable::code_for_name(const std::string& name) const {
    const std::string target = ascii_lower(name);
    for (const auto& [code, full] : names_) {
        if (ascii_lower(full) == target) return code;
    }
    return "";
}

LanguageTag complete_language(const std::string& code, const LanguageTable& table) {
    return table.complete(code);
}

DictionaryTranslator DictionaryTranslator::from_json(const std::string& json_text) {
    DictionaryTranslator t;
    json root = json::parse(json_text);
    if (!root.is_object()) {
        throw std::invalid_argument("translator dictionary must be a JSON object");
    }
    for (const auto& [code, phrases] : root.items()) {
        if (!phrases.is_object()) {
            throw std::invalid_argument("translator dictionary for \"" + code +
                                        "\" must map phrases to English text");
        }
        for (const auto& [phrase, english] : phrases.items()) {
            t.add(code, phrase, english.get<std::string>());
        }
    }
    return t;
}

DictionaryTranslator DictionaryTranslator::from_json_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return from_json(buf.str());
}

void DictionaryTranslator::add(const std::string& language_code, const std::string& phrase,
                               const std::string& english) {
    const std::string lc = ascii_lower(language_code);
    validate_language_code(lc);
    phrases_[lc][normalize_text(phrase)] = english;
}

std::string DictionaryTranslator::translate(const std::string& text,
                                            const LanguageTag& source) const {
    if (source.code == "en") return text;
    auto lang_it = phrases_.find(source.code);
    if (lang_it != phrases_.end()) {
        auto it = lang_it->second.find(normalize_text(text));
        if (it != lang_it->second.end()) return it->second;
    }
    throw std::runtime_error("no dictionary entry for \"" + text + "\" (" + source.code + ")");
}

std::unique_ptr<Translator> make_translator(const std::string& spec) {
    if (spec == "identity") return std::make_unique<IdentityTranslator>();
    const std::string prefix = "dict:";
    if (spec.rfind(prefix, 0) == 0) {
        return std::make_unique<DictionaryTranslator>(
            DictionaryTranslator::from_json_file(spec.substr(prefix.size())));
    }
    throw std::invalid_argument("unknown translator spec \"" + spec +
                                "\" (expected \"identity\" or \"dict:<path>\")");
}

QueryRecord translate_query(const QueryRecord& record, const Translator& translator) {
    if (record.language.code.empty() || record.language.name.empty()) {
        throw std::invalid_argument("record \"" + record.id +
                                    "\": language code was never completed");
    }
    QueryRecord out = record;
    if (record.language.code == "en") {
        out.translated_text = record.raw_text;
        return out;
    }
    try {
        out.translated_text = translator.translate(record.raw_text, record.language);
    } catch (const std::exception& e) {
        throw std::runtime_error("record \"" + record.id + "\": translation failed: " + e.what());
    }
    return out;
}

std::string normalize_text(const std::string& text) {
    std::vector<char32_t> cps = detail::utf8_decode(text);

    // Compose base+mark pairs; a composed character may absorb further marks.
    std::vector<char32_t> composed;
    composed.reserve(cps.size());
    for (char32_t cp : cps) {
        if (!composed.empty()) {
            char32_t merged = compose_pair(composed.back(), cp);
            if (merged != 0) {
                composed.back() = merged;
                continue;
            }
        }
        composed.push_back(cp);
    }

    // Trim and collapse whitespace runs.
    std::vector<char32_t> out;
    out.reserve(composed.size());
    bool pending_space = false;
    for (char32_t cp : composed) {
        if (is_ascii_space(cp)) {
            pending_space = !out.empty();
            continue;
        }
        if (pending_space) {
            out.push_back(U' ');
            pending_space = false;
        }
        out.push_back(cp);
    }

    if (out.empty()) {
        throw std::invalid_argument("empty query after normalization");
    }
    return detail::utf8_encode(out);
}

QueryRecord normalize(const QueryRecord& record) {
    QueryRecord out = record;
    out.raw_text = normalize_text(record.raw_text);
    if (record.translated_text) {
        out.translated_text = normalize_text(*record.translated_text);
    }
    return out;
}

}  // namespace relcot::preprocess
