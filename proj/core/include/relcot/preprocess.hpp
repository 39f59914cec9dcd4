#pragma once

#include <iosfwd>
#include <map>
#include <memory>
#include <string>

#include "relcot/types.hpp"

namespace relcot::preprocess {

/// Code -> full-name lookup. Unknown codes are a hard error, never a silent
/// passthrough. The builtin table seeds en/es/fr/ar plus a few fixtures use.
class LanguageTable {
public:
    static LanguageTable builtin();

    /// Loads a two-column CSV (`code,name`), one pair per line, no header.
    static LanguageTable from_csv(std::istream& in);
    static LanguageTable from_csv_file(const std::string& path);

    void add(const std::string& code, const std::string& name);

    bool contains(const std::string& code) const;

    /// Case-insensitive on the input code; the returned tag stores the code
    /// lowercase with the table's full name. Throws on unknown codes.
    LanguageTag complete(const std::string& code) const;

    /// Reverse lookup by full name (case-insensitive); empty if unknown.
    std::string code_for_name(const std::string& name) const;

    const std::map<std::string, std::string>& entries() const { return names_; }

private:
    std::map<std::string, std::string> names_;  // code -> name
};

LanguageTag complete_language(const std::string& code, const LanguageTable& table);

/// Translation contract: (text, source language) -> English text.
/// Implementations must be deterministic for identical inputs and must return
/// English input unchanged. thread_safe() declares whether concurrent calls
/// are allowed; the pipeline serializes calls otherwise.
class Translator {
public:
    virtual ~Translator() = default;
    virtual std::string translate(const std::string& text, const LanguageTag& source) const = 0;
    virtual bool thread_safe() const { return true; }
};

/// Returns every input unchanged. Useful for wiring runs where translation
/// quality is irrelevant.
class IdentityTranslator : public Translator {
public:
    std::string translate(const std::string& text, const LanguageTag&) const override {
        return text;
    }
};

/// Deterministic phrase-dictionary stub keyed by language code then exact
/// (normalized) phrase. English input is returned unchanged; a missing phrase
/// throws. Loadable from a JSON map file: {"es": {"zapatos rojos": "red shoes"}}.
class DictionaryTranslator : public Translator {
public:
    static DictionaryTranslator from_json(const std::string& json_text);
    static DictionaryTranslator from_json_file(const std::string& path);

    void add(const std::string& language_code, const std::string& phrase,
             const std::string& english);

    std::string translate(const std::string& text, const LanguageTag& source) const override;

private:
    std::map<std::string, std::map<std::string, std::string>> phrases_;
};

/// Parses a translator spec string: "identity" or "dict:<json path>".
std::unique_ptr<Translator> make_translator(const std::string& spec);

/// Populates translated_text. English input maps to itself; raw_text is never
/// mutated. Requires a completed language tag (non-empty name); translator
/// failures are rethrown with the record id attached.
QueryRecord translate_query(const QueryRecord& record, const Translator& translator);

/// Trims the ends, collapses internal whitespace runs to one space, and
/// canonically composes Latin base+combining-mark pairs (single composition
/// form over the covered repertoire; other scripts pass through byte-stable).
/// Casing is preserved. Idempotent. Throws if the result is empty.
std::string normalize_text(const std::string& text);

/// normalize_text applied to raw_text (and translated_text when present).
QueryRecord normalize(const QueryRecord& record);

}  // namespace relcot::preprocess
