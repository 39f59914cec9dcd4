#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "relcot/types.hpp"

namespace relcot {

enum class ExampleFormat {
    Jsonl,  // one UTF-8 JSON object per line
    Csv,    // RFC 4180, header row: id,query,language,category,label
};

/// Picks the format from the file extension (.jsonl/.json -> Jsonl, .csv -> Csv).
ExampleFormat format_from_path(const std::string& path);

/// Parses a record stream. Every row yields one example or a ParseError
/// carrying its line number; input order is preserved.
///
/// JSONL keys: id, query, language, category (rendered path), optional label
/// (0/1), optional task_kind ("QI"/"QC", default QC), optional language_name,
/// optional translated_query.
/// CSV columns: the fixed header above; an empty label cell means unlabeled.
std::vector<RelevanceExample> parse_examples(std::istream& in, ExampleFormat format);
std::vector<RelevanceExample> parse_examples(const std::string& text, ExampleFormat format);

/// Inverse of parse_examples. JSONL round-trips every field; CSV carries only
/// the five header columns, so it round-trips the QC/no-translation projection.
/// Unencodable content (a category level containing " > ") throws.
void write_examples(const std::vector<RelevanceExample>& examples, std::ostream& out,
                    ExampleFormat format);
std::string write_examples(const std::vector<RelevanceExample>& examples, ExampleFormat format);

std::vector<RelevanceExample> load_examples(const std::string& path);
std::vector<RelevanceExample> load_examples(const std::string& path, ExampleFormat format);
void save_examples(const std::vector<RelevanceExample>& examples, const std::string& path,
                   ExampleFormat format);

}  // namespace relcot
