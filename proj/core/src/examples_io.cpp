#include "relcot/examples_io.hpp"

#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace relcot {

using nlohmann::json;

namespace {

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

Label parse_label_field(const json& value, std::size_t line) {
    int v = -1;
    if (value.is_number_integer()) {
        v = value.get<int>();
    } else if (value.is_string()) {
        const std::string s = value.get<std::string>();
        if (s == "0") v = 0;
        else if (s == "1") v = 1;
    }
    if (v != 0 && v != 1) {
        throw ParseError(line, "invalid label " + value.dump() + " (expected 0 or 1)");
    }
    return label_from_int(v);
}

RelevanceExample example_from_json(const json& row, std::size_t line) {
    if (!row.is_object()) throw ParseError(line, "expected a JSON object");
    for (const char* key : {"id", "query", "language", "category"}) {
        if (!row.contains(key)) {
            throw ParseError(line, std::string("missing required key \"") + key + "\"");
        }
    }

    RelevanceExample ex;
    try {
        ex.query.id = row.at("id").get<std::string>();
        ex.query.raw_text = row.at("query").get<std::string>();
        std::string code = row.at("language").get<std::string>();
        for (char& c : code) {
            if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
        }
        validate_language_code(code);
        ex.query.language.code = code;
        if (row.contains("language_name") && !row.at("language_name").is_null()) {
            ex.query.language.name = row.at("language_name").get<std::string>();
        }
        if (row.contains("translated_query") && !row.at("translated_query").is_null()) {
            ex.query.translated_text = row.at("translated_query").get<std::string>();
        }
        ex.category = CategoryPath::parse(row.at("category").get<std::string>());
        if (row.contains("label") && !row.at("label").is_null()) {
            ex.label = parse_label_field(row.at("label"), line);
        }
        if (row.contains("task_kind") && !row.at("task_kind").is_null()) {
            ex.task_kind = task_kind_from_string(row.at("task_kind").get<std::string>());
        }
    } catch (const ParseError&) {
        throw;
    } catch (const std::exception& e) {
        throw ParseError(line, e.what());
    }

    if (trim(ex.query.raw_text).empty()) {
        throw ParseError(line, "empty query");
    }
    if (ex.query.language.code == "en" && ex.query.translated_text &&
        *ex.query.translated_text != ex.query.raw_text) {
        throw ParseError(line, "English record whose translated_query differs from the query");
    }
    return ex;
}

json example_to_json(const RelevanceExample& ex) {
    json row;
    row["id"] = ex.query.id;
    row["query"] = ex.query.raw_text;
    row["language"] = ex.query.language.code;
    if (!ex.query.language.name.empty()) row["language_name"] = ex.query.language.name;
    if (ex.query.translated_text) row["translated_query"] = *ex.query.translated_text;
    row["category"] = ex.category.render();
    if (ex.label) row["label"] = label_to_int(*ex.label);
    row["task_kind"] = to_string(ex.task_kind);
    return row;
}

std::vector<RelevanceExample> parse_jsonl(std::istream& in) {
    std::vector<RelevanceExample> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty()) continue;
        json row;
        try {
            row = json::parse(line);
        } catch (const json::parse_error& e) {
            throw ParseError(lineno, std::string("malformed JSON: ") + e.what());
        }
        out.push_back(example_from_json(row, lineno));
    }
    return out;
}

// --- RFC 4180 CSV ----------------------------------------------------------

constexpr const char* kCsvHeader = "id,query,language,category,label";

/// Splits one logical CSV record starting at stream position; quoted fields
/// may contain commas, escaped quotes ("") and newlines. `lineno` is advanced
/// past any embedded newlines.
bool read_csv_record(std::istream& in, std::vector<std::string>& fields, std::size_t& lineno) {
    fields.clear();
    int c = in.get();
    if (c == EOF) return false;
    ++lineno;

    std::string field;
    bool in_quotes = false;
    bool field_was_quoted = false;
    while (true) {
        if (c == EOF) {
            if (in_quotes) throw ParseError(lineno, "unterminated quoted CSV field");
            fields.push_back(field);
            return true;
        }
        char ch = static_cast<char>(c);
        if (in_quotes) {
            if (ch == '"') {
                if (in.peek() == '"') {
                    in.get();
                    field += '"';
                } else {
                    in_quotes = false;
                }
            } else {
                if (ch == '\n') ++lineno;
                field += ch;
            }
        } else if (ch == '"' && field.empty() && !field_was_quoted) {
            in_quotes = true;
            field_was_quoted = true;
        } else if (ch == ',') {
            fields.push_back(field);
            field.clear();
            field_was_quoted = false;
        } else if (ch == '\n') {
            if (!field.empty() && field.back() == '\r') field.pop_back();
            fields.push_back(field);
            return true;
        } else {
            field += ch;
        }
        c = in.get();
    }
}

std::string csv_quote(const std::string& field) {
    bool needs_quotes = field.find_first_of(",\"\n\r") != std::string::npos;
    if (!needs_quotes) return field;
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out += "\"\"";
        else out += c;
    }
    out += '"';
    return out;
}

std::vector<RelevanceExample> parse_csv(std::istream& in) {
    std::vector<RelevanceExample> out;
    std::vector<std::string> fields;
    std::size_t lineno = 0;

    if (!read_csv_record(in, fields, lineno)) return out;  // empty stream
    std::string header;
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i > 0) header += ',';
        header += trim(fields[i]);
    }
    if (header != kCsvHeader) {
        throw ParseError(lineno, "expected CSV header \"" + std::string(kCsvHeader) +
                                     "\", got \"" + header + "\"");
    }

    while (read_csv_record(in, fields, lineno)) {
        if (fields.size() == 1 && trim(fields[0]).empty()) continue;  // blank line
        if (fields.size() != 5) {
            throw ParseError(lineno, "expected 5 CSV fields, got " +
                                         std::to_string(fields.size()));
        }
        json row;
        row["id"] = fields[0];
        row["query"] = fields[1];
        row["language"] = fields[2];
        row["category"] = fields[3];
        const std::string label = trim(fields[4]);
        if (!label.empty()) {
            if (label != "0" && label != "1") {
                throw ParseError(lineno, "invalid label \"" + label + "\" (expected 0 or 1)");
            }
            row["label"] = label == "1" ? 1 : 0;
        }
        out.push_back(example_from_json(row, lineno));
    }
    return out;
}

void write_csv(const std::vector<RelevanceExample>& examples, std::ostream& out) {
    out << kCsvHeader << "\n";
    for (const auto& ex : examples) {
        out << csv_quote(ex.query.id) << ',' << csv_quote(ex.query.raw_text) << ','
            << csv_quote(ex.query.language.code) << ',' << csv_quote(ex.category.render())
            << ',';
        if (ex.label) out << label_to_int(*ex.label);
        out << "\n";
    }
}

}  // namespace

ExampleFormat format_from_path(const std::string& path) {
    auto ends_with = [&](const char* suffix) {
        const std::string s = suffix;
        return path.size() >= s.size() && path.compare(path.size() - s.size(), s.size(), s) == 0;
    };
    if (ends_with(".jsonl") || ends_with(".json")) return ExampleFormat::Jsonl;
    if (ends_with(".csv")) return ExampleFormat::Csv;
    throw std::invalid_argument("cannot infer example format from path: " + path);
}

std::vector<RelevanceExample> parse_examples(std::istream& in, ExampleFormat format) {
    return format == ExampleFormat::Jsonl ? parse_jsonl(in) : parse_csv(in);
}

std::vector<RelevanceExample> parse_examples(const std::string& text, ExampleFormat format) {
    std::istringstream in(text);
    return parse_examples(in, format);
}

void write_examples(const std::vector<RelevanceExample>& examples, std::ostream& out,
                    ExampleFormat format) {
    if (format == ExampleFormat::Csv) {
        write_csv(examples, out);
        return;
    }
    for (const auto& ex : examples) {
        out << example_to_json(ex).dump() << "\n";
    }
}

std::string write_examples(const std::vector<RelevanceExample>& examples, ExampleFormat format) {
    std::ostringstream out;
    write_examples(examples, out, format);
    return out.str();
}

std::vector<RelevanceExample> load_examples(const std::string& path) {
    return load_examples(path, format_from_path(path));
}

std::vector<RelevanceExample> load_examples(const std::string& path, ExampleFormat format) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    return parse_examples(in, format);
}

void save_examples(const std::vector<RelevanceExample>& examples, const std::string& path,
                   ExampleFormat format) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    write_examples(examples, out, format);
}

}  // namespace relcot
