#include "relcot/tokenizer.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "utf8.hpp"

namespace relcot::train {

using nlohmann::json;

namespace {

constexpr const char* kSpecialTexts[4] = {"<pad>", "<sep>", "<eos>", "<unk>"};

// Word units of a text: maximal runs of non-whitespace, with "\n" emitted as
// its own unit. Spaces and tabs only separate.
std::vector<std::string> split_units(const std::string& text) {
    std::vector<std::string> units;
    std::string current;
    for (char c : text) {
        if (c == ' ' || c == '\t') {
            if (!current.empty()) units.push_back(std::move(current));
            current.clear();
        } else if (c == '\n') {
            if (!current.empty()) units.push_back(std::move(current));
            current.clear();
            units.emplace_back("\n");
        } else {
            current.push_back(c);
        }
    }
    if (!current.empty()) units.push_back(std::move(current));
    return units;
}

std::vector<std::string> split_chars(const std::string& word) {
    const std::vector<char32_t> points = relcot::detail::utf8_decode(word);
    std::vector<std::string> out;
    out.reserve(points.size());
    for (char32_t cp : points) out.push_back(relcot::detail::utf8_encode({cp}));
    return out;
}

}  // namespace

std::string to_string(TokenKind kind) {
    switch (kind) {
        case TokenKind::Special: return "special";
        case TokenKind::Word: return "word";
        case TokenKind::Character: return "char";
    }
    throw std::invalid_argument("unknown token kind");
}

TokenKind token_kind_from_string(const std::string& text) {
    if (text == "special") return TokenKind::Special;
    if (text == "word") return TokenKind::Word;
    if (text == "char") return TokenKind::Character;
    throw std::invalid_argument("unknown token kind \"" + text + "\"");
}

void Vocab::index() {
    words_.clear();
    chars_.clear();
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        const VocabEntry& e = entries_[i];
        if (e.kind == TokenKind::Word) {
            if (!words_.emplace(e.text, i).second) {
                throw std::invalid_argument("duplicate word entry \"" + e.text + "\"");
            }
        } else if (e.kind == TokenKind::Character) {
            if (!chars_.emplace(e.text, i).second) {
                throw std::invalid_argument("duplicate character entry \"" + e.text + "\"");
            }
        }
    }
}

Vocab Vocab::build(const std::vector<std::string>& texts) {
    std::set<std::string> words;
    std::set<std::string> chars;
    for (const auto& text : texts) {
        for (const auto& unit : split_units(text)) {
            words.insert(unit);
            if (unit != "\n") {
                for (const auto& c : split_chars(unit)) chars.insert(c);
            }
        }
    }
    Vocab vocab;
    for (const char* text : kSpecialTexts) {
        vocab.entries_.push_back({text, TokenKind::Special});
    }
    for (const auto& word : words) vocab.entries_.push_back({word, TokenKind::Word});
    for (const auto& c : chars) vocab.entries_.push_back({c, TokenKind::Character});
    vocab.index();
    return vocab;
}

Vocab Vocab::from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw std::invalid_argument(std::string("bad vocabulary JSON: ") + e.what());
    }
    if (!j.is_object() || j.value("version", 0) != 1) {
        throw std::invalid_argument("unsupported vocabulary format");
    }
    Vocab vocab;
    for (const auto& item : j.at("entries")) {
        VocabEntry entry;
        entry.text = item.at("text").get<std::string>();
        entry.kind = token_kind_from_string(item.at("kind").get<std::string>());
        vocab.entries_.push_back(std::move(entry));
    }
    if (vocab.entries_.size() < 4) {
        throw std::invalid_argument("vocabulary lacks the four special tokens");
    }
    for (std::size_t i = 0; i < 4; ++i) {
        if (vocab.entries_[i].kind != TokenKind::Special ||
            vocab.entries_[i].text != kSpecialTexts[i]) {
            throw std::invalid_argument("vocabulary special tokens are malformed");
        }
    }
    vocab.index();
    return vocab;
}

std::string Vocab::to_json() const {
    json entries = json::array();
    for (const auto& e : entries_) {
        json item;
        item["text"] = e.text;
        item["kind"] = to_string(e.kind);
        entries.push_back(item);
    }
    json j;
    j["version"] = 1;
    j["entries"] = entries;
    return j.dump();
}

Vocab Vocab::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::ostringstream buffer;
    buffer << in.rdbuf();
    try {
        return from_json(buffer.str());
    } catch (const std::invalid_argument& e) {
        throw std::runtime_error(path + ": " + e.what());
    }
}

void Vocab::save(const std::string& path) const {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out << to_json() << '\n';
    if (!out) throw std::runtime_error("write failed: " + path);
}

const VocabEntry& Vocab::entry(std::size_t id) const {
    if (id >= entries_.size()) {
        throw std::invalid_argument("token id " + std::to_string(id) + " out of range");
    }
    return entries_[id];
}

std::optional<std::size_t> Vocab::word_id(const std::string& word) const {
    auto it = words_.find(word);
    if (it == words_.end()) return std::nullopt;
    return it->second;
}

std::optional<std::size_t> Vocab::char_id(const std::string& utf8_char) const {
    auto it = chars_.find(utf8_char);
    if (it == chars_.end()) return std::nullopt;
    return it->second;
}

std::vector<std::size_t> encode_text(const Vocab& vocab, const std::string& text) {
    std::vector<std::size_t> out;
    for (const auto& unit : split_units(text)) {
        if (auto id = vocab.word_id(unit)) {
            out.push_back(*id);
            continue;
        }
        for (const auto& c : split_chars(unit)) {
            if (auto id = vocab.char_id(c)) {
                out.push_back(*id);
            } else {
                out.push_back(Vocab::kUnk);
            }
        }
    }
    return out;
}

std::string decode(const Vocab& vocab, const std::vector<std::size_t>& tokens) {
    std::string out;
    bool prev_spacing = false;  // previous token wants a space before a following word
    for (std::size_t id : tokens) {
        const VocabEntry& e = vocab.entry(id);
        const bool newline = e.text == "\n";
        const bool glue = e.kind == TokenKind::Character || newline;
        if (!out.empty() && prev_spacing && !glue) out.push_back(' ');
        out += e.text;
        prev_spacing = !glue;
    }
    return out;
}

EncodedRecord encode_record(const Vocab& vocab, const prompt::InstructionRecord& record,
                            std::size_t max_seq_len) {
    if (record.instruction.empty()) {
        throw std::invalid_argument("record \"" + record.source_example_id +
                                    "\": empty instruction");
    }
    if (record.response.empty()) {
        throw std::invalid_argument("record \"" + record.source_example_id + "\": empty response");
    }
    EncodedRecord out;
    out.tokens = encode_text(vocab, record.instruction);
    out.tokens.push_back(Vocab::kSep);
    const auto input_tokens = encode_text(vocab, record.input);
    out.tokens.insert(out.tokens.end(), input_tokens.begin(), input_tokens.end());
    out.tokens.push_back(Vocab::kSep);
    out.response_begin = out.tokens.size();
    const auto response_tokens = encode_text(vocab, record.response);
    out.tokens.insert(out.tokens.end(), response_tokens.begin(), response_tokens.end());
    out.tokens.push_back(Vocab::kEos);
    if (out.tokens.size() > max_seq_len) {
        throw std::invalid_argument("record \"" + record.source_example_id + "\" encodes to " +
                                    std::to_string(out.tokens.size()) +
                                    " tokens, beyond max_seq_len " + std::to_string(max_seq_len));
    }
    return out;
}

std::vector<std::size_t> encode_prompt(const Vocab& vocab, const std::string& instruction,
                                       std::size_t max_seq_len) {
    if (instruction.empty()) throw std::invalid_argument("empty instruction");
    std::vector<std::size_t> tokens = encode_text(vocab, instruction);
    tokens.push_back(Vocab::kSep);
    tokens.push_back(Vocab::kSep);
    if (tokens.size() >= max_seq_len) {
        throw std::invalid_argument("prompt encodes to " + std::to_string(tokens.size()) +
                                    " tokens, leaving no room under max_seq_len " +
                                    std::to_string(max_seq_len));
    }
    return tokens;
}

Vocab build_vocab(const std::vector<prompt::InstructionRecord>& records) {
    std::vector<std::string> texts;
    texts.reserve(records.size() * 3);
    for (const auto& r : records) {
        texts.push_back(r.instruction);
        texts.push_back(r.input);
        texts.push_back(r.response);
    }
    return Vocab::build(texts);
}

}  // namespace relcot::train
